"""Mesh quality auditing and instrumentation.

Bijectivity is checked by sampling J = det(I + grad u) at the Gauss points
of the assembly quadrature rule, computed per patch as
det(grad G_deformed) / det(grad G_initial). The ALE norm is the L2 norm of
the displacement field over the initial configuration. Wall time is
accumulated per phase (assembly / solve / check).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .discretization import MultiPatchDomain, MultiPatchField, _det22
from .errors import TimingUsageError

EPS_J = 1e-10   # bijectivity threshold; ln J and inverse maps degrade near 0


@dataclass(frozen=True)
class BijectivityReport:
    min_j: float
    patch: int
    point: int   # flat quadrature-point index within the patch (element-major)

    @property
    def passed(self) -> bool:
        return self.min_j > EPS_J

    @property
    def location(self) -> tuple[int, int]:
        return (self.patch, self.point)


def min_jacobian(domain: MultiPatchDomain, u_a: MultiPatchField) -> BijectivityReport:
    """Exact minimum of J over all assembly Gauss points, with location.

    Ties resolve to the lowest patch index, then the lowest point index.
    """
    best = None
    for p in range(domain.n_patches):
        t = domain.patches[p].tables()
        J = t.J0 + t.disp_jacobian(u_a.patch_values(p))
        ratio = (_det22(J) / t.det0).ravel()
        k = int(np.argmin(ratio))
        if best is None or ratio[k] < best.min_j:
            best = BijectivityReport(float(ratio[k]), p, k)
    return best


def ale_norm(domain: MultiPatchDomain, u_a: MultiPatchField) -> float:
    """L2 norm of the displacement over the initial configuration."""
    total = 0.0
    for p in range(domain.n_patches):
        t = domain.patches[p].tables()
        u = np.einsum("eai,eqa->eqi", u_a.patch_values(p)[t.el_dofs], t.N)
        total += float(np.einsum("eqi,eqi,eq->", u, u, t.qw * t.det0))
    return float(np.sqrt(total))


def period_minima(times, values, min_separation: float = 0.4):
    """Strict interior local minima of a time series, separated in time.

    Candidates closer than ``min_separation`` to the previously accepted
    minimum replace it when lower (guards against double minima from
    quadrature noise). Endpoints are never reported. Returns a list of
    (t, value) pairs.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise ValueError("times and values must have equal length")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    out: list[tuple[float, float]] = []
    for i in range(1, len(values) - 1):
        if not (values[i] < values[i - 1] and values[i] < values[i + 1]):
            continue
        if out and times[i] - out[-1][0] < min_separation:
            if values[i] < out[-1][1]:
                out[-1] = (float(times[i]), float(values[i]))
        else:
            out.append((float(times[i]), float(values[i])))
    return out


PHASES = ("assembly", "solve", "check")


@dataclass
class TimingBreakdown:
    """Wall seconds accumulated per phase of a run."""

    assembly_s: float = 0.0
    solve_s: float = 0.0
    check_s: float = 0.0
    _open: set = field(default_factory=set, repr=False, compare=False)

    def add(self, phase: str, seconds: float) -> None:
        if phase not in PHASES:
            raise TimingUsageError(f"unknown phase {phase!r}")
        setattr(self, phase + "_s", getattr(self, phase + "_s") + seconds)

    def timed(self, phase: str, closure, *args, **kwargs):
        """Run ``closure`` under the phase timer; returns (result, elapsed)."""
        if phase not in PHASES:
            raise TimingUsageError(f"unknown phase {phase!r}")
        if phase in self._open:
            raise TimingUsageError(f"phase {phase!r} timed while already open")
        self._open.add(phase)
        start = time.perf_counter()
        try:
            result = closure(*args, **kwargs)
        finally:
            elapsed = time.perf_counter() - start
            self._open.discard(phase)
            self.add(phase, elapsed)
        return result, elapsed

    @property
    def total_s(self) -> float:
        return self.assembly_s + self.solve_s + self.check_s


class _NullTiming:
    """No-op stand-in so instrumented code paths stay uniform."""

    def timed(self, phase, closure, *args, **kwargs):
        return closure(*args, **kwargs), 0.0

    def add(self, phase, seconds):
        pass


NULL_TIMING = _NullTiming()
