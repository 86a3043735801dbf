"""The seven mesh deformation techniques behind one stepping interface.

Each technique extends the interface displacement trace into the fluid
domain as the ALE field u_a:

  HE / BE / LE    non-incremental solves in the initial configuration
                  (operator assembled and factorized once);
  IHE / IBE / ILE increments solved in the currently deformed configuration
                  (reassembled every step);
  TINE            one Newton step per time step on the nonlinear elasticity
                  equations with the log-neo-Hookean law, posed in the
                  initial configuration.

The step interface takes the TOTAL interface displacement; incremental
techniques form their own increments from the previous trace. Every step is
transactional: it either commits a state whose bijectivity audit passed, or
raises StepRejectedError and leaves the state untouched.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .discretization import (DofMap, MultiPatchDomain, MultiPatchField)
from .errors import (InvalidGeometryError, InvalidStateError,
                     OracleFailureError, StepRejectedError)
from .operators import (MaterialLaw, StiffeningBase, StiffeningConfig,
                        assemble_linear_elasticity, assemble_mixed_biharmonic,
                        assemble_nonlinear, assemble_scalar_laplace,
                        lame_from_young_poisson)
from .quality import (EPS_J, NULL_TIMING, BijectivityReport, ale_norm,
                      min_jacobian)


class Technique(Enum):
    HE = "HE"
    IHE = "IHE"
    BE = "BE"
    IBE = "IBE"
    LE = "LE"
    ILE = "ILE"
    TINE = "TINE"


INITIAL_CONFIG = frozenset({Technique.HE, Technique.BE, Technique.LE, Technique.TINE})
DEFORMED_CONFIG = frozenset({Technique.IHE, Technique.IBE, Technique.ILE})
INCREMENTAL = frozenset({Technique.IHE, Technique.IBE, Technique.ILE, Technique.TINE})
ELASTICITY_BASED = frozenset({Technique.LE, Technique.ILE, Technique.TINE})

# Young's modulus of the mesh material is irrelevant to the resulting
# displacement; only the Poisson ratio matters.
E_MESH = 1.0


def technique_from_name(name: str) -> Technique:
    try:
        return Technique(name)
    except ValueError:
        raise ValueError(
            f"unknown technique {name!r}; expected one of "
            f"{[t.value for t in Technique]}") from None


class MdtState:
    """Per-technique persistent state; confined to one logical owner."""

    def __init__(self, technique, dofmap, stiffening, lame):
        self.technique = technique
        self.dofmap: DofMap = dofmap
        self.stiffening: StiffeningConfig = stiffening
        self.lame = lame
        self.u_a = MultiPatchField(dofmap)
        self.prev_dirichlet = np.zeros((dofmap.n_dirichlet, 2))
        self.cached_system = None
        self.last_report: BijectivityReport | None = None

    @property
    def domain(self) -> MultiPatchDomain:
        return self.dofmap.domain

    @property
    def g_prev(self) -> np.ndarray:
        return self.prev_dirichlet[self.dofmap.gamma_in_dirichlet]


def init(technique, domain: MultiPatchDomain, dofmap: DofMap,
         stiffening=0.0, nu_a: float = 0.3, *, timing=NULL_TIMING) -> MdtState:
    """Create technique state; non-incremental operators assemble once."""
    if isinstance(technique, str):
        technique = technique_from_name(technique)
    if not isinstance(stiffening, StiffeningConfig):
        base = (StiffeningBase.INITIAL if technique in INITIAL_CONFIG
                else StiffeningBase.DEFORMED)
        stiffening = StiffeningConfig(float(stiffening), base)
    lame = None
    if technique in ELASTICITY_BASED:
        lame = lame_from_young_poisson(E_MESH, nu_a)
    state = MdtState(technique, dofmap, stiffening, lame)
    if technique == Technique.HE:
        state.cached_system, _ = timing.timed(
            "assembly", assemble_scalar_laplace, domain, dofmap,
            stiffening=stiffening)
    elif technique == Technique.BE:
        state.cached_system, _ = timing.timed(
            "assembly", assemble_mixed_biharmonic, domain, dofmap,
            stiffening=stiffening)
    elif technique == Technique.LE:
        state.cached_system, _ = timing.timed(
            "assembly", assemble_linear_elasticity, domain, dofmap, lame,
            stiffening=stiffening)
    return state


def reset(state: MdtState) -> MdtState:
    """Zero the ALE field and trace history; factorizations are retained."""
    state.u_a = MultiPatchField(state.dofmap)
    state.prev_dirichlet = np.zeros((state.dofmap.n_dirichlet, 2))
    state.last_report = None
    return state


def deformed_geometry(state: MdtState) -> MultiPatchDomain:
    """Domain with control points c_k + d_k of the current ALE field."""
    dm = state.dofmap
    return state.domain.displaced(
        [dm.patch_values(state.u_a.values, p) for p in range(dm.domain.n_patches)])


def _stiffening_args(state: MdtState, operator_deformed: bool) -> dict:
    """Resolve the stiffening base against the operator's configuration."""
    cfg = state.stiffening
    if cfg.chi == 0.0:
        return {"stiffening": cfg, "stiffening_displacement": "same"}
    base_disp = (state.u_a.values if cfg.base == StiffeningBase.DEFORMED else None)
    op_disp = state.u_a.values if operator_deformed else None
    same = (base_disp is None) == (op_disp is None)
    return {"stiffening": cfg,
            "stiffening_displacement": "same" if same else base_disp}


def _dirichlet_target(state: MdtState, g_new, outer_trace):
    dm = state.dofmap
    g_new = np.asarray(g_new, dtype=float)
    if g_new.shape != (len(dm.gamma), 2):
        raise ValueError(f"interface trace must have shape ({len(dm.gamma)}, 2)")
    return dm.dirichlet_values(g_new, outer_trace)


def step(state: MdtState, g_new, *, outer_trace=None, timing=NULL_TIMING) -> MdtState:
    """Advance the ALE field to the new total interface displacement.

    ``outer_trace`` overrides the (normally zero) outer-boundary values;
    it exists for test harnesses only. On bijectivity failure the state is
    left unmodified and StepRejectedError carries the report.
    """
    tech = state.technique
    dm = state.dofmap
    dom = state.domain
    dir_new = _dirichlet_target(state, g_new, outer_trace)

    if tech in DEFORMED_CONFIG:
        report = state.last_report
        if report is None:
            report = min_jacobian(dom, state.u_a)
        if not report.passed:
            raise StepRejectedError(
                "pre-step state fails the bijectivity audit", report,
                candidate_norm=ale_norm(dom, state.u_a))

    try:
        u_new = _compute_step(state, dir_new, timing)
    except (InvalidGeometryError, InvalidStateError) as exc:
        report = min_jacobian(dom, state.u_a)
        raise StepRejectedError(f"assembly aborted: {exc}", report,
                                candidate_norm=ale_norm(dom, state.u_a)) from exc

    candidate = MultiPatchField(dm, u_new)
    report, _ = timing.timed("check", min_jacobian, dom, candidate)
    if not report.passed:
        raise StepRejectedError(
            f"bijectivity audit failed (min J = {report.min_j:.3e} at patch "
            f"{report.patch}, point {report.point})", report,
            candidate_norm=ale_norm(dom, candidate))
    state.u_a = candidate
    state.prev_dirichlet = dir_new
    state.last_report = report
    return state


def _compute_step(state: MdtState, dir_new: np.ndarray, timing) -> np.ndarray:
    tech = state.technique
    dm = state.dofmap
    dom = state.domain

    if tech in (Technique.HE, Technique.BE, Technique.LE):
        sys = state.cached_system
        if tech == Technique.LE:
            x, _ = timing.timed("solve", sys.solve_dirichlet, dir_new.reshape(-1))
            free_vals = x.reshape(-1, 2)
        else:
            x, _ = timing.timed("solve", sys.solve_dirichlet, dir_new)
            free_vals = x[sys.extra["u_rows"]] if tech == Technique.BE else x
        return dm.expand(free_vals, dir_new)

    delta_dir = dir_new - state.prev_dirichlet

    if tech == Technique.IHE:
        sys, _ = timing.timed(
            "assembly", assemble_scalar_laplace, dom, dm,
            displacement=state.u_a.values, **_stiffening_args(state, True))
        x, _ = timing.timed("solve", sys.solve_dirichlet, delta_dir)
        return state.u_a.values + dm.expand(x, delta_dir)

    if tech == Technique.IBE:
        sys, _ = timing.timed(
            "assembly", assemble_mixed_biharmonic, dom, dm,
            displacement=state.u_a.values, **_stiffening_args(state, True))
        x, _ = timing.timed("solve", sys.solve_dirichlet, delta_dir)
        return state.u_a.values + dm.expand(x[sys.extra["u_rows"]], delta_dir)

    if tech == Technique.ILE:
        sys, _ = timing.timed(
            "assembly", assemble_linear_elasticity, dom, dm, state.lame,
            displacement=state.u_a.values, **_stiffening_args(state, True))
        x, _ = timing.timed("solve", sys.solve_dirichlet, delta_dir.reshape(-1))
        return state.u_a.values + dm.expand(x.reshape(-1, 2), delta_dir)

    if tech == Technique.TINE:
        law = MaterialLaw.neo_hookean_log(state.lame)
        kw = _stiffening_args(state, False)
        if kw["stiffening_displacement"] == "same":
            kw["stiffening_displacement"] = None
        (R, sys), _ = timing.timed(
            "assembly", assemble_nonlinear, dom, dm, law, state.u_a.values,
            stiffening=kw["stiffening"],
            stiffening_displacement=kw["stiffening_displacement"])
        rhs = -R - sys.elimination @ delta_dir.reshape(-1)
        x, _ = timing.timed("solve", sys.solve_rhs, rhs)
        return state.u_a.values + dm.expand(x.reshape(-1, 2), delta_dir)

    raise ValueError(f"unhandled technique {tech}")


def solve_full_newton(state: MdtState, g_new, *, tol: float = 1e-10,
                      max_iter: int = 30, outer_trace=None) -> np.ndarray:
    """Fully solve the TINE nonlinear system at the given trace (oracle).

    Newton iteration with plain halving damping on residual increase; if
    enforcing the boundary data in one jump inverts quadrature points, the
    data is ramped in stages (the converged solution does not depend on the
    path). Does not modify the state; returns the coefficient field.
    Used for validation only; far too expensive for production stepping.
    """
    if state.technique != Technique.TINE:
        raise ValueError("full Newton oracle is defined for TINE only")
    dm = state.dofmap
    dom = state.domain
    law = MaterialLaw.neo_hookean_log(state.lame)
    dir_new = _dirichlet_target(state, g_new, outer_trace)
    dir_prev = state.prev_dirichlet
    kw = _stiffening_args(state, False)
    sd = None if kw["stiffening_displacement"] == "same" else kw["stiffening_displacement"]

    def residual(u_try, with_tangent):
        return assemble_nonlinear(dom, dm, law, u_try, stiffening=kw["stiffening"],
                                  stiffening_displacement=sd, tangent=with_tangent)

    def newton_at(dir_target, u_start):
        u = u_start.copy()
        u[dm.dirichlet] = dir_target
        R, sys = residual(u, True)
        r0 = np.linalg.norm(R)
        if r0 == 0.0:
            return u
        rnorm = r0
        for _ in range(max_iter):
            if rnorm <= tol * r0:
                return u
            delta = sys.solve_rhs(-R).reshape(-1, 2)
            alpha = 1.0
            while True:
                u_try = u.copy()
                u_try[dm.free] += alpha * delta
                try:
                    R_try, _ = residual(u_try, False)
                    r_try = float(np.linalg.norm(R_try))
                except InvalidStateError:
                    r_try = np.inf
                if r_try < rnorm or alpha <= 1 / 1024:
                    break
                alpha *= 0.5
            if not np.isfinite(r_try) or r_try >= rnorm:
                raise OracleFailureError(
                    f"full Newton stagnated at residual {rnorm:.3e}")
            u = u_try
            R, sys = residual(u, True)
            rnorm = float(np.linalg.norm(R))
        if rnorm <= tol * r0:
            return u
        raise OracleFailureError(
            f"full Newton did not reach tol {tol:.1e} in {max_iter} "
            f"iterations (relative residual {rnorm / r0:.3e})")

    last_exc = None
    for n_stages in (1, 4, 16, 64):
        try:
            u = state.u_a.values
            for j in range(1, n_stages + 1):
                frac = j / n_stages
                u = newton_at(dir_prev + frac * (dir_new - dir_prev), u)
            return u
        except (InvalidStateError, OracleFailureError) as exc:
            last_exc = exc
    raise OracleFailureError(
        f"full Newton failed even with staged boundary data: {last_exc}")
