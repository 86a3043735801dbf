"""Experiment drivers and I/O for the oscillating-beam benchmark.

A run steps the clamped beam under the body force (0, l) with Newmark and
feeds its interface trace to one mesh deformation technique, recording the
ALE norm, the bijectivity audit and tip displacement per step. Sweeps scan
the loading level per stiffening degree. The beam trajectory is independent
of the mesh technique, so sweeps compute it once per loading level and
replay it (results are identical to stepping the beam inline).

Deterministic outputs (series, minima, summaries, sweeps) are byte-stable;
wall-time measurements go to separate timing CSVs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import mdt
from .discretization import (MultiPatchDomain, MultiPatchField, SplinePatch,
                             build_benchmark_geometry, build_dof_map,
                             read_geometry, write_geometry)
from .dynamics import BeamDriver, DriverParams, NewmarkParams
from .errors import StepRejectedError
from .operators import MaterialLaw, lame_from_young_poisson
from .quality import TimingBreakdown, ale_norm, min_jacobian, period_minima

T_CAP_SINGLE_PERIOD = 1.5
MIN_PERIOD_TIME = 0.4

COMPLETED = "COMPLETED"
BIJECTIVITY_FAILED = "BIJECTIVITY_FAILED"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    technique: str = "TINE"
    l: float = 1.5
    chi: float = 0.0
    refinement: int = 3
    dt: float = 0.0025
    t_end: float = 20.0
    nu_a: float = 0.3
    rho_s: float = 1e3
    E_s: float = 1.4e6
    nu_s: float = 0.4
    flip_gravity: bool = False
    geometry: str = ""       # optional geometry file path
    out: str = "."           # output directory
    threads: int = 1

    def newmark(self) -> NewmarkParams:
        return NewmarkParams(dt=self.dt)

    def driver(self) -> DriverParams:
        return DriverParams(l=self.l, rho_s=self.rho_s, E_s=self.E_s,
                            nu_s=self.nu_s,
                            gravity_sign=-1.0 if self.flip_gravity else 1.0)

    def run_name(self) -> str:
        return f"{self.technique}_{_num(self.l)}_{_num(self.chi)}"


def load_config(path, **overrides) -> ExperimentConfig:
    """Read `key = value` lines named after ExperimentConfig fields."""
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    kwargs = {}
    with open(path) as f:
        for lineno, ln in enumerate(f, 1):
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            if "=" not in ln:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in ln.split("=", 1))
            if key not in kinds:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            kind = kinds[key]
            if kind == "bool":
                kwargs[key] = val.lower() in ("1", "true", "yes", "on")
            elif kind == "int":
                kwargs[key] = int(val)
            elif kind == "float":
                kwargs[key] = float(val)
            else:
                kwargs[key] = val
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


def _num(x: float) -> str:
    return f"{x:g}"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

ROW_FIELDS = ("t", "ale_norm", "min_j", "tip_x", "tip_y",
              "assembly_s", "solve_s", "check_s")


@dataclass
class RunRecord:
    config: ExperimentConfig
    rows: list = field(default_factory=list)   # tuples in ROW_FIELDS order
    status: str = COMPLETED
    timing: TimingBreakdown = field(default_factory=TimingBreakdown)
    minima: list = field(default_factory=list)
    t_end_intended: float = 0.0
    final_state: mdt.MdtState | None = None

    @property
    def t_last(self) -> float:
        return self.rows[-1][0] if self.rows else 0.0

    @property
    def peak_norm(self) -> float:
        return max((r[1] for r in self.rows), default=0.0)

    @property
    def failed(self) -> bool:
        return self.status != COMPLETED


# ---------------------------------------------------------------------------
# geometry and beam-trajectory caching
# ---------------------------------------------------------------------------

class BenchmarkSetup:
    """Discretized benchmark shared by all runs of one configuration family."""

    def __init__(self, refinement: int, geometry_file: str = ""):
        if geometry_file:
            fluid, beam = read_geometry(geometry_file)
            fluid = fluid.uniform_refine(refinement)
            beam = beam.uniform_refine(refinement)
        else:
            fluid, beam = build_benchmark_geometry(refinement)
        self.fluid: MultiPatchDomain = fluid
        self.beam: SplinePatch = beam
        self.dofmap = build_dof_map(fluid)


class BeamPath:
    """Beam trajectory sampled per step, extended lazily and replayable."""

    def __init__(self, setup: BenchmarkSetup, newmark: NewmarkParams,
                 driver: DriverParams):
        self.driver = BeamDriver(setup.beam, newmark, driver)
        self._dofmap = setup.dofmap
        self._state = self.driver.initial_state()
        self._samples: list[tuple[np.ndarray, np.ndarray]] = []

    def sample(self, step: int):
        """(interface trace, tip displacement) after `step` beam steps."""
        while len(self._samples) < step:
            self._state = self.driver.step(self._state)
            self._samples.append(
                (self.driver.interface_trace(self._state, self._dofmap),
                 self.driver.tip_displacement(self._state)))
        return self._samples[step - 1]


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def _run(config: ExperimentConfig, setup: BenchmarkSetup, path: BeamPath,
         t_end: float, stop_at_first_minimum: bool,
         state: mdt.MdtState | None = None) -> RunRecord:
    timing = TimingBreakdown()
    if state is None:
        state = mdt.init(config.technique, setup.fluid, setup.dofmap,
                         stiffening=config.chi, nu_a=config.nu_a, timing=timing)
    record = RunRecord(config=config, timing=timing, t_end_intended=t_end)
    times: list[float] = []
    norms: list[float] = []
    n_steps = int(round(t_end / config.dt))
    for step in range(1, n_steps + 1):
        t = step * config.dt
        trace, tip = path.sample(step)
        before = (timing.assembly_s, timing.solve_s, timing.check_s)
        try:
            mdt.step(state, trace, timing=timing)
        except StepRejectedError as err:
            d = (timing.assembly_s - before[0], timing.solve_s - before[1],
                 timing.check_s - before[2])
            record.rows.append((t, err.candidate_norm, err.report.min_j,
                                float(tip[0]), float(tip[1]), *d))
            record.status = BIJECTIVITY_FAILED
            break
        norm = ale_norm(setup.fluid, state.u_a)
        d = (timing.assembly_s - before[0], timing.solve_s - before[1],
             timing.check_s - before[2])
        record.rows.append((t, norm, state.last_report.min_j,
                            float(tip[0]), float(tip[1]), *d))
        times.append(t)
        norms.append(norm)
        if stop_at_first_minimum and len(times) > 2:
            if any(m[0] >= MIN_PERIOD_TIME
                   for m in period_minima(times, norms)):
                break
    record.minima = ([m for m in period_minima(times, norms)
                      if m[0] >= MIN_PERIOD_TIME] if times else [])
    record.final_state = state
    return record


def run_single_period(config: ExperimentConfig,
                      setup: BenchmarkSetup | None = None,
                      path: BeamPath | None = None,
                      state: mdt.MdtState | None = None) -> RunRecord:
    """Step beam + MDT from rest until one oscillation period completes
    (first ALE-norm minimum past 0.4 s) or the 1.5 s cap."""
    setup = setup or BenchmarkSetup(config.refinement, config.geometry)
    path = path or BeamPath(setup, config.newmark(), config.driver())
    return _run(config, setup, path, T_CAP_SINGLE_PERIOD, True, state)


def run_long_term(config: ExperimentConfig,
                  setup: BenchmarkSetup | None = None,
                  path: BeamPath | None = None) -> RunRecord:
    """Fixed-horizon run (config.t_end); reports the ALE-norm minima."""
    setup = setup or BenchmarkSetup(config.refinement, config.geometry)
    path = path or BeamPath(setup, config.newmark(), config.driver())
    return _run(config, setup, path, config.t_end, False)


def run_timing(config: ExperimentConfig,
               setup: BenchmarkSetup | None = None,
               path: BeamPath | None = None) -> RunRecord:
    """Single-period run; the interesting output is its TimingBreakdown."""
    return run_single_period(config, setup, path)


def lmax_sweep(technique: str, chis, base: ExperimentConfig,
               l_step: float = 0.1, l_cap: float = 4.0,
               setup: BenchmarkSetup | None = None,
               paths: dict | None = None, progress=None):
    """Largest completing loading level per stiffening degree.

    Ascending scan over the l grid with early exit at the first failure
    (failure is assumed monotone in l). Beam trajectories are shared across
    techniques and stiffening degrees via ``paths``.
    """
    setup = setup or BenchmarkSetup(base.refinement, base.geometry)
    paths = paths if paths is not None else {}
    results = []
    n_levels = int(round(l_cap / l_step))
    for chi in chis:
        state = mdt.init(technique, setup.fluid, setup.dofmap,
                         stiffening=chi, nu_a=base.nu_a)
        l_max = 0.0
        for k in range(1, n_levels + 1):
            l = round(k * l_step, 10)
            config = replace(base, technique=technique, l=l, chi=chi)
            if l not in paths:
                paths[l] = BeamPath(setup, config.newmark(), config.driver())
            record = run_single_period(config, setup, paths[l],
                                       state=mdt.reset(state))
            if progress:
                progress(technique, chi, l, record.status)
            if record.failed:
                break
            l_max = l
        results.append((float(chi), float(l_max)))
    return results


# ---------------------------------------------------------------------------
# tangent check
# ---------------------------------------------------------------------------

def _spd_sqrt(C):
    s = np.sqrt(np.linalg.det(C))
    t = np.sqrt(np.trace(C) + 2 * s)
    return (C + s * np.eye(2)) / t


def tangent_check(law: MaterialLaw, trials: int = 20, h: float = 1e-5,
                  seed: int = 20240) -> dict:
    """Central-difference verification of the material tangent.

    Draws random deformation gradients, rejects inadmissible ones
    (det F <= 0.3) without counting them as failures, and reports the
    maximum relative error over the accepted states.
    """
    from .operators import eval_stress_and_tangent

    rng = np.random.default_rng(seed)
    accepted = rejected = 0
    max_err = 0.0
    while accepted < trials:
        F = np.eye(2) + 0.4 * rng.uniform(-1, 1, size=(2, 2))
        if np.linalg.det(F) <= 0.3:
            rejected += 1
            continue
        accepted += 1
        _, C = eval_stress_and_tangent(law, F)
        C0 = F.T @ F
        fd = np.zeros((2, 2, 2, 2))
        for k in range(2):
            for l in range(2):
                d = np.zeros((2, 2))
                d[k, l] += 0.5
                d[l, k] += 0.5
                Sp, _ = eval_stress_and_tangent(law, _spd_sqrt(C0 + 2 * h * d))
                Sm, _ = eval_stress_and_tangent(law, _spd_sqrt(C0 - 2 * h * d))
                fd[:, :, k, l] = (Sp - Sm) / (2 * h)
        max_err = max(max_err, float(np.abs(C - fd).max() / np.abs(C).max()))
    return {"law": law.kind.value, "trials": accepted, "rejected": rejected,
            "max_rel_error": max_err, "passed": max_err < 1e-6}


def tangent_check_by_name(name: str, trials: int = 20) -> dict:
    lame = lame_from_young_poisson(1.0, 0.3)
    laws = {"stvk": MaterialLaw.st_venant_kirchhoff(lame),
            "neo_hookean_log": MaterialLaw.neo_hookean_log(lame)}
    if name not in laws:
        raise ValueError(f"unknown law {name!r}; expected one of {list(laws)}")
    return tangent_check(laws[name], trials)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def write_run_csv(record: RunRecord, out_dir: str) -> str:
    """Deterministic per-step series (timing excluded; see timing CSV)."""
    path = os.path.join(out_dir, record.config.run_name() + ".csv")
    with open(path, "w") as f:
        f.write("t,ale_norm,min_j,tip_x,tip_y\n")
        for row in record.rows:
            f.write(",".join(_fmt(v) for v in row[:5]) + "\n")
    return path


def write_summary_csv(record: RunRecord, out_dir: str) -> str:
    path = os.path.join(out_dir, record.config.run_name() + "_summary.csv")
    c = record.config
    min_j_last = record.rows[-1][2] if record.rows else 1.0
    with open(path, "w") as f:
        f.write("technique,l,chi,status,t_end,t_last,min_j_last,peak_norm,n_steps\n")
        f.write(",".join([c.technique, _fmt(c.l), _fmt(c.chi), record.status,
                          _fmt(record.t_end_intended), _fmt(record.t_last),
                          _fmt(min_j_last), _fmt(record.peak_norm),
                          str(len(record.rows))]) + "\n")
    return path


def write_timing_csv(record: RunRecord, out_dir: str) -> str:
    path = os.path.join(out_dir, record.config.run_name() + "_timing.csv")
    c = record.config
    tb = record.timing
    with open(path, "w") as f:
        f.write("technique,l,chi,assembly_s,solve_s,check_s,total_s\n")
        f.write(",".join([c.technique, _fmt(c.l), _fmt(c.chi),
                          _fmt(tb.assembly_s), _fmt(tb.solve_s),
                          _fmt(tb.check_s), _fmt(tb.total_s)]) + "\n")
    return path


def write_minima_csv(record: RunRecord, out_dir: str) -> str:
    path = os.path.join(out_dir, record.config.run_name() + "_minima.csv")
    with open(path, "w") as f:
        f.write("t,ale_norm\n")
        for t, v in record.minima:
            f.write(f"{_fmt(t)},{_fmt(v)}\n")
    return path


def write_lmax_csv(technique: str, results, out_dir: str) -> str:
    path = os.path.join(out_dir, f"lmax_{technique}.csv")
    with open(path, "w") as f:
        f.write("chi,l_max\n")
        for chi, l_max in results:
            f.write(f"{_fmt(chi)},{_fmt(l_max)}\n")
    return path


# ---------------------------------------------------------------------------
# VTK export
# ---------------------------------------------------------------------------

def export_vtk(domain: MultiPatchDomain, u_a: MultiPatchField | None,
               path: str) -> None:
    """Legacy ASCII VTK unstructured grid of the (deformed) domain.

    Each spline element is emitted as a 3x3 sampled sub-grid (4 bilinear
    quads); points carry the displacement, cells carry the Jacobian ratio J
    at their parametric centers. Output is byte-stable. Points are shared
    within a patch, not across patches.
    """
    points = []
    disps = []
    cells = []
    jvals = []
    for p in range(domain.n_patches):
        patch = domain.patches[p]
        u_p = u_a.patch_values(p) if u_a is not None else None
        params = []
        for kv in (patch.kv_xi, patch.kv_eta):
            bp = kv.breakpoints()
            t = np.sort(np.concatenate([bp, 0.5 * (bp[:-1] + bp[1:])]))
            params.append(t)
        tx, te = params
        offset = len(points)
        for i, xi in enumerate(tx):
            for j, eta in enumerate(te):
                pt, _, _ = patch.eval(float(xi), float(eta))
                if u_p is not None:
                    d = patch.eval_field(u_p, float(xi), float(eta))
                else:
                    d = np.zeros(2)
                points.append(pt + d)
                disps.append(d)
        ne = len(te)
        for i in range(len(tx) - 1):
            for j in range(ne - 1):
                base = offset + i * ne + j
                cells.append((base, base + ne, base + ne + 1, base + 1))
                xi_c = 0.5 * (tx[i] + tx[i + 1])
                eta_c = 0.5 * (te[j] + te[j + 1])
                _, jac0, det0 = patch.eval(float(xi_c), float(eta_c))
                if u_p is not None:
                    _, jac1, det1 = patch.eval(float(xi_c), float(eta_c),
                                               displacement=u_p)
                else:
                    det1 = det0
                jvals.append(det1 / det0)
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("mdtbench deformed mesh\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {len(points)} double\n")
        for pt in points:
            f.write(f"{_fmt(pt[0])} {_fmt(pt[1])} 0\n")
        f.write(f"CELLS {len(cells)} {5 * len(cells)}\n")
        for c in cells:
            f.write("4 " + " ".join(str(k) for k in c) + "\n")
        f.write(f"CELL_TYPES {len(cells)}\n")
        f.write("9\n" * len(cells))
        f.write(f"POINT_DATA {len(points)}\n")
        f.write("VECTORS displacement double\n")
        for d in disps:
            f.write(f"{_fmt(d[0])} {_fmt(d[1])} 0\n")
        f.write(f"CELL_DATA {len(cells)}\n")
        f.write("SCALARS jacobian double 1\nLOOKUP_TABLE default\n")
        for v in jvals:
            f.write(f"{_fmt(v)}\n")


def export_default_geometry(path: str, refinement: int = 0) -> None:
    fluid, beam = build_benchmark_geometry(refinement)
    write_geometry(fluid, beam, path)
