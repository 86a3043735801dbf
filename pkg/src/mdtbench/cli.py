"""Benchmark command line.

Exit codes: 0 success, 2 bijectivity failure, 3 solver/oracle failure.
"""

from __future__ import annotations

import os
import sys
from dataclasses import replace

import click

from . import bench, mdt
from .errors import OracleFailureError, SolverError
from .operators import set_assembly_threads

TECHNIQUES = [t.value for t in mdt.Technique]

EXIT_OK = 0
EXIT_BIJECTIVITY = 2
EXIT_SOLVER = 3


def _common(func):
    for opt in reversed([
        click.option("--technique", type=click.Choice(TECHNIQUES), default="TINE",
                     show_default=True, help="Mesh deformation technique."),
        click.option("--l", "l", type=float, default=1.5, show_default=True,
                     help="Loading level, body acceleration g = (0, l)."),
        click.option("--chi", type=float, default=0.0, show_default=True,
                     help="Jacobian-based local stiffening degree."),
        click.option("--refine", type=int, default=3, show_default=True,
                     help="Uniform refinements of every patch."),
        click.option("--dt", type=float, default=0.0025, show_default=True),
        click.option("--t-end", type=float, default=20.0, show_default=True),
        click.option("--nu-a", type=float, default=0.3, show_default=True,
                     help="Mesh Poisson ratio for elasticity-based techniques."),
        click.option("--flip-gravity", is_flag=True,
                     help="Use g = (0, -l) instead of (0, +l)."),
        click.option("--geometry", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="Geometry file overriding the default."),
        click.option("--out", type=click.Path(file_okay=False), default=".",
                     show_default=True, help="Output directory."),
        click.option("--threads", type=int, default=1, show_default=True,
                     help="Assembly worker threads (results stay deterministic)."),
        click.option("--config", "config_file",
                     type=click.Path(exists=True, dir_okay=False), default=None,
                     help="Config file of key = value lines (CLI flags win)."),
    ]):
        func = opt(func)
    return func


def _build_config(config_file, **kw) -> bench.ExperimentConfig:
    overrides = dict(
        technique=kw["technique"], l=kw["l"], chi=kw["chi"],
        refinement=kw["refine"], dt=kw["dt"], t_end=kw["t_end"],
        nu_a=kw["nu_a"], flip_gravity=kw["flip_gravity"],
        geometry=kw["geometry"] or "", out=kw["out"], threads=kw["threads"])
    if config_file:
        defaults = {k: v for k, v in overrides.items()
                    if _flag_given(k, kw)}
        return bench.load_config(config_file, **defaults)
    return bench.ExperimentConfig(**overrides)


def _flag_given(name, kw) -> bool:
    src = click.get_current_context().get_parameter_source
    param = {"technique": "technique", "l": "l", "chi": "chi",
             "refinement": "refine", "dt": "dt", "t_end": "t_end",
             "nu_a": "nu_a", "flip_gravity": "flip_gravity",
             "geometry": "geometry", "out": "out", "threads": "threads"}[name]
    return src(param) == click.core.ParameterSource.COMMANDLINE


def _prepare(config: bench.ExperimentConfig):
    os.makedirs(config.out, exist_ok=True)
    set_assembly_threads(config.threads)
    return bench.BenchmarkSetup(config.refinement, config.geometry)


def _finish_run(record: bench.RunRecord, setup, config, *, minima=False,
                vtk=False):
    paths = [bench.write_run_csv(record, config.out),
             bench.write_summary_csv(record, config.out),
             bench.write_timing_csv(record, config.out)]
    if minima:
        paths.append(bench.write_minima_csv(record, config.out))
    if vtk and record.final_state is not None:
        vtk_path = os.path.join(config.out, config.run_name() + ".vtk")
        bench.export_vtk(mdt.deformed_geometry(record.final_state),
                         record.final_state.u_a, vtk_path)
        paths.append(vtk_path)
    for p in paths:
        click.echo(f"wrote {p}")
    click.echo(f"status {record.status} at t = {record.t_last:g} s "
               f"({len(record.rows)} steps, peak ALE norm "
               f"{record.peak_norm:.6g})")
    return EXIT_BIJECTIVITY if record.failed else EXIT_OK


@click.group()
def main():
    """Mesh deformation techniques on the oscillating-beam benchmark."""


@main.command("single-period")
@_common
@click.option("--vtk", is_flag=True, help="Export the final deformed mesh.")
@click.option("--dump-matrix", type=click.Path(), default=None, hidden=True,
              help="Debug: dump the technique operator in triplet form.")
def single_period(config_file, vtk, dump_matrix, **kw):
    """Run one oscillation period (or until bijectivity failure)."""
    config = _build_config(config_file, **kw)
    setup = _prepare(config)
    try:
        record = bench.run_single_period(config, setup)
    except SolverError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    if dump_matrix and record.final_state is not None \
            and record.final_state.cached_system is not None:
        record.final_state.cached_system.dump_triplets(dump_matrix)
        click.echo(f"wrote {dump_matrix}")
    sys.exit(_finish_run(record, setup, config, vtk=vtk))


@main.command("long-term")
@_common
@click.option("--vtk", is_flag=True, help="Export the final deformed mesh.")
def long_term(config_file, vtk, **kw):
    """Run the fixed-horizon test (default 20 s) and report norm minima."""
    config = _build_config(config_file, **kw)
    setup = _prepare(config)
    try:
        record = bench.run_long_term(config, setup)
    except SolverError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    sys.exit(_finish_run(record, setup, config, minima=True, vtk=vtk))


@main.command("timing")
@_common
def timing(config_file, **kw):
    """Single-period run reporting the assembly/solve/check time split."""
    config = _build_config(config_file, **kw)
    setup = _prepare(config)
    try:
        record = bench.run_timing(config, setup)
    except SolverError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    path = bench.write_timing_csv(record, config.out)
    tb = record.timing
    click.echo(f"wrote {path}")
    click.echo(f"assembly {tb.assembly_s:.3f} s, solve {tb.solve_s:.3f} s, "
               f"check {tb.check_s:.3f} s")
    sys.exit(EXIT_BIJECTIVITY if record.failed else EXIT_OK)


@main.command("lmax-sweep")
@_common
@click.option("--chi-max", type=float, default=4.0, show_default=True)
@click.option("--chi-step", type=float, default=0.5, show_default=True)
@click.option("--l-step", type=float, default=0.1, show_default=True)
@click.option("--l-cap", type=float, default=4.0, show_default=True)
def lmax_sweep(config_file, chi_max, chi_step, l_step, l_cap, **kw):
    """Scan the maximal completing loading level over stiffening degrees."""
    config = _build_config(config_file, **kw)
    setup = _prepare(config)
    n = int(round(chi_max / chi_step))
    chis = [round(k * chi_step, 10) for k in range(n + 1)]

    def progress(technique, chi, l, status):
        click.echo(f"  {technique} chi={chi:g} l={l:g}: {status}")

    results = bench.lmax_sweep(config.technique, chis, config,
                               l_step=l_step, l_cap=l_cap, setup=setup,
                               progress=progress)
    path = bench.write_lmax_csv(config.technique, results, config.out)
    click.echo(f"wrote {path}")
    sys.exit(EXIT_OK)


@main.command("tangent-check")
@click.option("--law", type=click.Choice(["stvk", "neo_hookean_log"]),
              default="neo_hookean_log", show_default=True)
@click.option("--trials", type=int, default=20, show_default=True)
def tangent_check(law, trials):
    """Finite-difference verification of the material tangents."""
    try:
        report = bench.tangent_check_by_name(law, trials)
    except (SolverError, OracleFailureError) as exc:
        click.echo(f"oracle failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    click.echo(f"law {report['law']}: {report['trials']} states "
               f"({report['rejected']} rejected), max relative error "
               f"{report['max_rel_error']:.3e}")
    sys.exit(EXIT_OK if report["passed"] else EXIT_SOLVER)


@main.command("export-geometry")
@click.option("--refine", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="geometry.txt",
              show_default=True)
def export_geometry(refine, out):
    """Write the default benchmark geometry in the geometry-file format."""
    bench.export_default_geometry(out, refine)
    click.echo(f"wrote {out}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
