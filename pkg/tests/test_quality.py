"""Bijectivity audit, ALE norm, period detection and timing tests."""

import time

import numpy as np
import pytest

from mdtbench.discretization import (
    BoundaryTag, MultiPatchDomain, MultiPatchField, Side, bilinear_patch,
    build_benchmark_geometry, build_dof_map,
)
from mdtbench.errors import TimingUsageError
from mdtbench.quality import (TimingBreakdown, ale_norm, min_jacobian,
                              period_minima)


def square_domain(refine=2):
    patch = bilinear_patch([(0, 0), (1, 0), (1, 1), (0, 1)]).uniform_refine(refine)
    tags = {(0, s): BoundaryTag.OUTER_FIXED for s in Side}
    dom = MultiPatchDomain([patch], [], tags)
    return dom, build_dof_map(dom)


class TestMinJacobian:
    def test_identity(self):
        dom, dm = square_domain()
        rep = min_jacobian(dom, MultiPatchField(dm))
        assert rep.min_j == 1.0
        assert rep.passed

    def test_uniform_dilation(self):
        dom, dm = square_domain()
        u = MultiPatchField(dm, 0.1 * dm.rep_points)
        rep = min_jacobian(dom, u)
        assert abs(rep.min_j - 1.21) < 1e-12
        # max equals min for a constant-J field
        vals = []
        for p in range(dom.n_patches):
            t = dom.patches[p].tables()
            J = t.J0 + t.disp_jacobian(u.patch_values(p))
            det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
            vals.append((det / t.det0).max())
        assert abs(max(vals) - 1.21) < 1e-12

    def test_shear_field(self):
        dom, dm = square_domain()
        u = np.column_stack([0.6 * dm.rep_points[:, 1],
                             np.zeros(dm.n_global)])
        rep = min_jacobian(dom, MultiPatchField(dm, u))
        assert abs(rep.min_j - 1.0) < 1e-12

    def test_folding_field(self):
        dom, dm = square_domain()
        u = np.column_stack([-2.0 * dm.rep_points[:, 0],
                             np.zeros(dm.n_global)])
        rep = min_jacobian(dom, MultiPatchField(dm, u))
        assert abs(rep.min_j - (-1.0)) < 1e-12
        assert not rep.passed

    def test_deterministic_location(self):
        fluid, _ = build_benchmark_geometry(1)
        dm = build_dof_map(fluid)
        u = MultiPatchField(dm, 0.05 * dm.rep_points)
        a = min_jacobian(fluid, u)
        b = min_jacobian(fluid, u)
        assert a.location == b.location


class TestAleNorm:
    def test_zero_field(self):
        dom, dm = square_domain()
        assert ale_norm(dom, MultiPatchField(dm)) == 0.0

    def test_constant_field_closed_form(self):
        dom, dm = square_domain()
        c = 0.37
        u = np.column_stack([np.full(dm.n_global, c), np.zeros(dm.n_global)])
        assert ale_norm(dom, MultiPatchField(dm, u)) == pytest.approx(c, abs=1e-13)

    def test_constant_field_benchmark_area(self):
        fluid, _ = build_benchmark_geometry(1)
        dm = build_dof_map(fluid)
        area = sum(float((p.tables().qw * p.tables().det0).sum())
                   for p in fluid.patches)
        u = np.column_stack([np.full(dm.n_global, 2.0), np.zeros(dm.n_global)])
        assert ale_norm(fluid, MultiPatchField(dm, u)) == pytest.approx(
            2.0 * np.sqrt(area), rel=1e-12)

    def test_smooth_field_converges(self):
        errs = []
        for refine in (1, 2, 3):
            dom, dm = square_domain(refine)
            vals = np.column_stack([
                np.sin(np.pi * dm.rep_points[:, 0])
                * np.sin(np.pi * dm.rep_points[:, 1]),
                np.zeros(dm.n_global)])
            errs.append(abs(ale_norm(dom, MultiPatchField(dm, vals)) - 0.5))
        assert errs[1] < errs[0] and errs[2] < errs[1]


class TestPeriodMinima:
    def test_monotone_series_empty(self):
        t = np.linspace(0, 10, 100)
        assert period_minima(t, t ** 2) == []

    def test_abs_sine_spacing(self):
        T = 0.91
        t = np.arange(0, 5, 0.0025)
        v = np.abs(np.sin(2 * np.pi * t / T))
        mins = period_minima(t, v)
        spacings = np.diff([m[0] for m in mins])
        assert len(mins) >= 8
        np.testing.assert_allclose(spacings, T / 2, atol=0.01)

    def test_separation_guard_keeps_lower(self):
        t = np.array([0.0, 0.5, 0.6, 0.7, 0.8, 1.5, 2.0])
        v = np.array([1.0, 0.30, 0.8, 0.10, 0.9, 0.05, 1.0])
        mins = period_minima(t, v)
        # 0.7 beats 0.5 inside the window; 1.5 follows far enough
        assert [m[0] for m in mins] == [0.7, 1.5]

    def test_pure_function(self):
        rng = np.random.default_rng(0)
        t = np.cumsum(rng.uniform(0.01, 0.05, 200))
        v = np.abs(np.sin(t * 3)) + 0.01 * rng.standard_normal(200)
        assert period_minima(t, v) == period_minima(t, v)

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            period_minima([0.0, 0.5, 0.4], [1, 2, 3])


class TestTiming:
    def test_noop_elapsed_nonnegative(self):
        tb = TimingBreakdown()
        _, dt = tb.timed("assembly", lambda: None)
        assert dt >= 0.0
        assert tb.assembly_s == dt

    def test_phases_sum_below_total(self):
        tb = TimingBreakdown()
        start = time.perf_counter()
        tb.timed("assembly", time.sleep, 0.01)
        tb.timed("solve", time.sleep, 0.01)
        total = time.perf_counter() - start
        assert tb.assembly_s + tb.solve_s <= total + 1e-4
        assert tb.total_s == tb.assembly_s + tb.solve_s + tb.check_s

    def test_nested_same_phase_rejected(self):
        tb = TimingBreakdown()
        with pytest.raises(TimingUsageError):
            tb.timed("check", lambda: tb.timed("check", lambda: None))

    def test_unknown_phase_rejected(self):
        tb = TimingBreakdown()
        with pytest.raises(TimingUsageError):
            tb.timed("warmup", lambda: None)

    def test_result_passthrough(self):
        tb = TimingBreakdown()
        result, _ = tb.timed("solve", lambda a, b: a + b, 2, 3)
        assert result == 5
