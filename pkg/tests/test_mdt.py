"""Technique stepping interface tests: equivalences, path independence,
transactional rejection, and the full-Newton oracle."""

import numpy as np
import pytest

from mdtbench import mdt
from mdtbench.discretization import (MultiPatchField, build_benchmark_geometry,
                                     build_dof_map)
from mdtbench.dynamics import BeamDriver, DriverParams, NewmarkParams
from mdtbench.errors import StepRejectedError
from mdtbench.quality import ale_norm, min_jacobian

ALL = ["HE", "IHE", "BE", "IBE", "LE", "ILE", "TINE"]


@pytest.fixture(scope="module")
def setup():
    fluid, beam = build_benchmark_geometry(1)
    dm = build_dof_map(fluid)
    driver = BeamDriver(beam, NewmarkParams(), DriverParams(l=1.0))
    state = driver.initial_state()
    traces = []
    for _ in range(3):
        for _ in range(30):
            state = driver.step(state)
        traces.append(driver.interface_trace(state, dm))
    return fluid, dm, traces


class TestInit:
    def test_fresh_step_zero_trace(self, setup):
        fluid, dm, _ = setup
        for name in ALL:
            s = mdt.init(name, fluid, dm)
            mdt.step(s, np.zeros((len(dm.gamma), 2)))
            assert np.abs(s.u_a.values).max() == 0.0

    def test_be_system_size(self, setup):
        fluid, dm, _ = setup
        s = mdt.init("BE", fluid, dm)
        assert s.cached_system.n == dm.n_global + dm.n_free
        assert s.cached_system.saddle_point

    def test_tine_defers_assembly(self, setup):
        fluid, dm, _ = setup
        s = mdt.init("TINE", fluid, dm)
        assert s.cached_system is None

    def test_unknown_name_rejected(self, setup):
        fluid, dm, _ = setup
        with pytest.raises(ValueError, match="unknown technique"):
            mdt.init("SPRING", fluid, dm)


class TestDeformedGeometry:
    def test_zero_field_identity(self, setup):
        fluid, dm, _ = setup
        s = mdt.init("HE", fluid, dm)
        geo = mdt.deformed_geometry(s)
        for a, b in zip(geo.patches, fluid.patches):
            np.testing.assert_array_equal(a.control_points, b.control_points)

    def test_constant_field_translates(self, setup):
        fluid, dm, _ = setup
        s = mdt.init("HE", fluid, dm)
        s.u_a = MultiPatchField(dm, np.tile([0.1, -0.2], (dm.n_global, 1)))
        geo = mdt.deformed_geometry(s)
        for a, b in zip(geo.patches, fluid.patches):
            np.testing.assert_allclose(
                a.control_points, b.control_points + [0.1, -0.2], atol=1e-15)

    def test_composed_jacobian_chain_rule(self, setup):
        fluid, dm, _ = setup
        s = mdt.init("HE", fluid, dm)
        A = np.array([[0.1, 0.05], [-0.02, 0.2]])
        s.u_a = MultiPatchField(dm, dm.rep_points @ A.T)
        geo = mdt.deformed_geometry(s)
        factor = np.linalg.det(np.eye(2) + A)
        for p0, p1 in zip(fluid.patches, geo.patches):
            for xi, eta in [(0.2, 0.3), (0.8, 0.6)]:
                d0 = p0.eval(xi, eta)[2]
                d1 = p1.eval(xi, eta)[2]
                assert d1 == pytest.approx(factor * d0, rel=1e-12)


class TestStepEquivalences:
    @pytest.mark.parametrize("pair", [("HE", "IHE"), ("BE", "IBE"), ("LE", "ILE")])
    def test_first_step_equivalence(self, setup, pair):
        fluid, dm, traces = setup
        a = mdt.init(pair[0], fluid, dm, stiffening=1.5)
        b = mdt.init(pair[1], fluid, dm, stiffening=1.5)
        mdt.step(a, traces[0])
        mdt.step(b, traces[0])
        scale = max(np.abs(a.u_a.values).max(), 1e-30)
        assert np.abs(a.u_a.values - b.u_a.values).max() <= 1e-10 * max(scale, 1.0)

    @pytest.mark.parametrize("name", ["HE", "BE", "LE"])
    def test_path_independence(self, setup, name):
        fluid, dm, traces = setup
        a = mdt.init(name, fluid, dm, stiffening=2.0)
        mdt.step(a, traces[0])
        mdt.step(a, traces[1])
        mdt.step(a, traces[2])
        b = mdt.init(name, fluid, dm, stiffening=2.0)
        mdt.step(b, traces[2])
        assert np.abs(a.u_a.values - b.u_a.values).max() <= 1e-10

    @pytest.mark.parametrize("name", ["HE", "BE", "LE"])
    def test_return_to_zero(self, setup, name):
        fluid, dm, traces = setup
        s = mdt.init(name, fluid, dm)
        mdt.step(s, traces[1])
        mdt.step(s, np.zeros((len(dm.gamma), 2)))
        assert np.abs(s.u_a.values).max() == 0.0

    def test_incremental_path_dependence(self, setup):
        # deformed-configuration techniques accumulate distortion
        fluid, dm, traces = setup
        s = mdt.init("ILE", fluid, dm, stiffening=2.0)
        mdt.step(s, traces[1])
        mdt.step(s, np.zeros((len(dm.gamma), 2)))
        assert ale_norm(fluid, s.u_a) > 1e-9

    def test_tine_rigid_translation(self, setup):
        fluid, dm, _ = setup
        c = np.array([0.02, -0.015])
        s = mdt.init("TINE", fluid, dm)
        g = np.tile(c, (len(dm.gamma), 1))
        outer = np.tile(c, (len(dm.outer), 1))
        mdt.step(s, g, outer_trace=outer)
        np.testing.assert_allclose(s.u_a.values,
                                   np.tile(c, (dm.n_global, 1)), atol=1e-12)
        assert abs(s.last_report.min_j - 1.0) < 1e-12


class TestReset:
    def test_reset_equals_fresh(self, setup):
        fluid, dm, traces = setup
        s = mdt.init("HE", fluid, dm)
        mdt.step(s, traces[0])
        mdt.step(s, traces[1])
        system = s.cached_system
        mdt.reset(s)
        assert ale_norm(fluid, s.u_a) == 0.0
        assert s.cached_system is system  # factorization retained
        mdt.step(s, traces[0])
        fresh = mdt.init("HE", fluid, dm)
        mdt.step(fresh, traces[0])
        assert np.abs(s.u_a.values - fresh.u_a.values).max() <= 1e-14


class TestRejection:
    def test_rejected_step_leaves_state(self, setup):
        fluid, dm, traces = setup
        s = mdt.init("HE", fluid, dm)
        mdt.step(s, traces[0])
        before = s.u_a.values.copy()
        prev = s.prev_dirichlet.copy()
        bad = np.tile([0.0, 0.5], (len(dm.gamma), 1))  # far beyond the channel
        with pytest.raises(StepRejectedError) as err:
            mdt.step(s, bad)
        assert err.value.report.min_j <= 1e-10
        assert err.value.candidate_norm > 0
        np.testing.assert_array_equal(s.u_a.values, before)
        np.testing.assert_array_equal(s.prev_dirichlet, prev)


class TestFullNewton:
    def test_zero_trace_returns_zero(self, setup):
        fluid, dm, _ = setup
        s = mdt.init("TINE", fluid, dm)
        u = mdt.solve_full_newton(s, np.zeros((len(dm.gamma), 2)))
        assert np.abs(u).max() == 0.0

    def test_single_step_contraction(self, setup):
        fluid, dm, traces = setup
        base = traces[2]
        errs = []
        for k in range(3):
            g = base / (2.0 ** k)
            s = mdt.init("TINE", fluid, dm, stiffening=2.0)
            mdt.step(s, g)
            exact = mdt.solve_full_newton(mdt.init("TINE", fluid, dm, stiffening=2.0), g)
            errs.append(np.linalg.norm(s.u_a.values - exact))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.6)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.6)

    def test_full_newton_bijective(self, setup):
        fluid, dm, traces = setup
        s = mdt.init("TINE", fluid, dm, stiffening=2.0)
        u = mdt.solve_full_newton(s, traces[2])
        rep = min_jacobian(fluid, MultiPatchField(dm, u))
        assert rep.min_j > 0
