"""Material law, assembly and solver tests with independent oracles."""

import numpy as np
import pytest

from mdtbench.discretization import (
    BoundaryTag, MultiPatchDomain, Side, bilinear_patch,
    build_benchmark_geometry, build_dof_map,
)
from mdtbench.errors import (InvalidGeometryError, InvalidStateError,
                             SingularMaterialError)
from mdtbench.operators import (
    assemble_boundary_flux,
    MaterialLaw, StiffeningConfig, assemble_linear_elasticity,
    assemble_mixed_biharmonic, assemble_nonlinear, assemble_scalar_laplace,
    eval_stress_and_tangent, lame_from_young_poisson, stiffening_weight,
    stress_and_tangent_batch,
)

NU_MESH = 0.3
LAME_MESH = lame_from_young_poisson(1.0, NU_MESH)


def unit_square_domain(refine=1):
    patch = bilinear_patch([(0, 0), (1, 0), (1, 1), (0, 1)]).uniform_refine(refine)
    tags = {(0, s): BoundaryTag.OUTER_FIXED for s in Side}
    return MultiPatchDomain([patch], [], tags)


@pytest.fixture(scope="module")
def benchmark():
    fluid, _ = build_benchmark_geometry(1)
    return fluid, build_dof_map(fluid)


def affine_coeffs(points, a, bx, by):
    return a + bx * points[:, 0] + by * points[:, 1]


# ---------------------------------------------------------------------------
# Lame parameters and stiffening weight
# ---------------------------------------------------------------------------

class TestLame:
    def test_benchmark_values(self):
        lp = lame_from_young_poisson(1.4e6, 0.4)
        assert lp.lam == pytest.approx(2.0e6, rel=1e-12)
        assert lp.mu == pytest.approx(5.0e5, rel=1e-12)

    def test_zero_poisson(self):
        lp = lame_from_young_poisson(1.0, 0.0)
        assert lp.lam == 0.0
        assert lp.mu == 0.5

    def test_incompressible_limit_rejected(self):
        with pytest.raises(SingularMaterialError):
            lame_from_young_poisson(1.0, 0.5)


class TestStiffeningWeight:
    def test_values(self):
        assert stiffening_weight(0.7, 0.0) == 0.7
        assert stiffening_weight(0.7, 1.0) == pytest.approx(1.0)
        assert stiffening_weight(4.0, 2.0) == pytest.approx(0.25)

    def test_nonpositive_det_rejected(self):
        with pytest.raises(InvalidGeometryError):
            stiffening_weight(0.0, 1.0)
        with pytest.raises(InvalidGeometryError):
            stiffening_weight(-0.5, 2.0)


# ---------------------------------------------------------------------------
# stress and tangent
# ---------------------------------------------------------------------------

def spd_sqrt(C):
    """Symmetric square root of an SPD 2x2 matrix (closed form)."""
    s = np.sqrt(np.linalg.det(C))
    t = np.sqrt(np.trace(C) + 2 * s)
    return (C + s * np.eye(2)) / t


def fd_material_tangent(law, F, h=1e-5):
    """Central difference of S w.r.t. the Green-Lagrange strain."""
    C0 = F.T @ F
    fd = np.zeros((2, 2, 2, 2))
    for k in range(2):
        for l in range(2):
            d = np.zeros((2, 2))
            d[k, l] += 0.5
            d[l, k] += 0.5
            Sp, _ = eval_stress_and_tangent(law, spd_sqrt(C0 + 2 * h * d))
            Sm, _ = eval_stress_and_tangent(law, spd_sqrt(C0 - 2 * h * d))
            fd[:, :, k, l] = (Sp - Sm) / (2 * h)
    return fd


def admissible_states(n, seed=7, min_det=0.3):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        F = np.eye(2) + 0.4 * rng.uniform(-1, 1, size=(2, 2))
        if np.linalg.det(F) > min_det:
            out.append(F)
    return out


LAWS = [MaterialLaw.st_venant_kirchhoff(LAME_MESH),
        MaterialLaw.neo_hookean_log(LAME_MESH)]


class TestStressTangent:
    @pytest.mark.parametrize("law", LAWS, ids=lambda l: l.kind.value)
    def test_stress_free_reference(self, law):
        S, _ = eval_stress_and_tangent(law, np.eye(2))
        assert np.abs(S).max() == 0.0

    def test_stvk_uniaxial_hand_value(self):
        a = 0.17
        law = MaterialLaw.st_venant_kirchhoff(LAME_MESH)
        S, _ = eval_stress_and_tangent(law, np.diag([1 + a, 1.0]))
        e11 = a + 0.5 * a * a
        lam, mu = LAME_MESH.lam, LAME_MESH.mu
        expected = np.diag([lam * e11 + 2 * mu * e11, lam * e11])
        np.testing.assert_allclose(S, expected, rtol=1e-13)

    @pytest.mark.parametrize("law", LAWS, ids=lambda l: l.kind.value)
    def test_tangent_matches_finite_difference(self, law):
        for F in admissible_states(20):
            S, C = eval_stress_and_tangent(law, F)
            fd = fd_material_tangent(law, F)
            err = np.abs(C - fd).max() / np.abs(C).max()
            assert err < 1e-6

    @pytest.mark.parametrize("law", LAWS, ids=lambda l: l.kind.value)
    def test_tangent_symmetries(self, law):
        for F in admissible_states(6, seed=11):
            S, C = eval_stress_and_tangent(law, F)
            scale = np.abs(C).max()
            assert np.abs(S - S.T).max() <= 1e-12 * max(1.0, np.abs(S).max())
            assert np.abs(C - np.einsum("ijkl->klij", C)).max() <= 1e-12 * scale
            assert np.abs(C - np.einsum("ijkl->jikl", C)).max() <= 1e-12 * scale
            assert np.abs(C - np.einsum("ijkl->ijlk", C)).max() <= 1e-12 * scale

    def test_neo_hookean_rejects_inverted_state(self):
        law = MaterialLaw.neo_hookean_log(LAME_MESH)
        with pytest.raises(InvalidStateError):
            eval_stress_and_tangent(law, np.diag([-1.0, 1.0]))


# ---------------------------------------------------------------------------
# scalar Laplace
# ---------------------------------------------------------------------------

class TestScalarLaplace:
    def test_affine_reproduction_unit_square(self):
        dom = unit_square_domain(refine=2)
        dm = build_dof_map(dom)
        sys = assemble_scalar_laplace(dom, dm)
        g = affine_coeffs(dm.rep_points[dm.dirichlet], 3.0, 2.0, -1.0)[:, None]
        x = sys.solve_dirichlet(g)
        exact = affine_coeffs(dm.rep_points[dm.free], 3.0, 2.0, -1.0)[:, None]
        assert np.abs(x - exact).max() < 1e-10

    def test_zero_data_zero_solution(self, benchmark):
        fluid, dm = benchmark
        sys = assemble_scalar_laplace(fluid, dm)
        x = sys.solve_dirichlet(np.zeros((dm.n_dirichlet, 2)))
        assert np.abs(x).max() == 0.0

    def test_multiple_right_hand_sides(self, benchmark):
        fluid, dm = benchmark
        sys = assemble_scalar_laplace(fluid, dm)
        pts = dm.rep_points
        g = np.column_stack([affine_coeffs(pts[dm.dirichlet], 1.0, 0.5, 0.25),
                             affine_coeffs(pts[dm.dirichlet], -2.0, 0.0, 3.0)])
        x = sys.solve_dirichlet(g)
        exact = np.column_stack([affine_coeffs(pts[dm.free], 1.0, 0.5, 0.25),
                                 affine_coeffs(pts[dm.free], -2.0, 0.0, 3.0)])
        assert np.abs(x - exact).max() < 1e-10

    def test_chi_zero_equals_unstiffened(self, benchmark):
        fluid, dm = benchmark
        a = assemble_scalar_laplace(fluid, dm)
        b = assemble_scalar_laplace(fluid, dm, stiffening=StiffeningConfig(0.0))
        assert (a.matrix - b.matrix).nnz == 0

    def test_symmetric_positive_definite(self, benchmark):
        fluid, dm = benchmark
        K = assemble_scalar_laplace(fluid, dm).matrix.toarray()
        assert np.abs(K - K.T).max() <= 1e-13 * np.abs(K).max()
        assert np.linalg.eigvalsh(K).min() > 0

    def test_stiffening_changes_matrix(self, benchmark):
        fluid, dm = benchmark
        a = assemble_scalar_laplace(fluid, dm)
        b = assemble_scalar_laplace(fluid, dm, stiffening=StiffeningConfig(2.0))
        assert np.abs((a.matrix - b.matrix).toarray()).max() > 1e-6


# ---------------------------------------------------------------------------
# mixed bi-harmonic
# ---------------------------------------------------------------------------

class TestMixedBiharmonic:
    def test_affine_u_and_zero_q(self, benchmark):
        # affine data with the consistent normal-derivative flux on the
        # first-equation rows: reproduced exactly with q = 0
        fluid, dm = benchmark
        sys = assemble_mixed_biharmonic(fluid, dm)
        assert sys.saddle_point
        a, bx, by = 1.0, 2.0, -0.7
        g = affine_coeffs(dm.rep_points[dm.dirichlet], a, bx, by)[:, None]
        flux = assemble_boundary_flux(
            fluid, dm, lambda pts, nrm: bx * nrm[:, 0] + by * nrm[:, 1])
        rhs = -(sys.elimination @ g)
        rhs[sys.extra["flux_rows"]] += flux[:, None]
        x = sys.solve_rhs(rhs)
        u = x[sys.extra["u_rows"]]
        q = x[:sys.extra["n_q"]]
        exact = affine_coeffs(dm.rep_points[dm.free], a, bx, by)[:, None]
        assert np.abs(u - exact).max() < 1e-9
        assert np.abs(q).max() < 1e-9

    def test_zero_data(self, benchmark):
        fluid, dm = benchmark
        sys = assemble_mixed_biharmonic(fluid, dm)
        x = sys.solve_dirichlet(np.zeros((dm.n_dirichlet, 2)))
        assert np.abs(x).max() == 0.0

    def test_system_size(self, benchmark):
        fluid, dm = benchmark
        sys = assemble_mixed_biharmonic(fluid, dm)
        assert sys.n == dm.n_global + dm.n_free

    def test_differs_from_harmonic_extension(self, benchmark):
        # the production solve (du/dn = 0 weakly) is a genuinely different
        # extension than HE
        fluid, dm = benchmark
        g = np.zeros((dm.n_dirichlet, 1))
        g[dm.gamma_in_dirichlet] = 0.01
        be = assemble_mixed_biharmonic(fluid, dm).solve_dirichlet(g)
        he = assemble_scalar_laplace(fluid, dm).solve_dirichlet(g)
        u_be = be[dm.n_global:]
        assert np.abs(u_be - he).max() > 1e-5

    @staticmethod
    def _solve_manufactured(refine, u_fun, grad_fun, q_fun):
        dom = unit_square_domain(refine)
        dm = build_dof_map(dom)
        sys = assemble_mixed_biharmonic(dom, dm)
        pts = dm.rep_points
        u_d = u_fun(pts[dm.dirichlet])[:, None]
        flux = assemble_boundary_flux(
            dom, dm, lambda p, n: np.einsum("ki,ki->k", grad_fun(p), n))
        rhs = -(sys.elimination @ u_d)
        rhs[sys.extra["flux_rows"]] += flux[:, None]
        x = sys.solve_rhs(rhs)
        u_full = dm.expand(x[sys.extra["u_rows"]], u_d)
        q_full = x[:sys.extra["n_q"]]
        patch = dom.patches[0]
        eu = eq = 0.0
        for xi in np.linspace(0.05, 0.95, 5):
            for eta in np.linspace(0.05, 0.95, 5):
                P = patch.eval(xi, eta)[0][None, :]
                eu = max(eu, abs(patch.eval_field(u_full, xi, eta)[0] - u_fun(P)[0]))
        # the auxiliary variable carries a boundary layer; measure it in the
        # interior band where it approximates lap u
        for xi in np.linspace(0.25, 0.75, 5):
            for eta in np.linspace(0.25, 0.75, 5):
                P = patch.eval(xi, eta)[0][None, :]
                eq = max(eq, abs(patch.eval_field(q_full, xi, eta)[0] - q_fun(P)[0]))
        return eu, eq

    def test_manufactured_cubic_q_converges(self):
        # u = x^3 with consistent flux: recovered q approximates 6x and
        # converges under refinement
        u_fun = lambda P: P[:, 0] ** 3
        grad_fun = lambda P: np.column_stack([3 * P[:, 0] ** 2, 0 * P[:, 1]])
        q_fun = lambda P: 6.0 * P[:, 0]
        errs = [self._solve_manufactured(r, u_fun, grad_fun, q_fun)
                for r in (1, 2, 3)]
        eu = [e[0] for e in errs]
        eq = [e[1] for e in errs]
        assert eq[2] < eq[0]
        assert eu[1] < eu[0] and eu[2] < eu[1]
        assert eq[2] < 0.1 and eu[2] < 0.01


# ---------------------------------------------------------------------------
# linear elasticity
# ---------------------------------------------------------------------------

class TestLinearElasticity:
    def test_affine_patch_test(self, benchmark):
        fluid, dm = benchmark
        sys = assemble_linear_elasticity(fluid, dm, LAME_MESH)
        A = np.array([[0.3, -0.2], [0.15, 0.4]])
        b = np.array([0.01, -0.02])
        pts = dm.rep_points
        g = (pts[dm.dirichlet] @ A.T + b).reshape(-1)
        x = sys.solve_dirichlet(g)
        exact = (pts[dm.free] @ A.T + b).reshape(-1)
        assert np.abs(x - exact).max() < 1e-10

    def test_rigid_translation(self, benchmark):
        fluid, dm = benchmark
        sys = assemble_linear_elasticity(fluid, dm, LAME_MESH)
        g = np.tile([0.3, -0.1], (dm.n_dirichlet, 1)).reshape(-1)
        x = sys.solve_dirichlet(g).reshape(-1, 2)
        np.testing.assert_allclose(x, np.tile([0.3, -0.1], (dm.n_free, 1)),
                                   atol=1e-12)

    def test_spd_and_chi_zero_identity(self, benchmark):
        fluid, dm = benchmark
        a = assemble_linear_elasticity(fluid, dm, LAME_MESH)
        b = assemble_linear_elasticity(fluid, dm, LAME_MESH,
                                       stiffening=StiffeningConfig(0.0))
        assert (a.matrix - b.matrix).nnz == 0
        K = a.matrix.toarray()
        assert np.abs(K - K.T).max() <= 1e-13 * np.abs(K).max()
        assert np.linalg.eigvalsh(K).min() > 0


# ---------------------------------------------------------------------------
# nonlinear residual and tangent
# ---------------------------------------------------------------------------

class TestNonlinear:
    @pytest.mark.parametrize("law", LAWS, ids=lambda l: l.kind.value)
    def test_residual_zero_at_reference(self, benchmark, law):
        fluid, dm = benchmark
        R, _ = assemble_nonlinear(fluid, dm, law, np.zeros((dm.n_global, 2)))
        assert np.abs(R).max() == 0.0

    def test_rigid_motion_zero_residual(self, benchmark):
        fluid, dm = benchmark
        law = MaterialLaw.neo_hookean_log(LAME_MESH)
        th = 0.4
        Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        u = dm.rep_points @ Q.T + np.array([0.05, -0.3]) - dm.rep_points
        R, _ = assemble_nonlinear(fluid, dm, law, u, tangent=False)
        assert np.abs(R).max() < 1e-10

    @staticmethod
    def smooth_field(points, scale, phase=0.0):
        x, y = points[:, 0], points[:, 1]
        return scale * np.column_stack([
            np.sin(3 * x + phase) * y, x * y + 0.5 * np.cos(2 * y)])

    @pytest.mark.parametrize("law", LAWS, ids=lambda l: l.kind.value)
    def test_tangent_residual_consistency(self, benchmark, law):
        fluid, dm = benchmark
        u = self.smooth_field(dm.rep_points, 0.02)
        v = self.smooth_field(dm.rep_points, 1.0, phase=0.7)
        R0, sys = assemble_nonlinear(fluid, dm, law, u)
        fv = np.stack([2 * dm.free, 2 * dm.free + 1], axis=1).ravel()
        dv = np.stack([2 * dm.dirichlet, 2 * dm.dirichlet + 1], axis=1).ravel()
        v_flat = v.reshape(-1)
        lin = sys.matrix @ v_flat[fv] + sys.elimination @ v_flat[dv]
        errs = []
        for h in (1e-3, 5e-4, 2.5e-4):
            Rh, _ = assemble_nonlinear(fluid, dm, law, u + h * v, tangent=False)
            errs.append(np.linalg.norm(Rh - R0 - h * lin))
        # second order: halving h divides the defect by about 4
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.25)

    def test_inverted_state_reports_location(self, benchmark):
        fluid, dm = benchmark
        law = MaterialLaw.neo_hookean_log(LAME_MESH)
        u = np.column_stack([-2.0 * dm.rep_points[:, 0],
                             np.zeros(dm.n_global)])
        with pytest.raises(InvalidStateError, match="patch"):
            assemble_nonlinear(fluid, dm, law, u)

    def test_stiffening_applies_to_residual_and_tangent(self, benchmark):
        fluid, dm = benchmark
        law = MaterialLaw.neo_hookean_log(LAME_MESH)
        u = self.smooth_field(dm.rep_points, 0.01, phase=0.3)
        stiff = StiffeningConfig(2.0)
        R0, sys = assemble_nonlinear(fluid, dm, law, u, stiffening=stiff)
        v = self.smooth_field(dm.rep_points, 1.0, phase=1.1)
        fv = np.stack([2 * dm.free, 2 * dm.free + 1], axis=1).ravel()
        dv = np.stack([2 * dm.dirichlet, 2 * dm.dirichlet + 1], axis=1).ravel()
        v_flat = v.reshape(-1)
        lin = sys.matrix @ v_flat[fv] + sys.elimination @ v_flat[dv]
        h = 1e-4
        Rh, _ = assemble_nonlinear(fluid, dm, law, u + h * v,
                                   stiffening=stiff, tangent=False)
        defect = np.linalg.norm(Rh - R0 - h * lin)
        assert defect < 1e-6 * max(np.linalg.norm(lin), 1.0)


# ---------------------------------------------------------------------------
# solver behavior
# ---------------------------------------------------------------------------

class TestSolve:
    def test_cached_factorization_resolve(self, benchmark):
        fluid, dm = benchmark
        sys = assemble_scalar_laplace(fluid, dm)
        g1 = affine_coeffs(dm.rep_points[dm.dirichlet], 0.0, 1.0, 0.0)[:, None]
        x1 = sys.solve_dirichlet(g1)
        fresh = assemble_scalar_laplace(fluid, dm)
        x2 = fresh.solve_dirichlet(g1)
        assert np.abs(x1 - x2).max() <= 1e-12

    def test_batch_stress_matches_single(self):
        law = MaterialLaw.neo_hookean_log(LAME_MESH)
        Fs = np.stack(admissible_states(4, seed=2))
        S, C = stress_and_tangent_batch(law, Fs)
        for k in range(4):
            Sk, Ck = eval_stress_and_tangent(law, Fs[k])
            np.testing.assert_allclose(S[k], Sk, rtol=1e-14)
            np.testing.assert_allclose(C[k], Ck, rtol=1e-14)
