"""Material laws and weak-form assembly of the elliptic mesh operators.

All operators are assembled with tensor Gauss-Legendre quadrature
((p+1)^2 points per element) on either the initial or a deformed
configuration of the domain. Jacobian-based local stiffening replaces the
quadrature measure det(grad G) by det(grad G)^(1-chi) in every integral of
an operator, residuals included, so Newton consistency is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import DofMap, MultiPatchDomain, _det22, _inv22
from .errors import (InvalidGeometryError, InvalidStateError,
                     SingularMaterialError, SolverError)

J_EPS = 1e-10          # bijectivity guard inside nonlinear assembly
SOLVE_RTOL = 1e-10     # verified relative residual of every direct solve


# ---------------------------------------------------------------------------
# material laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LameParameters:
    lam: float   # first Lame parameter
    mu: float    # shear modulus

    def __post_init__(self):
        if not np.isfinite(self.lam):
            raise ValueError("lambda must be finite")
        if not (self.mu > 0 and np.isfinite(self.mu)):
            raise ValueError("mu must be positive")


def lame_from_young_poisson(E: float, nu: float) -> LameParameters:
    """Lame parameters from Young's modulus and Poisson's ratio."""
    if E <= 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if nu <= -1.0:
        raise ValueError(f"Poisson's ratio must exceed -1, got {nu}")
    if nu >= 0.5:
        raise SingularMaterialError(
            f"Poisson's ratio {nu} at or beyond the incompressible limit")
    return LameParameters(lam=nu * E / ((1 + nu) * (1 - 2 * nu)),
                          mu=E / (2 * (1 + nu)))


class MaterialKind(Enum):
    HOOKE = "hooke"
    ST_VENANT_KIRCHHOFF = "stvk"
    NEO_HOOKEAN_LOG = "neo_hookean_log"


@dataclass(frozen=True)
class MaterialLaw:
    kind: MaterialKind
    lame: LameParameters

    @staticmethod
    def hooke(lame):
        return MaterialLaw(MaterialKind.HOOKE, lame)

    @staticmethod
    def st_venant_kirchhoff(lame):
        return MaterialLaw(MaterialKind.ST_VENANT_KIRCHHOFF, lame)

    @staticmethod
    def neo_hookean_log(lame):
        return MaterialLaw(MaterialKind.NEO_HOOKEAN_LOG, lame)


_I2 = np.eye(2)


def _iso_tangent(lame: LameParameters) -> np.ndarray:
    """Isotropic 4th-order tangent lam*I(x)I + 2 mu II_sym."""
    lam, mu = lame.lam, lame.mu
    II = np.einsum("ij,kl->ijkl", _I2, _I2)
    sym = 0.5 * (np.einsum("ik,jl->ijkl", _I2, _I2)
                 + np.einsum("il,jk->ijkl", _I2, _I2))
    return lam * II + 2 * mu * sym


def stress_and_tangent_batch(law: MaterialLaw, F: np.ndarray):
    """Second Piola-Kirchhoff stress and material tangent at each F.

    F has shape (..., 2, 2); returns S (..., 2, 2) and the tangent
    C = dS/dE with shape (..., 2, 2, 2, 2).
    """
    F = np.asarray(F, dtype=float)
    lam, mu = law.lame.lam, law.lame.mu
    batch = F.shape[:-2]
    if law.kind == MaterialKind.ST_VENANT_KIRCHHOFF:
        E = 0.5 * (np.einsum("...ki,...kj->...ij", F, F) - _I2)
        tr = np.trace(E, axis1=-2, axis2=-1)
        S = lam * tr[..., None, None] * _I2 + 2 * mu * E
        C = np.broadcast_to(_iso_tangent(law.lame), batch + (2, 2, 2, 2))
        return S, C
    if law.kind == MaterialKind.NEO_HOOKEAN_LOG:
        J = _det22(F)
        bad = J <= J_EPS
        if np.any(bad):
            idx = np.unravel_index(int(np.argmax(bad)), bad.shape) if batch else ()
            raise InvalidStateError(
                f"det F = {J[idx] if batch else float(J):.3e} <= {J_EPS} "
                f"at batch index {idx}; log-neo-Hookean law undefined")
        Cg = np.einsum("...ki,...kj->...ij", F, F)
        Ci = _inv22(Cg, _det22(Cg))
        lnJ = np.log(J)
        S = lam * lnJ[..., None, None] * Ci + mu * (_I2 - Ci)
        CiCi = np.einsum("...ij,...kl->...ijkl", Ci, Ci)
        Isym = 0.5 * (np.einsum("...ik,...jl->...ijkl", Ci, Ci)
                      + np.einsum("...il,...jk->...ijkl", Ci, Ci))
        C = lam * CiCi + 2 * (mu - lam * lnJ)[..., None, None, None, None] * Isym
        return S, C
    # Hooke: linearized strain from F = I + grad u
    eps = 0.5 * (F + np.swapaxes(F, -1, -2)) - _I2
    tr = np.trace(eps, axis1=-2, axis2=-1)
    S = lam * tr[..., None, None] * _I2 + 2 * mu * eps
    C = np.broadcast_to(_iso_tangent(law.lame), batch + (2, 2, 2, 2))
    return S, C


def eval_stress_and_tangent(law: MaterialLaw, F) -> tuple[np.ndarray, np.ndarray]:
    """Stress and tangent at a single 2x2 deformation gradient."""
    F = np.asarray(F, dtype=float)
    if F.shape != (2, 2):
        raise ValueError("F must be a 2x2 deformation gradient")
    S, C = stress_and_tangent_batch(law, F[None])
    return S[0], np.array(C[0])


def _voigt_tangent(C: np.ndarray) -> np.ndarray:
    """4th-order tangent to the 3x3 Voigt matrix for [E11, E22, 2 E12]."""
    D = np.empty(C.shape[:-4] + (3, 3))
    pairs = ((0, 0), (1, 1), (0, 1))
    for m, (i, j) in enumerate(pairs):
        for n, (k, l) in enumerate(pairs):
            D[..., m, n] = C[..., i, j, k, l]
    return D


def strain_energy_density(law: MaterialLaw, F: np.ndarray) -> np.ndarray:
    """Stored energy per unit reference area at each F."""
    F = np.asarray(F, dtype=float)
    lam, mu = law.lame.lam, law.lame.mu
    if law.kind == MaterialKind.ST_VENANT_KIRCHHOFF:
        E = 0.5 * (np.einsum("...ki,...kj->...ij", F, F) - _I2)
        tr = np.trace(E, axis1=-2, axis2=-1)
        return 0.5 * lam * tr ** 2 + mu * np.einsum("...ij,...ij->...", E, E)
    if law.kind == MaterialKind.NEO_HOOKEAN_LOG:
        J = _det22(F)
        if np.any(J <= J_EPS):
            raise InvalidStateError("det F <= 0 in strain energy")
        trC = np.einsum("...ki,...ki->...", F, F)
        lnJ = np.log(J)
        return 0.5 * mu * (trC - 2) - mu * lnJ + 0.5 * lam * lnJ ** 2
    raise ValueError(f"no stored-energy density for {law.kind}")


# ---------------------------------------------------------------------------
# local stiffening
# ---------------------------------------------------------------------------

class StiffeningBase(Enum):
    INITIAL = "initial"
    DEFORMED = "deformed"


@dataclass(frozen=True)
class StiffeningConfig:
    chi: float = 0.0
    base: StiffeningBase = StiffeningBase.INITIAL

    def __post_init__(self):
        if self.chi < 0:
            raise ValueError("stiffening degree chi must be >= 0")


def stiffening_weight(det_g, chi: float):
    """Quadrature measure det^(1-chi) replacing det in stiffened integrals."""
    det_g = np.asarray(det_g, dtype=float)
    if np.any(det_g <= 0.0):
        raise InvalidGeometryError(
            f"stiffening weight needs det grad G > 0, got min {det_g.min():.3e}")
    if chi == 0.0:
        return det_g if det_g.ndim else float(det_g)
    out = det_g ** (1.0 - chi)
    return out if det_g.ndim else float(out)


# ---------------------------------------------------------------------------
# assembled systems and the direct solver
# ---------------------------------------------------------------------------

class AssembledSystem:
    """Reduced linear system over free unknowns plus Dirichlet elimination.

    ``matrix`` acts on the free-unknown vector; ``elimination`` maps
    Dirichlet coefficient values to their contribution on the free rows, so
    the Dirichlet-driven right-hand side is ``-elimination @ g``. One LU
    factorization is cached and reused for any number of right-hand sides.
    """

    def __init__(self, matrix, elimination, *, symmetric, saddle_point,
                 field_dim, extra=None):
        self.matrix = matrix.tocsr()
        self.elimination = elimination.tocsr()
        self.symmetric = symmetric
        self.saddle_point = saddle_point
        self.field_dim = field_dim
        self.extra = extra or {}
        self._lu = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def factorize(self):
        if self._lu is None:
            if self.n == 0:
                self._lu = None
                return None
            A = self.matrix.tocsc()
            try:
                if self.symmetric and not self.saddle_point:
                    # symmetric positive definite path
                    self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A",
                                         diag_pivot_thresh=0.0,
                                         options={"SymmetricMode": True})
                else:
                    # symmetric indefinite / general path
                    self._lu = spla.splu(A)
            except RuntimeError as exc:
                raise SolverError(f"sparse LU factorization failed: {exc}") from exc
        return self._lu

    def solve_rhs(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self.n == 0:
            return np.zeros_like(rhs)
        lu = self.factorize()
        x = lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError("direct solve produced non-finite values")
        resid = self.matrix @ x - rhs
        scale = np.linalg.norm(rhs)
        if scale > 0 and np.linalg.norm(resid) > SOLVE_RTOL * scale:
            raise SolverError(
                f"direct solve residual {np.linalg.norm(resid) / scale:.3e} "
                f"exceeds {SOLVE_RTOL}")
        return x

    def solve_dirichlet(self, dirichlet_values: np.ndarray) -> np.ndarray:
        """Solve with rhs = -elimination @ g for given Dirichlet values."""
        g = np.asarray(dirichlet_values, dtype=float)
        return self.solve_rhs(-(self.elimination @ g))

    def dump_triplets(self, path) -> None:
        """Plain-text (row, col, value) dump for cross-checking."""
        coo = self.matrix.tocoo()
        with open(path, "w") as f:
            f.write(f"# {self.n} x {self.n}, nnz {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                f.write(f"{i} {j} {v:.17g}\n")


# ---------------------------------------------------------------------------
# quadrature-level helpers
# ---------------------------------------------------------------------------

_ASSEMBLY_THREADS = 1


def set_assembly_threads(n: int) -> None:
    """Worker count for per-patch element loops.

    Patches are independent; contributions are concatenated in patch order,
    so results are bit-identical to single-threaded assembly.
    """
    global _ASSEMBLY_THREADS
    _ASSEMBLY_THREADS = max(1, int(n))


def _map_patches(n_patches: int, fn):
    if _ASSEMBLY_THREADS == 1 or n_patches == 1:
        return [fn(p) for p in range(n_patches)]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=_ASSEMBLY_THREADS) as ex:
        return list(ex.map(fn, range(n_patches)))


def _patch_fields(domain: MultiPatchDomain, dofmap: DofMap, p: int,
                  displacement, stiffening, stiffening_displacement):
    """Per-quadrature-point gradients and stiffened weights for one patch.

    Returns (g, w, gd, J, det) with physical basis gradients g
    (n_el, nq, nloc, 2), integration weights w (n_el, nq), global scalar
    ids gd (n_el, nloc) and the geometry Jacobian/determinant of the
    selected configuration. Initial-configuration fields are cached per
    stiffening degree on the patch tables.
    """
    t = domain.patches[p].tables()
    gd = dofmap.patch_gids[p][t.el_dofs]
    chi = 0.0 if stiffening is None else stiffening.chi
    plain_base = stiffening_displacement is displacement
    if displacement is None and plain_base:
        cache = getattr(t, "_init_fields", None)
        if cache is None:
            cache = t._init_fields = {}
        hit = cache.get(chi)
        if hit is None:
            invJ = _inv22(t.J0, t.det0)
            g = cache.get("g")
            if g is None:
                g = cache["g"] = np.matmul(t.dN, invJ)
            w = t.qw * (t.det0 if chi == 0.0
                        else stiffening_weight(t.det0, chi))
            hit = cache[chi] = (g, w)
        g, w = hit
        return g, w, gd, t.J0, t.det0
    if displacement is None:
        J, det = t.J0, t.det0
    else:
        J = t.J0 + t.disp_jacobian(dofmap.patch_values(displacement, p))
        det = _det22(J)
    if det.min() <= 0.0:
        e, q = np.unravel_index(int(np.argmin(det)), det.shape)
        raise InvalidGeometryError(
            f"patch {p}: geometry map not bijective at element {e}, "
            f"quadrature point {q} (det {det.min():.3e})")
    invJ = _inv22(J, det)
    g = np.matmul(t.dN, invJ)
    if chi == 0.0:
        w = t.qw * det
    elif plain_base:
        w = t.qw * stiffening_weight(det, chi)
    else:
        # debug override: measure from the operator's configuration, the
        # stiffening determinant from another one
        if stiffening_displacement is None:
            det_s = t.det0
        else:
            Js = t.J0 + t.disp_jacobian(
                dofmap.patch_values(stiffening_displacement, p))
            det_s = _det22(Js)
        if det_s.min() <= 0.0:
            raise InvalidGeometryError("stiffening base map not bijective")
        w = t.qw * det * det_s ** (-chi)
    return g, w, gd, J, det


def _scatter_scalar(blocks, gds, n) -> sp.csr_matrix:
    rows = np.concatenate([np.broadcast_to(gd[:, :, None], k.shape).ravel()
                           for k, gd in zip(blocks, gds)])
    cols = np.concatenate([np.broadcast_to(gd[:, None, :], k.shape).ravel()
                           for k, gd in zip(blocks, gds)])
    vals = np.concatenate([k.ravel() for k in blocks])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _vec_ids(scalar_ids: np.ndarray) -> np.ndarray:
    return (2 * scalar_ids[:, None] + np.arange(2)).ravel()


def _reduction_plan(domain: MultiPatchDomain, dofmap: DofMap, vector: bool):
    """Cached COO target indices of element blocks, split into the free-free
    matrix and the free-Dirichlet elimination block."""
    attr = "_plan_vector" if vector else "_plan_scalar"
    plan = getattr(dofmap, attr, None)
    if plan is not None:
        return plan
    rows, cols = [], []
    for p in range(domain.n_patches):
        t = domain.patches[p].tables()
        gd = dofmap.patch_gids[p][t.el_dofs]
        if vector:
            v = (2 * gd[..., None] + np.arange(2)).reshape(gd.shape[0], -1)
        else:
            v = gd
        nv = v.shape[1]
        rows.append(np.broadcast_to(v[:, :, None], (v.shape[0], nv, nv)).ravel())
        cols.append(np.broadcast_to(v[:, None, :], (v.shape[0], nv, nv)).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    f = _vec_ids(dofmap.free) if vector else dofmap.free
    d = _vec_ids(dofmap.dirichlet) if vector else dofmap.dirichlet
    size = (2 if vector else 1) * dofmap.n_global
    fpos = np.full(size, -1, dtype=np.int64)
    fpos[f] = np.arange(len(f))
    dpos = np.full(size, -1, dtype=np.int64)
    dpos[d] = np.arange(len(d))
    rf, cf, cd = fpos[rows], fpos[cols], dpos[cols]
    sel_ff = np.flatnonzero((rf >= 0) & (cf >= 0))
    sel_fd = np.flatnonzero((rf >= 0) & (cd >= 0))
    plan = {"sel_ff": sel_ff, "rows_ff": rf[sel_ff], "cols_ff": cf[sel_ff],
            "sel_fd": sel_fd, "rows_fd": rf[sel_fd], "cols_fd": cd[sel_fd],
            "n_free": len(f), "n_dir": len(d)}
    setattr(dofmap, attr, plan)
    return plan


def _reduced_system(domain, dofmap, blocks, vector, *, symmetric=True,
                    saddle_point=False) -> AssembledSystem:
    plan = _reduction_plan(domain, dofmap, vector)
    vals = np.concatenate([b.reshape(-1) for b in blocks])
    K_ff = sp.csr_matrix(
        (vals[plan["sel_ff"]], (plan["rows_ff"], plan["cols_ff"])),
        shape=(plan["n_free"], plan["n_free"]))
    K_fd = sp.csr_matrix(
        (vals[plan["sel_fd"]], (plan["rows_fd"], plan["cols_fd"])),
        shape=(plan["n_free"], plan["n_dir"]))
    return AssembledSystem(K_ff, K_fd, symmetric=symmetric,
                           saddle_point=saddle_point,
                           field_dim=2 if vector else 1)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def assemble_scalar_laplace(domain: MultiPatchDomain, dofmap: DofMap, *,
                            displacement=None, stiffening=None,
                            stiffening_displacement="same") -> AssembledSystem:
    """Stiffness of Laplace's equation; SPD on the free scalar DoFs."""
    if stiffening_displacement == "same":
        stiffening_displacement = displacement

    def patch_block(p):
        g, w, gd, _, _ = _patch_fields(domain, dofmap, p, displacement,
                                       stiffening, stiffening_displacement)
        gw = g * w[..., None, None]
        return np.matmul(gw, np.swapaxes(g, -1, -2)).sum(axis=1)

    blocks = _map_patches(domain.n_patches, patch_block)
    return _reduced_system(domain, dofmap, blocks, vector=False)


def assemble_scalar_mass(domain: MultiPatchDomain, dofmap: DofMap, *,
                         density: float = 1.0, displacement=None) -> sp.csr_matrix:
    """Full scalar mass matrix over all global DoFs (no stiffening)."""
    blocks, gds = [], []
    for p in range(domain.n_patches):
        t = domain.patches[p].tables()
        _, w, gd, _, _ = _patch_fields(domain, dofmap, p, displacement, None, None)
        blocks.append(density * np.einsum("eqa,eqb,eq->eab", t.N, t.N, w))
        gds.append(gd)
    return _scatter_scalar(blocks, gds, dofmap.n_global)


def assemble_load_vector(domain: MultiPatchDomain, dofmap: DofMap,
                         body_force, density: float = 1.0) -> np.ndarray:
    """Vector load (2N,) for constant body acceleration, interleaved."""
    b = np.asarray(body_force, dtype=float)
    s = np.zeros(dofmap.n_global)
    for p in range(domain.n_patches):
        t = domain.patches[p].tables()
        _, w, gd, _, _ = _patch_fields(domain, dofmap, p, None, None, None)
        np.add.at(s, gd.ravel(), np.einsum("eqa,eq->ea", t.N, w).ravel())
    out = np.zeros(2 * dofmap.n_global)
    out[0::2] = density * b[0] * s
    out[1::2] = density * b[1] * s
    return out


def assemble_mixed_biharmonic(domain: MultiPatchDomain, dofmap: DofMap, *,
                              displacement=None, stiffening=None,
                              stiffening_displacement="same") -> AssembledSystem:
    """Mixed (Ciarlet-Raviart) bi-harmonic operator in (u, q), q = lap u.

    The first equation, int(q phi) + int(grad u . grad phi) = 0, is tested
    with the full space; the auxiliary variable q is unconstrained and
    dropping the boundary term weakly imposes du/dn = 0 (tests may add a
    consistent flux vector on those rows instead). The second equation,
    int(grad q . grad psi) = 0, is tested with interior functions; u carries
    essential data. Unknown ordering is [q (all DoFs); u (free DoFs)]; the
    system is symmetric with saddle-point structure and supports multiple
    right-hand sides.
    """
    if stiffening_displacement == "same":
        stiffening_displacement = displacement

    def patch_block(p):
        t = domain.patches[p].tables()
        g, w, gd, _, _ = _patch_fields(domain, dofmap, p, displacement,
                                       stiffening, stiffening_displacement)
        return (np.einsum("eqax,eqbx,eq->eab", g, g, w),
                np.einsum("eqa,eqb,eq->eab", t.N, t.N, w), gd)

    parts = _map_patches(domain.n_patches, patch_block)
    gds = [gd for _, _, gd in parts]
    n = dofmap.n_global
    K = _scatter_scalar([kb for kb, _, _ in parts], gds, n)
    M = _scatter_scalar([mb for _, mb, _ in parts], gds, n)
    f, d = dofmap.free, dofmap.dirichlet
    K_af = K[:, f]
    A = sp.bmat([[M, K_af], [K_af.T, None]], format="csr")
    elim = sp.bmat([[K[:, d]],
                    [sp.csr_matrix((len(f), len(d)))]], format="csr")
    extra = {"n_q": n, "u_rows": slice(n, n + len(f)), "flux_rows": slice(0, n)}
    return AssembledSystem(A, elim, symmetric=True, saddle_point=True,
                           field_dim=1, extra=extra)


def assemble_boundary_flux(domain: MultiPatchDomain, dofmap: DofMap,
                           flux) -> np.ndarray:
    """Boundary load sum(int h phi ds) over all tagged (non-interface) sides.

    ``flux(points, normals) -> values`` supplies h at boundary quadrature
    points with outward unit normals. Test surface for manufactured
    solutions of the mixed bi-harmonic operator.
    """
    from .discretization import Side, eval_basis

    out = np.zeros(dofmap.n_global)
    for (p, side), _tag in sorted(domain.boundary_tags.items()):
        patch = domain.patches[p]
        kv_t = patch.side_knots(side)
        gp, gw = np.polynomial.legendre.leggauss(kv_t.degree + 1)
        for span, a, b in kv_t.elements():
            ts = 0.5 * (a + b) + 0.5 * (b - a) * gp
            ws = 0.5 * (b - a) * gw
            for tq, wq in zip(ts, ws):
                if side in (Side.SOUTH, Side.NORTH):
                    xi, eta = float(tq), (0.0 if side == Side.SOUTH else 1.0)
                    tang_col = 0
                else:
                    xi, eta = (0.0 if side == Side.WEST else 1.0), float(tq)
                    tang_col = 1
                pt, jac, _ = patch.eval(xi, eta)
                T = jac[:, tang_col]
                if side in (Side.SOUTH, Side.EAST):
                    nrm = np.array([T[1], -T[0]])
                else:
                    nrm = np.array([-T[1], T[0]])
                ds = np.linalg.norm(nrm)
                nrm = nrm / ds
                h = float(flux(pt[None, :], nrm[None, :])[0])
                first, vals = eval_basis(kv_t, float(tq))
                idx_line = first + np.arange(kv_t.degree + 1)
                side_flat = patch.side_indices(side)[idx_line]
                gids = dofmap.patch_gids[p][side_flat]
                out[gids] += h * wq * ds * vals[0]
    return out


def assemble_linear_elasticity(domain: MultiPatchDomain, dofmap: DofMap,
                               lame: LameParameters, *,
                               displacement=None, stiffening=None,
                               stiffening_displacement="same") -> AssembledSystem:
    """Linear elasticity stiffness; SPD on the free vector DoFs."""
    if stiffening_displacement == "same":
        stiffening_displacement = displacement
    D = _voigt_tangent(_iso_tangent(lame))

    def patch_block(p):
        g, w, gd, _, _ = _patch_fields(domain, dofmap, p, displacement,
                                       stiffening, stiffening_displacement)
        Bv = _voigt_strain_operator(g, None)
        ne, nq = g.shape[:2]
        B2 = Bv.reshape(ne, nq, -1, 3)
        BDw = np.matmul(B2, D) * w[..., None, None]
        return np.matmul(BDw, np.swapaxes(B2, -1, -2)).sum(axis=1)

    blocks = _map_patches(domain.n_patches, patch_block)
    return _reduced_system(domain, dofmap, blocks, vector=True)


def _voigt_strain_operator(g: np.ndarray, F) -> np.ndarray:
    """Rows [dE11, dE22, 2 dE12] of the strain variation per (a, i).

    With F = None the operator is the small-strain symmetric gradient;
    otherwise it is the Green-Lagrange strain variation at F.
    """
    ne, nq, nloc, _ = g.shape
    Bv = np.zeros((ne, nq, nloc, 2, 3))
    if F is None:
        Bv[..., 0, 0] = g[..., 0]
        Bv[..., 1, 1] = g[..., 1]
        Bv[..., 0, 2] = g[..., 1]
        Bv[..., 1, 2] = g[..., 0]
        return Bv
    FI = F[:, :, None, :, 0]   # (ne, nq, 1, 2)
    FJ = F[:, :, None, :, 1]
    gI = g[..., None, 0]       # (ne, nq, nloc, 1)
    gJ = g[..., None, 1]
    Bv[..., 0] = FI * gI
    Bv[..., 1] = FJ * gJ
    Bv[..., 2] = FI * gJ + FJ * gI
    return Bv


def assemble_nonlinear(domain: MultiPatchDomain, dofmap: DofMap,
                       law: MaterialLaw, u_current: np.ndarray, *,
                       stiffening=None, stiffening_displacement=None,
                       tangent: bool = True):
    """Residual and tangent of div(F S) = 0 in the initial configuration.

    Returns ``(residual, system)`` with the residual restricted to free
    vector DoFs and the tangent packaged like the linear operators
    (elimination block for Dirichlet increments). With ``tangent=False``
    the system is None. The stiffening weight multiplies residual and
    tangent identically.
    """
    def patch_block(p):
        g, w, gd, _, _ = _patch_fields(domain, dofmap, p, None,
                                       stiffening, stiffening_displacement)
        u_loc = dofmap.patch_values(u_current, p)
        t = domain.patches[p].tables()
        # displacement gradient w.r.t. the initial configuration
        uT = np.swapaxes(u_loc[t.el_dofs], -1, -2)[:, None]    # (ne,1,2,nloc)
        Gu = np.matmul(uT, g)                                  # (ne,nq,2,2)
        F = Gu + _I2
        try:
            S, C = stress_and_tangent_batch(law, F)
        except InvalidStateError as exc:
            J = _det22(F)
            e, q = np.unravel_index(int(np.argmin(J)), J.shape)
            raise InvalidStateError(
                f"patch {p}, element {e}, quadrature point {q}: "
                f"J = {J.min():.3e} <= {J_EPS} during nonlinear assembly") from exc
        ne, nq = g.shape[:2]
        Bv = _voigt_strain_operator(g, F).reshape(ne, nq, -1, 3)
        S_voigt = np.stack([S[..., 0, 0], S[..., 1, 1], S[..., 0, 1]], axis=-1)
        r = np.matmul(Bv, (S_voigt * w[..., None])[..., None]).sum(axis=1)
        Kel = None
        if tangent:
            D = _voigt_tangent(C)
            BDw = np.matmul(Bv, D) * w[..., None, None]
            Kel = np.matmul(BDw, np.swapaxes(Bv, -1, -2)).sum(axis=1)
            gS = np.matmul(g, S) * w[..., None, None]
            geo = np.matmul(gS, np.swapaxes(g, -1, -2)).sum(axis=1)
            Kel = Kel.reshape(ne, -1, 2, g.shape[2], 2)
            Kel[:, :, 0, :, 0] += geo
            Kel[:, :, 1, :, 1] += geo
        return r, Kel, gd

    parts = _map_patches(domain.n_patches, patch_block)
    res = np.zeros(2 * dofmap.n_global)
    for r, _, gd in parts:
        vids = _vec_ids(gd.ravel())
        np.add.at(res, vids, r.reshape(-1))
    fv = _vec_ids(dofmap.free)
    system = None
    if tangent:
        system = _reduced_system(domain, dofmap,
                                 [k for _, k, _ in parts], vector=True)
    return res[fv], system


def total_strain_energy(domain: MultiPatchDomain, dofmap: DofMap,
                        law: MaterialLaw, u: np.ndarray) -> float:
    """Stored hyperelastic energy of a displacement field (reference config)."""
    total = 0.0
    for p in range(domain.n_patches):
        t = domain.patches[p].tables()
        invJ0 = _inv22(t.J0, t.det0)
        u_loc = dofmap.patch_values(u, p)
        Gu = np.einsum("eai,eqad,eqdX->eqiX", u_loc[t.el_dofs], t.dN, invJ0)
        W = strain_energy_density(law, Gu + _I2)
        total += float(np.einsum("eq,eq->", W, t.qw * t.det0))
    return total
