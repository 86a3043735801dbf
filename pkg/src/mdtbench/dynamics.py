"""Elastodynamics of the clamped benchmark beam under a step body force.

The beam is a single quadratic spline patch, clamped on its left (arc) edge
and loaded by the constant body acceleration (0, l) switched on at t = 0.
Time integration is implicit Newmark; each step solves
M a + f_int(u) = f_ext by Newton with consistent mass and the
St. Venant-Kirchhoff internal force. The interface displacement trace is
exported by copying boundary control coefficients one-to-one onto the
fluid-side interface DoFs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import (DofMap, MultiPatchField, SplinePatch,
                             beam_single_patch_domain, build_dof_map)
from .errors import InvalidStateError, SolverError, TopologyError
from .operators import (MaterialLaw, assemble_load_vector, assemble_nonlinear,
                        assemble_scalar_mass, lame_from_young_poisson,
                        total_strain_energy)
from .quality import min_jacobian

NEWTON_RTOL = 1e-10
NEWTON_MAX_ITER = 20


@dataclass(frozen=True)
class NewmarkParams:
    beta: float = 0.5
    gamma: float = 1.0
    dt: float = 0.0025

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class DriverParams:
    l: float                  # loading level, g = (0, l)
    rho_s: float = 1e3
    E_s: float = 1.4e6
    nu_s: float = 0.4
    gravity_sign: float = 1.0  # -1 flips g to (0, -l)

    def gravity(self) -> np.ndarray:
        return np.array([0.0, self.gravity_sign * self.l])


@dataclass
class BeamState:
    u: np.ndarray   # displacement coefficients (n_coeffs, 2)
    v: np.ndarray   # velocity coefficients
    a: np.ndarray   # acceleration coefficients
    t: float


class NewmarkIntegrator:
    """Implicit Newmark stepping of M a + f_int(u) = f_ext on flat arrays.

    ``fint_and_tangent(u, need_tangent=True) -> (f, K)`` supplies the
    internal force and, when requested, its tangent; the beam driver wires
    the finite element system, tests may wire scalar surrogates.
    """

    def __init__(self, mass, fint_and_tangent, f_ext, params: NewmarkParams,
                 rtol: float = NEWTON_RTOL, max_iter: int = NEWTON_MAX_ITER):
        self.M = mass
        self.fint_and_tangent = fint_and_tangent
        self.f_ext = np.asarray(f_ext, dtype=float)
        self.params = params
        self.rtol = rtol
        self.max_iter = max_iter
        self._force_scale = max(float(np.linalg.norm(self.f_ext)), 1e-300)

    def _solve(self, A, b):
        if sp.issparse(A):
            return spla.splu(A.tocsc()).solve(b)
        return np.linalg.solve(np.atleast_2d(A), b)

    def initial_acceleration(self, u0, v0):
        f, _ = self.fint_and_tangent(u0, need_tangent=False)
        return self._solve(self.M, self.f_ext - f)

    def step(self, u, v, a):
        """One Newmark step; returns (u, v, a) at the next time level."""
        beta, gamma, dt = self.params.beta, self.params.gamma, self.params.dt
        u_tilde = u + dt * v + dt * dt * (0.5 - beta) * a
        c = 1.0 / (beta * dt * dt)
        # explicit predictor as the Newton start
        u_new = u + dt * v + 0.5 * dt * dt * a
        f, _ = self.fint_and_tangent(u_new, need_tangent=False)
        res = self.M @ (c * (u_new - u_tilde)) + f - self.f_ext
        rnorm = float(np.linalg.norm(res))
        ref = max(rnorm, self._force_scale)
        for _ in range(self.max_iter):
            if rnorm <= self.rtol * ref:
                break
            _, K = self.fint_and_tangent(u_new, need_tangent=True)
            A = c * self.M + K
            u_new = u_new + self._solve(A, -res)
            f, _ = self.fint_and_tangent(u_new, need_tangent=False)
            res = self.M @ (c * (u_new - u_tilde)) + f - self.f_ext
            rnorm_prev, rnorm = rnorm, float(np.linalg.norm(res))
            # roundoff floor: the residual is a cancellation of terms much
            # larger than itself; accept when progress stops there
            if rnorm > 0.25 * rnorm_prev and rnorm <= 1e-6 * ref:
                break
        else:
            raise SolverError(
                f"Newmark Newton did not converge (residual "
                f"{rnorm:.3e}, ref {ref:.3e})")
        a_new = c * (u_new - u_tilde)
        v_new = v + dt * ((1 - gamma) * a + gamma * a_new)
        return u_new, v_new, a_new


class BeamDriver:
    """Owns the beam discretization and advances its state in time."""

    def __init__(self, beam: SplinePatch, newmark: NewmarkParams,
                 driver: DriverParams):
        self.beam = beam
        self.params = newmark
        self.driver = driver
        self.domain = beam_single_patch_domain(beam)
        self.dofmap = build_dof_map(self.domain, gamma_essential=False)
        lame = lame_from_young_poisson(driver.E_s, driver.nu_s)
        self.law = MaterialLaw.st_venant_kirchhoff(lame)
        dm = self.dofmap
        self._fv = np.stack([2 * dm.free, 2 * dm.free + 1], axis=1).ravel()
        M_scalar = assemble_scalar_mass(self.domain, dm, density=driver.rho_s)
        M_vec = sp.kron(M_scalar, sp.eye(2), format="csr")
        self.M_ff = M_vec[self._fv][:, self._fv].tocsr()
        f_full = assemble_load_vector(self.domain, dm, driver.gravity(),
                                      density=driver.rho_s)
        self.f_ext = f_full[self._fv]
        self.integrator = NewmarkIntegrator(
            self.M_ff, self._fint_and_tangent, self.f_ext, newmark)
        self._trace_maps: dict[int, np.ndarray] = {}

    def _embed(self, flat_free: np.ndarray) -> np.ndarray:
        return self.dofmap.expand(flat_free.reshape(-1, 2))

    def _fint_and_tangent(self, u_flat_free, need_tangent=True):
        u_full = self._embed(u_flat_free)
        R, sys = assemble_nonlinear(self.domain, self.dofmap, self.law, u_full,
                                    tangent=need_tangent)
        return R, sys.matrix if sys is not None else None

    def initial_state(self) -> BeamState:
        n = self.dofmap.n_global
        zeros_free = np.zeros(2 * self.dofmap.n_free)
        a0 = self.integrator.initial_acceleration(zeros_free, zeros_free)
        return BeamState(u=np.zeros((n, 2)), v=np.zeros((n, 2)),
                         a=self._embed(a0), t=0.0)

    def step(self, state: BeamState) -> BeamState:
        u, v, a = (x.reshape(-1)[self._fv] for x in (state.u, state.v, state.a))
        u, v, a = self.integrator.step(u, v, a)
        new = BeamState(u=self._embed(u), v=self._embed(v), a=self._embed(a),
                        t=state.t + self.params.dt)
        report = min_jacobian(self.domain, MultiPatchField(self.dofmap, new.u))
        if not report.passed:
            raise InvalidStateError(
                f"beam deformation lost bijectivity (min J = {report.min_j:.3e})")
        return new

    def tip_displacement(self, state: BeamState) -> np.ndarray:
        """Displacement at the beam-tip midpoint (parameter (1, 1/2))."""
        return self.beam.eval_field(state.u, 1.0, 0.5)

    def total_energy(self, state: BeamState) -> float:
        """Kinetic + stored strain energy - work potential of the load."""
        v = state.v.reshape(-1)[self._fv]
        u = state.u.reshape(-1)[self._fv]
        kinetic = 0.5 * float(v @ (self.M_ff @ v))
        internal = total_strain_energy(self.domain, self.dofmap, self.law, state.u)
        return kinetic + internal - float(self.f_ext @ u)

    def interface_trace(self, state: BeamState, fluid_dofmap: DofMap) -> np.ndarray:
        """Beam boundary displacements copied onto the fluid interface DoFs.

        Returns an array over the fluid DIRICHLET_GAMMA DoFs in ascending
        global-index order. The correspondence is built once by geometric
        matching of control points (matching parametrizations invariant).
        """
        beam_idx = self._trace_maps.get(id(fluid_dofmap))
        if beam_idx is None:
            gamma_pts = fluid_dofmap.rep_points[fluid_dofmap.gamma]
            cp = self.beam.control_points
            beam_idx = np.empty(len(gamma_pts), dtype=np.int64)
            for k, pt in enumerate(gamma_pts):
                d = np.abs(cp - pt).max(axis=1)
                j = int(np.argmin(d))
                if d[j] > 1e-12:
                    raise TopologyError(
                        f"no beam control point matches fluid interface DoF at "
                        f"{pt} (closest gap {d[j]:.3e}); discretizations differ")
                beam_idx[k] = j
            self._trace_maps[id(fluid_dofmap)] = beam_idx
        return state.u[beam_idx]
