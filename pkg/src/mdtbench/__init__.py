"""Elliptic mesh deformation techniques for moving-mesh ALE simulations."""

from .discretization import (BoundaryTag, DofClass, DofMap, Interface,
                             KnotVector, MultiPatchDomain, MultiPatchField,
                             Side, SplinePatch, build_benchmark_geometry,
                             build_dof_map, eval_basis, read_geometry,
                             write_geometry)
from .dynamics import BeamDriver, BeamState, DriverParams, NewmarkParams
from .mdt import (Technique, deformed_geometry, init, reset, solve_full_newton,
                  step)
from .operators import (LameParameters, MaterialKind, MaterialLaw,
                        StiffeningBase, StiffeningConfig,
                        assemble_linear_elasticity, assemble_mixed_biharmonic,
                        assemble_nonlinear, assemble_scalar_laplace,
                        eval_stress_and_tangent, lame_from_young_poisson,
                        stiffening_weight)
from .quality import (BijectivityReport, TimingBreakdown, ale_norm,
                      min_jacobian, period_minima)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
