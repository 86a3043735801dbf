"""Exception types shared across the package."""


class MdtBenchError(Exception):
    """Base class for all package-specific errors."""


class TopologyError(MdtBenchError):
    """Multi-patch connectivity or interface matching is inconsistent."""


class InvalidGeometryError(MdtBenchError):
    """A geometry map is non-bijective where it must be (det <= 0)."""


class InvalidStateError(MdtBenchError):
    """A deformation state violates J > 0 where the operator needs it."""


class SolverError(MdtBenchError):
    """Linear system factorization or solve failed."""


class SingularMaterialError(MdtBenchError):
    """Material parameters at an incompressible/singular limit."""


class OracleFailureError(MdtBenchError):
    """A validation oracle (full Newton) failed to converge."""


class TimingUsageError(MdtBenchError):
    """Instrumentation misuse, e.g. nested timing of the same phase."""


class StepRejectedError(MdtBenchError):
    """A mesh-deformation step was rejected; the state was not modified.

    Carries the bijectivity report of the attempted state and, when known,
    the ALE norm of the rejected candidate field.
    """

    def __init__(self, message, report, candidate_norm=None):
        super().__init__(message)
        self.report = report
        self.candidate_norm = candidate_norm
