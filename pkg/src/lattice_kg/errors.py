"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """A run configuration or potential description is malformed."""


class ClassificationError(ValueError):
    """A potential does not belong to the class an operation requires."""


class AdmissibilityError(RuntimeError):
    """The mesh parameters violate the admissibility policy; stepping refused."""


class StepFailure(RuntimeError):
    """A per-site solve did not converge."""

    def __init__(self, site, residual, iterations, step_index=None):
        self.site = site
        self.residual = residual
        self.iterations = iterations
        self.step_index = step_index
        where = f" at step {step_index}" if step_index is not None else ""
        super().__init__(
            f"site solve failed{where}: site={site} residual={residual:.3e} "
            f"after {iterations} iterations"
        )
