"""Exception types shared across the package."""


class CfPolicyError(Exception):
    """Base class for all package errors."""


class ParseError(CfPolicyError):
    """Malformed row in a cohort file; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class IntegrityError(CfPolicyError):
    """Cohort-level consistency violation (duplicate rows, bad attributes)."""


class EmptySubgroupError(CfPolicyError):
    """Subgroup filter matched no trajectories."""


class MissingFeatureError(CfPolicyError):
    """A feature has zero observed cells in the train split."""


class DegenerateBinningError(CfPolicyError):
    """No nonzero doses available to fit quantile cutoffs for a drug."""


class SchemaMismatchError(CfPolicyError):
    """Input shape or feature schema does not match the model's."""


class TrainingDivergenceError(CfPolicyError):
    """Non-finite loss or gradient during training."""


class RolloutBlowupError(CfPolicyError):
    """Non-finite state during a model rollout; carries the step index."""

    def __init__(self, step: int, message: str = ""):
        super().__init__(f"non-finite state at rollout step {step}" + (f": {message}" if message else ""))
        self.step = step


class UndefinedMetricError(CfPolicyError):
    """Metric is undefined for the given split (e.g. <2 distinct labels)."""
