class LowRankError(Exception):
    """Base class for errors raised by this package."""


class LevelOutOfRange(LowRankError, IndexError):
    pass


class ShapeMismatch(LowRankError, ValueError):
    pass


class InfeasibleClass(LowRankError):
    """No member of a density class puts positive mass on an observed state."""

    def __init__(self, witness, message=None):
        self.witness = witness
        super().__init__(message or f"density class assigns zero mass to observed state {witness}")


class DataInconsistency(LowRankError):
    """The recorded data policy gives zero probability to an observed action."""

    def __init__(self, state, action):
        self.state = state
        self.action = action
        super().__init__(f"data policy has zero probability for observed (x={state}, a={action})")


class OptimizerDivergence(LowRankError):
    def __init__(self, restart, message=None):
        self.restart = restart
        super().__init__(message or f"non-finite regression loss in restart {restart}")


class SpannerError(LowRankError):
    pass


class EstimationError(LowRankError):
    """Wraps a failure inside a level loop with the level (and policy) that failed."""

    def __init__(self, level, cause, policy=None):
        self.level = level
        self.policy = policy
        self.cause = cause
        where = f"level {level}" if policy is None else f"level {level}, policy {policy}"
        super().__init__(f"estimation failed at {where}: {cause}")


class ObjectiveError(LowRankError, ValueError):
    def __init__(self, policy, value):
        self.policy = policy
        super().__init__(f"objective is not finite ({value}) for policy {policy}")
