"""Exception hierarchy for the auto-exploration stack."""


class AutoExploreError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AutoExploreError, ValueError):
    """Malformed MDP, policy, distribution or configuration."""


class NotIrreducible(AutoExploreError):
    """The policy-induced chain has more than one closed communicating class."""

    def __init__(self, n_closed_classes: int):
        self.n_closed_classes = n_closed_classes
        super().__init__(
            f"chain has {n_closed_classes} closed communicating classes; "
            f"stationary distribution is not unique"
        )


class SingularSystem(AutoExploreError, ArithmeticError):
    """A linear system that should be nonsingular could not be solved."""


class BisectionFailed(AutoExploreError, ArithmeticError):
    """The proximal multiplier could not be bracketed or located."""


class BudgetExceeded(AutoExploreError, RuntimeError):
    """The sample budget ran out before a data-driven stopping rule held."""

    def __init__(self, budget: int, used: int, where: str = ""):
        self.budget = budget
        self.used = used
        self.where = where
        suffix = f" during {where}" if where else ""
        super().__init__(f"sample budget {budget} exhausted after {used} transitions{suffix}")
