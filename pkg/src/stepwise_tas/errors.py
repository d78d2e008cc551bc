"""Exception types raised by the package."""


class TASError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(TASError, ValueError):
    """An argument is outside the documented domain."""


class ChannelParseError(TASError, ValueError):
    """A channel file does not match the documented JSON layout."""


class DegenerateChannelError(TASError, ValueError):
    """The channel (or selected sub-channel) is identically zero."""


class RankDeficiencyError(TASError, ArithmeticError):
    """The Gram matrix needed by zero forcing is (numerically) singular."""

    def __init__(self, level: int, n_users: int, detail: str = ""):
        self.level = level
        self.n_users = n_users
        msg = f"zero forcing needs a full-rank Gram matrix; got {level} antenna(s) for {n_users} user(s)"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NumericalDegeneracyError(TASError, ArithmeticError):
    """A rank-one update lost positive definiteness; recompute the precoder directly."""


class DegenerateMeasureError(TASError, ArithmeticError):
    """Energy efficiency requested with zero consumed power."""


class BudgetExceededError(TASError, RuntimeError):
    """Exhaustive search would enumerate more subsets than allowed."""

    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(f"exhaustive search needs {required} subsets, budget is {budget}")


class ExhaustedError(TASError, RuntimeError):
    """No unselected antennas remain."""
