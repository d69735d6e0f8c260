"""Exception types shared across the package."""


class MsmwError(Exception):
    """Base class for all library errors."""


class StripViolation(MsmwError, ValueError):
    """Laplace argument left the admissible vertical strip |Re lambda| <= alpha."""


class NotIrreducible(MsmwError, ValueError):
    """Driving chain is not irreducible; carries an unreachable (i, j) witness."""

    def __init__(self, pair):
        self.pair = pair
        super().__init__(f"kernel not irreducible: state {pair[1]} unreachable from {pair[0]}")


class NotAperiodic(MsmwError, ValueError):
    """Driving chain is periodic; carries the period as witness."""

    def __init__(self, period):
        self.period = period
        super().__init__(f"kernel has period {period} > 1")


class EigenvalueCollision(MsmwError, ArithmeticError):
    """Top two eigenvalue moduli too close; dominant pair not simple."""


class PoleHit(MsmwError, ArithmeticError):
    """Evaluation requested at (or too near) a pole z*k(lambda) = 1."""


class ShiftOffLattice(MsmwError, ValueError):
    """Centering shifts are not commensurate with the model's lattice span."""


class DegenerateVariance(MsmwError, ValueError):
    """sigma^2 <= tolerance: the walk is a deterministic cocycle."""


class OutOfDomain(MsmwError, ValueError):
    """Argument outside the operation's admissible domain."""


class SpanMismatch(MsmwError, ValueError):
    """Lattice measures with different spans combined."""


class DimensionMismatch(MsmwError, ValueError):
    """Matrix dimensions incompatible."""


class NotLattice(MsmwError, TypeError):
    """Exact path-space operation requested on a non-lattice model."""


class BudgetExceeded(MsmwError, MemoryError):
    """Exact DP table would exceed the configured memory budget."""

    def __init__(self, needed_bytes, budget_bytes):
        self.needed_bytes = needed_bytes
        self.budget_bytes = budget_bytes
        super().__init__(
            f"DP table needs {needed_bytes / 2**30:.2f} GiB, "
            f"budget is {budget_bytes / 2**30:.2f} GiB"
        )


class TailNotConverged(MsmwError, ArithmeticError):
    """Series truncation bound too large relative to the extrapolation step."""


class GridTooNarrow(MsmwError, ValueError):
    """x-grid does not cover enough of the step support."""


class RangeTooShort(MsmwError, ValueError):
    """x-range too short for an asymptotic slope fit."""


class FitDiverged(MsmwError, ArithmeticError):
    """Sequence does not match the assumed singularity type."""


class PositivityViolated(MsmwError, ArithmeticError):
    """A limit matrix required to be positive has a non-positive entry."""


class QuadratureNonConvergence(MsmwError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested accuracy."""
