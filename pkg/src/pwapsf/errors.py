"""Exception types shared across the package."""


class PwaPsfError(Exception):
    """Base class for all errors raised by pwapsf."""


class EmptyLocation(PwaPsfError):
    """A state (or state-input pair) lies outside every region of the partition."""

    def __init__(self, point, message=None):
        self.point = point
        super().__init__(message or f"no region contains {point!r}")


class RefinementOverflow(PwaPsfError):
    pass


class PartitionError(PwaPsfError):
    """Partition data failed validation (overlapping interiors, discontinuity, shapes)."""


class AssumptionViolated(PwaPsfError):
    """The sampled backup-pair condition failed; ``witness`` holds the worst state."""

    def __init__(self, witness, margin, message=None):
        self.witness = witness
        self.margin = margin
        super().__init__(message or f"backup pair violated at {witness!r} (margin {margin:.3e})")


class SwitchOverflow(PwaPsfError):
    pass


class SlidingModeError(PwaPsfError):
    pass


class BranchOverflow(PwaPsfError):
    pass


class NonInvertible(PwaPsfError):
    pass


class MultiValuedPoint(PwaPsfError):
    pass


class Infeasible(PwaPsfError):
    """Constraint set is empty. ``certificate`` is a positive infeasibility measure."""

    def __init__(self, message="infeasible", certificate=float("nan")):
        self.certificate = certificate
        super().__init__(message)


class IterationCap(PwaPsfError):
    pass


class Degenerate(PwaPsfError):
    pass


class NoRegion(PwaPsfError):
    pass


class SynthesisFailed(PwaPsfError):
    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message)
