"""Exception hierarchy shared by all modules."""


class PosetRateError(Exception):
    """Base class for every error raised by this package."""


class InputError(PosetRateError):
    """Malformed user input (files, parameters)."""


class CycleDetected(InputError):
    def __init__(self, nodes=()):
        self.nodes = tuple(nodes)
        super().__init__(f"covering relation has a directed cycle through {sorted(self.nodes)}")


class RedundantCover(InputError):
    def __init__(self, edge):
        self.edge = tuple(edge)
        super().__init__(f"covering edge {self.edge} is implied by transitivity")


class NotComparable(PosetRateError):
    pass


class TruncatedUpSet(PosetRateError):
    """An up-set reaches the truncation boundary and no tail data was given."""


class GfDiverges(PosetRateError):
    pass


class InvalidDistribution(InputError):
    pass


class NotATree(PosetRateError):
    pass


class NonPositivePdf(PosetRateError):
    def __init__(self, node, value):
        self.node = node
        self.value = value
        super().__init__(f"recovered density at {node!r} is {value}, not positive")


class TooManyChildren(PosetRateError):
    pass


class InconsistentUpf(PosetRateError):
    pass


class TailBoundTooLoose(PosetRateError):
    pass


class RootNotOne(PosetRateError):
    pass


class ChildSumViolation(PosetRateError):
    def __init__(self, node, parent_value, child_sum):
        self.node = node
        self.parent_value = parent_value
        self.child_sum = child_sum
        super().__init__(
            f"F({node!r}) = {parent_value} does not exceed child sum {child_sum}"
        )


class WeakInequalityViolation(ChildSumViolation):
    pass


class RateBoundMissing(PosetRateError):
    pass


class LeafRateNotOne(PosetRateError):
    pass


class LeafEncountered(PosetRateError):
    pass


class NotConstantRate(PosetRateError):
    pass


class GfUnavailable(PosetRateError):
    pass


class NotFreeSemigroup(PosetRateError):
    pass


class Exhausted(PosetRateError):
    pass


class EpsilonTooLarge(PosetRateError):
    pass


class TruncationTooSevere(PosetRateError):
    pass


class InvalidParams(InputError):
    pass
