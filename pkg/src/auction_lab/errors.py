"""Exception hierarchy shared by every module.

The CLI maps any :class:`AuctionLabError` to exit code 3 and prints the
class name, so names are part of the external interface.
"""


class AuctionLabError(Exception):
    """Base class for all validation errors raised by the library."""


class InvalidDistribution(AuctionLabError, ValueError):
    pass


class InvalidProbability(AuctionLabError, ValueError):
    pass


class DomainError(AuctionLabError, ValueError):
    pass


class ObjectiveDomainError(DomainError):
    pass


class InvalidObjective(AuctionLabError, ValueError):
    pass


class ObjectiveNotInHp(AuctionLabError):
    pass


class NotEnoughBidders(AuctionLabError):
    pass


class DegeneratePenaltyPrice(AuctionLabError):
    """The penalty-price denominator vanished (marginal loser reports full capacity)."""


class MissingRealization(AuctionLabError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ArityError(AuctionLabError, ValueError):
    pass


class SolverError(AuctionLabError, RuntimeError):
    pass


class InvalidCostReport(AuctionLabError, ValueError):
    pass


class InvalidBid(AuctionLabError, ValueError):
    pass


class SpecError(AuctionLabError, ValueError):
    """Mechanism name and scenario type do not fit together."""


class ScenarioError(AuctionLabError, ValueError):
    """A scenario file is structurally valid JSON but violates the schema."""
