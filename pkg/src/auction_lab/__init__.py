"""Stochastic resource auctions and numerical checks of their incentive properties."""

from .distributions import Beta, GenDistribution, PiecewiseLinearCdf, PointMass, Uniform
from .objectives import AffineClip, CappedDemand, Identity, Monomial, ObjectiveFn, PiecewiseLinear
from .single_auction import AuctionScenario, Bid, Contract, Settlement

__all__ = [
    "AffineClip",
    "AuctionScenario",
    "Beta",
    "Bid",
    "CappedDemand",
    "Contract",
    "GenDistribution",
    "Identity",
    "Monomial",
    "ObjectiveFn",
    "PiecewiseLinear",
    "PiecewiseLinearCdf",
    "PointMass",
    "Settlement",
    "Uniform",
]

__version__ = "0.1.0"
