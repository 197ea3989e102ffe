"""Single-good stochastic resource auctions.

Two payment rules share one allocation rule (rank bidders by the reported
expected objective, take the top M, the next one is the marginal loser):

* SVCG: the winner pays the marginal loser's expected objective up front and
  is paid the realized objective afterwards.
* SSP: the winner is paid h(1) up front and pays a penalty price per unit of
  realized shortfall h(1) - h(x).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .distributions import GenDistribution, expect
from .errors import (
    DegeneratePenaltyPrice,
    InvalidBid,
    MissingRealization,
    NotEnoughBidders,
    ObjectiveNotInHp,
    SpecError,
)
from .objectives import Identity, ObjectiveFn

SVCG = "svcg"
SSP = "ssp"
MECHANISMS = (SVCG, SSP)


@dataclass(frozen=True)
class Bid:
    player_id: int
    reported_type: GenDistribution

    def __post_init__(self):
        if isinstance(self.player_id, bool) or int(self.player_id) != self.player_id or self.player_id < 0:
            raise InvalidBid(f"player_id must be a nonnegative integer, got {self.player_id!r}")
        if not isinstance(self.reported_type, GenDistribution):
            raise InvalidBid(f"bid of player {self.player_id} is not a distribution")


@dataclass(frozen=True)
class Contract:
    mechanism: str
    winners: tuple
    marginal_loser: int
    pre_payment: dict  # winner id -> p, paid by the auctioneer to the winner
    objective: ObjectiveFn
    reference_value: float  # marginal loser's expected objective (SVCG) or h(1) (SSP)
    marginal_value: float  # marginal loser's expected objective, both mechanisms
    participants: tuple = ()
    penalty_price: Optional[float] = None
    price: float = 1.0

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "winners": list(self.winners),
            "marginal_loser": self.marginal_loser,
            "pre_payment": {str(k): v for k, v in self.pre_payment.items()},
            "penalty_price": self.penalty_price,
            "reference_value": self.reference_value,
            "marginal_value": self.marginal_value,
            "objective": self.objective.to_dict(),
            "price": self.price,
        }


@dataclass(frozen=True)
class Settlement:
    player_id: int
    realization: Optional[float]
    pre_payment: float
    post_payment: float  # paid by the winner to the auctioneer
    payoff: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "payoff", self.pre_payment - self.post_payment)

    def to_dict(self) -> dict:
        return {
            "player_id": self.player_id,
            "x": self.realization,
            "p": self.pre_payment,
            "q": self.post_payment,
            "U": self.payoff,
        }


def _check_bids(bids):
    bids = list(bids)
    ids = [b.player_id for b in bids]
    if len(set(ids)) != len(ids):
        raise InvalidBid(f"duplicate player ids in {ids}")
    return bids


def rank_bids(bids, h: ObjectiveFn):
    """Bidders ordered by reported E[h], highest first; ties go to the lower id."""
    scored = [(expect(b.reported_type, h), b.player_id) for b in _check_bids(bids)]
    scored.sort(key=lambda s: (-s[0], s[1]))
    return scored


def select_winners(bids, h: ObjectiveFn = Identity(), M: int = 1):
    """Return ``(winners, marginal_loser)`` for the top-M allocation rule."""
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M!r}")
    bids = _check_bids(bids)
    if len(bids) <= M:
        raise NotEnoughBidders(f"{len(bids)} bids cannot produce {M} winners and a marginal loser")
    ranked = rank_bids(bids, h)
    return [pid for _, pid in ranked[:M]], ranked[M][1]


def _allocate(bids, h, M):
    bids = _check_bids(bids)
    if len(bids) <= M:
        raise NotEnoughBidders(f"{len(bids)} bids cannot produce {M} winners and a marginal loser")
    ranked = rank_bids(bids, h)
    winners = tuple(pid for _, pid in ranked[:M])
    loser_value, loser = ranked[M]
    return winners, loser, loser_value, tuple(b.player_id for b in bids)


def run_svcg(bids, h: ObjectiveFn = Identity(), M: int = 1, price: float = 1.0) -> Contract:
    winners, loser, ref, ids = _allocate(bids, h, M)
    return Contract(
        mechanism=SVCG,
        winners=winners,
        marginal_loser=loser,
        pre_payment={w: -price * ref for w in winners},
        objective=h,
        reference_value=ref,
        marginal_value=ref,
        participants=ids,
        price=price,
    )


def penalty_price(h_one: float, marginal_value: float) -> float:
    denom = h_one - marginal_value
    if not denom > 0.0:
        raise DegeneratePenaltyPrice(
            f"h(1) = {h_one!r} does not exceed the marginal loser's expected objective {marginal_value!r}"
        )
    return h_one / denom


def run_ssp(bids, h: ObjectiveFn = Identity(), M: int = 1, price: float = 1.0) -> Contract:
    if not h.is_in_Hp():
        raise ObjectiveNotInHp(f"{h!r} is not nonnegative and nondecreasing on [0, 1]")
    winners, loser, marginal, ids = _allocate(bids, h, M)
    h_one = float(h(1.0))
    lam = penalty_price(h_one, marginal)
    return Contract(
        mechanism=SSP,
        winners=winners,
        marginal_loser=loser,
        pre_payment={w: price * h_one for w in winners},
        objective=h,
        reference_value=h_one,
        marginal_value=marginal,
        participants=ids,
        penalty_price=lam,
        price=price,
    )


def run(mechanism: str, bids, h: ObjectiveFn = Identity(), M: int = 1, price: float = 1.0) -> Contract:
    if mechanism == SVCG:
        return run_svcg(bids, h, M, price)
    if mechanism == SSP:
        return run_ssp(bids, h, M, price)
    raise SpecError(f"unknown single-good mechanism {mechanism!r}")


def _settle(c: Contract, realizations, post_rule):
    out = []
    winners = set(c.winners)
    for pid in c.participants or c.winners:
        if pid not in winners:
            out.append(Settlement(pid, None, 0.0, 0.0))
            continue
        if pid not in realizations:
            raise MissingRealization(f"no realization for winner {pid}")
        x = float(realizations[pid])
        hx = c.objective.eval(x)
        out.append(Settlement(pid, x, c.pre_payment[pid], c.price * post_rule(hx)))
    return out


def settle_svcg(c: Contract, realizations) -> list:
    if c.mechanism != SVCG:
        raise SpecError(f"settle_svcg called on a {c.mechanism} contract")
    return _settle(c, realizations, lambda hx: -hx)


def settle_ssp(c: Contract, realizations) -> list:
    if c.mechanism != SSP:
        raise SpecError(f"settle_ssp called on a {c.mechanism} contract")
    h_one, lam = c.reference_value, c.penalty_price
    return _settle(c, realizations, lambda hx: lam * (h_one - hx))


def settle(c: Contract, realizations) -> list:
    return settle_svcg(c, realizations) if c.mechanism == SVCG else settle_ssp(c, realizations)


def expected_payoff(c: Contract, player_id: int, true_type: GenDistribution) -> float:
    """Expected payoff of ``player_id`` when its output follows ``true_type``."""
    if player_id not in c.winners:
        return 0.0
    eh = expect(true_type, c.objective)
    if c.mechanism == SVCG:
        return c.price * (eh - c.reference_value)
    return c.price * (c.reference_value - c.penalty_price * (c.reference_value - eh))


def expected_revenue(mechanism: str, bids, h: ObjectiveFn = Identity(), resale_price: float = 1.0, M: int = 1) -> float:
    """Auctioneer's expected revenue under truthful bids.

    The auctioneer resells each winner's h(X) at ``resale_price`` and keeps
    the net of the two payments.
    """
    c = run(mechanism, bids, h, M)
    by_id = {b.player_id: b.reported_type for b in bids}
    total = 0.0
    for w in c.winners:
        eh = expect(by_id[w], h)
        total += resale_price * eh - expected_payoff(c, w, by_id[w])
    return total


@dataclass(frozen=True)
class AuctionScenario:
    """True (or reported) types of every bidder plus the auction parameters."""

    bids: tuple
    objective: ObjectiveFn = Identity()
    M: int = 1
    price: float = 1.0

    def __post_init__(self):
        bids = tuple(b if isinstance(b, Bid) else Bid(*b) for b in self.bids)
        object.__setattr__(self, "bids", tuple(_check_bids(bids)))
        if isinstance(self.M, bool) or int(self.M) != self.M or self.M < 1:
            raise InvalidBid(f"M must be a positive integer, got {self.M!r}")

    @property
    def ids(self) -> tuple:
        return tuple(b.player_id for b in self.bids)

    def law(self, player_id: int) -> GenDistribution:
        for b in self.bids:
            if b.player_id == player_id:
                return b.reported_type
        raise KeyError(player_id)

    def replace(self, player_id: int, law: GenDistribution) -> "AuctionScenario":
        bids = tuple(Bid(b.player_id, law) if b.player_id == player_id else b for b in self.bids)
        return AuctionScenario(bids, self.objective, self.M, self.price)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "objective": self.objective.to_dict(),
            "price": self.price,
            "bids": [{"id": b.player_id, "type": b.reported_type.to_dict()} for b in self.bids],
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "AuctionScenario":
        from .distributions import distribution_from_dict
        from .objectives import objective_from_dict

        bids = tuple(Bid(b["id"], distribution_from_dict(b["type"])) for b in spec["bids"])
        h = objective_from_dict(spec["objective"]) if "objective" in spec else Identity()
        return cls(bids, h, spec.get("M", 1), float(spec.get("price", 1.0)))
