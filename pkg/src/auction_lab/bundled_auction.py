"""Bundled auctions over L stochastic goods with one winner per good.

The reported expected welfare of a selection (one bidder per link) is an
L-dimensional integral against the product of the selected laws.  It is
computed by iterated adaptive quadrature for L <= 4 and by randomized
quasi-Monte Carlo (fixed seed, error estimate from independent scrambles)
beyond that.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import ClassVar, Optional

import numpy as np
from scipy.stats import qmc

from .distributions import GenDistribution, PointMass, distribution_from_dict, expect_batch, expect_fn
from .errors import (
    ArityError,
    DegeneratePenaltyPrice,
    InvalidBid,
    InvalidObjective,
    MissingRealization,
    NotEnoughBidders,
    ObjectiveNotInHp,
    SpecError,
)
from .objectives import Identity, ObjectiveFn, objective_from_dict
from .single_auction import Settlement

BSVCG = "bsvcg"
BSSP = "bssp"

TENSOR_MAX_DIM = 4
QMC_LOG2_POINTS = 14
QMC_REPLICATES = 8
QMC_SEED = 20240611
NESTED_TOL = 1e-11
_CHUNK = 8192


class MultiObjectiveFn:
    """Objective on [0, 1]^L.  ``__call__`` takes an array of shape (..., L)."""

    kind: ClassVar[str]
    arity: Optional[int] = None

    def check_arity(self, L: int):
        if self.arity is not None and self.arity != L:
            raise ArityError(f"{self.kind} objective has arity {self.arity}, scenario has {L} links")

    def breaks(self, coord: int, X: np.ndarray) -> np.ndarray:
        """Kink positions in coordinate ``coord`` given the filled (non-NaN) entries of X."""
        return np.empty((X.shape[0], 0))

    def is_in_Hp(self) -> bool:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class MinOfAll(MultiObjectiveFn):
    """Flow capacity of a route: the smallest realized link capacity."""

    arity: Optional[int] = None
    kind: ClassVar[str] = "min"

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        # column-wise fold: much faster than a reduction over a short last axis
        out = X[..., 0]
        for l in range(1, X.shape[-1]):
            out = np.minimum(out, X[..., l])
        return out

    def breaks(self, coord, X):
        others = np.delete(X, coord, axis=1)
        filled = ~np.isnan(others)
        if not filled.any():
            return np.empty((X.shape[0], 0))
        m = np.min(np.where(filled, others, np.inf), axis=1)
        return np.where(np.isfinite(m), m, np.nan)[:, None]

    def is_in_Hp(self):
        return True

    def to_dict(self):
        d = {"kind": self.kind}
        if self.arity is not None:
            d["arity"] = self.arity
        return d


@dataclass(frozen=True)
class WeightedSum(MultiObjectiveFn):
    weights: tuple = ()
    kind: ClassVar[str] = "weighted_sum"

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.weights:
            raise InvalidObjective("weighted_sum needs at least one weight")

    @property
    def arity(self):
        return len(self.weights)

    def __call__(self, X):
        return np.asarray(X, dtype=float) @ np.array(self.weights)

    def is_in_Hp(self):
        return all(w >= 0.0 for w in self.weights)

    def to_dict(self):
        return {"kind": self.kind, "weights": list(self.weights)}


@dataclass(frozen=True)
class ProductForm(MultiObjectiveFn):
    """prod_l g_l(x_l); the factors default to the identity."""

    factors: tuple = ()
    n_links: Optional[int] = None
    kind: ClassVar[str] = "product"

    def __post_init__(self):
        for f in self.factors:
            if not isinstance(f, ObjectiveFn):
                raise InvalidObjective(f"product factor {f!r} is not an objective")

    @property
    def arity(self):
        return len(self.factors) if self.factors else self.n_links

    def _factors(self, L):
        return self.factors if self.factors else (Identity(),) * L

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        out = np.ones(X.shape[:-1])
        for l, f in enumerate(self._factors(X.shape[-1])):
            out = out * f(X[..., l])
        return out

    def breaks(self, coord, X):
        kinks = self._factors(X.shape[1])[coord].kinks
        return np.tile(np.array(kinks, dtype=float), (X.shape[0], 1))

    def is_in_Hp(self):
        return all(f.is_in_Hp() for f in self.factors)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.factors:
            d["factors"] = [f.to_dict() for f in self.factors]
        if self.n_links is not None:
            d["arity"] = self.n_links
        return d


def multi_objective_from_dict(spec: dict) -> MultiObjectiveFn:
    kind = spec.get("kind") if isinstance(spec, dict) else None
    if kind == "min":
        return MinOfAll(spec.get("arity"))
    if kind == "weighted_sum":
        return WeightedSum(tuple(spec["weights"]))
    if kind == "product":
        return ProductForm(tuple(objective_from_dict(f) for f in spec.get("factors", ())), spec.get("arity"))
    raise InvalidObjective(f"unknown bundled objective {spec!r}")


@dataclass(frozen=True)
class BundledScenario:
    """``links[l]`` is a tuple of (player_id, reported law) pairs for good l."""

    links: tuple
    objective: MultiObjectiveFn = field(default_factory=MinOfAll)

    def __post_init__(self):
        links = tuple(tuple((int(pid), d) for pid, d in link) for link in self.links)
        object.__setattr__(self, "links", links)
        if not links:
            raise NotEnoughBidders("a bundled auction needs at least one link")
        for l, link in enumerate(links):
            ids = [pid for pid, _ in link]
            if len(set(ids)) != len(ids):
                raise InvalidBid(f"duplicate player ids on link {l}")
            for _, d in link:
                if not isinstance(d, GenDistribution):
                    raise InvalidBid(f"bid on link {l} is not a distribution")
        self.objective.check_arity(len(links))

    @property
    def L(self) -> int:
        return len(self.links)

    def law(self, l: int, pid: int) -> GenDistribution:
        for i, d in self.links[l]:
            if i == pid:
                return d
        raise KeyError((l, pid))

    def ids(self, l: int) -> list:
        return sorted(pid for pid, _ in self.links[l])

    def selections(self):
        """All one-bidder-per-link tuples in lexicographic order."""
        return itertools.product(*(self.ids(l) for l in range(self.L)))

    def laws_of(self, selection) -> tuple:
        if len(selection) != self.L:
            raise ArityError(f"selection {selection!r} does not pick one bidder per link")
        return tuple(self.law(l, pid) for l, pid in enumerate(selection))

    def replace(self, l: int, pid: int, law: GenDistribution) -> "BundledScenario":
        links = list(self.links)
        links[l] = tuple((i, law if i == pid else d) for i, d in links[l])
        return BundledScenario(tuple(links), self.objective)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective.to_dict(),
            "links": [[{"id": pid, "type": d.to_dict()} for pid, d in link] for link in self.links],
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "BundledScenario":
        links = tuple(
            tuple((b["id"], distribution_from_dict(b["type"])) for b in link) for link in spec["links"]
        )
        return cls(links, multi_objective_from_dict(spec.get("objective", {"kind": "min"})))


# ---------------------------------------------------------------------------
# welfare integrals


def _nested(h, laws, order, X, level):
    coord = order[level]
    law = laws[coord]
    last = level == len(order) - 1
    if isinstance(law, PointMass):
        X = X.copy()
        X[:, coord] = law.c
        return h(X) if last else _nested(h, laws, order, X, level + 1)

    def g(owner, x):
        P, n = x.shape
        Xb = np.repeat(X[owner], n, axis=0)
        Xb[:, coord] = x.ravel()
        if last:
            vals = h(Xb)
        else:
            vals = np.concatenate(
                [_nested(h, laws, order, Xb[s : s + _CHUNK], level + 1) for s in range(0, Xb.shape[0], _CHUNK)]
            )
        return vals.reshape(P, n)

    return expect_batch(law, g, X.shape[0], h.breaks(coord, X), tol=NESTED_TOL)


def _qmc(h, laws):
    L = len(laws)
    free = [l for l, d in enumerate(laws) if not isinstance(d, PointMass)]
    estimates = []
    seeds = np.random.SeedSequence(QMC_SEED).spawn(QMC_REPLICATES)
    for s in seeds:
        u = qmc.Sobol(d=len(free), scramble=True, seed=np.random.default_rng(s)).random_base2(QMC_LOG2_POINTS)
        X = np.empty((u.shape[0], L))
        for l, d in enumerate(laws):
            X[:, l] = d.c if isinstance(d, PointMass) else 0.0
        for k, l in enumerate(free):
            X[:, l] = laws[l].inverse_cdf(np.clip(u[:, k], 1e-300, 1.0))
        estimates.append(float(np.mean(h(X))))
    est = np.array(estimates)
    return float(est.mean()), float(est.std(ddof=1) / np.sqrt(len(est)))


@lru_cache(maxsize=65536)
def welfare_integral(laws: tuple, h: MultiObjectiveFn) -> tuple:
    """``(value, error_estimate)`` of E[h(X_1..X_L)] for independent X_l ~ laws[l]."""
    h.check_arity(len(laws))
    free = [l for l, d in enumerate(laws) if not isinstance(d, PointMass)]
    if len(free) > TENSOR_MAX_DIM:
        return _qmc(h, laws)
    pinned = [l for l in range(len(laws)) if l not in free]
    X = np.full((1, len(laws)), np.nan)
    return float(_nested(h, laws, pinned + free, X, 0)[0]), 0.0


def welfare_A(scenario: BundledScenario, selection) -> float:
    return welfare_integral(scenario.laws_of(tuple(selection)), scenario.objective)[0]


def welfare_A_partial(scenario: BundledScenario, selection, l: int, x_l: float) -> float:
    """Welfare with coordinate ``l`` pinned at ``x_l``; ``x_l = 1`` gives the full-capacity value."""
    laws = list(scenario.laws_of(tuple(selection)))
    laws[l] = PointMass(float(x_l))
    return welfare_integral(tuple(laws), scenario.objective)[0]


def _pinned(laws, l, x):
    laws = list(laws)
    laws[l] = PointMass(float(x))
    return tuple(laws)


# ---------------------------------------------------------------------------
# mechanisms


@dataclass(frozen=True)
class BundledContract:
    mechanism: str
    winners: tuple  # winning player id per link
    welfare: float  # A at the winning selection
    marginal_losers: tuple  # per link: the selection that is best without that link's winner
    marginal_welfare: tuple  # per link: A at that selection
    pre_payment: tuple  # per link
    winner_laws: tuple
    objective: MultiObjectiveFn
    participants: tuple = ()
    full_capacity_welfare: Optional[tuple] = None  # per link A^{-l}(winners)
    penalty_price: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "winners": [[l, pid] for l, pid in enumerate(self.winners)],
            "welfare": self.welfare,
            "marginal_losers": [list(m) for m in self.marginal_losers],
            "marginal_welfare": list(self.marginal_welfare),
            "pre_payment": list(self.pre_payment),
            "full_capacity_welfare": None if self.full_capacity_welfare is None else list(self.full_capacity_welfare),
            "penalty_price": None if self.penalty_price is None else list(self.penalty_price),
        }


def welfare_table(scenario: BundledScenario) -> dict:
    return {sel: welfare_A(scenario, sel) for sel in scenario.selections()}


def _argmax(table, allowed=lambda sel: True):
    best, best_val = None, None
    for sel in sorted(table):
        if allowed(sel) and (best_val is None or table[sel] > best_val):
            best, best_val = sel, table[sel]
    return best, best_val


def _allocate(scenario):
    for l in range(scenario.L):
        if len(scenario.links[l]) < 2:
            raise NotEnoughBidders(f"link {l} has no alternative bidder")
    table = welfare_table(scenario)
    winners, welfare = _argmax(table)
    losers, loser_vals = [], []
    for l in range(scenario.L):
        sel, val = _argmax(table, lambda s, l=l: s[l] != winners[l])
        losers.append(sel)
        loser_vals.append(val)
    participants = tuple((l, pid) for l in range(scenario.L) for pid in scenario.ids(l))
    return winners, welfare, tuple(losers), tuple(loser_vals), scenario.laws_of(winners), participants


def run_bsvcg(scenario: BundledScenario) -> BundledContract:
    winners, welfare, losers, loser_vals, laws, participants = _allocate(scenario)
    return BundledContract(
        mechanism=BSVCG,
        winners=winners,
        welfare=welfare,
        marginal_losers=losers,
        marginal_welfare=loser_vals,
        pre_payment=tuple(-v for v in loser_vals),
        winner_laws=laws,
        objective=scenario.objective,
        participants=participants,
    )


def run_bssp(scenario: BundledScenario) -> BundledContract:
    if not scenario.objective.is_in_Hp():
        raise ObjectiveNotInHp(f"{scenario.objective!r} is not nonnegative and element-wise nondecreasing")
    winners, welfare, losers, loser_vals, laws, participants = _allocate(scenario)
    full = tuple(welfare_integral(_pinned(laws, l, 1.0), scenario.objective)[0] for l in range(scenario.L))
    lams = []
    for l in range(scenario.L):
        denom = full[l] - loser_vals[l]
        if not denom > 0.0:
            raise DegeneratePenaltyPrice(
                f"link {l}: full-capacity welfare {full[l]!r} does not exceed marginal welfare {loser_vals[l]!r}"
            )
        lams.append(full[l] / denom)
    return BundledContract(
        mechanism=BSSP,
        winners=winners,
        welfare=welfare,
        marginal_losers=losers,
        marginal_welfare=loser_vals,
        pre_payment=full,
        winner_laws=laws,
        objective=scenario.objective,
        participants=participants,
        full_capacity_welfare=full,
        penalty_price=tuple(lams),
    )


def run(mechanism: str, scenario: BundledScenario) -> BundledContract:
    if mechanism == BSVCG:
        return run_bsvcg(scenario)
    if mechanism == BSSP:
        return run_bssp(scenario)
    raise SpecError(f"unknown bundled mechanism {mechanism!r}")


def realized_welfare(contract: BundledContract, l: int, x: float) -> float:
    """A^l: welfare given the link-l winner's realization, other winners at their reported laws."""
    return welfare_integral(_pinned(contract.winner_laws, l, x), contract.objective)[0]


def expect_realized_welfare(contract: BundledContract, l: int, law: Optional[GenDistribution] = None) -> float:
    """E[A^l] over the link-l output, as an outer 1-D integral of pinned welfare integrals.

    With ``law`` equal to the winner's reported law this must agree with A.
    """
    law = contract.winner_laws[l] if law is None else law

    def g(x):
        flat = np.asarray(x, dtype=float).ravel()
        return np.array([realized_welfare(contract, l, float(v)) for v in flat]).reshape(np.shape(x))

    return expect_fn(law, g)


def settle_bundled(contract: BundledContract, realizations) -> list:
    """Settle every participant; ``realizations`` maps (link, player_id) -> x."""
    out = []
    for l, pid in contract.participants:
        if contract.winners[l] != pid:
            out.append(Settlement((l, pid), None, 0.0, 0.0))
            continue
        if (l, pid) not in realizations:
            raise MissingRealization(f"no realization for winner {pid} on link {l}")
        x = float(realizations[(l, pid)])
        a_l = realized_welfare(contract, l, x)
        if contract.mechanism == BSVCG:
            out.append(Settlement((l, pid), x, contract.pre_payment[l], -a_l))
        else:
            full, lam = contract.full_capacity_welfare[l], contract.penalty_price[l]
            out.append(Settlement((l, pid), x, full, lam * (full - a_l)))
    return out


def expected_payoff(contract: BundledContract, l: int, pid: int, true_law: GenDistribution) -> float:
    """Expected payoff of player (l, pid) whose output follows ``true_law``."""
    if contract.winners[l] != pid:
        return 0.0
    laws = list(contract.winner_laws)
    laws[l] = true_law
    e_al = welfare_integral(tuple(laws), contract.objective)[0]
    if contract.mechanism == BSVCG:
        return e_al - contract.marginal_welfare[l]
    full, lam = contract.full_capacity_welfare[l], contract.penalty_price[l]
    return full - lam * (full - e_al)
