"""Two-class auction: one generator and one transmission operator (TSO) are
contracted jointly so as to maximize expected net surplus E[X - c(X)].

Each winner pays the externality it imposes, measured as the best surplus
achievable without it.  Truthful reporting is a Nash equilibrium, but a TSO's
best response depends on what the generators report.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import ClassVar, Optional

import numpy as np

from .distributions import GenDistribution, distribution_from_dict, mean, moment
from .errors import InvalidBid, InvalidCostReport, NotEnoughBidders

log = logging.getLogger(__name__)


class TsoCost:
    """Transmission cost c(x) for x units of power; nonnegative and nondecreasing on [0, 1]."""

    kind: ClassVar[str]
    tso_id: int

    def __call__(self, x):
        raise NotImplementedError

    def expected(self, d: GenDistribution) -> float:
        raise NotImplementedError

    def with_params(self, **params) -> "TsoCost":
        raise NotImplementedError


@dataclass(frozen=True)
class Affine(TsoCost):
    tso_id: int
    gamma: float
    kappa: float = 0.0
    kind: ClassVar[str] = "affine"

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and np.isfinite(self.kappa)) or self.gamma < 0 or self.kappa < 0:
            raise InvalidCostReport(f"affine cost needs gamma, kappa >= 0, got {self.gamma}, {self.kappa}")

    def __call__(self, x):
        return self.gamma * np.asarray(x, dtype=float) + self.kappa

    def expected(self, d):
        return self.gamma * mean(d) + self.kappa

    def with_params(self, **params):
        return Affine(self.tso_id, params.get("gamma", self.gamma), params.get("kappa", self.kappa))

    def to_dict(self):
        return {"id": self.tso_id, "kind": self.kind, "gamma": self.gamma, "kappa": self.kappa}


@dataclass(frozen=True)
class QuadraticMonotone(TsoCost):
    """gamma1 * x + gamma2 * x**2."""

    tso_id: int
    gamma1: float
    gamma2: float
    kind: ClassVar[str] = "quadratic"

    def __post_init__(self):
        if not (np.isfinite(self.gamma1) and np.isfinite(self.gamma2)) or self.gamma1 < 0 or self.gamma2 < 0:
            raise InvalidCostReport(f"quadratic cost needs gamma1, gamma2 >= 0, got {self.gamma1}, {self.gamma2}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.gamma1 * x + self.gamma2 * x * x

    def expected(self, d):
        return self.gamma1 * mean(d) + self.gamma2 * moment(d, 2)

    def with_params(self, **params):
        return QuadraticMonotone(self.tso_id, params.get("gamma1", self.gamma1), params.get("gamma2", self.gamma2))

    def to_dict(self):
        return {"id": self.tso_id, "kind": self.kind, "gamma1": self.gamma1, "gamma2": self.gamma2}


def tso_cost_from_dict(spec: dict) -> TsoCost:
    kind = spec.get("kind")
    try:
        if kind == "affine":
            return Affine(int(spec["id"]), float(spec["gamma"]), float(spec.get("kappa", 0.0)))
        if kind == "quadratic":
            return QuadraticMonotone(int(spec["id"]), float(spec["gamma1"]), float(spec["gamma2"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidCostReport(f"malformed TSO cost {spec!r}: {exc}") from None
    raise InvalidCostReport(f"unknown TSO cost kind in {spec!r}")


def net_surplus(gen: GenDistribution, tso: TsoCost) -> float:
    """Reported expected net surplus of the pair: E[X - c(X)]."""
    return mean(gen) - tso.expected(gen)


@dataclass(frozen=True)
class TsvcgScenario:
    gens: tuple  # (gen_id, reported law)
    tsos: tuple  # TsoCost reports
    access: Optional[tuple] = None  # access[g][t]: TSO t can serve generator g (positions)

    def __post_init__(self):
        gens = tuple((int(i), d) for i, d in self.gens)
        object.__setattr__(self, "gens", gens)
        object.__setattr__(self, "tsos", tuple(self.tsos))
        gen_ids = [i for i, _ in gens]
        tso_ids = [t.tso_id for t in self.tsos]
        if len(set(gen_ids)) != len(gen_ids) or len(set(tso_ids)) != len(tso_ids):
            raise InvalidBid("duplicate generator or TSO ids")
        for _, d in gens:
            if not isinstance(d, GenDistribution):
                raise InvalidBid("generator report is not a distribution")
        for t in self.tsos:
            if not isinstance(t, TsoCost):
                raise InvalidCostReport(f"{t!r} is not a TSO cost report")
        if self.access is not None:
            acc = tuple(tuple(bool(v) for v in row) for row in self.access)
            if len(acc) != len(gens) or any(len(row) != len(self.tsos) for row in acc):
                raise InvalidBid("access matrix must be generators x TSOs")
            object.__setattr__(self, "access", acc)

    def accessible(self, g: int, t: int) -> bool:
        return True if self.access is None else self.access[g][t]

    def with_gen(self, gen_id: int, law: GenDistribution) -> "TsvcgScenario":
        return TsvcgScenario(tuple((i, law if i == gen_id else d) for i, d in self.gens), self.tsos, self.access)

    def with_tso(self, cost: TsoCost) -> "TsvcgScenario":
        return TsvcgScenario(
            self.gens, tuple(cost if t.tso_id == cost.tso_id else t for t in self.tsos), self.access
        )

    def to_dict(self) -> dict:
        d = {
            "gens": [{"id": i, "type": law.to_dict()} for i, law in self.gens],
            "tsos": [t.to_dict() for t in self.tsos],
        }
        if self.access is not None:
            d["access"] = [[int(v) for v in row] for row in self.access]
        return d

    @classmethod
    def from_dict(cls, spec: dict) -> "TsvcgScenario":
        gens = tuple((g["id"], distribution_from_dict(g["type"])) for g in spec["gens"])
        tsos = tuple(tso_cost_from_dict({"id": k + 1, **t}) for k, t in enumerate(spec["tsos"]))
        return cls(gens, tsos, spec.get("access"))


@dataclass(frozen=True)
class TsvcgOutcome:
    winner_gen: int
    winner_tso: int
    surplus: float
    s_minus_gen: float
    s_minus_tso: float
    gen_mean: float  # reported mean of the winning generator
    tso_expected_cost: float  # reported cost of the winning TSO, averaged over the winning report
    reported_cost: TsoCost
    negative_surplus: bool = False

    def to_dict(self) -> dict:
        return {
            "winner_gen": self.winner_gen,
            "winner_tso": self.winner_tso,
            "surplus": self.surplus,
            "s_minus_gen": self.s_minus_gen,
            "s_minus_tso": self.s_minus_tso,
            "gen_mean": self.gen_mean,
            "negative_surplus": self.negative_surplus,
        }


def surplus_table(scenario: TsvcgScenario) -> dict:
    """{(gen_id, tso_id): net surplus} over accessible pairs."""
    table = {}
    for g, (gid, law) in enumerate(scenario.gens):
        for t, cost in enumerate(scenario.tsos):
            if scenario.accessible(g, t):
                table[(gid, cost.tso_id)] = net_surplus(law, cost)
    return table


def _best(table, allowed):
    best, val = None, None
    for pair in sorted(table):
        if allowed(pair) and (val is None or table[pair] > val):
            best, val = pair, table[pair]
    return best, val


def run_tsvcg(scenario: TsvcgScenario) -> TsvcgOutcome:
    if len(scenario.gens) < 2 or len(scenario.tsos) < 2:
        raise NotEnoughBidders("TSVCG needs at least two generators and two TSOs")
    table = surplus_table(scenario)
    best, surplus = _best(table, lambda p: True)
    if best is None:
        raise NotEnoughBidders("no accessible generator/TSO pair")
    gi, tj = best
    _, s_gen = _best(table, lambda p: p[0] != gi)
    _, s_tso = _best(table, lambda p: p[1] != tj)
    if s_gen is None or s_tso is None:
        raise NotEnoughBidders("access matrix leaves no alternative pair for a winner")
    law = dict(scenario.gens)[gi]
    cost = next(t for t in scenario.tsos if t.tso_id == tj)
    if surplus < 0:
        log.warning("best pair (%s, %s) has negative expected surplus %.6g", gi, tj, surplus)
    return TsvcgOutcome(
        winner_gen=gi,
        winner_tso=tj,
        surplus=surplus,
        s_minus_gen=s_gen,
        s_minus_tso=s_tso,
        gen_mean=mean(law),
        tso_expected_cost=cost.expected(law),
        reported_cost=cost,
        negative_surplus=surplus < 0,
    )


def settle_tsvcg(outcome: TsvcgOutcome, x: float, true_cost: Optional[TsoCost] = None) -> tuple:
    """``(U, V)``: realized payoffs of the winning generator and TSO.

    The generator is paid for the realization net of the *reported* cost; the
    TSO bears its *true* cost (defaults to the report).
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"realization {x!r} outside [0, 1]")
    true_cost = outcome.reported_cost if true_cost is None else true_cost
    u = x - float(outcome.reported_cost(x)) - outcome.s_minus_gen
    v = outcome.gen_mean - outcome.s_minus_tso - float(true_cost(x))
    return u, v


def expected_gen_payoff(outcome: TsvcgOutcome, gen_id: int, true_law: GenDistribution) -> float:
    if outcome.winner_gen != gen_id:
        return 0.0
    return net_surplus(true_law, outcome.reported_cost) - outcome.s_minus_gen


def expected_tso_payoff(outcome: TsvcgOutcome, tso_id: int, true_cost: TsoCost, true_gen_law: GenDistribution) -> float:
    if outcome.winner_tso != tso_id:
        return 0.0
    return outcome.gen_mean - outcome.s_minus_tso - true_cost.expected(true_gen_law)
