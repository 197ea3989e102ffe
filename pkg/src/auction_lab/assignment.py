"""Risk-aware generation assignment.

Generators cover their own shortfall at the spot price, so assigning ``y_i``
to generator ``i`` costs it ``lam * E[(y_i - X_i)^+]``; whatever aggregate
demand is left uncovered costs the aggregator ``lam * E[(Z - y)^+]``.  The
social welfare problem minimizes the sum subject to ``0 <= y_i <= 1``.

Both cost functions are convex, so the optimum equalizes marginal costs at a
common level ``mu``: ``lam * F_i(y_i) = mu = lam * (1 - F_Z(y))``.  We find
``mu`` by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import (
    GenDistribution,
    PiecewiseLinearCdf,
    PointMass,
    Uniform,
    distribution_from_dict,
    expect_fn,
)
from .errors import DomainError, InvalidBid, InvalidCostReport, InvalidDistribution, SolverError

BISECTION_STEPS = 200
BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class Demand:
    """Aggregate demand Z = z_max * X with X following ``law`` on [0, 1]."""

    law: GenDistribution
    z_max: float = 1.0

    def __post_init__(self):
        if not isinstance(self.law, GenDistribution):
            raise InvalidDistribution("demand law must be a GenDistribution")
        if not (np.isfinite(self.z_max) and self.z_max > 0):
            raise InvalidDistribution(f"z_max must be positive, got {self.z_max!r}")

    def cdf(self, y):
        return self.law.cdf(np.asarray(y, dtype=float) / self.z_max)

    def level(self, price: float, lam: float) -> float:
        """Smallest y >= 0 at which the aggregator's marginal saving lam*(1 - F(y)) is <= price."""
        u = 1.0 - price / lam
        if u <= 0.0:
            return 0.0
        return self.z_max * float(self.law.inverse_cdf(min(u, 1.0)))

    def to_dict(self) -> dict:
        z = self.z_max
        d = self.law
        if isinstance(d, Uniform):
            body = {"family": "uniform", "a": d.a * z, "b": d.b * z}
        elif isinstance(d, PointMass):
            body = {"family": "point_mass", "c": d.c * z}
        elif isinstance(d, PiecewiseLinearCdf):
            body = {"family": "piecewise_linear_cdf", "knots": [[x * z, f] for x, f in d.knots]}
        else:
            body = d.to_dict()
        return {**body, "z_max": z}

    @classmethod
    def from_dict(cls, spec: dict) -> "Demand":
        family = spec.get("family")
        params = {k: v for k, v in spec.items() if k not in ("family", "z_max")}
        try:
            if family == "uniform":
                z = float(spec.get("z_max", max(1.0, float(params["b"]))))
                return cls(Uniform(float(params["a"]) / z, float(params["b"]) / z), z)
            if family == "point_mass":
                z = float(spec.get("z_max", max(1.0, float(params["c"]))))
                return cls(PointMass(float(params["c"]) / z), z)
            if family == "piecewise_linear_cdf":
                z = float(spec.get("z_max", params["knots"][-1][0]))
                knots = tuple((float(x) / z, float(f)) for x, f in params["knots"])
                return cls(PiecewiseLinearCdf(knots), z)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidDistribution(f"malformed demand spec {spec!r}: {exc}") from None
        return cls(distribution_from_dict({"family": family, **params}), float(spec.get("z_max", 1.0)))


def gen_cost(d: GenDistribution, lam: float, y: float) -> float:
    """Expected spot-market purchase lam * E[(y - X)^+] of a generator assigned y."""
    if not 0.0 <= y <= 1.0:
        raise DomainError(f"assignment {y!r} outside [0, 1]")
    if y == 0.0:
        return 0.0
    return lam * expect_fn(d, lambda x: np.maximum(y - x, 0.0), (y,))


def gen_cost_deriv(d: GenDistribution, lam: float, y: float) -> float:
    if not 0.0 <= y <= 1.0:
        raise DomainError(f"assignment {y!r} outside [0, 1]")
    return lam * float(d.cdf(y))


def agg_cost(demand: Demand, lam: float, y: float) -> float:
    """Expected cost lam * E[(Z - y)^+] of buying the uncovered demand."""
    if y < 0.0:
        raise DomainError(f"aggregate assignment {y!r} is negative")
    t = y / demand.z_max
    if t >= 1.0:
        return 0.0
    return lam * demand.z_max * expect_fn(demand.law, lambda x: np.maximum(x - t, 0.0), (t,))


def agg_cost_deriv(demand: Demand, lam: float, y: float) -> float:
    if y < 0.0:
        raise DomainError(f"aggregate assignment {y!r} is negative")
    return lam * (float(demand.cdf(y)) - 1.0)


@dataclass(frozen=True)
class AssignmentProblem:
    players: tuple  # (player_id, law)
    demand: Demand
    spot_price: float

    def __post_init__(self):
        object.__setattr__(self, "players", tuple((int(i), d) for i, d in self.players))
        if not (np.isfinite(self.spot_price) and self.spot_price > 0):
            raise DomainError(f"spot price must be positive, got {self.spot_price!r}")
        ids = [i for i, _ in self.players]
        if len(set(ids)) != len(ids):
            raise InvalidBid("duplicate player ids")
        for _, d in self.players:
            if not isinstance(d, GenDistribution):
                raise InvalidCostReport(f"{d!r} is not a generation law")

    def without(self, player_id: int) -> "AssignmentProblem":
        return AssignmentProblem(tuple(p for p in self.players if p[0] != player_id), self.demand, self.spot_price)

    def with_law(self, player_id: int, law: GenDistribution) -> "AssignmentProblem":
        return AssignmentProblem(
            tuple((i, law if i == player_id else d) for i, d in self.players), self.demand, self.spot_price
        )


@dataclass(frozen=True)
class Assignment:
    ids: tuple
    y: tuple
    total: float
    mu: float

    def of(self, player_id: int) -> float:
        return self.y[self.ids.index(player_id)] if player_id in self.ids else 0.0

    def to_dict(self) -> dict:
        return {"y": {str(i): v for i, v in zip(self.ids, self.y)}, "total": self.total, "mu": self.mu}


@dataclass(frozen=True)
class TwoDimBid:
    beta: float  # ask price
    d: float  # quantity cap at that price

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta >= 0.0):
            raise InvalidBid(f"ask price must be >= 0, got {self.beta!r}")
        if not (np.isfinite(self.d) and 0.0 <= self.d <= 1.0):
            raise InvalidBid(f"quantity cap must lie in [0, 1], got {self.d!r}")

    def to_dict(self) -> dict:
        return {"beta": self.beta, "d": self.d}


def social_cost(problem: AssignmentProblem, y) -> float:
    lam = problem.spot_price
    total = sum(gen_cost(d, lam, yi) for (_, d), yi in zip(problem.players, y))
    return total + agg_cost(problem.demand, lam, float(sum(y)))


def _supply(laws, lam, mu):
    if mu <= 0.0:
        return np.zeros(len(laws))
    u = min(mu / lam, 1.0)
    return np.array([min(float(d.inverse_cdf(u)), 1.0) for d in laws])


def solve_swo(problem: AssignmentProblem) -> Assignment:
    lam = problem.spot_price
    ids = tuple(i for i, _ in problem.players)
    laws = [d for _, d in problem.players]
    demand = problem.demand
    if not laws or demand.level(0.0, lam) == 0.0:
        mu = lam if not laws and demand.level(0.0, lam) > 0 else 0.0
        return Assignment(ids, (0.0,) * len(ids), 0.0, mu)

    def excess(mu):
        return _supply(laws, lam, mu).sum() - demand.level(mu, lam)

    lo, hi = 0.0, lam
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        e = excess(mid)
        if e == 0.0:
            lo = hi = mid
            break
        if e < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * lam:
            break
    else:
        raise SolverError("bisection on the marginal-cost level did not converge")

    s_lo, s_hi = _supply(laws, lam, lo), _supply(laws, lam, hi)
    d_lo, d_hi = demand.level(lo, lam), demand.level(hi, lam)
    mu = 0.5 * (lo + hi)
    floor, ceil = max(s_lo.sum(), d_hi), min(s_hi.sum(), d_lo)
    target = float(np.clip(demand.level(mu, lam), min(floor, ceil), max(floor, ceil)))
    # split any jump in supply at mu among players in id order
    y = s_lo.copy()
    gap = target - y.sum()
    for k in np.argsort(ids, kind="stable"):
        take = min(max(gap, 0.0), s_hi[k] - s_lo[k])
        y[k] += take
        gap -= take
    y = np.clip(y, 0.0, 1.0)
    if abs(y.sum() - target) > BALANCE_TOL:
        raise SolverError(f"could not balance supply {y.sum()!r} against demand {target!r}")
    return Assignment(ids, tuple(float(v) for v in y), float(y.sum()), float(mu))


# ---------------------------------------------------------------------------
# VCG with complete cost reports


@dataclass(frozen=True)
class VcgResult:
    assignment: Assignment
    payments: dict
    leave_one_out: dict

    def to_dict(self) -> dict:
        return {"assignment": self.assignment.to_dict(), "payments": {str(k): v for k, v in self.payments.items()}}


def run_vcg_complete(reports, demand: Demand, lam: float) -> VcgResult:
    """Assignment under reported laws and the externality payment of each player.

    ``reports`` is a sequence of (player_id, reported law); the reported cost
    function of a player is the shortfall cost implied by its reported law.
    """
    reports = tuple(reports)
    for pid, d in reports:
        if not isinstance(d, GenDistribution):
            raise InvalidCostReport(f"report of player {pid} is not a generation law")
    problem = AssignmentProblem(reports, demand, lam)
    a = solve_swo(problem)
    c_y = agg_cost(demand, lam, a.total)
    payments, loo = {}, {}
    for pid, _ in reports:
        b = solve_swo(problem.without(pid))
        loo[pid] = b
        w = agg_cost(demand, lam, b.total) - c_y
        for qid, dq in reports:
            if qid != pid:
                w += gen_cost(dq, lam, b.of(qid)) - gen_cost(dq, lam, a.of(qid))
        payments[pid] = w
    return VcgResult(a, payments, loo)


def vcg_payoff(result: VcgResult, player_id: int, true_law: GenDistribution, lam: float) -> float:
    return result.payments[player_id] - gen_cost(true_law, lam, result.assignment.of(player_id))


# ---------------------------------------------------------------------------
# i-VCG with (price, quantity) bids


def _greedy_fill(bids, demand: Demand, lam: float) -> Assignment:
    ids = tuple(pid for pid, _ in bids)
    y = dict.fromkeys(ids, 0.0)
    total = 0.0
    for pid, b in sorted(bids, key=lambda pb: (pb[1].beta, pb[0])):
        take = min(b.d, max(0.0, demand.level(b.beta, lam) - total))
        y[pid] = take
        total += take
    mu = lam * (1.0 - float(demand.cdf(total)))
    return Assignment(ids, tuple(y[i] for i in ids), total, mu)


@dataclass(frozen=True)
class IvcgResult:
    assignment: Assignment
    payments: dict
    leave_one_out: dict
    bids: tuple

    def to_dict(self) -> dict:
        return {
            "assignment": self.assignment.to_dict(),
            "payments": {str(k): v for k, v in self.payments.items()},
            "bids": {str(pid): b.to_dict() for pid, b in self.bids},
        }


def run_ivcg(bids, demand: Demand, lam: float) -> IvcgResult:
    """Merit-order assignment for (price, cap) bids plus externality payments.

    Bids are filled in ascending price order (ties by player id) while the
    aggregator's marginal saving strictly exceeds the ask price.
    """
    bids = tuple((int(pid), b) for pid, b in bids)
    for pid, b in bids:
        if not isinstance(b, TwoDimBid):
            raise InvalidBid(f"bid of player {pid} is not a TwoDimBid")
    a = _greedy_fill(bids, demand, lam)
    c_y = agg_cost(demand, lam, a.total)
    payments, loo = {}, {}
    for pid, _ in bids:
        zeroed = tuple((q, TwoDimBid(b.beta, 0.0) if q == pid else b) for q, b in bids)
        r = _greedy_fill(zeroed, demand, lam)
        loo[pid] = r
        w = agg_cost(demand, lam, r.total) - c_y
        for q, b in bids:
            if q != pid:
                w += b.beta * (r.of(q) - a.of(q))
        payments[pid] = w
    return IvcgResult(a, payments, loo, bids)


def ivcg_payoff(result: IvcgResult, player_id: int, true_law: GenDistribution, lam: float) -> float:
    return result.payments[player_id] - gen_cost(true_law, lam, result.assignment.of(player_id))


def efficient_bid_profile(problem: AssignmentProblem) -> list:
    """Bid (mu, y_i**) for every player, where (y**, mu) solves the welfare problem."""
    a = solve_swo(problem)
    if a.total == 0.0:
        return [(pid, TwoDimBid(0.0, 0.0)) for pid in a.ids]
    return [(pid, TwoDimBid(a.mu, yi)) for pid, yi in zip(a.ids, a.y)]
