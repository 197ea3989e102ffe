"""Numerical checks of the incentive properties of every mechanism.

Deviation search evaluates a player's *expected* payoff (quadrature, never
sampling) for every report on a finite grid while the other reports stay
fixed.  A gain at or below tolerance certifies the property on that grid only.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import assignment as asg
from . import bundled_auction as bund
from . import single_auction as single
from . import tso_auction as tso
from .distributions import (
    Beta,
    PiecewiseLinearCdf,
    PointMass,
    Uniform,
    make,
    moment,
)
from .errors import DegeneratePenaltyPrice, InvalidDistribution, SpecError

MECHANISMS = ("svcg", "ssp", "bsvcg", "bssp", "tsvcg-gen", "tsvcg-tso", "vcg-complete", "ivcg")
DEFAULT_POINTS = 20
COARSE_POINTS = 5
MOMENT_TOL = 1e-9
BETA_RANGE = (0.5, 8.0)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class DeviationGrid:
    candidates: tuple
    spec: str

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __add__(self, other: "DeviationGrid") -> "DeviationGrid":
        seen = dict.fromkeys(self.candidates + other.candidates)
        return DeviationGrid(tuple(seen), f"{self.spec} + {other.spec}")


def family_grid(family: str, points: int = DEFAULT_POINTS) -> DeviationGrid:
    """Cartesian grid with ``points`` values per scalar parameter of the family."""
    lin = np.linspace(0.0, 1.0, points)
    if family == "point_mass":
        cands = tuple(PointMass(float(c)) for c in lin)
        spec = f"point_mass c=linspace(0,1,{points})"
    elif family == "uniform":
        cands = tuple(Uniform(float(a), float(b)) for a, b in itertools.product(lin, lin) if a < b)
        spec = f"uniform a<b from linspace(0,1,{points})"
    elif family == "beta":
        g = np.geomspace(*BETA_RANGE, points)
        cands = tuple(Beta(float(a), float(b)) for a, b in itertools.product(g, g))
        spec = f"beta alpha,beta=geomspace({BETA_RANGE[0]},{BETA_RANGE[1]},{points})"
    elif family == "piecewise_linear_cdf":
        mids = np.linspace(0.05, 0.95, points)
        cands = tuple(
            PiecewiseLinearCdf(((0.0, 0.0), (float(m), float(f)), (1.0, 1.0)))
            for m, f in itertools.product(mids, lin)
        )
        spec = f"piecewise_linear_cdf one interior knot, {points}x{points}"
    else:
        raise InvalidDistribution(f"no deviation grid for family {family!r}")
    return DeviationGrid(cands, spec)


def mixed_grid(points: int = DEFAULT_POINTS) -> DeviationGrid:
    """Point masses, uniforms and betas together."""
    return family_grid("point_mass", points) + family_grid("uniform", points) + family_grid("beta", points)


def tso_grid(cost: tso.TsoCost, points: int = DEFAULT_POINTS) -> DeviationGrid:
    lin = np.linspace(0.0, 1.0, points)
    if isinstance(cost, tso.Affine):
        cands = tuple(tso.Affine(cost.tso_id, float(g), cost.kappa) for g in lin)
        return DeviationGrid(cands, f"affine gamma=linspace(0,1,{points}) kappa={cost.kappa}")
    cands = tuple(tso.QuadraticMonotone(cost.tso_id, float(a), float(b)) for a, b in itertools.product(lin, lin))
    return DeviationGrid(cands, f"quadratic gamma1,gamma2=linspace(0,1,{points})")


def bid_grid(spot_price: float, points: int = DEFAULT_POINTS) -> DeviationGrid:
    betas = np.linspace(0.0, spot_price, points)
    caps = np.linspace(0.0, 1.0, points)
    cands = tuple(asg.TwoDimBid(float(b), float(d)) for b, d in itertools.product(betas, caps))
    return DeviationGrid(cands, f"beta=linspace(0,{spot_price},{points}) x d=linspace(0,1,{points})")


# ---------------------------------------------------------------------------
# deviation search


def _describe(report) -> dict:
    return report.to_dict()


@dataclass(frozen=True)
class DeviationReport:
    mechanism: str
    player_id: object
    truthful_expected_payoff: float
    best_deviation: dict
    best_deviation_payoff: float
    gain: float
    grid_spec: str
    grid_size: int
    skipped: int = 0
    opponents: Optional[dict] = None
    skipped_profiles: int = 0

    def to_dict(self) -> dict:
        pid = list(self.player_id) if isinstance(self.player_id, tuple) else self.player_id
        return {
            "mechanism": self.mechanism,
            "player_id": pid,
            "truthful_payoff": self.truthful_expected_payoff,
            "best_deviation": self.best_deviation,
            "best_deviation_payoff": self.best_deviation_payoff,
            "gain": self.gain,
            "grid": self.grid_spec,
            "grid_size": self.grid_size,
            "skipped": self.skipped,
            "opponents": self.opponents,
            "skipped_profiles": self.skipped_profiles,
        }


@dataclass
class _Game:
    """A player's view of a mechanism: baseline report and expected payoff of any report."""

    baseline: object
    payoff: object
    default_grid: object
    opponents: Optional[dict] = field(default=None)


def _require(scenario, cls, mechanism):
    if not isinstance(scenario, cls):
        raise SpecError(f"mechanism {mechanism!r} needs a {cls.__name__}, got {type(scenario).__name__}")


def _single_game(mechanism, sc, pid, opponents):
    _require(sc, single.AuctionScenario, mechanism)
    reports = sc
    for q, law in (opponents or {}).items():
        reports = reports.replace(q, law)
    true = sc.law(pid)

    def payoff(report):
        c = single.run(mechanism, reports.replace(pid, report).bids, sc.objective, sc.M, sc.price)
        return single.expected_payoff(c, pid, true)

    return _Game(true, payoff, mixed_grid)


def _bundled_game(mechanism, sc, pid, opponents):
    _require(sc, bund.BundledScenario, mechanism)
    l, i = pid
    reports = sc
    for (ql, qi), law in (opponents or {}).items():
        reports = reports.replace(ql, qi, law)
    true = sc.law(l, i)

    def payoff(report):
        c = bund.run(mechanism, reports.replace(l, i, report))
        return bund.expected_payoff(c, l, i, true)

    return _Game(true, payoff, lambda points: family_grid(true.family, points))


def _tsvcg_reports(sc, opponents):
    for (side, q), report in (opponents or {}).items():
        sc = sc.with_gen(q, report) if side == "gen" else sc.with_tso(report)
    return sc


def _tsvcg_gen_game(sc, pid, opponents):
    _require(sc, tso.TsvcgScenario, "tsvcg-gen")
    reports = _tsvcg_reports(sc, opponents)
    true = dict(sc.gens)[pid]

    def payoff(report):
        out = tso.run_tsvcg(reports.with_gen(pid, report))
        return tso.expected_gen_payoff(out, pid, true)

    return _Game(true, payoff, lambda points: family_grid(true.family, points))


def _tsvcg_tso_game(sc, pid, opponents):
    _require(sc, tso.TsvcgScenario, "tsvcg-tso")
    reports = _tsvcg_reports(sc, opponents)
    true = next(t for t in sc.tsos if t.tso_id == pid)
    true_gens = dict(sc.gens)

    def payoff(report):
        out = tso.run_tsvcg(reports.with_tso(report))
        return tso.expected_tso_payoff(out, pid, true, true_gens[out.winner_gen])

    return _Game(true, payoff, lambda points: tso_grid(true, points))


def _vcg_game(problem, pid, opponents):
    _require(problem, asg.AssignmentProblem, "vcg-complete")
    reports = problem
    for q, law in (opponents or {}).items():
        reports = reports.with_law(q, law)
    true = dict(problem.players)[pid]
    lam = problem.spot_price

    def payoff(report):
        r = asg.run_vcg_complete(reports.with_law(pid, report).players, problem.demand, lam)
        return asg.vcg_payoff(r, pid, true, lam)

    return _Game(true, payoff, lambda points: family_grid(true.family, points))


def _ivcg_game(problem, pid, opponents):
    _require(problem, asg.AssignmentProblem, "ivcg")
    profile = dict(asg.efficient_bid_profile(problem))
    profile.update(opponents or {})
    true = dict(problem.players)[pid]
    lam = problem.spot_price

    def payoff(bid):
        bids = tuple((q, bid if q == pid else b) for q, b in profile.items())
        r = asg.run_ivcg(bids, problem.demand, lam)
        return asg.ivcg_payoff(r, pid, true, lam)

    return _Game(profile[pid], payoff, lambda points: bid_grid(lam, points))


def _game(mechanism, scenario, player_id, opponents) -> _Game:
    if mechanism in single.MECHANISMS:
        return _single_game(mechanism, scenario, player_id, opponents)
    if mechanism in (bund.BSVCG, bund.BSSP):
        return _bundled_game(mechanism, scenario, player_id, opponents)
    if mechanism == "tsvcg-gen":
        return _tsvcg_gen_game(scenario, player_id, opponents)
    if mechanism == "tsvcg-tso":
        return _tsvcg_tso_game(scenario, player_id, opponents)
    if mechanism == "vcg-complete":
        return _vcg_game(scenario, player_id, opponents)
    if mechanism == "ivcg":
        return _ivcg_game(scenario, player_id, opponents)
    raise SpecError(f"unknown mechanism {mechanism!r}; expected one of {MECHANISMS}")


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("AUCTION_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _evaluate(payoff, candidates):
    def safe(report):
        try:
            return payoff(report)
        except DegeneratePenaltyPrice:
            return None  # the mechanism cannot be run on this profile

    n = max_threads()
    if n == 1 or len(candidates) < 2:
        return [safe(c) for c in candidates]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(safe, candidates))  # map keeps input order


def _opponents_record(opponents):
    if not opponents:
        return None
    return {str(k): v.to_dict() for k, v in opponents.items()}


def deviation_gain(
    mechanism: str,
    scenario,
    player_id,
    grid: Optional[DeviationGrid] = None,
    opponent_reports: Optional[dict] = None,
    points: int = DEFAULT_POINTS,
) -> DeviationReport:
    """Best unilateral deviation of ``player_id`` over ``grid``.

    ``scenario`` holds the true types; ``opponent_reports`` optionally replaces
    other players' reports (keys are player ids, ``(link, id)`` pairs for the
    bundled mechanisms and ``("gen"|"tso", id)`` for the two-class auction).
    For i-VCG the baseline is the efficient bid profile instead of the truth.
    """
    game = _game(mechanism, scenario, player_id, opponent_reports)
    grid = game.default_grid(points) if grid is None else grid
    truthful = game.payoff(game.baseline)
    values = _evaluate(game.payoff, tuple(grid))
    best_i, best_v = None, None
    for k, v in enumerate(values):
        if v is not None and (best_v is None or v > best_v):
            best_i, best_v = k, v
    skipped = sum(v is None for v in values)
    if best_i is None:
        best_dev, best_v = _describe(game.baseline), truthful
    else:
        best_dev = _describe(grid.candidates[best_i])
    return DeviationReport(
        mechanism=mechanism,
        player_id=player_id,
        truthful_expected_payoff=truthful,
        best_deviation=best_dev,
        best_deviation_payoff=best_v,
        gain=best_v - truthful,
        grid_spec=grid.spec,
        grid_size=len(grid),
        skipped=skipped,
        opponents=_opponents_record(opponent_reports),
    )


def dominance_sweep(
    mechanism: str,
    scenario,
    player_id,
    grid: Optional[DeviationGrid] = None,
    opponent_points: int = COARSE_POINTS,
) -> DeviationReport:
    """Worst deviation report over every opponent profile on a coarse grid.

    Opponents' alternative reports come from their own family with
    ``opponent_points`` values per parameter; all combinations are swept.
    Only meaningful for the mechanisms claimed to be dominant-strategy.
    Opponent profiles on which the mechanism cannot run even with a truthful
    report are skipped and counted.
    """
    if mechanism in single.MECHANISMS:
        _require(scenario, single.AuctionScenario, mechanism)
        others = [(b.player_id, b.reported_type) for b in scenario.bids if b.player_id != player_id]
    elif mechanism in (bund.BSVCG, bund.BSSP):
        _require(scenario, bund.BundledScenario, mechanism)
        others = [((l, i), d) for l, link in enumerate(scenario.links) for i, d in link if (l, i) != player_id]
    else:
        raise SpecError(f"{mechanism!r} is not a dominant-strategy mechanism")
    choices = [tuple(family_grid(d.family, opponent_points)) for _, d in others]
    worst, skipped = None, 0
    for combo in itertools.product(*choices):
        opp = {key: law for (key, _), law in zip(others, combo)}
        try:
            rep = deviation_gain(mechanism, scenario, player_id, grid, opp)
        except DegeneratePenaltyPrice:
            skipped += 1
            continue
        if worst is None or rep.gain > worst.gain:
            worst = rep
    if worst is None:
        raise DegeneratePenaltyPrice("no opponent profile in the sweep admits a truthful contract")
    return replace(worst, skipped_profiles=skipped)


# ---------------------------------------------------------------------------
# revenue


def mc_revenue(mechanism: str, scenario: single.AuctionScenario, trials: int, seed: int, resale_price: float = 1.0):
    """Seeded Monte Carlo estimate of the auctioneer's revenue under truthful bids.

    Returns ``(estimate, standard_error)``.  Each trial draws every winner's
    output from its true law, resells h(x) and settles both payments.
    """
    revenue = revenue_samples(mechanism, scenario, trials, seed, resale_price)
    # centre on the first draw so a degenerate sample gives its value exactly
    shift = revenue - revenue[0]
    est = float(revenue[0] + shift.mean())
    err = float(shift.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return est, err


def revenue_samples(mechanism: str, scenario: single.AuctionScenario, trials: int, seed: int, resale_price: float = 1.0):
    """Per-trial revenue draws behind :func:`mc_revenue`."""
    _require(scenario, single.AuctionScenario, mechanism)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials!r}")
    c = single.run(mechanism, scenario.bids, scenario.objective, scenario.M, scenario.price)
    rng = np.random.default_rng(seed)
    revenue = np.zeros(trials)
    for w in c.winners:
        hx = np.asarray(scenario.objective(scenario.law(w).sample(rng, trials)), dtype=float)
        if c.mechanism == single.SVCG:
            q = -c.price * hx
        else:
            q = c.price * c.penalty_price * (c.reference_value - hx)
        revenue += resale_price * hx - (c.pre_payment[w] - q)
    return revenue


def closed_form_revenue(mechanism: str, scenario: single.AuctionScenario, resale_price: float = 1.0) -> float:
    return single.expected_revenue(mechanism, scenario.bids, scenario.objective, resale_price, scenario.M)


# ---------------------------------------------------------------------------
# moment audit


@dataclass(frozen=True)
class MomentAuditResult:
    theta: dict
    theta_hat: dict
    first_differing_moment: Optional[int]
    max_checked: int

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "theta_hat": self.theta_hat,
            "first_differing_moment": self.first_differing_moment,
            "max_checked": self.max_checked,
        }


def moment_audit(family: str, theta: dict, theta_hat: dict, max_n: int = 6) -> MomentAuditResult:
    """Smallest n <= max_n at which the two laws' n-th moments differ by more than 1e-9.

    Laws on [0, 1] are determined by their moments, so a report matching the
    truth on every monomial objective must be the truth.
    """
    d, d_hat = make(family, **theta), make(family, **theta_hat)
    first = None
    for n in range(1, max_n + 1):
        if abs(moment(d, n) - moment(d_hat, n)) > MOMENT_TOL:
            first = n
            break
    return MomentAuditResult(d.params(), d_hat.params(), first, max_n)


# ---------------------------------------------------------------------------
# brute-force oracle


def brute_force_welfare_argmax(scenario: bund.BundledScenario) -> tuple:
    """Exhaustive argmax of the reported welfare; first maximum in lexicographic order wins."""
    best, best_val = None, -np.inf
    for sel in itertools.product(*(sorted(pid for pid, _ in link) for link in scenario.links)):
        v = bund.welfare_A(scenario, sel)
        if v > best_val:
            best, best_val = sel, v
    return best


# ---------------------------------------------------------------------------
# suites driven by the CLI


@dataclass(frozen=True)
class Check:
    name: str
    subject: object
    value: float
    limit: float
    passed: bool
    detail: Optional[dict] = None

    def to_dict(self) -> dict:
        subject = list(self.subject) if isinstance(self.subject, tuple) else self.subject
        d = {"check": self.name, "subject": subject, "value": self.value, "limit": self.limit, "pass": self.passed}
        if self.detail is not None:
            d["detail"] = self.detail
        return d


def _at_most(name, subject, value, limit, detail=None):
    return Check(name, subject, float(value), float(limit), bool(value <= limit), detail)


def _at_least(name, subject, value, limit, detail=None):
    return Check(name, subject, float(value), float(limit), bool(value >= limit), detail)


def _ic_checks(mechanism, scenario, players, tolerance, points, grid_for=None):
    out = []
    for pid in players:
        grid = grid_for(pid) if grid_for is not None else None
        rep = deviation_gain(mechanism, scenario, pid, grid, points=points)
        out.append(_at_most(f"{mechanism}_deviation_gain", pid, rep.gain, tolerance, rep.to_dict()))
    return out


def verify_auction(mechanism, sc: single.AuctionScenario, tolerance=1e-7, points=DEFAULT_POINTS) -> list:
    checks = _ic_checks(mechanism, sc, sc.ids, tolerance, points, lambda _pid: mixed_grid(points))
    c = single.run(mechanism, sc.bids, sc.objective, sc.M, sc.price)
    for w in c.winners:
        u = single.expected_payoff(c, w, sc.law(w))
        checks.append(_at_least("winner_individual_rationality", w, u, -tolerance))
    if c.penalty_price is not None:
        checks.append(_at_least("penalty_price_at_least_one", None, c.penalty_price, 1.0))
    if sc.objective.is_in_Hp():
        try:
            r_ssp = closed_form_revenue(single.SSP, sc)
        except DegeneratePenaltyPrice:
            r_ssp = None
        if r_ssp is not None:
            r_svcg = closed_form_revenue(single.SVCG, sc)
            checks.append(_at_least("revenue_svcg_minus_ssp", None, r_svcg - r_ssp, -1e-9))
    return checks


def verify_bundled(mechanism, sc: bund.BundledScenario, tolerance=1e-7, points=DEFAULT_POINTS) -> list:
    players = [(l, pid) for l in range(sc.L) for pid in sc.ids(l)]
    checks = _ic_checks(mechanism, sc, players, tolerance, points)
    c = bund.run(mechanism, sc)
    oracle = brute_force_welfare_argmax(sc)
    checks.append(
        Check("winners_match_enumeration", None, 0.0, 0.0, oracle == c.winners, {"oracle": list(oracle)})
    )
    if c.penalty_price is not None:
        for l, lam in enumerate(c.penalty_price):
            checks.append(_at_least("penalty_price_at_least_one", l, lam, 1.0))
    for l in range(sc.L):
        e_al = bund.welfare_integral(c.winner_laws, c.objective)[0]
        total = bund.expect_realized_welfare(c, l)
        checks.append(_at_most("realized_welfare_consistency", l, abs(total - e_al), 2e-7))
    return checks


def verify_tsvcg(sc: tso.TsvcgScenario, tolerance=1e-7, points=DEFAULT_POINTS) -> list:
    checks = _ic_checks("tsvcg-gen", sc, [g for g, _ in sc.gens], tolerance, points)
    checks += _ic_checks("tsvcg-tso", sc, [t.tso_id for t in sc.tsos], tolerance, points)
    out = tso.run_tsvcg(sc)
    gens = dict(sc.gens)
    u = tso.expected_gen_payoff(out, out.winner_gen, gens[out.winner_gen])
    v = tso.expected_tso_payoff(out, out.winner_tso, out.reported_cost, gens[out.winner_gen])
    checks.append(_at_least("winner_gen_individual_rationality", out.winner_gen, u, -tolerance))
    checks.append(_at_least("winner_tso_individual_rationality", out.winner_tso, v, -tolerance))
    return checks


def verify_assignment(mode, problem: asg.AssignmentProblem, tolerance=1e-7, points=DEFAULT_POINTS) -> list:
    ids = [pid for pid, _ in problem.players]
    lam = problem.spot_price
    a = asg.solve_swo(problem)
    checks = [_at_most("balance", None, abs(a.total - sum(a.y)), 1e-10)]
    if mode == "vcg":
        checks += _ic_checks("vcg-complete", problem, ids, tolerance, points)
        r = asg.run_vcg_complete(problem.players, problem.demand, lam)
        for pid in ids:
            checks.append(_at_least("payment_nonnegative", pid, r.payments[pid], -1e-9))
    else:
        profile = asg.efficient_bid_profile(problem)
        r = asg.run_ivcg(profile, problem.demand, lam)
        gap = max(abs(u - v) for u, v in zip(r.assignment.y, a.y)) if ids else 0.0
        checks.append(_at_most("profile_reproduces_efficient_assignment", None, gap, 1e-9))
        checks += _ic_checks("ivcg", problem, ids, tolerance, points)
    return checks
