"""``auction-lab`` command line.

    auction-lab run|settle|verify|revenue SCENARIO [--seed N] [--trials N]
                [--tolerance T] [--grid-points N] [--report PATH] [--plot-dir DIR]

Reports are JSON lines (one record per line, keys sorted) followed by ``# ``
summary lines, so identical inputs give byte-identical output.

Exit codes: 0 success, 2 unreadable or malformed scenario, 3 a value the
mechanisms reject (the error class name is printed), 4 a verification check
failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import assignment as asg
from . import bundled_auction as bund
from . import equilibrium_lab as lab
from . import single_auction as single
from . import tso_auction as tso
from .errors import AuctionLabError, ScenarioError, SpecError
from .scenario import load_scenario

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_VERIFY = 4
DEFAULT_REVENUE_TRIALS = 10_000


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class Report:
    def __init__(self):
        self.lines = []
        self.records = []

    def record(self, kind: str, **fields):
        rec = {"record": kind, **fields}
        self.records.append(rec)
        self.lines.append(json.dumps(rec, sort_keys=True, default=_plain))

    def summary(self, text: str):
        self.lines.append("# " + text)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _seed(args, sc) -> int:
    seed = args.seed if args.seed is not None else sc.simulation.seed
    if seed is None:
        raise ScenarioError(f"'{args.command}' samples realizations and needs a seed (--seed or simulation.seed)")
    return seed


def _trials(args, sc, default: int) -> int:
    trials = args.trials if args.trials is not None else (sc.simulation.trials or default)
    if trials < 1:
        raise ScenarioError(f"trials must be >= 1, got {trials}")
    return trials


# ---------------------------------------------------------------------------
# run


def _run(sc, args, rep, plot_dir):
    if sc.kind == "auction":
        a = sc.body
        c = single.run(sc.mechanism, a.bids, a.objective, a.M, a.price)
        ranked = single.rank_bids(a.bids, a.objective)
        for value, pid in ranked:
            rep.record("bid", player_id=pid, expected_objective=value, winner=pid in c.winners)
        rep.record("contract", **c.to_dict())
        lam = "" if c.penalty_price is None else f" lambda={c.penalty_price!r}"
        rep.summary(f"{sc.mechanism} winners={list(c.winners)} marginal_loser={c.marginal_loser}{lam}")
        if plot_dir:
            from .plotting import bar_chart

            bar_chart(plot_dir / "run.png", [p for _, p in ranked], [v for v, _ in ranked],
                      f"{sc.mechanism}: reported expected objective", "E[h(X)]", c.winners)
    elif sc.kind == "bundled":
        table = bund.welfare_table(sc.body)
        for sel, value in table.items():
            rep.record("selection", selection=list(sel), welfare=value)
        c = bund.run(sc.mechanism, sc.body)
        rep.record("contract", **c.to_dict())
        lam = "" if c.penalty_price is None else f" lambda={list(c.penalty_price)}"
        rep.summary(f"{sc.mechanism} winners={list(c.winners)} welfare={c.welfare!r}{lam}")
        if plot_dir:
            from .plotting import bar_chart

            labels = ["-".join(map(str, s)) for s in table]
            bar_chart(plot_dir / "run.png", labels, list(table.values()), f"{sc.mechanism}: welfare by selection",
                      "A", {"-".join(map(str, c.winners))})
    elif sc.kind == "tsvcg":
        table = tso.surplus_table(sc.body)
        for (g, t), value in table.items():
            rep.record("pair", gen=g, tso=t, surplus=value)
        out = tso.run_tsvcg(sc.body)
        rep.record("outcome", **out.to_dict())
        rep.summary(f"tsvcg winners=(gen {out.winner_gen}, tso {out.winner_tso}) surplus={out.surplus!r}")
        if plot_dir:
            from .plotting import heatmap

            gens = [g for g, _ in sc.body.gens]
            tsos = [t.tso_id for t in sc.body.tsos]
            m = [[table.get((g, t), np.nan) for t in tsos] for g in gens]
            heatmap(plot_dir / "run.png", m, gens, tsos, "expected net surplus (gen x tso)")
    else:
        res = _assignment_result(sc.body)
        rep.record("assignment", mode=sc.body.mode, **res.to_dict())
        rep.summary(f"{sc.body.mode} total={res.assignment.total!r} mu={res.assignment.mu!r}")
        if plot_dir:
            from .plotting import bar_chart

            bar_chart(plot_dir / "run.png", list(res.assignment.ids), list(res.assignment.y),
                      f"{sc.body.mode}: assigned quantities", "y")
    return EXIT_OK


def _assignment_result(section):
    p = section.problem
    if section.mode == "vcg":
        return asg.run_vcg_complete(p.players, p.demand, p.spot_price)
    bids = section.bids if section.bids is not None else tuple(asg.efficient_bid_profile(p))
    return asg.run_ivcg(bids, p.demand, p.spot_price)


# ---------------------------------------------------------------------------
# settle


def _settle(sc, args, rep, plot_dir):
    rng = np.random.default_rng(_seed(args, sc))
    trials = _trials(args, sc, 1)
    payoffs = {}

    def keep(pid, value):
        payoffs.setdefault(pid, []).append(value)

    if sc.kind == "auction":
        a = sc.body
        c = single.run(sc.mechanism, a.bids, a.objective, a.M, a.price)
        for t in range(trials):
            xs = {w: float(a.law(w).sample(rng)) for w in c.winners}
            for s in single.settle(c, xs):
                rep.record("settlement", trial=t, **s.to_dict())
                if s.player_id in c.winners:
                    keep(s.player_id, s.payoff)
    elif sc.kind == "bundled":
        c = bund.run(sc.mechanism, sc.body)
        for t in range(trials):
            xs = {(l, w): float(c.winner_laws[l].sample(rng)) for l, w in enumerate(c.winners)}
            for s in bund.settle_bundled(c, xs):
                d = s.to_dict()
                d["player_id"] = list(s.player_id)
                rep.record("settlement", trial=t, **d)
                if s.realization is not None:
                    keep(f"{s.player_id[0]}:{s.player_id[1]}", s.payoff)
    elif sc.kind == "tsvcg":
        out = tso.run_tsvcg(sc.body)
        law = dict(sc.body.gens)[out.winner_gen]
        for t in range(trials):
            x = float(law.sample(rng))
            u, v = tso.settle_tsvcg(out, x)
            rep.record("settlement", trial=t, x=x, gen=out.winner_gen, U=u, tso=out.winner_tso, V=v)
            keep(f"gen {out.winner_gen}", u)
            keep(f"tso {out.winner_tso}", v)
    else:
        p = sc.body.problem
        res = _assignment_result(sc.body)
        lam = p.spot_price
        for t in range(trials):
            xs = {pid: float(law.sample(rng)) for pid, law in p.players}
            z = p.demand.z_max * float(p.demand.law.sample(rng))
            for pid, y in zip(res.assignment.ids, res.assignment.y):
                shortfall = lam * max(y - xs[pid], 0.0)
                u = res.payments[pid] - shortfall
                rep.record("settlement", trial=t, player_id=pid, x=xs[pid], y=y, w=res.payments[pid],
                           spot_purchase=shortfall, U=u)
                keep(pid, u)
            rep.record("aggregator", trial=t, z=z, spot_purchase=lam * max(z - res.assignment.total, 0.0))
    for pid, vals in payoffs.items():
        rep.summary(f"player {pid}: mean realized payoff {float(np.mean(vals))!r} over {len(vals)} trials")
    if plot_dir:
        from .plotting import histograms

        histograms(plot_dir / "settle.png", payoffs, "realized payoffs", "payoff")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _verify(sc, args, rep, plot_dir):
    tol = args.tolerance if args.tolerance is not None else sc.verify.tolerance
    points = args.grid_points if args.grid_points is not None else sc.verify.grid_points
    if sc.kind == "auction":
        checks = lab.verify_auction(sc.mechanism, sc.body, tol, points)
    elif sc.kind == "bundled":
        checks = lab.verify_bundled(sc.mechanism, sc.body, tol, points)
    elif sc.kind == "tsvcg":
        checks = lab.verify_tsvcg(sc.body, tol, points)
    else:
        checks = lab.verify_assignment(sc.body.mode, sc.body.problem, tol, points)
    for ch in checks:
        rep.record("check", **ch.to_dict())
    failed = [ch for ch in checks if not ch.passed]
    rep.summary(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    for ch in failed:
        rep.summary(f"FAILED {ch.name} subject={ch.subject} value={ch.value!r} limit={ch.limit!r}")
    if plot_dir:
        from .plotting import bar_chart

        gains = [ch for ch in checks if ch.name.endswith("deviation_gain")]
        bar_chart(plot_dir / "verify.png", [f"{ch.name.split('_')[0]} {ch.subject}" for ch in gains],
                  [ch.value for ch in gains], f"best deviation gain (tolerance {tol:g})", "gain")
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------
# revenue


def _revenue(sc, args, rep, plot_dir):
    if sc.kind != "auction":
        raise SpecError(f"revenue is defined for single-good auctions, not for a {sc.kind!r} scenario")
    seed = _seed(args, sc)
    trials = _trials(args, sc, DEFAULT_REVENUE_TRIALS)
    a = sc.body
    mechanisms = [sc.mechanism] + [m for m in single.MECHANISMS if m != sc.mechanism]
    closed, samples = {}, {}
    for mech in mechanisms:
        try:
            cf = lab.closed_form_revenue(mech, a)
        except AuctionLabError as exc:
            if mech == sc.mechanism:
                raise
            rep.summary(f"{mech}: not applicable ({type(exc).__name__})")
            continue
        est, err = lab.mc_revenue(mech, a, trials, seed)
        closed[mech] = cf
        samples[mech] = lab.revenue_samples(mech, a, trials, seed)
        rep.record("revenue", mechanism=mech, closed_form=cf, mc_estimate=est, std_error=err, trials=trials,
                   seed=seed, within_3se=bool(abs(est - cf) <= 3 * err + 1e-12))
        rep.summary(f"{mech}: closed form {cf!r}, Monte Carlo {est!r} +/- {err!r}")
    if single.SVCG in closed and single.SSP in closed:
        rep.summary(f"svcg - ssp = {closed[single.SVCG] - closed[single.SSP]!r}")
    if plot_dir:
        from .plotting import running_means

        running_means(plot_dir / "revenue.png", samples, closed, "auctioneer revenue")
    return EXIT_OK


COMMANDS = {"run": _run, "settle": _settle, "verify": _verify, "revenue": _revenue}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", type=Path, help="scenario JSON file")
    common.add_argument("--seed", type=int, help="RNG seed (overrides simulation.seed)")
    common.add_argument("--trials", type=int, help="number of sampled trials (overrides simulation.trials)")
    common.add_argument("--tolerance", type=float, help="deviation-gain tolerance for verify")
    common.add_argument("--grid-points", type=int, help="deviation grid points per parameter for verify")
    common.add_argument("--report", type=Path, help="also write the report to this file")
    common.add_argument("--plot-dir", type=Path, help="write PNG figures and a JSONL copy of the report here")
    parser = argparse.ArgumentParser(prog="auction-lab", description="Stochastic resource auctions.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the mechanism and print the contract")
    sub.add_parser("settle", parents=[common], help="sample realizations and print settlements")
    sub.add_parser("verify", parents=[common], help="run the incentive and consistency checks")
    sub.add_parser("revenue", parents=[common], help="closed-form and Monte Carlo auctioneer revenue")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    rep = Report()
    try:
        sc = load_scenario(args.scenario)
        code = COMMANDS[args.command](sc, args, rep, args.plot_dir)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioError as exc:
        print(f"ScenarioError: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except AuctionLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    text = rep.text()
    sys.stdout.write(text)
    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(text)
    if args.plot_dir:
        args.plot_dir.mkdir(parents=True, exist_ok=True)
        (args.plot_dir / f"{args.command}.jsonl").write_text(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
