import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auction_lab import assignment as asg
from auction_lab import equilibrium_lab as lab
from auction_lab import single_auction as sa
from auction_lab.bundled_auction import BundledScenario, MinOfAll
from auction_lab.distributions import Beta, PiecewiseLinearCdf, PointMass, Uniform
from auction_lab.errors import InvalidDistribution, SpecError
from auction_lab.single_auction import AuctionScenario
from auction_lab.tso_auction import Affine, TsvcgScenario

U = Uniform(0.0, 1.0)
POINT_PAIR = AuctionScenario(((1, PointMass(0.7)), (2, PointMass(0.5))))
DEMAND = asg.Demand.from_dict({"family": "uniform", "a": 0.0, "b": 2.0})
TWO_UNIFORM = asg.AssignmentProblem(((1, U), (2, U)), DEMAND, 1.0)
TSO_REFERENCE = TsvcgScenario(((1, PointMass(0.7)), (2, PointMass(0.5))), (Affine(1, 0.1), Affine(2, 0.2)))


# ---------------------------------------------------------------------------
# grids


def test_grid_sizes():
    assert len(lab.family_grid("point_mass")) == 20
    assert len(lab.family_grid("uniform")) == 190
    assert len(lab.family_grid("beta")) == 400
    assert len(lab.family_grid("piecewise_linear_cdf")) == 400
    assert len(lab.mixed_grid()) == 610
    assert len(lab.tso_grid(Affine(1, 0.1, 0.05))) == 20
    assert len(lab.bid_grid(1.0)) == 400
    with pytest.raises(InvalidDistribution):
        lab.family_grid("lognormal")


def test_grid_union_drops_duplicates():
    g = lab.family_grid("point_mass", 5) + lab.family_grid("point_mass", 9)
    assert len(g) == 9


# ---------------------------------------------------------------------------
# deviation search


def test_deviation_examples():
    pm = lab.family_grid("point_mass")
    r = lab.deviation_gain("svcg", POINT_PAIR, 1, pm)
    assert r.gain == 0.0 and r.truthful_expected_payoff == pytest.approx(0.2, abs=1e-15)
    r = lab.deviation_gain("ssp", POINT_PAIR, 2, pm)
    assert r.gain == 0.0 and r.truthful_expected_payoff == 0.0
    # a winning misreport c > 0.7 leaves player 2 with lam' * (0.5 - 0.7) < 0
    c = sa.run_ssp(POINT_PAIR.replace(2, PointMass(0.8)).bids)
    assert sa.expected_payoff(c, 2, PointMass(0.5)) < 0
    r = lab.deviation_gain("ivcg", TWO_UNIFORM, 1)
    assert r.gain <= 0.0 and r.grid_size == 400


def test_degenerate_profiles_are_skipped_not_fatal():
    # reporting certainty of full output makes the marginal loser degenerate for the winner
    sc = AuctionScenario(((1, PointMass(1.0)), (2, PointMass(0.5))))
    r = lab.deviation_gain("ssp", sc, 2, lab.family_grid("point_mass"))
    assert r.skipped >= 1 and r.gain <= 1e-12


def test_mechanism_scenario_mismatch():
    with pytest.raises(SpecError):
        lab.deviation_gain("bsvcg", POINT_PAIR, 1)
    with pytest.raises(SpecError):
        lab.deviation_gain("ivcg", POINT_PAIR, 1)
    with pytest.raises(SpecError):
        lab.deviation_gain("english", POINT_PAIR, 1)
    with pytest.raises(SpecError):
        lab.dominance_sweep("tsvcg-gen", TSO_REFERENCE, 1)


def test_reports_are_deterministic_and_thread_independent(monkeypatch):
    sc = AuctionScenario(((1, Beta(2, 1)), (2, U), (3, PointMass(0.4))))
    a = json.dumps(lab.deviation_gain("ssp", sc, 3).to_dict(), sort_keys=True)
    b = json.dumps(lab.deviation_gain("ssp", sc, 3).to_dict(), sort_keys=True)
    monkeypatch.setenv("AUCTION_LAB_THREADS", "4")
    c = json.dumps(lab.deviation_gain("ssp", sc, 3).to_dict(), sort_keys=True)
    assert a == b == c


@settings(max_examples=15)
@given(st.integers(2, 8), st.integers(2, 8), st.sampled_from(["svcg", "ssp"]))
def test_refining_the_grid_never_lowers_the_gain(n, extra, mech):
    sc = AuctionScenario(((1, Beta(2, 1)), (2, U), (3, PointMass(0.55))), M=1)
    coarse = lab.family_grid("uniform", n)
    fine = coarse + lab.family_grid("uniform", n + extra)
    for pid in sc.ids:
        assert lab.deviation_gain(mech, sc, pid, fine).gain >= lab.deviation_gain(mech, sc, pid, coarse).gain


def test_dominance_sweep_over_opponent_reports():
    r = lab.dominance_sweep("svcg", POINT_PAIR, 1, lab.family_grid("point_mass", 11), opponent_points=5)
    assert r.gain <= 1e-7 and r.opponents is not None
    sc = BundledScenario((((1, PointMass(0.8)), (2, PointMass(0.4))), ((1, PointMass(0.6)), (2, PointMass(0.3)))), MinOfAll())
    r = lab.dominance_sweep("bssp", sc, (0, 1), lab.family_grid("point_mass", 6), opponent_points=3)
    assert r.gain <= 1e-7
    # opponents reporting zero output leave every bundle worthless: no contract exists there
    assert r.skipped_profiles > 0


def test_two_class_truthful_profile_and_non_dominance_witness():
    for g in (1, 2):
        assert lab.deviation_gain("tsvcg-gen", TSO_REFERENCE, g).gain <= 1e-7
    for t in (1, 2):
        assert lab.deviation_gain("tsvcg-tso", TSO_REFERENCE, t).gain <= 1e-7
    truth = TsvcgScenario(((1, PointMass(0.25)), (2, PointMass(0.6))), TSO_REFERENCE.tsos)
    lie = {("gen", 1): PointMass(0.9)}
    r = lab.deviation_gain("tsvcg-tso", truth, 2, opponent_reports=lie)
    # undercutting to gamma = 0 wins (1, 2): V = 0.9 - 0.81 - 0.2 * 0.25
    assert r.gain == pytest.approx(0.04, abs=1e-12)
    assert r.best_deviation["gamma"] == 0.0


def test_vcg_complete_truthful_reports_are_best():
    for pid in (1, 2):
        assert lab.deviation_gain("vcg-complete", TWO_UNIFORM, pid).gain <= 1e-7


# ---------------------------------------------------------------------------
# revenue


def test_mc_revenue_examples():
    assert lab.mc_revenue("svcg", POINT_PAIR, 1000, seed=1) == (0.5, 0.0)
    est, err = lab.mc_revenue("ssp", POINT_PAIR, 1000, seed=1)
    assert est == pytest.approx(0.3, abs=1e-15) and err == 0.0
    sc = AuctionScenario(((1, Beta(2, 1)), (2, U)))
    for mech in ("svcg", "ssp"):
        est, err = lab.mc_revenue(mech, sc, 100_000, seed=7)
        assert abs(est - lab.closed_form_revenue(mech, sc)) <= 3 * err + 1e-12


def test_mc_revenue_is_seeded():
    sc = AuctionScenario(((1, Beta(2, 1)), (2, U)))
    assert lab.mc_revenue("ssp", sc, 500, seed=3) == lab.mc_revenue("ssp", sc, 500, seed=3)
    assert lab.mc_revenue("ssp", sc, 500, seed=3) != lab.mc_revenue("ssp", sc, 500, seed=4)
    with pytest.raises(ValueError):
        lab.mc_revenue("ssp", sc, 0, seed=3)


# ---------------------------------------------------------------------------
# moment audit


def test_moment_audit_examples():
    assert lab.moment_audit("beta", {"alpha": 2, "beta": 1}, {"alpha": 1, "beta": 1}).first_differing_moment == 1
    assert lab.moment_audit("beta", {"alpha": 2, "beta": 1}, {"alpha": 2, "beta": 1}).first_differing_moment is None
    flat = {"knots": [[0, 0], [0.5, 0.5], [1, 1]]}
    bimodal = {"knots": [[0, 0], [0.25, 0.5], [0.75, 0.5], [1, 1]]}
    assert PiecewiseLinearCdf(tuple(map(tuple, bimodal["knots"]))).mean() == pytest.approx(0.5, abs=1e-15)
    r = lab.moment_audit("piecewise_linear_cdf", flat, bimodal)
    assert r.first_differing_moment == 2 and r.max_checked == 6
    with pytest.raises(InvalidDistribution):
        lab.moment_audit("beta", {"alpha": -1, "beta": 1}, {"alpha": 1, "beta": 1})


# ---------------------------------------------------------------------------
# enumeration oracle


def test_brute_force_examples():
    sc = BundledScenario((((1, Beta(2, 1)), (2, U)), ((1, U), (2, U))), MinOfAll())
    assert lab.brute_force_welfare_argmax(sc) == (1, 1)
    laws = (U, Beta(2, 1), PointMass(0.4))
    one = BundledScenario((tuple(enumerate(laws, 1)),), MinOfAll())
    assert lab.brute_force_welfare_argmax(one) == (sa.select_winners([sa.Bid(i, d) for i, d in enumerate(laws, 1)])[0][0],)
    same = BundledScenario((((2, U), (1, U)), ((7, U), (3, U))), MinOfAll())
    assert lab.brute_force_welfare_argmax(same) == (1, 3)


# ---------------------------------------------------------------------------
# verification suites


def test_verification_suites_pass_on_reference_cases():
    checks = lab.verify_auction("ssp", POINT_PAIR, points=6)
    checks += lab.verify_tsvcg(TSO_REFERENCE, points=6)
    checks += lab.verify_assignment("vcg", TWO_UNIFORM, points=6)
    checks += lab.verify_assignment("ivcg", TWO_UNIFORM, points=6)
    small = BundledScenario((((1, PointMass(0.8)), (2, U)), ((1, PointMass(0.6)), (2, PointMass(0.3)))), MinOfAll())
    checks += lab.verify_bundled("bssp", small, points=5)
    failed = [c.to_dict() for c in checks if not c.passed]
    assert not failed
    names = {c.name for c in checks}
    assert {"penalty_price_at_least_one", "revenue_svcg_minus_ssp", "winners_match_enumeration",
            "realized_welfare_consistency", "profile_reproduces_efficient_assignment"} <= names


def test_verification_flags_a_violation():
    # a failing check must be reported, not swallowed
    checks = lab.verify_auction("ssp", POINT_PAIR, tolerance=-1.0, points=4)
    assert any(not c.passed for c in checks)
    assert all(np.isfinite(c.value) for c in checks)
