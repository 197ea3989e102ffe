import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from auction_lab import tso_auction as ta
from auction_lab.distributions import Beta, PointMass, Uniform
from auction_lab.errors import InvalidBid, InvalidCostReport, NotEnoughBidders
from auction_lab.tso_auction import Affine, QuadraticMonotone, TsvcgScenario

REFERENCE = TsvcgScenario(((1, PointMass(0.7)), (2, PointMass(0.5))), (Affine(1, 0.1), Affine(2, 0.2)))


def test_net_surplus_examples():
    assert ta.net_surplus(PointMass(0.7), Affine(1, 0.1)) == pytest.approx(0.63, abs=1e-15)
    assert ta.net_surplus(Beta(2, 5), Affine(1, 0.0)) == pytest.approx(2 / 7, abs=1e-15)
    assert ta.net_surplus(Uniform(0, 1), Affine(1, 0.2, 0.1)) == pytest.approx(0.3, abs=1e-15)
    # quadratic: E[X - a X - b X^2] with E[X^2] = 1/3 under Uniform(0, 1)
    assert ta.net_surplus(Uniform(0, 1), QuadraticMonotone(1, 0.2, 0.3)) == pytest.approx(0.4 - 0.1, abs=1e-12)


def test_reference_outcome():
    out = ta.run_tsvcg(REFERENCE)
    assert (out.winner_gen, out.winner_tso) == (1, 1)
    assert out.surplus == pytest.approx(0.63, abs=1e-15)
    assert out.s_minus_gen == pytest.approx(0.45, abs=1e-15)
    assert out.s_minus_tso == pytest.approx(0.56, abs=1e-15)
    table = ta.surplus_table(REFERENCE)
    assert [table[k] for k in sorted(table)] == pytest.approx([0.63, 0.56, 0.45, 0.40], abs=1e-15)


def test_identical_generators_leave_the_winner_nothing():
    sc = TsvcgScenario(((1, Beta(2, 3)), (2, Beta(2, 3))), REFERENCE.tsos)
    out = ta.run_tsvcg(sc)
    assert out.winner_gen == 1 and out.s_minus_gen == out.surplus
    assert ta.expected_gen_payoff(out, 1, Beta(2, 3)) == 0.0


def test_dominant_tso():
    sc = TsvcgScenario(REFERENCE.gens, (Affine(1, 0.0), Affine(2, 1.0)))
    out = ta.run_tsvcg(sc)
    assert out.winner_tso == 1 and out.s_minus_tso == 0.0
    assert out.s_minus_gen == pytest.approx(0.5, abs=1e-15)


def test_settlement_examples():
    out = ta.run_tsvcg(REFERENCE)
    u, v = ta.settle_tsvcg(out, 0.7)
    assert u == pytest.approx(0.18, abs=1e-15) and v == pytest.approx(0.07, abs=1e-15)
    u0, _ = ta.settle_tsvcg(out, 0.0)
    assert u0 == -out.s_minus_gen
    # the generator is charged the reported cost, the TSO bears its true cost
    u1, v1 = ta.settle_tsvcg(out, 0.7, true_cost=Affine(1, 0.5))
    assert u1 == u and v1 == pytest.approx(0.7 - 0.56 - 0.35, abs=1e-15)
    with pytest.raises(ValueError):
        ta.settle_tsvcg(out, 1.2)


def test_access_matrix_excludes_pairs():
    sc = TsvcgScenario(REFERENCE.gens, REFERENCE.tsos, ((0, 1), (1, 1)))
    out = ta.run_tsvcg(sc)
    assert (out.winner_gen, out.winner_tso) == (1, 2)
    assert out.s_minus_gen == pytest.approx(0.45, abs=1e-15)  # (2, 1)
    assert out.s_minus_tso == pytest.approx(0.45, abs=1e-15)  # (2, 1)
    with pytest.raises(NotEnoughBidders):
        ta.run_tsvcg(TsvcgScenario(REFERENCE.gens, REFERENCE.tsos, ((1, 0), (1, 0))))
    with pytest.raises(InvalidBid):
        TsvcgScenario(REFERENCE.gens, REFERENCE.tsos, ((1, 1),))


def test_negative_surplus_is_flagged_not_refused(caplog):
    sc = TsvcgScenario(REFERENCE.gens, (Affine(1, 0.0, 0.9), Affine(2, 0.5, 0.8)))
    with caplog.at_level(logging.WARNING):
        out = ta.run_tsvcg(sc)
    assert out.negative_surplus and out.surplus == pytest.approx(-0.2, abs=1e-15)
    assert "negative" in caplog.text


def test_validation():
    with pytest.raises(InvalidCostReport):
        Affine(1, -0.1)
    with pytest.raises(InvalidCostReport):
        QuadraticMonotone(1, 0.1, -1.0)
    with pytest.raises(InvalidCostReport):
        ta.tso_cost_from_dict({"kind": "cubic"})
    with pytest.raises(NotEnoughBidders):
        ta.run_tsvcg(TsvcgScenario(REFERENCE.gens[:1], REFERENCE.tsos))


def test_round_trip():
    sc = TsvcgScenario(REFERENCE.gens, (Affine(1, 0.1, 0.05), QuadraticMonotone(2, 0.1, 0.2)), ((1, 1), (0, 1)))
    assert TsvcgScenario.from_dict(sc.to_dict()) == sc
    # ids default to positions when omitted
    d = REFERENCE.to_dict()
    for t in d["tsos"]:
        del t["id"]
    assert TsvcgScenario.from_dict(d) == REFERENCE


gens = st.one_of(st.builds(PointMass, st.floats(0, 1)), st.builds(Beta, st.floats(0.5, 8), st.floats(0.5, 8)))
costs = st.tuples(st.floats(0, 1), st.floats(0, 0.2))


@given(st.lists(gens, min_size=2, max_size=3), st.lists(costs, min_size=2, max_size=3))
def test_externalities_and_truthful_payoffs(gen_laws, cost_params):
    sc = TsvcgScenario(tuple(enumerate(gen_laws, 1)), tuple(Affine(j, g, k) for j, (g, k) in enumerate(cost_params, 1)))
    out = ta.run_tsvcg(sc)
    assert out.s_minus_gen <= out.surplus and out.s_minus_tso <= out.surplus
    true_law = dict(sc.gens)[out.winner_gen]
    assert ta.expected_gen_payoff(out, out.winner_gen, true_law) >= -1e-12
    assert ta.expected_tso_payoff(out, out.winner_tso, out.reported_cost, true_law) >= -1e-12
    assert max(ta.surplus_table(sc).values()) == out.surplus
