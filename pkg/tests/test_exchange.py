import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from yardsale.exchange import (
    InvariantViolation,
    MixedAgents,
    ProbabilisticChoice,
    PureTF,
    PureYS,
    Rule,
    SplitWealth,
    Transaction,
    WealthVector,
    apply_transaction,
    choose_rule,
    realize,
    split_stake,
    tf_stake,
    ys_stake,
)


@pytest.mark.parametrize("mi, mj, alpha, expected", [
    (4.0, 2.0, 0.5, 1.0),
    (4.0, 2.0, 0.0, 0.0),
    (3.0, 3.0, 1.0, 3.0),
])
def test_ys_stake(mi, mj, alpha, expected):
    assert ys_stake(mi, mj, alpha) == expected


@pytest.mark.parametrize("m, alpha, expected", [(2.0, 1.0, 2.0), (5.0, 0.0, 0.0), (10.0, 0.3, 3.0)])
def test_tf_stake(m, alpha, expected):
    assert tf_stake(m, alpha) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("args", [(-1.0, 2.0, 0.5), (1.0, 2.0, 1.5), (1.0, 2.0, -0.1)])
def test_ys_stake_domain(args):
    with pytest.raises(ValueError):
        ys_stake(*args)


def test_tf_stake_domain():
    with pytest.raises(ValueError):
        tf_stake(-1.0, 0.5)
    with pytest.raises(ValueError):
        tf_stake(1.0, 2.0)


@pytest.mark.parametrize("li, lj, alpha, expected", [
    (1.0, 1.0, 0.5, 1.0),  # pure YS limit
    (0.0, 0.0, 0.5, 1.0),  # pure TF on the loser j
    (0.5, 0.5, 1.0, 2.0),  # min(2, 1) + 0.5 * 2
])
def test_split_stake(li, lj, alpha, expected):
    assert split_stake(4.0, 2.0, li, lj, alpha, loser="j") == expected


def test_split_stake_bad_loser():
    with pytest.raises(ValueError):
        split_stake(1.0, 1.0, 0.5, 0.5, 0.5, loser="k")


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0, 1), st.floats(0, 1),
       st.floats(0, 1), st.sampled_from("ij"))
def test_split_stake_never_exceeds_loser(mi, mj, li, lj, alpha, loser):
    stake = split_stake(mi, mj, li, lj, alpha, loser)
    assert 0.0 <= stake <= (mi if loser == "i" else mj)


def test_choose_rule_mixed_agents():
    m = MixedAgents((3,))
    assert choose_rule(m, 3, 1) is Rule.TF
    assert choose_rule(m, 0, 3) is Rule.TF
    assert choose_rule(m, 0, 1) is Rule.YS


def test_choose_rule_pure():
    assert choose_rule(PureYS(), 0, 1) is Rule.YS
    assert choose_rule(PureTF(), 0, 1) is Rule.TF


@pytest.mark.parametrize("draws, policy, expected", [
    ((0.9, 0.8), "fallback_ys", Rule.TF),  # both draws above p: TF
    ((0.1, 0.2), "fallback_ys", Rule.YS),
    ((0.1, 0.9), "fallback_ys", Rule.YS),
    ((0.1, 0.9), "skip", None),
    ((0.9, 0.9), "skip", Rule.TF),
])
def test_choose_rule_probabilistic(draws, policy, expected):
    m = ProbabilisticChoice(ps=(0.5, 0.5), disagreement=policy)
    assert choose_rule(m, 0, 1, draws) is expected


def test_choose_rule_rejects_split_and_self_trade():
    with pytest.raises(TypeError):
        choose_rule(SplitWealth(0.5), 0, 1)
    with pytest.raises(ValueError):
        choose_rule(PureYS(), 2, 2)


def test_apply_transaction_examples():
    s = WealthVector([4.0, 2.0])
    assert list(apply_transaction(s, Transaction(0, 1, 0.5, 0), Rule.YS).wealths) == [5.0, 1.0]
    assert list(apply_transaction(s, Transaction(0, 1, 1.0, 0), Rule.TF).wealths) == [6.0, 0.0]
    for rule in Rule:
        assert list(apply_transaction(s, Transaction(0, 1, 0.0, 1), rule).wealths) == [4.0, 2.0]


def test_apply_transaction_split_matches_stake():
    s = WealthVector([4.0, 2.0])
    out = apply_transaction(s, Transaction(0, 1, 1.0, 0), lambdas=[0.5, 0.5])
    assert list(out.wealths) == [6.0, 0.0]


def test_apply_transaction_is_local_and_conservative():
    rng = np.random.default_rng(3)
    s = WealthVector(rng.random(10) * 5)
    out = apply_transaction(s, Transaction(2, 7, 0.4, 7), Rule.TF)
    changed = np.nonzero(out.wealths != s.wealths)[0]
    assert list(changed) == [2, 7]
    assert out.wealths.sum() == pytest.approx(s.total, rel=1e-15)
    out.check()


def test_apply_transaction_needs_one_rule():
    s = WealthVector([1.0, 1.0])
    with pytest.raises(ValueError):
        apply_transaction(s, Transaction(0, 1, 0.5, 0))


def test_transaction_validation():
    with pytest.raises(ValueError):
        Transaction(1, 1, 0.5, 1)
    with pytest.raises(ValueError):
        Transaction(0, 1, 1.5, 0)
    with pytest.raises(ValueError):
        Transaction(0, 1, 0.5, 2)


def test_wealth_vector_check():
    with pytest.raises(InvariantViolation):
        WealthVector([1.0, -0.1]).check()
    with pytest.raises(InvariantViolation):
        WealthVector([1.0, 1.0], total=3.0).check()


def test_model_spec_validation():
    with pytest.raises(ValueError):
        SplitWealth(1.2)
    with pytest.raises(ValueError):
        ProbabilisticChoice((0.5, -0.1))
    with pytest.raises(ValueError):
        MixedAgents(())
    with pytest.raises(ValueError):
        SplitWealth(0.5, split_mode="weird")
    with pytest.raises(ValueError):
        realize(MixedAgents((5,)), 4)


def test_realize_quenched_draws_need_rng():
    with pytest.raises(ValueError):
        realize(SplitWealth(None), 5)
    rm = realize(SplitWealth(None), 5, np.random.default_rng(0))
    assert rm.lambdas.shape == (5,)
    assert np.all((rm.lambdas >= 0) & (rm.lambdas < 1))


@settings(max_examples=200)
@given(st.lists(st.floats(0, 100), min_size=2, max_size=8), st.data())
def test_stake_bounded_by_loser_for_every_rule(ws, data):
    n = len(ws)
    i = data.draw(st.integers(0, n - 1))
    j = data.draw(st.integers(0, n - 2))
    j += j >= i
    alpha = data.draw(st.floats(0, 1))
    winner = data.draw(st.sampled_from([i, j]))
    s = WealthVector(ws)
    txn = Transaction(i, j, alpha, winner)
    for rule in Rule:
        out = apply_transaction(s, txn, rule)
        assert np.all(out.wealths >= 0)
    lam = data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    out = apply_transaction(s, txn, lambdas=lam)
    assert np.all(out.wealths >= 0)
