import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ceg_ara import BayesNet, BnIntervention, bn_do_distribution, bn_query
from ceg_ara.bayesnet import chain, random_binary_net
from oracles import mutilated_enumeration


@pytest.fixture
def net():
    return chain(0.3, 0.9, 0.2)


def test_do_x1_gives_conditional(net):
    assert bn_query(net, BnIntervention({"X1": 1}), lambda v: v["X2"] == 1) == pytest.approx(0.9, abs=1e-15)


def test_observational_marginal(net):
    assert bn_query(net, None, lambda v: v["X2"] == 1) == pytest.approx(0.41, abs=1e-15)
    assert bn_query(net, None, lambda v: True) == pytest.approx(1.0, abs=1e-15)


def test_downstream_do_leaves_upstream(net):
    assert bn_query(net, BnIntervention({"X2": 1}), lambda v: v["X1"] == 1) == pytest.approx(0.3, abs=1e-15)


def test_empty_do_is_observational(net):
    joint = bn_do_distribution(net)
    expected = {(0, 0): 0.7 * 0.8, (0, 1): 0.7 * 0.2, (1, 0): 0.3 * 0.1, (1, 1): 0.3 * 0.9}
    for k, p in expected.items():
        assert joint[k] == pytest.approx(p, abs=1e-15)


def test_do_everything_is_point_mass(net):
    joint = bn_do_distribution(net, BnIntervention({"X1": 0, "X2": 1}))
    assert joint[(0, 1)] == 1.0 and sum(joint.values()) == 1.0


@pytest.mark.parametrize("assign,msg", [({"X9": 1}, "unknown variable"), ({"X1": 5}, "outside domain")])
def test_bad_do(net, assign, msg):
    with pytest.raises(ValueError, match=msg):
        bn_do_distribution(net, BnIntervention(assign))


def test_invalid_cpt_rejected():
    bad = BayesNet((("A", (0, 1)),), {}, {"A": {(): (0.5, 0.6)}})
    assert bad.violations()
    with pytest.raises(ValueError, match="not a distribution"):
        bn_do_distribution(bad)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_truncated_factorization_matches_mutilated_net(n, seed):
    rng = np.random.default_rng(seed)
    bn = random_binary_net(rng, n)
    names = bn.names
    k = int(rng.integers(0, n + 1))
    assign = {v: int(rng.integers(0, 2)) for v in rng.choice(names, size=k, replace=False).tolist()}
    joint = bn_do_distribution(bn, BnIntervention(assign))
    oracle = mutilated_enumeration(bn, assign)
    assert set(joint) == set(oracle)
    assert max(abs(joint[a] - oracle[a]) for a in joint) <= 1e-12
    assert abs(sum(joint.values()) - 1.0) <= 1e-9
