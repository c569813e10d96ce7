import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ceg_ara import (AdversaryProfile, DefenderUtility, DiscretePrior, FactorSet, IntervalPrior, Intervention,
                     KnowledgeModel, UncertaintySpec, builtin_model, enumerate_atoms, monte_carlo_score,
                     parameter_sweep, score_table, seu_score)
from ceg_ara.decision import renormalized
from oracles import (forced_mixture, idle_factors, intelligent_delta, minus_factors, naive_delta,
                     random_incursion)

unit = st.floats(0, 1)
incursion_probs = st.tuples(unit, st.lists(st.floats(0.01, 1), min_size=3, max_size=3),
                            st.lists(unit, min_size=3, max_size=3))


@pytest.fixture(scope="module")
def idle():
    return builtin_model("incursion_idle")


@pytest.fixture(scope="module")
def minus():
    return builtin_model("incursion_minus")


def naive_table(bundle, f=None):
    return score_table(bundle.staged_tree, f, bundle.interventions)


# -- scores ---------------------------------------------------------------


def test_idle_scores(idle):
    rep = naive_table(idle)
    assert rep.scores["d0"] == pytest.approx(0.256, abs=1e-12)
    assert rep.scores["d1"] == pytest.approx(0.496, abs=1e-12)
    assert rep.deltas["d1"] == pytest.approx(0.24, abs=1e-12)
    assert rep.deltas["d0"] == 0.0
    assert rep.best == "d1"


def test_intelligent_default_delta(minus):
    g = minus.staged_tree
    rep = score_table(g, None, minus.interventions, forced_mixture(0.7, 0.6))
    assert rep.deltas["d1"] == pytest.approx(0.034, abs=1e-12)
    assert rep.deltas["d1"] == pytest.approx(0.5 * (0.7 * (0.6 * 0.2 + 0.4 * 0.3) + 0.3 - 0.4), abs=1e-12)


def test_builtin_prior_is_the_same_mixture(minus):
    g = minus.staged_tree
    rep = score_table(g, None, minus.interventions, minus.default_profile())
    assert rep.deltas["d1"] == pytest.approx(0.034, abs=1e-12)


def test_sign_flip(minus):
    g = minus.staged_tree
    f = minus_factors((0.5, 0.3, 0.2), (0.9, 0.05, 0.05))
    rep = score_table(g, f, minus.interventions, forced_mixture(1.0, 0.6))
    assert rep.deltas["d1"] == pytest.approx(-0.425, abs=1e-12)
    assert rep.best == "d0"


def test_singleton_table(idle):
    rep = score_table(idle.staged_tree, None, [Intervention.none()])
    assert rep.best == "d0" and rep.deltas == {"d0": 0.0}


def test_table_errors(idle):
    with pytest.raises(ValueError, match="null decision"):
        score_table(idle.staged_tree, None, [idle.intervention("d1")])
    with pytest.raises(ValueError, match="duplicate"):
        score_table(idle.staged_tree, None, [Intervention.none(), Intervention.none()])


def test_cost_is_subtracted(idle):
    d = Intervention.force("d1", {"B1": "detected"}, cost=0.3)
    rep = score_table(idle.staged_tree, None, [Intervention.none(), d])
    assert rep.deltas["d1"] == pytest.approx(0.24 - 0.3, abs=1e-12)
    assert rep.best == "d0"


def test_profile_on_unembellished_model(idle, minus):
    with pytest.raises(ValueError, match="no knowledge"):
        seu_score(idle.staged_tree, None, idle.intervention("d1"), minus.profile("adaptive"))


def test_linear_and_custom_utilities(idle):
    g = idle.staged_tree
    lin = seu_score(g, None, Intervention.none(), u=DefenderUtility("linear_in_detections"))
    assert lin == pytest.approx(0.256, abs=1e-12)
    values = {a.leaf: (2.0 if "detected" in a.labels else -1.0) for a in enumerate_atoms(g)}
    custom = seu_score(g, None, Intervention.none(), u=DefenderUtility("custom_atom_utility", values))
    assert custom == pytest.approx(2 * 0.256 - 0.744, abs=1e-12)
    with pytest.raises(ValueError, match="no value"):
        seu_score(g, None, Intervention.none(), u=DefenderUtility("custom_atom_utility", {"no_plot": 1.0}))


@given(incursion_probs)
def test_naive_identity(params):
    p_z, q, p = params
    q = tuple(np.array(q) / sum(q))
    b = builtin_model("incursion_idle")
    rep = naive_table(b, idle_factors(p_z, q, p))
    assert abs(rep.deltas["d1"] - naive_delta(p_z, q, p)) <= 1e-12


@given(st.integers(0, 2**32 - 1))
def test_intelligent_identity(seed):
    rng = np.random.default_rng(seed)
    _, q, p = random_incursion(rng)
    p_k, q12 = rng.random(2)
    b = builtin_model("incursion_minus")
    rep = score_table(b.staged_tree, minus_factors(q, p), b.interventions, forced_mixture(p_k, q12))
    assert abs(rep.deltas["d1"] - intelligent_delta(q, p, p_k, q12, 1 - q12)) <= 1e-12


@given(st.integers(0, 2**32 - 1))
def test_no_discovery_reduces_to_naive(seed):
    rng = np.random.default_rng(seed)
    _, q, p = random_incursion(rng)
    b = builtin_model("incursion_minus")
    f = minus_factors(q, p)
    cautious = b.profile("cautious")
    unaware = AdversaryProfile("unaware", cautious.utility, KnowledgeModel(0.0), cautious.capability)
    for profiles in (forced_mixture(0.0, float(rng.random())), unaware):
        rep = score_table(b.staged_tree, f, b.interventions, profiles)
        assert abs(rep.deltas["d1"] - naive_delta(1.0, q, p)) <= 1e-12


@given(st.integers(0, 2**32 - 1))
def test_certain_detection_cannot_help(seed):
    rng = np.random.default_rng(seed)
    _, q, p = random_incursion(rng)
    p = (1.0, p[1], p[2])
    p_k, q12 = rng.random(2)
    b = builtin_model("incursion_minus")
    rep = score_table(b.staged_tree, minus_factors(q, p), b.interventions, forced_mixture(p_k, q12))
    expected = q[0] * p_k * (q12 * p[1] + (1 - q12) * p[2] - 1)
    assert abs(rep.deltas["d1"] - expected) <= 1e-12
    assert rep.deltas["d1"] <= 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(-5, 5))
def test_best_invariant_under_constant_shift(seed, c):
    rng = np.random.default_rng(seed)
    b = builtin_model("incursion_multi")
    g = b.staged_tree
    atoms = enumerate_atoms(g)
    base = {a.leaf: float(rng.normal()) for a in atoms}
    shifted = {k: v + c for k, v in base.items()}
    prof = b.profile("adaptive")
    r1 = score_table(g, None, b.interventions, prof, DefenderUtility("custom_atom_utility", base))
    r2 = score_table(g, None, b.interventions, prof, DefenderUtility("custom_atom_utility", shifted))
    if sorted(r1.scores.values())[-1] - sorted(r1.scores.values())[-2] > 1e-9:
        assert r1.best == r2.best
    for k in r1.deltas:
        assert r1.deltas[k] == pytest.approx(r2.deltas[k], abs=1e-9)


def test_multi_scores():
    b = builtin_model("incursion_multi")
    rep = score_table(b.staged_tree, None, b.interventions, b.profile("adaptive"))
    # p_k = 0.7 adversaries that hear at a forced port switch to the best open port
    expected_d1 = 0.5 * (0.3 * 1.0 + 0.7 * 0.2) + 0.3 * 0.2 + 0.2 * 0.3
    assert rep.scores["d1"] == pytest.approx(expected_d1, abs=1e-12)
    assert rep.best == "d23"


# -- Monte Carlo ----------------------------------------------------------


def test_zero_variance_prior_is_exact(minus):
    g = minus.staged_tree
    d = minus.intervention("d1")
    unc = UncertaintySpec(((minus.profile("adaptive"), 1.0),), {"B2": DiscretePrior((((0.2, 0.8), 1.0),))})
    mean, se = monte_carlo_score(g, None, d, unc, samples=50, seed=3)
    assert mean == seu_score(g, None, d, minus.profile("adaptive"))
    assert se == 0.0


def test_mixture_converges(minus):
    g = minus.staged_tree
    d = minus.intervention("d1")
    prior = ((minus.profile("reach_B2"), 0.5), (minus.profile("reach_B3"), 0.5))
    analytic = sum(w * seu_score(g, None, d, p) for p, w in prior)
    mean, se = monte_carlo_score(g, None, d, UncertaintySpec(prior), samples=10_000, seed=11)
    assert se > 0
    assert abs(mean - analytic) <= 4 * se
    assert monte_carlo_score(g, None, d, UncertaintySpec(prior), samples=10_000, seed=11) == (mean, se)


def test_interval_priors_are_deterministic(minus):
    g = minus.staged_tree
    d = minus.intervention("d1")
    unc = minus.uncertainty
    a = monte_carlo_score(g, None, d, unc, samples=200, seed=7)
    assert a == monte_carlo_score(g, None, d, unc, samples=200, seed=7)
    assert a != monte_carlo_score(g, None, d, unc, samples=200, seed=8)


def test_interval_draw_respects_bounds():
    prior = IntervalPrior(((0.1, 0.3),))
    rng = np.random.default_rng(0)
    for _ in range(100):
        _, probs = prior.draw(rng)
        assert 0.1 <= probs[0] <= 0.3 and probs[0] + probs[1] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("bad", [lambda: IntervalPrior(((0.5, 0.8), (0.4, 0.6))),
                                 lambda: IntervalPrior(((0.3, 0.1),)),
                                 lambda: DiscretePrior((((1.0, 0.0), 0.4),))])
def test_prior_validation(bad):
    with pytest.raises(ValueError):
        bad()


def test_mc_argument_checks(minus):
    g = minus.staged_tree
    with pytest.raises(ValueError, match="empty"):
        monte_carlo_score(g, None, minus.intervention("d1"), UncertaintySpec())
    with pytest.raises(ValueError, match="positive"):
        monte_carlo_score(g, None, minus.intervention("d1"), minus.uncertainty, samples=0)
    with pytest.raises(ValueError, match="unknown stage"):
        monte_carlo_score(g, None, minus.intervention("d1"),
                          UncertaintySpec(factor_priors={"Q": DiscretePrior((((1.0,), 1.0),))}))


# -- sweeps ---------------------------------------------------------------


def sweep_deltas(bundle, parameter, grid, profile=None):
    g = bundle.staged_tree
    hi = parameter_sweep(g, None, bundle.intervention("d1"), profile, None, parameter, grid)
    lo = parameter_sweep(g, None, bundle.intervention("d0"), profile, None, parameter, grid)
    return [a[1] - b[1] for a, b in zip(hi, lo)]


def test_sweep_p1(idle):
    deltas = sweep_deltas(idle, ("B1", 0), [0.0, 0.5, 1.0])
    assert deltas == pytest.approx([0.8 * 0.5, 0.5 * 0.8 * 0.5, 0.0], abs=1e-12)
    assert deltas[0] > deltas[1] > deltas[2]


def test_sweep_q1_increasing(idle):
    deltas = sweep_deltas(idle, ("J", 0), np.linspace(0.1, 0.9, 9))
    assert all(b > a for a, b in zip(deltas, deltas[1:]))


def test_sweep_p_z_increasing(idle):
    deltas = sweep_deltas(idle, ("Z", 0), np.linspace(0.1, 0.9, 9))
    assert all(b > a for a, b in zip(deltas, deltas[1:]))


def test_single_point_sweep(idle):
    g = idle.staged_tree
    out = parameter_sweep(g, None, idle.intervention("d1"), None, None, ("B1", 0), [0.4])
    assert out == [(0.4, seu_score(g, None, idle.intervention("d1")))]


@pytest.mark.parametrize("probs,index,value,expected", [
    ((0.5, 0.3, 0.2), 0, 0.0, (0.0, 0.6, 0.4)),
    ((0.5, 0.3, 0.2), 1, 0.65, (0.25, 0.65, 0.1)),
    ((1.0, 0.0), 0, 1.0, (1.0, 0.0)),
])
def test_renormalized(probs, index, value, expected):
    assert renormalized(probs, index, value) == pytest.approx(expected, abs=1e-15)


def test_renormalize_needs_mass():
    with pytest.raises(ValueError, match="no mass"):
        renormalized((1.0, 0.0), 0, 0.5)


def test_factor_set_accepted(idle):
    f = FactorSet(idle.idle_factors)
    assert seu_score(idle.staged_tree, f, Intervention.none()) == pytest.approx(0.256, abs=1e-12)
