import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ceg_ara import (AdversaryProfile, DcegModel, DefenderUtility, DynamicIntervention, Intervention,
                     KnowledgeModel, apply_intervention, atom_probabilities, best_response, builtin_model,
                     cumulative_discovery, dynamic_delta_score, enumerate_atoms, seu_score, unfold_dceg,
                     validate_staged_tree)
from ceg_ara.adversary import reaction_factors
from ceg_ara.dynamic import stage_family, step_deltas, unfolded_delta_score
from oracles import unfolded_oracle

LINEAR = DefenderUtility("linear_in_detections")


@pytest.fixture(scope="module")
def bundle():
    return builtin_model("incursion_dynamic")


def model(bundle, start=0, end=4, hazard=0.3, **kw):
    return DcegModel(bundle.staged_tree, start, end, hazard, **kw)


def d1(bundle, active=None):
    return DynamicIntervention(bundle.intervention("d1"), active)


def with_knowledge(profile, p_k):
    return AdversaryProfile(profile.name, profile.utility, KnowledgeModel(p_k), profile.capability,
                            profile.belief_overrides)


# -- discovery time -------------------------------------------------------


@pytest.mark.parametrize("p_k,t,s,expected", [
    (0.5, 0, 0, 0.5), (0.5, 0, 1, 0.75), (0.5, 0, 2, 0.875), (0.5, 3, 5, 0.875),
    (0.0, 0, 7, 0.0), (1.0, 0, 7, 1.0), (1.0, 2, 2, 1.0),
])
def test_cumulative_discovery_examples(p_k, t, s, expected):
    assert cumulative_discovery(p_k, t, s) == expected


@pytest.mark.parametrize("p_k", [0.0, 0.05, 0.3, 0.5, 0.7, 0.999, 1.0])
def test_cumulative_discovery_series(p_k):
    for gap in range(31):
        series = math.fsum(p_k * (1 - p_k) ** j for j in range(gap + 1))
        assert abs(cumulative_discovery(p_k, 0, gap) - series) <= 1e-15


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 30))
def test_cumulative_discovery_monotone(a, b, gap):
    lo, hi = sorted((a, b))
    assert cumulative_discovery(lo, 0, gap) <= cumulative_discovery(hi, 0, gap)
    assert cumulative_discovery(a, 0, gap) <= cumulative_discovery(a, 0, gap + 1)


def test_cumulative_discovery_errors():
    with pytest.raises(ValueError, match="precedes"):
        cumulative_discovery(0.5, 3, 2)
    with pytest.raises(ValueError, match="hazard"):
        cumulative_discovery(1.5, 0, 2)


# -- model checks ---------------------------------------------------------


def test_model_validation(bundle):
    g = bundle.staged_tree
    with pytest.raises(ValueError, match="after"):
        DcegModel(g, 3, 2)
    with pytest.raises(ValueError, match="embellished"):
        DcegModel(builtin_model("incursion_idle").staged_tree)
    with pytest.raises(ValueError, match="participation needs"):
        DcegModel(g, 0, 2, participation=(0.5,))
    with pytest.raises(ValueError, match="cap"):
        unfold_dceg(DcegModel(g, 0, 40), d1(bundle))
    with pytest.raises(ValueError, match="inside the horizon"):
        unfold_dceg(model(bundle), d1(bundle, (2, 9)))


def test_needs_linear_utility_and_single_profile(bundle):
    m = model(bundle, 0, 1)
    with pytest.raises(ValueError, match="linear"):
        dynamic_delta_score(m, d1(bundle), bundle.profile("adaptive"), DefenderUtility())
    with pytest.raises(TypeError, match="single"):
        dynamic_delta_score(m, d1(bundle), [(bundle.profile("adaptive"), 1.0)])


# -- unfolding ------------------------------------------------------------


def test_one_step_is_the_static_model(bundle):
    t = unfold_dceg(model(bundle, 2, 2), d1(bundle), bundle.profile("adaptive"))
    static = enumerate_atoms(bundle.staged_tree)
    assert sorted(a.labels for a in enumerate_atoms(t)) == sorted(a.labels for a in static)


@pytest.mark.parametrize("steps,count", [(1, 16), (2, 212), (3, 2484)])
def test_atom_counts(bundle, steps, count):
    t = unfold_dceg(model(bundle, 0, steps - 1), d1(bundle), bundle.profile("adaptive"))
    assert validate_staged_tree(t) == []
    assert len(enumerate_atoms(t)) == count


def two_slice_count(bundle):
    """Day outcomes by hand: undiscovered days split the no-attempt leaf on discovery."""
    paths = [a.labels for a in enumerate_atoms(bundle.staged_tree)]
    first_heard = sum("discovered" in p for p in paths) + 1
    first_quiet = sum("undiscovered" in p for p in paths) + 1
    heard_day = sum("discovered" in p for p in paths) + 1
    return first_heard * heard_day + first_quiet * len(paths)


def test_two_step_count_matches_hand_construction(bundle):
    t = unfold_dceg(model(bundle, 0, 1), d1(bundle), bundle.profile("adaptive"))
    assert len(enumerate_atoms(t)) == two_slice_count(bundle) == 212


CASES = [
    dict(),
    dict(hazard=0.0),
    dict(hazard=1.0),
    dict(hazard=0.45, profile="cautious"),
    dict(active=(1, 2)),
    dict(profile=None),
    dict(participation=(0.8, 0.5, 0.3)),
]


def oracle_inputs(bundle, m, d, profile):
    sl = m.slice
    idle = m.slice_factors
    f = apply_intervention(sl, idle, d.base)
    if profile is not None:
        r = best_response(sl, f, profile, d.base)
        f = reaction_factors(sl, f, m.hazard, {r: 1.0}, d.base)
    attempt = idle["Z"].probs[0]
    if m.participation is not None:
        after = m.participation
    elif profile is not None:
        after = (attempt,) * m.n_steps  # these profiles all prefer attempting once they know
    else:
        after = (attempt,) * m.n_steps
    window = d.window(m)
    return f, idle, window, attempt, after


@pytest.mark.parametrize("case", CASES, ids=lambda c: ",".join(f"{k}={v}" for k, v in c.items()) or "default")
def test_unfolding_matches_day_products(bundle, case):
    case = dict(case)
    profile = case.pop("profile", "adaptive")
    profile = bundle.profile(profile) if profile else None
    active = case.pop("active", None)
    m = model(bundle, 0, 2, **case)
    d = d1(bundle, active)
    t = unfold_dceg(m, d, profile)
    got = {}
    for a, p in zip(enumerate_atoms(t), atom_probabilities(t)):
        got[a.labels] = got.get(a.labels, 0.0) + p
    f_on, f_off, window, attempt, after = oracle_inputs(bundle, m, d, profile)
    want = unfolded_oracle(m.slice, f_on, f_off, list(m.steps), window, m.hazard, attempt, after)
    assert set(got) == set(want)
    assert max(abs(got[k] - want[k]) for k in got) <= 1e-12
    assert abs(sum(got.values()) - 1.0) <= 1e-12


def test_no_discovery_is_independent_repetition(bundle):
    m = model(bundle, 0, 2, hazard=0.0)
    d = d1(bundle)
    t = unfold_dceg(m, d, bundle.profile("adaptive"))
    probs = atom_probabilities(t)
    hidden = sum(p for a, p in zip(enumerate_atoms(t), probs) if "discovered" in a.labels)
    assert hidden == 0.0
    dist = {}
    for a, p in zip(enumerate_atoms(t), probs):
        if "discovered" not in a.labels:
            key = tuple(x for x in a.labels if x != "undiscovered")
            dist[key] = dist.get(key, 0.0) + p
    g = bundle.staged_tree
    f = apply_intervention(g, None, d.base).updated({"K": (0.0, 1.0)})
    day = {}
    for a, p in zip(enumerate_atoms(g), atom_probabilities(g, f)):
        if "discovered" not in a.labels:
            day[tuple(x for x in a.labels if x != "undiscovered")] = p
    product = {}
    for x in day:
        for y in day:
            for z in day:
                product[x + y + z] = day[x] * day[y] * day[z]
    assert set(dist) == set(product)
    assert max(abs(dist[k] - product[k]) for k in dist) <= 1e-12


def test_discovery_is_absorbing(bundle):
    profile = bundle.profile("adaptive")
    m = model(bundle, 0, 3)
    d = d1(bundle)
    t = unfold_dceg(m, d, profile)
    f = apply_intervention(bundle.staged_tree, None, d.base)
    r = best_response(bundle.staged_tree, f, profile, d.base)
    reacted = reaction_factors(bundle.staged_tree, f, m.hazard, {r: 1.0}, d.base)
    lay = t.layout
    labels = t.tree.labels
    disc = np.zeros(lay.size, dtype=bool)
    for i in range(1, lay.size):
        disc[i] = disc[lay.parent[i]] or labels[lay.label[i]] == "discovered"
    stage = t.staged_layout.stage
    seen = set()
    for i in np.nonzero(disc & (stage >= 0))[0].tolist():
        sid = t.stage_ids[stage[i]]
        seen.add(stage_family(sid))
        assert not sid.startswith("K@")
        if stage_family(sid) == "Z":
            assert sid.startswith("Z*@")
        else:
            assert t.florets[sid] == reacted[sid]
    assert {"C1", "Z"} <= seen


@pytest.mark.parametrize("end", range(0, 5))
def test_seven_stage_families(bundle, end):
    t = unfold_dceg(model(bundle, 0, end), d1(bundle), bundle.profile("adaptive"))
    assert {stage_family(s) for s in t.stage_ids} == {"Z", "K", "J&H", "B1", "B2", "B3", "C1"}


def test_partial_window_keeps_families(bundle):
    t = unfold_dceg(model(bundle, 0, 3), d1(bundle, (1, 2)), bundle.profile("adaptive"))
    assert "B1|off" in t.stage_ids
    assert len({stage_family(s) for s in t.stage_ids}) == 7


# -- scores ---------------------------------------------------------------


def test_default_step_deltas(bundle):
    deltas = step_deltas(bundle.dynamic, d1(bundle), bundle.profile("adaptive"))
    assert deltas == pytest.approx([0.144, 0.0768, 0.02976, -0.003168, -0.0262176], abs=1e-12)


def test_single_step_equals_static(bundle):
    profile = bundle.profile("adaptive")
    for hazard in (0.0, 0.3, 0.8, 1.0):
        g = bundle.staged_tree
        ds = [bundle.intervention("d0"), bundle.intervention("d1")]
        static = [seu_score(g, None, d, with_knowledge(profile, hazard), LINEAR) for d in ds]
        dyn = dynamic_delta_score(model(bundle, 3, 3, hazard), d1(bundle), profile)
        assert abs(dyn - (static[1] - static[0])) <= 1e-12


@pytest.mark.parametrize("end", range(0, 6))
def test_no_discovery_is_repeated_naive(bundle, end):
    naive = 0.8 * 0.5 * (1 - 0.4)
    m = model(bundle, 0, end, hazard=0.0)
    assert abs(dynamic_delta_score(m, d1(bundle), bundle.profile("adaptive")) - (end + 1) * naive) <= 1e-12
    assert abs(unfolded_delta_score(m, d1(bundle), bundle.profile("adaptive")) - (end + 1) * naive) <= 1e-12


def test_certain_discovery_reacts_every_step(bundle):
    profile = bundle.profile("adaptive")
    g = bundle.staged_tree
    reacted = (seu_score(g, None, bundle.intervention("d1"), with_knowledge(profile, 1.0), LINEAR)
               - seu_score(g, None, bundle.intervention("d0"), None, LINEAR))
    m = model(bundle, 0, 3, hazard=1.0)
    deltas = step_deltas(m, d1(bundle), profile)
    assert deltas == pytest.approx([reacted] * 4, abs=1e-12)
    assert abs(unfolded_delta_score(m, d1(bundle), profile) - sum(deltas)) <= 1e-12


@pytest.mark.parametrize("end", range(0, 5))
@pytest.mark.parametrize("hazard,profile,active", [
    (0.3, "adaptive", None), (0.6, "cautious", None), (0.3, "adaptive", (1, 3)), (0.5, None, None)])
def test_recursion_matches_unfolded(bundle, end, hazard, profile, active):
    if active is not None and active[1] > end:
        active = (0, end)
    prof = bundle.profile(profile) if profile else None
    m = model(bundle, 0, end, hazard)
    d = d1(bundle, active)
    assert abs(dynamic_delta_score(m, d, prof) - unfolded_delta_score(m, d, prof)) <= 1e-12


def test_null_dynamic_intervention(bundle):
    m = model(bundle)
    assert dynamic_delta_score(m, DynamicIntervention(Intervention.none()), bundle.profile("adaptive")) == 0.0
