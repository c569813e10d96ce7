"""Finite-horizon unfolding of a one-day embellished model and dynamic scores.

Each day of the horizon is a copy of a day template. While the intervention
is undiscovered the day is the full embellished slice; once the adversary
has discovered it, the day is the slice simplified along the discovered
edge. Days outside the intervention's active window use the idle slice.
Discovery can also happen on a day without an attempt, through an extra
knowledge vertex appended to the no-attempt leaf.

Stages are shared across days except the per-day knowledge (``K@s``) and
participation (``Z@s``, ``Z*@s`` after discovery) stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .adversary import AdversaryProfile, best_response, reaction_factors, simplify_graph
from .algebra import Intervention, apply_intervention
from .decision import DefenderUtility, expected_utility
from .factors import FactorSet
from .graph import EventTree, StagedTree

DEFAULT_CAP = 32


def cumulative_discovery(p_k: float, t: int, s: int) -> float:
    """Probability that discovery has happened by step ``s`` when it starts at ``t``.

    Each step independently reveals the intervention with hazard ``p_k``.
    """
    if s < t:
        raise ValueError(f"step {s} precedes the start step {t}")
    if not 0.0 <= p_k <= 1.0:
        raise ValueError("hazard must lie in [0, 1]")
    return 1.0 - (1.0 - p_k) ** (s - t + 1)


@dataclass(frozen=True)
class DcegModel:
    """A one-day embellished slice repeated over steps ``start..end``.

    ``participation`` optionally fixes the per-step attempt probability on
    days after discovery; left as ``None`` it is deduced from the adversary
    profile (attempt iff that beats not attempting) or copied from the slice.
    """

    slice: StagedTree
    start: int = 0
    end: int = 4
    hazard: float = 0.3
    participation: tuple[float, ...] | None = None
    participation_stage: str = "Z"
    cap: int = DEFAULT_CAP
    slice_factors: FactorSet | None = None

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"horizon start {self.start} is after its end {self.end}")
        if not 0.0 <= self.hazard <= 1.0:
            raise ValueError("hazard must lie in [0, 1]")
        if self.slice.reactions is None:
            raise ValueError("the slice must be an embellished model with a knowledge stage")
        if self.participation_stage not in self.slice.stage_index:
            raise ValueError(f"unknown participation stage {self.participation_stage}")
        if self.participation is not None:
            part = tuple(float(x) for x in self.participation)
            if len(part) != self.n_steps:
                raise ValueError(f"participation needs {self.n_steps} values, got {len(part)}")
            if any(not 0.0 <= x <= 1.0 for x in part):
                raise ValueError("participation probabilities must lie in [0, 1]")
            object.__setattr__(self, "participation", part)
        if self.slice_factors is None:
            if self.slice.florets is None:
                raise ValueError("no slice factors given and the slice has no florets")
            object.__setattr__(self, "slice_factors", self.slice.florets)
        elif not isinstance(self.slice_factors, FactorSet):
            object.__setattr__(self, "slice_factors", FactorSet(self.slice_factors))

    @property
    def n_steps(self) -> int:
        return self.end - self.start + 1

    @property
    def steps(self) -> range:
        return range(self.start, self.end + 1)


@dataclass(frozen=True)
class DynamicIntervention:
    """``base`` enacted on every step of ``active`` (inclusive); default the whole horizon."""

    base: Intervention
    active: tuple[int, int] | None = None

    def window(self, m: DcegModel) -> tuple[int, int] | None:
        if self.base.is_null:
            return None
        a, b = self.active if self.active is not None else (m.start, m.end)
        if not m.start <= a <= b <= m.end:
            raise ValueError(f"active steps {a}..{b} are not inside the horizon {m.start}..{m.end}")
        return a, b


# ---------------------------------------------------------------------------
# per-day quantities
# ---------------------------------------------------------------------------


def _attempt_split(model: StagedTree, stage: str) -> tuple[int, str, str]:
    """Index of the attempt edge of the participation stage and both labels."""
    kids = {}
    for p, c, lab in model.tree.edges:
        if model.stage_of(p) == stage:
            kids[lab] = c
    sig = model.signatures[model.stage_index[stage]]
    non_leaf = [lab for lab in sig if model.stage_of(kids[lab]) is not None]
    if len(sig) != 2 or len(non_leaf) != 1:
        raise ValueError(f"participation stage {stage} needs one attempt edge and one leaf edge")
    j = sig.index(non_leaf[0])
    return j, sig[j], sig[1 - j]


def _point(model: StagedTree, stage: str, label: str) -> tuple[float, ...]:
    sig = model.signatures[model.stage_index[stage]]
    return tuple(1.0 if x == label else 0.0 for x in sig)


def _two_point(model: StagedTree, stage: str, label: str, p: float) -> tuple[float, ...]:
    sig = model.signatures[model.stage_index[stage]]
    return tuple(p if x == label else 1.0 - p for x in sig)


@dataclass(frozen=True)
class _DayFactors:
    behaviour: FactorSet  # slice factors under the intervention with the reaction substituted
    attempt: float  # idle attempt probability
    after_discovery: tuple[float, ...]  # attempt probability per step once discovered
    attempt_label: str
    other_label: str


def _day_factors(m: DcegModel, d: DynamicIntervention, profile: AdversaryProfile | None) -> _DayFactors:
    sl = m.slice
    layout = sl.reactions
    j, attempt_label, other_label = _attempt_split(sl, m.participation_stage)
    idle = m.slice_factors
    p_attempt = idle[m.participation_stage].probs[j]
    f = apply_intervention(sl, idle, d.base)
    heard = f.updated({layout.knowledge_stage: _point(sl, layout.knowledge_stage, layout.discovered_label)})
    if profile is not None and not d.base.is_null:
        if not isinstance(profile, AdversaryProfile):
            raise TypeError("dynamic scoring takes a single adversary profile")
        r = best_response(sl, f, profile, d.base)
        f = reaction_factors(sl, f, m.hazard, {r: 1.0}, d.base)
        heard = f.updated({layout.knowledge_stage: _point(sl, layout.knowledge_stage, layout.discovered_label)})
    if m.participation is not None:
        after = m.participation
    elif profile is not None and not d.base.is_null:
        a_f = profile.beliefs(heard)
        values = profile.utility.atom_values(sl)
        go = expected_utility_of(sl, a_f.updated({m.participation_stage: _point(sl, m.participation_stage, attempt_label)}), values)
        stop = expected_utility_of(sl, a_f.updated({m.participation_stage: _point(sl, m.participation_stage, other_label)}), values)
        after = (p_attempt if go > stop else 0.0,) * m.n_steps
    else:
        after = (p_attempt,) * m.n_steps
    return _DayFactors(f, p_attempt, tuple(after), attempt_label, other_label)


def expected_utility_of(model: StagedTree, f: FactorSet, values: np.ndarray) -> float:
    lay = model.layout
    probs = lay.sweeper.products(model.factor_vector(f))[lay.leaves]
    return float(np.dot(probs, values))


# ---------------------------------------------------------------------------
# unfolding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Template:
    parent: np.ndarray
    label: tuple[str | None, ...]
    stage: tuple[str | None, ...]
    leaves: np.ndarray
    leaf_disc: np.ndarray


def _template(model: StagedTree, rename: dict[str, str], split: tuple[str, str, str, str] | None,
              discovered: str | None, all_discovered: bool = False) -> _Template:
    """Flatten ``model`` into template arrays.

    ``split`` = (participation stage, leaf edge label, knowledge stage name,
    undiscovered label): the leaf reached that way gets a knowledge vertex
    with two leaf children.
    """
    lay = model.layout
    sl = model.staged_layout
    labels = model.tree.labels
    parent = lay.parent.tolist()
    lab: list[str | None] = [None] + [labels[k] for k in lay.label[1:].tolist()]
    stage: list[str | None] = []
    for k in sl.stage.tolist():
        sid = model.stage_ids[k] if k >= 0 else None
        stage.append(rename.get(sid, sid) if sid is not None else None)
    if split is not None:
        pstage, leaf_label, kname, undisc = split
        for i in range(len(parent)):
            if lay.n_children[i] == 0 and parent[i] >= 0 and lab[i] == leaf_label and model.stage_ids[sl.stage[parent[i]]] == pstage:
                stage[i] = kname
                for x in (discovered, undisc):
                    parent.append(i)
                    lab.append(x)
                    stage.append(None)
    n = len(parent)
    has_child = np.zeros(n, dtype=bool)
    has_child[[p for p in parent if p >= 0]] = True
    leaves = np.nonzero(~has_child)[0]
    disc = np.zeros(n, dtype=bool)
    for i in range(1, n):
        disc[i] = disc[parent[i]] or (discovered is not None and lab[i] == discovered)
    leaf_disc = np.ones(leaves.size, dtype=bool) if all_discovered else disc[leaves]
    return _Template(np.array(parent, dtype=np.int64), tuple(lab), tuple(stage), leaves, leaf_disc)


def unfold_dceg(m: DcegModel, d: DynamicIntervention, profile: AdversaryProfile | None = None) -> StagedTree:
    """Staged tree over all steps of the horizon, with florets under ``d``.

    Reaction florets come from the profile's best response when a profile
    is given, otherwise from the slice factors.
    """
    if m.n_steps > m.cap:
        raise ValueError(f"horizon of {m.n_steps} steps exceeds the cap of {m.cap}")
    window = d.window(m)
    sl = m.slice
    layout = sl.reactions
    ks = layout.knowledge_stage
    kfactors = _day_factors(m, d, profile)
    undisc_label = next(x for x in sl.signatures[sl.stage_index[ks]] if x != layout.discovered_label)
    zs = m.participation_stage
    d_stages = d.base.stages
    heard_t = simplify_graph(sl, {ks: layout.discovered_label})
    idle_t = simplify_graph(sl, {ks: undisc_label})

    templates: dict[tuple, _Template] = {}

    def template(kind: str, s: int) -> _Template:
        key = (kind, s)
        if key not in templates:
            if kind == "I":
                rename = {zs: f"{zs}@{s}"}
                rename.update({x: f"{x}|off" for x in d_stages} if window else {})
                templates[key] = _template(idle_t, rename, None, None)
            elif kind == "D":
                templates[key] = _template(heard_t, {zs: f"{zs}*@{s}"}, None, None, all_discovered=True)
            else:
                split = (zs, kfactors.other_label, f"{ks}@{s}", undisc_label) if kind == "U" else None
                templates[key] = _template(sl, {zs: f"{zs}@{s}", ks: f"{ks}@{s}"}, split, layout.discovered_label)
        return templates[key]

    def kind_of(s: int, disc: bool) -> str:
        if window is None or not window[0] <= s <= window[1]:
            return "I"
        if disc:
            return "D"
        return "U" if s < window[1] else "U_last"

    parents = [np.array([-1], dtype=np.int64)]
    labs: list[np.ndarray] = [np.array([-1], dtype=np.int64)]
    stg: list[np.ndarray] = [np.array([-1], dtype=np.int64)]
    root_fix: list[tuple[np.ndarray, int]] = []
    n = 1
    label_code: dict[str, int] = {}
    stage_code: dict[str, int] = {}

    def codes(tpl: _Template):
        lc = np.array([-1] + [label_code.setdefault(x, len(label_code)) for x in tpl.label[1:]], dtype=np.int64)
        sc = np.array([-1 if x is None else stage_code.setdefault(x, len(stage_code)) for x in tpl.stage],
                      dtype=np.int64)
        return lc, sc

    frontier = np.array([0], dtype=np.int64)
    fdisc = np.array([False])
    for s in m.steps:
        next_ids = []
        next_disc = []
        for disc in (False, True):
            sel = fdisc == disc
            if not sel.any():
                continue
            attach = frontier[sel]
            tpl = template(kind_of(s, disc), s)
            lc, sc = codes(tpl)
            size = tpl.parent.shape[0]
            k = attach.shape[0]
            g = np.empty((k, size), dtype=np.int64)
            g[:, 0] = attach
            g[:, 1:] = n + np.arange(k * (size - 1), dtype=np.int64).reshape(k, size - 1)
            n += k * (size - 1)
            parents.append(g[:, tpl.parent[1:]].ravel())
            labs.append(np.tile(lc[1:], k))
            stg.append(np.tile(sc[1:], k))
            root_fix.append((attach, int(sc[0])))
            next_ids.append(g[:, tpl.leaves].ravel())
            next_disc.append(np.tile(tpl.leaf_disc | disc, k))
        frontier = np.concatenate(next_ids)
        fdisc = np.concatenate(next_disc)

    parent = np.concatenate(parents)
    lab = np.concatenate(labs)
    stage = np.concatenate(stg)
    for attach, code in root_fix:
        stage[attach] = code

    # relabel so label indices follow the sorted vocabulary
    vocab = sorted(label_code)
    remap = np.empty(len(vocab), dtype=np.int64)
    for x, c in label_code.items():
        remap[c] = vocab.index(x)
    lab[1:] = remap[lab[1:]]
    order = _kernels.preorder(parent, lab, 0)
    position = np.empty_like(order)
    position[order] = np.arange(order.shape[0])
    new_parent = parent[order]
    new_parent[1:] = position[new_parent[1:]]
    tree = EventTree.from_preorder(new_parent, lab[order], vocab)

    stage_names = sorted(stage_code, key=stage_code.get)
    florets = {}
    sigs = []
    colours = []
    base_sig = dict(zip(sl.stage_ids, sl.signatures))
    base_col = dict(zip(sl.stage_ids, sl.colours))
    idle = m.slice_factors
    for name in stage_names:
        family, _, rest = name.partition("@")
        family, off, _ = family.partition("|")
        star = family.endswith("*")
        family = family.rstrip("*")
        sigs.append(base_sig[family])
        colours.append(base_col[family])
        if family == ks:
            florets[name] = _two_point(sl, ks, layout.discovered_label, m.hazard)
        elif family == zs:
            if star:
                p = kfactors.after_discovery[int(rest) - m.start]
            else:
                p = kfactors.attempt
            florets[name] = _two_point(sl, zs, kfactors.attempt_label, p)
        elif off:
            florets[name] = idle[family].probs
        else:
            florets[name] = kfactors.behaviour[family].probs
    return StagedTree.from_arrays(tree, stage_names, colours, sigs, stage[order], FactorSet(florets))


def stage_family(stage_id: str) -> str:
    """Time-invariant family of an unfolded stage id (``K@3`` -> ``K``)."""
    return stage_id.partition("@")[0].partition("|")[0].rstrip("*")


# ---------------------------------------------------------------------------
# scores
# ---------------------------------------------------------------------------


def _require_linear(u: DefenderUtility | None) -> DefenderUtility:
    u = u or DefenderUtility("linear_in_detections")
    if u.kind != "linear_in_detections":
        raise ValueError("dynamic scores need a utility linear in detections")
    return u


def step_deltas(m: DcegModel, d: DynamicIntervention, profile: AdversaryProfile | None = None,
                u: DefenderUtility | None = None) -> list[float]:
    """Expected change in detections on each step of the horizon."""
    u = _require_linear(u)
    window = d.window(m)
    if window is None:
        return [0.0] * m.n_steps
    sl = m.slice
    layout = sl.reactions
    ks, zs = layout.knowledge_stage, m.participation_stage
    day = _day_factors(m, d, profile)
    undisc = next(x for x in sl.signatures[sl.stage_index[ks]] if x != layout.discovered_label)
    go = {zs: _point(sl, zs, day.attempt_label)}
    naive = expected_utility(sl, day.behaviour.updated({**go, ks: _point(sl, ks, undisc)}), u)
    reacted = expected_utility(sl, day.behaviour.updated({**go, ks: _point(sl, ks, layout.discovered_label)}), u)
    idle = expected_utility(sl, m.slice_factors.updated(go), u)
    a, b = window
    out = []
    for s in m.steps:
        if not a <= s <= b:
            out.append(0.0)
            continue
        c_prev = cumulative_discovery(m.hazard, a, s - 1) if s > a else 0.0
        c_s = cumulative_discovery(m.hazard, a, s)
        p_after = day.after_discovery[s - m.start]
        # undiscovered at the start of the day: discovery (if any) happens before the port choice
        value = day.attempt * ((1.0 - c_s) * naive + (c_s - c_prev) * reacted) + c_prev * p_after * reacted
        out.append(value - day.attempt * idle)
    return out


def dynamic_delta_score(m: DcegModel, d: DynamicIntervention, profile: AdversaryProfile | None = None,
                        u: DefenderUtility | None = None) -> float:
    """Expected extra detections over the horizon from ``d`` versus doing nothing."""
    return float(sum(step_deltas(m, d, profile, u)))


def unfolded_delta_score(m: DcegModel, d: DynamicIntervention, profile: AdversaryProfile | None = None,
                         u: DefenderUtility | None = None) -> float:
    """The same delta, computed by scoring the two fully unfolded trees."""
    u = _require_linear(u)
    with_d = unfold_dceg(m, d, profile)
    without = unfold_dceg(m, DynamicIntervention(Intervention.none()), profile)
    return expected_utility(with_d, with_d.florets, u) - expected_utility(without, without.florets, u)

