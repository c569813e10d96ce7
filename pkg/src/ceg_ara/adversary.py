"""Rational adversary reactions on embellished staged trees.

The defender models the adversary by a profile: a utility, a probability of
discovering the intervention, and a capability that limits where the agent
can go once it has heard. Given those, the adversary's reaction is the
expected-utility maximiser over its reaction space, so reactions never
appear as chance nodes; they are substituted into the reaction florets.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .algebra import Intervention, apply_intervention
from .factors import FactorSet, FloretDistribution
from .graph import (ABORT, DETECTED, UNDETECTED, EventTree, ReactionLayout, Stage, StagedTree,
                    TriggerLayout)

#: Reactions whose expected utilities differ by less than this are tied.
TIE_TOL = 1e-12
WILDCARD = "*"


@dataclass(frozen=True)
class UtilitySpec:
    """The adversary's utility.

    ``single_attribute`` scores 1 when the agent gets in undetected.
    ``two_attribute`` mixes that with an indicator of not being captured,
    weighted by ``success_weight`` and its complement.
    """

    kind: str = "single_attribute"
    success_weight: float | None = None

    def __post_init__(self):
        if self.kind == "single_attribute":
            if self.success_weight is not None:
                raise ValueError("single_attribute utility takes no success_weight")
        elif self.kind == "two_attribute":
            if self.success_weight is None or not 0.0 < self.success_weight < 1.0:
                raise ValueError("two_attribute utility needs 0 < success_weight < 1")
        else:
            raise ValueError(f"unknown utility kind {self.kind!r}")

    def atom_values(self, model: StagedTree) -> np.ndarray:
        success = (model.label_counts(UNDETECTED) > 0).astype(np.float64)
        if self.kind == "single_attribute":
            return success
        free = (model.label_counts(DETECTED) == 0).astype(np.float64)
        rho = self.success_weight
        return rho * success + (1.0 - rho) * free


@dataclass(frozen=True)
class KnowledgeModel:
    discovery_prob: float

    def __post_init__(self):
        if not 0.0 <= self.discovery_prob <= 1.0:
            raise ValueError("discovery_prob must lie in [0, 1]")


@dataclass(frozen=True)
class Capability:
    """Reachable reaction targets per (trigger stage, intervention name).

    An intervention name of ``"*"`` applies to every intervention without a
    specific entry. Every reachable set contains ``"abort"``.
    """

    reachable: Mapping[tuple[str, str], frozenset[str]]

    def __post_init__(self):
        clean = {}
        for (trigger, name), targets in self.reachable.items():
            targets = frozenset(targets)
            if ABORT not in targets:
                raise ValueError(f"capability at {trigger}/{name} must include {ABORT!r}")
            clean[(trigger, name)] = targets
        object.__setattr__(self, "reachable", dict(sorted(clean.items())))

    @classmethod
    def everywhere(cls, targets_by_trigger: Mapping[str, Sequence[str]]) -> Capability:
        return cls({(t, WILDCARD): frozenset(v) for t, v in targets_by_trigger.items()})

    def covers(self, trigger: str, intervention: str) -> bool:
        return (trigger, intervention) in self.reachable or (trigger, WILDCARD) in self.reachable

    def targets(self, trigger: str, intervention: str) -> frozenset[str]:
        for key in ((trigger, intervention), (trigger, WILDCARD)):
            if key in self.reachable:
                return self.reachable[key]
        raise ValueError(f"no reachable targets for trigger {trigger} under {intervention}")


@dataclass(frozen=True)
class AdversaryProfile:
    """One value of the latent (utility, knowledge, capability) triple.

    ``belief_overrides`` holds the adversary's florets where they differ from
    the defender's.
    """

    name: str
    utility: UtilitySpec
    knowledge: KnowledgeModel
    capability: Capability
    belief_overrides: FactorSet = field(default_factory=FactorSet)

    def __post_init__(self):
        if not isinstance(self.belief_overrides, FactorSet):
            object.__setattr__(self, "belief_overrides", FactorSet(self.belief_overrides))

    def beliefs(self, d_factors: FactorSet) -> FactorSet:
        return d_factors.updated(self.belief_overrides) if self.belief_overrides else d_factors


@dataclass(frozen=True, order=True)
class Reaction:
    """Chosen target at each affected trigger; an empty plan means no change."""

    plan: tuple[tuple[str, str], ...] = ()

    @classmethod
    def of(cls, plan: Mapping[str, str]) -> Reaction:
        return cls(tuple(sorted(plan.items())))

    def target(self, trigger: str) -> str:
        return dict(self.plan)[trigger]

    def deviations(self, layout: ReactionLayout | None) -> int:
        stays = {t.trigger: t.stay for t in layout.triggers} if layout else {}
        return sum(1 for trig, tgt in self.plan if stays.get(trig) != tgt)

    def __str__(self) -> str:
        if not self.plan:
            return "no change"
        return ", ".join(f"{t}->{x}" for t, x in self.plan)


NO_CHANGE = Reaction()


def affected_triggers(model: StagedTree | None, d: Intervention) -> list[TriggerLayout]:
    if model is None or model.reactions is None or d.is_null:
        return []
    return sorted((t for t in model.reactions.triggers if t.trigger in d.stages), key=lambda t: t.trigger)


def reaction_space(profile: AdversaryProfile, d: Intervention, model: StagedTree | None = None) -> list[Reaction]:
    """All reactions open to the adversary after ``d``, in lexicographic order.

    Trigger locations are the stages touched by ``d`` that the model's
    reaction layout lists (or, without a model, that the capability covers).
    """
    if model is not None and model.reactions is not None:
        triggers = [t.trigger for t in affected_triggers(model, d)]
    else:
        triggers = sorted(s for s in d.stages if profile.capability.covers(s, d.name)) if not d.is_null else []
    if not triggers:
        return [NO_CHANGE]
    choices = []
    for t in triggers:
        targets = profile.capability.targets(t, d.name)
        if not targets:
            raise ValueError(f"empty reachable set at trigger {t}")
        choices.append(sorted(targets))
    return [Reaction(tuple(zip(triggers, combo))) for combo in itertools.product(*choices)]


class ReactionValues:
    """Conditional expected utilities of every reaction edge at once.

    For each reaction vertex of the given triggers, computes the adversary's
    expected utility given it arrives there and takes each edge, plus the
    probability (under the adversary's beliefs, having heard) of reaching
    that vertex. A reaction's SEU is the reach-weighted average over its
    triggers' reaction vertices of the chosen edges' values.
    """

    def __init__(self, model: StagedTree, a_factors: FactorSet, utility: UtilitySpec, triggers: Sequence[str]):
        layout = model.reactions
        if layout is None:
            raise ValueError("model has no knowledge/reaction stages")
        lay = model.layout
        sl = model.staged_layout
        by_stage = {layout.trigger(t).reaction_stage: t for t in triggers}
        stage_codes = np.array([model.stage_index[s] for s in by_stage], dtype=np.int64)
        marked = np.isin(sl.stage, stage_codes)
        k = model.stage_index[layout.knowledge_stage]
        ksig = model.signatures[k]
        heard = a_factors.updated({layout.knowledge_stage: FloretDistribution.degenerate(
            layout.knowledge_stage, len(ksig), ksig.index(layout.discovered_label))})
        factor = model.factor_vector(heard)
        child_of_reaction = np.zeros(lay.size, dtype=bool)
        child_of_reaction[1:] = marked[lay.parent[1:]]
        reach = lay.sweeper.products(factor)
        cond = lay.sweeper.products(factor, reset=child_of_reaction)
        owner = lay.sweeper.nearest_marked(child_of_reaction)
        leaves = lay.leaves
        u = utility.atom_values(model)
        lo = owner[leaves]
        keep = lo >= 0
        value = np.bincount(lo[keep], weights=cond[leaves][keep] * u[keep], minlength=lay.size)

        self.vertices = np.nonzero(marked)[0]
        self.model = model
        labels = model.tree.labels
        kids = np.nonzero(child_of_reaction)[0]
        edge_value: dict[int, dict[str, float]] = {int(v): {} for v in self.vertices}
        for c in kids.tolist():
            edge_value[int(lay.parent[c])][labels[int(lay.label[c])]] = float(value[c])
        self.edge_value = edge_value
        self.trigger_of = {int(v): by_stage[model.stage_ids[int(sl.stage[v])]] for v in self.vertices}
        w = reach[self.vertices]
        total = float(w.sum())
        self.weights = (w / total) if total > 0 else np.full(w.shape, 1.0 / max(len(w), 1))

    def seu(self, r: Reaction) -> float:
        plan = dict(r.plan)
        out = 0.0
        for v, w in zip(self.vertices.tolist(), self.weights.tolist()):
            target = plan[self.trigger_of[v]]
            values = self.edge_value[v]
            if target not in values:
                raise ValueError(f"reaction target {target!r} is not an edge of the reaction stage "
                                 f"at trigger {self.trigger_of[v]}")
            out += w * values[target]
        return out


def adversary_seu(model: StagedTree, d_factors: FactorSet, profile: AdversaryProfile, r: Reaction) -> float:
    """The adversary's expected utility for reaction ``r``.

    Evaluated under the adversary's beliefs (``d_factors`` plus overrides),
    conditional on having heard of the intervention at a trigger.
    """
    if not r.plan:
        raise ValueError("the no-change reaction has no reaction vertex to evaluate")
    for trig, tgt in r.plan:
        reachable = [targets for (t, _), targets in profile.capability.reachable.items() if t == trig]
        if not any(tgt in s for s in reachable):
            raise ValueError(f"target {tgt!r} at {trig} is outside the profile's capability")
    vals = ReactionValues(model, profile.beliefs(d_factors), profile.utility, [t for t, _ in r.plan])
    return vals.seu(r)


def select_reaction(space: Sequence[Reaction], seus: Sequence[float], layout: ReactionLayout | None,
                    tol: float = TIE_TOL) -> Reaction:
    """Argmax with ties broken by fewest deviations from no-change, then lexicographically."""
    best = max(seus)
    tied = [r for r, s in zip(space, seus) if s >= best - tol]
    return min(tied, key=lambda r: (r.deviations(layout), r.plan))


def best_response(model: StagedTree, d_factors: FactorSet, profile: AdversaryProfile, d: Intervention) -> Reaction:
    """The adversary's expected-utility maximising reaction to ``d``."""
    space = reaction_space(profile, d, model)
    if space == [NO_CHANGE]:
        return NO_CHANGE
    vals = ReactionValues(model, profile.beliefs(d_factors), profile.utility, [t for t, _ in space[0].plan])
    return select_reaction(space, [vals.seu(r) for r in space], model.reactions)


def reaction_factors(model: StagedTree, d_factors: FactorSet, discovery_prob: float,
                     reactions: Mapping[Reaction, float], d: Intervention) -> FactorSet:
    """D's factors with the knowledge floret and (mixed) reaction florets substituted.

    ``reactions`` is a distribution over reactions (a point mass for a single
    profile). Reaction stages of triggers that ``d`` leaves alone get a point
    mass on their stay edge when they have one.
    """
    layout = model.reactions
    if layout is None:
        raise ValueError("model has no knowledge/reaction stages")
    affected = {t.trigger for t in affected_triggers(model, d)}
    if not affected:
        return d_factors
    ks = layout.knowledge_stage
    ksig = model.signatures[model.stage_index[ks]]
    if len(ksig) != 2:
        raise ValueError(f"knowledge stage {ks} must have exactly two edges")
    j = ksig.index(layout.discovered_label)
    kp = [1.0 - discovery_prob] * 2
    kp[j] = discovery_prob
    changes: dict[str, object] = {ks: tuple(kp)}
    for t in layout.triggers:
        sig = model.signatures[model.stage_index[t.reaction_stage]]
        if t.trigger in affected:
            probs = [0.0] * len(sig)
            for r, w in reactions.items():
                target = dict(r.plan).get(t.trigger)
                if target is None:
                    continue
                if target not in sig:
                    raise ValueError(f"target {target!r} not on reaction stage {t.reaction_stage}")
                probs[sig.index(target)] += w
            changes[t.reaction_stage] = tuple(probs)
        elif t.stay is not None:
            changes[t.reaction_stage] = FloretDistribution.degenerate(t.reaction_stage, len(sig), sig.index(t.stay))
    return d_factors.updated(changes)


def _weighted(profiles) -> list[tuple[AdversaryProfile, float]]:
    if isinstance(profiles, AdversaryProfile):
        return [(profiles, 1.0)]
    out = [(p, float(w)) for p, w in profiles]
    if not out:
        raise ValueError("empty profile list")
    total = math.fsum(w for _, w in out)
    if abs(total - 1.0) > 1e-9 or any(w < 0 for _, w in out):
        raise ValueError(f"profile weights must be non-negative and sum to 1 (got {total!r})")
    return out


def reaction_distribution(model: StagedTree, d: Intervention, profiles,
                          idle: FactorSet | None = None) -> dict[Reaction, float]:
    """Defender's distribution over reactions: best responses mixed by profile weight."""
    d_factors = apply_intervention(model, idle, d)
    out: dict[Reaction, float] = {}
    for profile, w in _weighted(profiles):
        r = best_response(model, d_factors, profile, d)
        out[r] = out.get(r, 0.0) + w
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# embellish / simplify
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TriggerSpec:
    """A trigger stage and the reaction edges open to an agent that hears there.

    ``targets`` are labels of the choice stage's edges (the alternatives the
    agent can switch to) or ``"abort"``.
    """

    trigger: str
    targets: tuple[str, ...]
    reaction_stage: str | None = None
    idle: tuple[float, ...] | None = None
    colour: str = "orange"

    @property
    def stage_id(self) -> str:
        return self.reaction_stage or f"C_{self.trigger}"


@dataclass(frozen=True)
class ReactionSchema:
    triggers: tuple[TriggerSpec, ...] = ()
    knowledge_stage: str = "K"
    discovered_label: str = "discovered"
    undiscovered_label: str = "undiscovered"
    heard_suffix: str = "&H"


def _children(model: StagedTree) -> dict[str, list[tuple[str, str]]]:
    kids: dict[str, list[tuple[str, str]]] = {}
    for p, c, lab in model.tree.edges:
        kids.setdefault(p, []).append((lab, c))
    for v in kids.values():
        v.sort()
    return kids


def embellish_graph(idle: StagedTree, schema: ReactionSchema) -> StagedTree:
    """Insert discovery and reaction vertices for a single-reaction setting.

    Every vertex of the choice stage (the common parent stage of the trigger
    vertices) is preceded by a knowledge vertex. Its undiscovered edge leads
    to the original choice vertex; its discovered edge leads to a copy of it
    (kept in the same stage, renamed ``<choice>&H``) whose trigger edges end
    in reaction vertices. Each reaction edge is either an abort leaf or a
    copy of the subtree the named choice edge leads to.
    """
    if not schema.triggers:
        return idle
    from .graph import validate_staged_tree

    bad = validate_staged_tree(idle)
    if bad:
        raise ValueError("cannot embellish an invalid model: " + "; ".join(bad))
    florets = idle.florets
    if florets is None:
        raise ValueError("embellish_graph needs a model with idle florets")
    kids = _children(idle)
    stage_of = {v: idle.stage_of(v) for v in idle.tree.names}
    parent_of = {c: (p, lab) for p, c, lab in idle.tree.edges}

    trigger_vertices: dict[str, str] = {}
    choice_stages = set()
    for spec in schema.triggers:
        if spec.trigger not in idle.stage_index:
            raise ValueError(f"unknown trigger stage {spec.trigger}")
        for v in idle.stage(spec.trigger).members:
            if v not in parent_of:
                raise ValueError(f"trigger stage {spec.trigger} contains the root")
            trigger_vertices[v] = spec.trigger
            choice_stages.add(stage_of[parent_of[v][0]])
    if len(choice_stages) != 1:
        raise ValueError(f"trigger vertices must share one parent stage, found {sorted(choice_stages)}")
    choice = choice_stages.pop()
    choice_sig = idle.signatures[idle.stage_index[choice]]
    merged = choice + schema.heard_suffix
    specs = {s.trigger: s for s in schema.triggers}
    for spec in schema.triggers:
        for t in spec.targets:
            if t != ABORT and t not in choice_sig:
                raise ValueError(f"reaction target {t!r} at {spec.trigger} is neither abort nor a "
                                 f"{choice} edge ({', '.join(choice_sig)})")
    choice_vertices = sorted(idle.stage(choice).members)
    single = len(choice_vertices) == 1

    vertices: list[str] = []
    edges: list[tuple[str, str, str]] = []
    members: dict[str, list[str]] = {}

    def add(v: str, stage: str | None):
        vertices.append(v)
        if stage is not None:
            members.setdefault(stage, []).append(v)

    def copy(v: str, new: str, prefix: str | None):
        s = stage_of[v]
        add(new, merged if s == choice else s)
        for lab, c in kids.get(v, []):
            cn = c if prefix is None else f"{prefix}/{c}"
            edges.append((new, cn, lab))
            copy(c, cn, prefix)

    def emit(v: str):
        if stage_of[v] == choice:
            k_id = schema.knowledge_stage if single else f"{schema.knowledge_stage}@{v}"
            h_id = "H" if single else f"H@{v}"
            if v in parent_of:
                p, lab = parent_of[v]
                edges.append((p, k_id, lab))
            add(k_id, schema.knowledge_stage)
            edges.append((k_id, v, schema.undiscovered_label))
            edges.append((k_id, h_id, schema.discovered_label))
            copy(v, v, None)
            add(h_id, merged)
            branches = dict((lab, c) for lab, c in kids[v])
            for lab, c in kids[v]:
                if c in trigger_vertices:
                    spec = specs[trigger_vertices[c]]
                    r_id = spec.stage_id if single else f"{spec.stage_id}@{h_id}"
                    edges.append((h_id, r_id, lab))
                    add(r_id, spec.stage_id)
                    for t in spec.targets:
                        if t == ABORT:
                            leaf = f"{r_id}/{ABORT}"
                            edges.append((r_id, leaf, ABORT))
                            add(leaf, None)
                        else:
                            tgt = f"{r_id}/{branches[t]}"
                            edges.append((r_id, tgt, t))
                            copy(branches[t], tgt, r_id)
                else:
                    cn = f"{h_id}/{c}"
                    edges.append((h_id, cn, lab))
                    copy(c, cn, h_id)
            return
        add(v, stage_of[v])
        for lab, c in kids.get(v, []):
            if stage_of.get(c) != choice:
                edges.append((v, c, lab))
            emit(c)

    emit(idle.tree.root)
    root = idle.tree.root
    if stage_of[root] == choice:
        root = schema.knowledge_stage if single else f"{schema.knowledge_stage}@{root}"

    stages = []
    new_florets: dict[str, object] = {}
    for sid, colour, sig in zip(idle.stage_ids, idle.colours, idle.signatures):
        new_id = merged if sid == choice else sid
        stages.append(Stage(new_id, frozenset(members.get(new_id, ())), colour, sig))
        new_florets[new_id] = florets[sid].probs
    ksig = (schema.discovered_label, schema.undiscovered_label)
    stages.insert(1, Stage(schema.knowledge_stage, frozenset(members[schema.knowledge_stage]), "gray", ksig))
    new_florets[schema.knowledge_stage] = (0.0, 1.0)
    triggers = []
    for spec in schema.triggers:
        own = parent_of[next(v for v, t in trigger_vertices.items() if t == spec.trigger)][1]
        stay = own if own in spec.targets else None
        stages.append(Stage(spec.stage_id, frozenset(members[spec.stage_id]), spec.colour, spec.targets))
        if spec.idle is not None:
            probs = tuple(spec.idle)
        elif stay is not None:
            probs = FloretDistribution.degenerate(spec.stage_id, len(spec.targets), spec.targets.index(stay)).probs
        else:
            probs = tuple(1.0 / len(spec.targets) for _ in spec.targets)
        new_florets[spec.stage_id] = probs
        triggers.append(TriggerLayout(spec.trigger, spec.stage_id, stay))
    layout = ReactionLayout(schema.knowledge_stage, tuple(triggers), schema.discovered_label)
    tree = EventTree(vertices, edges, root)
    return StagedTree(tree, stages, FactorSet(new_florets), layout)


def simplify_graph(g_plus: StagedTree, forced: Mapping[str, str]) -> StagedTree:
    """Collapse stages whose edge is known for certain.

    Each vertex of a forced stage is removed and the subtree along its forced
    edge is attached to its parent in its place; the other branches vanish.
    """
    if not forced:
        return g_plus
    for sid, lab in forced.items():
        if sid not in g_plus.stage_index:
            raise ValueError(f"unknown stage {sid}")
        if lab not in g_plus.signatures[g_plus.stage_index[sid]]:
            raise ValueError(f"label {lab!r} is not an edge of stage {sid}")
    kids = _children(g_plus)
    stage_of = {v: g_plus.stage_of(v) for v in g_plus.tree.names}

    def resolve(v: str) -> str:
        while stage_of.get(v) in forced:
            v = dict(kids[v])[forced[stage_of[v]]]
        return v

    root = resolve(g_plus.tree.root)
    if root != g_plus.tree.root and root not in kids:
        raise ValueError("forcing would disconnect the root: the whole tree collapses to one leaf")
    vertices: list[str] = []
    edges: list[tuple[str, str, str]] = []
    stack = [root]
    while stack:
        v = stack.pop()
        vertices.append(v)
        for lab, c in kids.get(v, []):
            c = resolve(c)
            edges.append((v, c, lab))
            stack.append(c)
    alive = set(vertices)
    stages = []
    florets = {}
    for st in g_plus.stages:
        m = st.members & alive
        if m:
            stages.append(Stage(st.id, m, st.colour, st.edge_signature))
            if g_plus.florets is not None:
                florets[st.id] = g_plus.florets[st.id]
    kept = {s.id for s in stages}
    layout = g_plus.reactions
    if layout is not None:
        if layout.knowledge_stage not in kept:
            layout = None
        else:
            trig = tuple(t for t in layout.triggers if t.reaction_stage in kept and t.trigger in kept)
            layout = ReactionLayout(layout.knowledge_stage, trig, layout.discovered_label) if trig else None
    tree = EventTree(vertices, edges, root)
    return StagedTree(tree, stages, FactorSet(florets) if g_plus.florets is not None else None, layout)
