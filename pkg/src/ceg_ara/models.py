"""Built-in incursion models and the JSON model file format.

Default numeric bindings for the symbolic incursion parameters::

    p_Z = 0.8                  attempt probability
    q   = (0.5, 0.3, 0.2)      port choice
    p   = (0.4, 0.2, 0.3)      detection probability per port
    p_k = 0.7                  discovery probability
    (q1_abort, q12, q13) = (0, 0.6, 0.4)
    rho = 0.5                  success weight of the two-attribute utility
    hazard 0.3 per step, horizon steps 0..4
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .adversary import (AdversaryProfile, Capability, KnowledgeModel, ReactionSchema, TriggerSpec,
                        UtilitySpec, embellish_graph, simplify_graph)
from .algebra import Intervention
from .decision import DefenderUtility, DiscretePrior, IntervalPrior, UncertaintySpec
from .dynamic import DcegModel
from .factors import FactorSet, validate_factor_set
from .graph import (ABORT, DETECTED, UNDETECTED, EventTree, ReactionLayout, Stage, StagedTree,
                    TriggerLayout, validate_staged_tree)

DEFAULTS = {
    "p_Z": 0.8,
    "q": (0.5, 0.3, 0.2),
    "p": (0.4, 0.2, 0.3),
    "p_k": 0.7,
    "q1": (0.0, 0.6, 0.4),
    "rho": 0.5,
    "hazard": 0.3,
    "horizon": (0, 4),
}

BUILTINS = ("incursion_idle", "incursion_plus", "incursion_minus", "incursion_multi", "incursion_dynamic")
PORTS = ("B1", "B2", "B3")


class ModelError(ValueError):
    """A model document failed to parse or validate."""

    def __init__(self, message: str, violations: Sequence[str] = ()):
        self.violations = list(violations)
        super().__init__(message if not self.violations else message + ": " + "; ".join(self.violations))


@dataclass(eq=False)
class ModelBundle:
    """A staged tree with its idle factors, decisions, profiles and priors."""

    staged_tree: StagedTree
    idle_factors: FactorSet
    interventions: tuple[Intervention, ...] = ()
    profiles: tuple[AdversaryProfile, ...] = ()
    defender_utility: DefenderUtility = field(default_factory=DefenderUtility)
    uncertainty: UncertaintySpec | None = None
    dynamic: DcegModel | None = None
    name: str | None = None

    def intervention(self, name: str) -> Intervention:
        for d in self.interventions:
            if d.name == name:
                return d
        raise KeyError(f"no intervention named {name!r}")

    def profile(self, name: str) -> AdversaryProfile:
        for p in self.profiles:
            if p.name == name:
                return p
        raise KeyError(f"no profile named {name!r}")

    def default_profile(self):
        """Profile mixture used for scoring when none is named.

        The uncertainty prior over profiles when there is one, else the
        first profile, else ``None`` (no adversary reaction).
        """
        if self.staged_tree.reactions is None:
            return None
        if self.uncertainty is not None and self.uncertainty.profile_prior:
            return list(self.uncertainty.profile_prior)
        return self.profiles[0] if self.profiles else None

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return to_document(self) == to_document(other)


# ---------------------------------------------------------------------------
# built-ins
# ---------------------------------------------------------------------------


def _idle(p_z=DEFAULTS["p_Z"], q=DEFAULTS["q"], p=DEFAULTS["p"]) -> StagedTree:
    vertices = ["Z", "J", "no_plot", *PORTS]
    edges = [("Z", "J", "plot"), ("Z", "no_plot", "no_plot")]
    edges += [("J", b, b) for b in PORTS]
    for b in PORTS:
        vertices += [f"{b}.{DETECTED}", f"{b}.{UNDETECTED}"]
        edges += [(b, f"{b}.{DETECTED}", DETECTED), (b, f"{b}.{UNDETECTED}", UNDETECTED)]
    stages = [Stage("Z", {"Z"}, "red", ("plot", "no_plot")), Stage("J", {"J"}, "blue", PORTS)]
    colours = {"B1": "green", "B2": "yellow", "B3": "purple"}
    stages += [Stage(b, {b}, colours[b], (DETECTED, UNDETECTED)) for b in PORTS]
    florets = {"Z": (p_z, round(1.0 - p_z, 12)), "J": tuple(q)}
    florets.update({b: (pi, round(1.0 - pi, 12)) for b, pi in zip(PORTS, p)})
    return StagedTree(EventTree(vertices, edges, "Z"), stages, florets)


def _profiles(triggers: Sequence[str], targets: Sequence[str]) -> tuple[AdversaryProfile, ...]:
    know = KnowledgeModel(DEFAULTS["p_k"])
    u1 = UtilitySpec("single_attribute")

    def cap(tg):
        return Capability.everywhere({t: tg for t in triggers})

    out = [AdversaryProfile("adaptive", u1, know, cap(targets)),
           AdversaryProfile("cautious", UtilitySpec("two_attribute", DEFAULTS["rho"]), know, cap(targets))]
    if list(triggers) == ["B1"]:
        out += [AdversaryProfile("reach_B2", u1, know, cap((ABORT, "B2"))),
                AdversaryProfile("reach_B3", u1, know, cap((ABORT, "B3")))]
    return tuple(out)


def _plus() -> StagedTree:
    schema = ReactionSchema((TriggerSpec("B1", (ABORT, "B2", "B3"), "C1", DEFAULTS["q1"]),))
    return embellish_graph(_idle(), schema)


def _multi() -> StagedTree:
    targets = (ABORT, *PORTS)
    specs = tuple(TriggerSpec(b, targets, f"C{b[1:]}") for b in PORTS)
    return simplify_graph(embellish_graph(_idle(), ReactionSchema(specs)), {"Z": "plot"})


def _naive_interventions() -> tuple[Intervention, ...]:
    return (Intervention.none("d0"), Intervention.force("d1", {"B1": DETECTED}))


def _mixture_prior(profiles) -> tuple:
    by = {p.name: p for p in profiles}
    q12, q13 = DEFAULTS["q1"][1:]
    return ((by["reach_B2"], q12), (by["reach_B3"], q13))


def builtin_model(name: str) -> ModelBundle:
    """One of the five incursion models with the documented default factors."""
    if name == "incursion_idle":
        g = _idle()
        return ModelBundle(g, g.florets, _naive_interventions(), name=name)
    if name in ("incursion_plus", "incursion_minus", "incursion_dynamic"):
        g = _plus()
        profiles = _profiles(["B1"], (ABORT, "B2", "B3"))
        if name == "incursion_minus":
            g = simplify_graph(g, {"Z": "plot"})
            unc = UncertaintySpec(_mixture_prior(profiles), {
                "B2": IntervalPrior(((0.1, 0.3),)),
                "B3": IntervalPrior(((0.2, 0.4),)),
            })
            return ModelBundle(g, g.florets, _naive_interventions(), profiles, uncertainty=unc, name=name)
        unc = UncertaintySpec(_mixture_prior(profiles))
        if name == "incursion_dynamic":
            start, end = DEFAULTS["horizon"]
            dyn = DcegModel(g, start, end, DEFAULTS["hazard"])
            return ModelBundle(g, g.florets, _naive_interventions(), profiles,
                               DefenderUtility("linear_in_detections"), unc, dyn, name=name)
        return ModelBundle(g, g.florets, _naive_interventions(), profiles, uncertainty=unc, name=name)
    if name == "incursion_multi":
        g = _multi()
        ds = [Intervention.none("d0")]
        ds += [Intervention.force(f"d{b[1:]}", {b: DETECTED}) for b in PORTS]
        for i, a in enumerate(PORTS):
            for b in PORTS[i + 1:]:
                ds.append(Intervention.force(f"d{a[1:]}{b[1:]}", {a: DETECTED, b: DETECTED}))
        return ModelBundle(g, g.florets, tuple(ds), _profiles(PORTS, (ABORT, *PORTS))[:2], name=name)
    raise ValueError(f"unknown builtin {name!r}; choose from {', '.join(BUILTINS)}")


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def _profile_doc(p: AdversaryProfile) -> dict:
    return {
        "name": p.name,
        "utility": {"kind": p.utility.kind, "success_weight": p.utility.success_weight},
        "knowledge": {"discovery_prob": p.knowledge.discovery_prob},
        "capability": [{"trigger": t, "intervention": d, "targets": sorted(s)}
                       for (t, d), s in p.capability.reachable.items()],
        "belief_overrides": {s: list(f.probs) for s, f in sorted(p.belief_overrides.items())},
    }


def _prior_doc(prior) -> dict:
    if isinstance(prior, DiscretePrior):
        return {"type": "discrete", "support": [{"probs": list(pr), "weight": w} for pr, w in prior.support]}
    return {"type": "interval", "bounds": [list(b) for b in prior.bounds]}


def to_document(bundle: ModelBundle) -> dict:
    """Plain-data form of a bundle (what :func:`save_model` serialises)."""
    g = bundle.staged_tree
    tree = g.tree
    doc = {
        "tree": {"root": tree.root, "vertices": list(tree.names), "edges": [list(e) for e in tree.edges]},
        "stages": [{"id": s.id, "members": sorted(s.members), "colour": s.colour,
                    "edge_signature": list(s.edge_signature)} for s in g.stages],
        "florets": {s: list(f.probs) for s, f in bundle.idle_factors.items()},
        "interventions": [{"name": d.name, "kind": d.kind, "forced": dict(d.forced),
                           "replacements": {s: list(v) for s, v in d.replacements.items()}, "cost": d.cost}
                          for d in bundle.interventions],
        "profiles": [_profile_doc(p) for p in bundle.profiles],
        "utility": {"kind": bundle.defender_utility.kind, "custom": bundle.defender_utility.custom},
        "uncertainty": None,
        "reactions": None,
        "dynamic": None,
    }
    if bundle.uncertainty is not None:
        doc["uncertainty"] = {
            "profile_prior": [{"profile": p.name, "weight": w} for p, w in bundle.uncertainty.profile_prior],
            "factor_priors": {s: _prior_doc(pr) for s, pr in bundle.uncertainty.factor_priors.items()},
        }
    if g.reactions is not None:
        r = g.reactions
        doc["reactions"] = {"knowledge_stage": r.knowledge_stage, "discovered_label": r.discovered_label,
                            "triggers": [{"trigger": t.trigger, "reaction_stage": t.reaction_stage,
                                          "stay": t.stay} for t in r.triggers]}
    if bundle.dynamic is not None:
        m = bundle.dynamic
        doc["dynamic"] = {"start": m.start, "end": m.end, "hazard": m.hazard,
                          "participation": None if m.participation is None else list(m.participation),
                          "participation_stage": m.participation_stage, "cap": m.cap}
    if bundle.name is not None:
        doc["name"] = bundle.name
    return doc


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_model(bundle: ModelBundle) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return dumps_canonical(to_document(bundle))


class _Reader:
    """Small helper that turns shape errors into :class:`ModelError`."""

    def get(self, obj, key, kind, where, default=...):
        if not isinstance(obj, dict):
            raise ModelError(f"{where}: expected an object")
        if key not in obj:
            if default is ...:
                raise ModelError(f"{where}: missing key {key!r}")
            return default
        value = obj[key]
        if kind is not None and value is not None and not isinstance(value, kind):
            raise ModelError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
        return value


def _unresolved(what: str) -> ModelError:
    return ModelError(f"unresolved reference: {what}")


def load_model(document: str) -> ModelBundle:
    """Parse and fully validate a model document."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_document(doc)


def from_document(doc: Mapping) -> ModelBundle:
    rd = _Reader()
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    t = rd.get(doc, "tree", dict, "model")
    edges = rd.get(t, "edges", list, "tree")
    for e in edges:
        if not (isinstance(e, list) and len(e) == 3 and all(isinstance(x, str) for x in e)):
            raise ModelError("tree.edges: every edge is [parent, child, label]")
    tree = EventTree(rd.get(t, "vertices", list, "tree"), [tuple(e) for e in edges], rd.get(t, "root", str, "tree"))
    stages = []
    for i, s in enumerate(rd.get(doc, "stages", list, "model")):
        where = f"stages[{i}]"
        stages.append(Stage(rd.get(s, "id", str, where), frozenset(rd.get(s, "members", list, where)),
                            rd.get(s, "colour", str, where, "gray"),
                            tuple(rd.get(s, "edge_signature", list, where))))
    reactions = None
    rdoc = rd.get(doc, "reactions", dict, "model", None)
    if rdoc is not None:
        trig = tuple(TriggerLayout(rd.get(x, "trigger", str, "reactions.triggers"),
                                   rd.get(x, "reaction_stage", str, "reactions.triggers"),
                                   rd.get(x, "stay", str, "reactions.triggers", None))
                     for x in rd.get(rdoc, "triggers", list, "reactions"))
        reactions = ReactionLayout(rd.get(rdoc, "knowledge_stage", str, "reactions"), trig,
                                   rd.get(rdoc, "discovered_label", str, "reactions", "discovered"))
    fl = rd.get(doc, "florets", dict, "model")
    try:
        florets = FactorSet({s: tuple(float(x) for x in v) for s, v in fl.items()})
    except (TypeError, ValueError):
        raise ModelError("florets: every floret is a list of numbers") from None
    g = StagedTree(tree, stages, florets, reactions)
    bad = validate_staged_tree(g)
    if bad:
        raise ModelError("invalid staged tree", bad)
    bad = validate_factor_set(g, florets)
    if bad:
        raise ModelError("invalid florets", bad)
    known = set(g.stage_ids)

    ds = []
    for i, x in enumerate(rd.get(doc, "interventions", list, "model", [])):
        where = f"interventions[{i}]"
        name = rd.get(x, "name", str, where)
        forced = rd.get(x, "forced", dict, where, {})
        repl = rd.get(x, "replacements", dict, where, {})
        for sid in list(forced) + list(repl):
            if sid not in known:
                raise _unresolved(f"intervention {name} names unknown stage {sid}")
        for sid, lab in forced.items():
            if lab not in g.signatures[g.stage_index[sid]]:
                raise _unresolved(f"intervention {name} forces label {lab!r} absent from stage {sid}")
        for sid, v in repl.items():
            if len(v) != len(g.signatures[g.stage_index[sid]]):
                raise ModelError(f"intervention {name}: floret for {sid} has the wrong arity")
        try:
            ds.append(Intervention(name, rd.get(x, "kind", str, where, "none"), forced, repl,
                                   rd.get(x, "cost", (int, float), where, 0.0)))
        except ValueError as exc:
            raise ModelError(str(exc)) from None
    names = [d.name for d in ds]
    if len(set(names)) != len(names):
        raise ModelError("duplicate intervention names")

    profiles = []
    for i, x in enumerate(rd.get(doc, "profiles", list, "model", [])):
        where = f"profiles[{i}]"
        name = rd.get(x, "name", str, where)
        try:
            ud = rd.get(x, "utility", dict, where)
            util = UtilitySpec(rd.get(ud, "kind", str, where + ".utility"),
                               rd.get(ud, "success_weight", (int, float), where + ".utility", None))
            know = KnowledgeModel(float(rd.get(rd.get(x, "knowledge", dict, where), "discovery_prob",
                                               (int, float), where + ".knowledge")))
            reach = {}
            for c in rd.get(x, "capability", list, where):
                key = (rd.get(c, "trigger", str, where + ".capability"),
                       rd.get(c, "intervention", str, where + ".capability", "*"))
                reach[key] = frozenset(rd.get(c, "targets", list, where + ".capability"))
            over = rd.get(x, "belief_overrides", dict, where, {})
            for sid in over:
                if sid not in known:
                    raise _unresolved(f"profile {name} overrides unknown stage {sid}")
            profiles.append(AdversaryProfile(name, util, know, Capability(reach),
                                             FactorSet({s: tuple(v) for s, v in over.items()})))
        except ModelError:
            raise
        except ValueError as exc:
            raise ModelError(f"profile {name}: {exc}") from None
    by_name = {p.name: p for p in profiles}
    if len(by_name) != len(profiles):
        raise ModelError("duplicate profile names")

    ud = rd.get(doc, "utility", dict, "model", {"kind": "detection_indicator"})
    try:
        utility = DefenderUtility(rd.get(ud, "kind", str, "utility"), rd.get(ud, "custom", dict, "utility", None))
    except ValueError as exc:
        raise ModelError(str(exc)) from None

    unc = None
    udoc = rd.get(doc, "uncertainty", dict, "model", None)
    if udoc is not None:
        prior = []
        for x in rd.get(udoc, "profile_prior", list, "uncertainty", []):
            pname = rd.get(x, "profile", str, "uncertainty.profile_prior")
            if pname not in by_name:
                raise _unresolved(f"uncertainty prior names unknown profile {pname}")
            prior.append((by_name[pname], float(rd.get(x, "weight", (int, float), "uncertainty.profile_prior"))))
        fps = {}
        for sid, x in rd.get(udoc, "factor_priors", dict, "uncertainty", {}).items():
            if sid not in known:
                raise _unresolved(f"factor prior for unknown stage {sid}")
            kind = rd.get(x, "type", str, f"uncertainty.factor_priors.{sid}")
            try:
                if kind == "discrete":
                    fps[sid] = DiscretePrior(tuple((tuple(s["probs"]), s["weight"]) for s in x["support"]))
                elif kind == "interval":
                    fps[sid] = IntervalPrior(tuple(tuple(b) for b in x["bounds"]))
                else:
                    raise ModelError(f"factor prior for {sid}: unknown type {kind!r}")
            except (KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, ModelError):
                    raise
                raise ModelError(f"factor prior for {sid}: {exc}") from None
        try:
            unc = UncertaintySpec(tuple(prior), fps)
        except ValueError as exc:
            raise ModelError(str(exc)) from None

    dyn = None
    ddoc = rd.get(doc, "dynamic", dict, "model", None)
    if ddoc is not None:
        try:
            part = rd.get(ddoc, "participation", list, "dynamic", None)
            dyn = DcegModel(g, int(rd.get(ddoc, "start", int, "dynamic")), int(rd.get(ddoc, "end", int, "dynamic")),
                            float(rd.get(ddoc, "hazard", (int, float), "dynamic")),
                            None if part is None else tuple(part),
                            rd.get(ddoc, "participation_stage", str, "dynamic", "Z"),
                            int(rd.get(ddoc, "cap", int, "dynamic", 32)))
        except ValueError as exc:
            raise ModelError(f"dynamic: {exc}") from None
    return ModelBundle(g, florets, tuple(ds), tuple(profiles), utility, unc, dyn,
                       rd.get(doc, "name", str, "model", None))


def read_model(path: str) -> ModelBundle:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror or exc}") from None
    return load_model(text)
