"""Composition of floret factors into atom probabilities, and interventions.

The composition rule for a staged tree is the product of edge probabilities
along each root-to-leaf path. An intervention replaces the florets of some
stages; every other factor is carried over from the idle system.
"""

from __future__ import annotations

from collections.abc import Callable, Hashable, Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .factors import FactorPartition, FactorSet, FloretDistribution
from .graph import Atom, StagedTree, enumerate_atoms

KINDS = ("none", "force_edges", "stochastic")


@dataclass(frozen=True)
class Intervention:
    """A named replacement of stage florets.

    ``kind`` is ``"none"`` for the idle decision, ``"force_edges"`` to push
    every unit arriving at a stage down one edge, or ``"stochastic"`` to swap
    in arbitrary florets. ``cost`` is subtracted from the defender's score.
    """

    name: str
    kind: str = "none"
    forced: Mapping[str, str] = field(default_factory=dict)
    replacements: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    cost: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown intervention kind {self.kind!r}")
        forced = dict(self.forced)
        repl = {s: tuple(float(x) for x in (v.probs if isinstance(v, FloretDistribution) else v))
                for s, v in dict(self.replacements).items()}
        if self.kind == "none" and (forced or repl):
            raise ValueError(f"intervention {self.name}: kind 'none' takes no stages")
        if self.kind == "force_edges" and repl:
            raise ValueError(f"intervention {self.name}: force_edges takes no replacement florets")
        if self.kind == "stochastic" and forced:
            raise ValueError(f"intervention {self.name}: stochastic takes no forced edges")
        for s, probs in repl.items():
            bad = FloretDistribution(s, probs).violations()
            if bad:
                raise ValueError(f"intervention {self.name}: " + "; ".join(bad))
        object.__setattr__(self, "forced", MappingProxyType(dict(sorted(forced.items()))))
        object.__setattr__(self, "replacements", MappingProxyType(dict(sorted(repl.items()))))
        object.__setattr__(self, "cost", float(self.cost))

    def __hash__(self):
        return hash((self.name, self.kind, tuple(self.forced.items()), tuple(self.replacements.items())))

    def __eq__(self, other):
        if not isinstance(other, Intervention):
            return NotImplemented
        return (self.name, self.kind, dict(self.forced), dict(self.replacements), self.cost) == (
            other.name, other.kind, dict(other.forced), dict(other.replacements), other.cost)

    @classmethod
    def none(cls, name: str = "d0") -> Intervention:
        return cls(name)

    @classmethod
    def force(cls, name: str, forced: Mapping[str, str], cost: float = 0.0) -> Intervention:
        return cls(name, "force_edges", forced=forced, cost=cost)

    @classmethod
    def stochastic(cls, name: str, replacements: Mapping[str, object], cost: float = 0.0) -> Intervention:
        return cls(name, "stochastic", replacements=replacements, cost=cost)

    @property
    def stages(self) -> frozenset[str]:
        """Stages whose florets this intervention replaces."""
        return frozenset(self.forced) | frozenset(self.replacements)

    @property
    def is_null(self) -> bool:
        return self.kind == "none"


def _factors(model: StagedTree, f: Mapping | None) -> FactorSet:
    if f is None:
        if model.florets is None:
            raise ValueError("model carries no florets and no factor set was given")
        return model.florets
    return f if isinstance(f, FactorSet) else FactorSet(f)


def atom_probabilities(model: StagedTree, f: Mapping | None = None) -> np.ndarray:
    """Probability of every atom, in :func:`enumerate_atoms` order."""
    lay = model.layout
    probs = lay.sweeper.products(model.factor_vector(_factors(model, f)))
    return probs[lay.leaves]


def _atom_position(model: StagedTree, a: Atom) -> int:
    tree = model.tree
    lay = tree.layout
    i = tree.index.get(a.leaf)
    if i is None:
        raise ValueError(f"atom {a} is not in the model: unknown leaf {a.leaf}")
    pos = int(lay.position[i])
    if lay.n_children[pos] != 0:
        raise ValueError(f"atom {a} is not in the model: {a.leaf} is not a leaf")
    path = []
    v = pos
    while lay.parent[v] >= 0:
        p = int(lay.parent[v])
        path.append((tree.vertex_id(int(lay.order[p])), tree.labels[int(lay.label[v])]))
        v = p
    if tuple(reversed(path)) != a.path:
        raise ValueError(f"atom {a} is not in the model: path does not match")
    return pos


def atom_probability(model: StagedTree, f: Mapping | None, a: Atom) -> float:
    """Product of the floret probabilities on the atom's edges."""
    f = _factors(model, f)
    _atom_position(model, a)
    p = 1.0
    for vertex, label in a.path:
        sid = model.stage_of(vertex)
        sig = model.signatures[model.stage_index[sid]]
        p *= f[sid].probs[sig.index(label)]
    return p


Event = Callable[[Atom], bool] | np.ndarray


def event_mask(model: StagedTree, event: Event) -> np.ndarray:
    if callable(event):
        return np.fromiter((bool(event(a)) for a in enumerate_atoms(model)), dtype=bool)
    mask = np.asarray(event, dtype=bool)
    if mask.shape != model.layout.leaves.shape:
        raise ValueError("event mask must have one entry per atom")
    return mask


def event_probability(model: StagedTree, f: Mapping | None, event: Event) -> float:
    """Total probability of the atoms satisfying ``event``.

    ``event`` is a predicate on :class:`Atom` or a boolean mask in atom order.
    """
    probs = atom_probabilities(model, f)
    return float(probs[event_mask(model, event)].sum())


def apply_intervention(model: StagedTree, idle: Mapping | None, d: Intervention) -> FactorSet:
    """Factor set after ``d``: replaced stages swapped, the rest copied from ``idle``."""
    idle = _factors(model, idle)
    if d.is_null:
        return idle
    changes = {}
    for sid, label in d.forced.items():
        if sid not in model.stage_index:
            raise ValueError(f"intervention {d.name} references unknown stage {sid}")
        sig = model.signatures[model.stage_index[sid]]
        if label not in sig:
            raise ValueError(f"intervention {d.name}: label {label!r} not on stage {sid} ({', '.join(sig)})")
        changes[sid] = FloretDistribution.degenerate(sid, len(sig), sig.index(label))
    for sid, probs in d.replacements.items():
        if sid not in model.stage_index:
            raise ValueError(f"intervention {d.name} references unknown stage {sid}")
        if len(probs) != len(model.signatures[model.stage_index[sid]]):
            raise ValueError(f"intervention {d.name}: floret for {sid} has the wrong arity")
        changes[sid] = FloretDistribution(sid, probs)
    return idle.updated(changes)


def intervened_distribution(model: StagedTree, idle: Mapping | None, p1: FactorPartition) -> dict[Atom, float]:
    """Atom distribution after composing idle factors with the replaced ones."""
    idle = _factors(model, idle)
    stages = set(model.stage_ids)
    covered = set(p1.shared) | set(p1.replaced)
    if covered != stages or set(p1.shared) & set(p1.replaced):
        raise ValueError("factor partition does not match the model's stages")
    composed = p1.apply(idle)
    probs = atom_probabilities(model, composed)
    return dict(zip(enumerate_atoms(model), probs.tolist()))


def marginalize(dist: Mapping[Atom, float], key: Callable[[Atom], Hashable | None]) -> dict:
    """Push a distribution through ``key``; atoms mapped to ``None`` are dropped."""
    out: dict = {}
    for a, p in dist.items():
        k = key(a)
        if k is not None:
            out[k] = out.get(k, 0.0) + p
    return out

