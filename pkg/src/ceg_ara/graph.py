"""Event trees, stage colourings, atoms and CEG positions.

Trees are stored as flat integer arrays. Vertex ids are opaque strings; for
generated trees (the dynamic unfolding) they are produced on demand as
``v<index>``. Everything downstream works on the depth-first preorder
*layout* of the tree, where children are visited in lexicographic order of
their edge labels.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .factors import FactorSet

DETECTED = "detected"
UNDETECTED = "undetected"
ABORT = "abort"


class StructureError(ValueError):
    """An operation received a tree or staged tree that fails validation."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        head = "; ".join(self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"invalid model: {head}{more}")


def _short(items: Iterable[str], limit: int = 8) -> str:
    items = list(items)
    text = ", ".join(items[:limit])
    return text + (f", ... ({len(items)} total)" if len(items) > limit else "")


@dataclass(frozen=True)
class Layout:
    """Preorder arrays of a valid tree."""

    order: np.ndarray  # position -> vertex index
    position: np.ndarray  # vertex index -> position
    parent: np.ndarray  # position -> parent position, -1 at the root
    label: np.ndarray  # position -> incoming label index, -1 at the root
    n_children: np.ndarray
    leaves: np.ndarray  # leaf positions in depth-first order
    sweeper: _kernels.Sweeper

    @property
    def size(self) -> int:
        return int(self.order.shape[0])


class EventTree:
    """A rooted tree whose edges carry labels.

    Parameters
    ----------
    vertices : iterable of str
        Vertex ids.
    edges : iterable of (parent id, child id, label)
    root : str
        Id of the root vertex.

    The constructor never rejects a malformed tree; use :meth:`violations`
    (or :func:`validate_staged_tree`) to inspect it.
    """

    def __init__(self, vertices: Iterable[str], edges: Iterable[tuple[str, str, str]], root: str):
        declared = list(dict.fromkeys(vertices))
        index = {v: i for i, v in enumerate(declared)}
        extra: list[str] = []

        def idx(v: str) -> int:
            if v not in index:
                index[v] = len(index)
                extra.append(v)
            return index[v]

        edges = [tuple(e) for e in edges]
        vocab = sorted({e[2] for e in edges})
        lab_of = {lab: k for k, lab in enumerate(vocab)}
        src = np.array([idx(p) for p, _, _ in edges], dtype=np.int64)
        dst = np.array([idx(c) for _, c, _ in edges], dtype=np.int64)
        lab = np.array([lab_of[e[2]] for e in edges], dtype=np.int64)
        root_idx = idx(root)
        self._setup(tuple(declared + extra), src, dst, lab, tuple(vocab), root_idx, frozenset(extra))
        self._index_cache = index

    def _setup(self, names, src, dst, lab, labels, root, undeclared, n=None):
        self._names = names
        self._n = len(names) if names is not None else int(n)
        self._src = src
        self._dst = dst
        self._lab = lab
        self._labels = labels
        self._root = int(root)
        self._undeclared = undeclared
        self._index_cache = None
        self._trusted_order = False
        for a in (src, dst, lab):
            a.flags.writeable = False

    @classmethod
    def from_preorder(cls, parent: np.ndarray, label: np.ndarray, labels: Sequence[str],
                      names: Sequence[str] | None = None) -> EventTree:
        """Build from arrays already in preorder (root at 0, label-sorted children).

        ``label`` indexes ``labels``, which must be sorted. Vertex ids default
        to ``v<position>``.
        """
        self = cls.__new__(cls)
        parent = np.asarray(parent, dtype=np.int64)
        n = parent.shape[0]
        dst = np.arange(1, n, dtype=np.int64)
        self._setup(tuple(names) if names is not None else None, parent[1:].copy(), dst,
                    np.asarray(label, dtype=np.int64)[1:].copy(), tuple(labels), 0, frozenset(), n=n)
        self._trusted_order = True
        return self

    # -- plain accessors -------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self._n

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def root(self) -> str:
        return self.vertex_id(self._root)

    def vertex_id(self, i: int) -> str:
        return self._names[i] if self._names is not None else f"v{i}"

    @cached_property
    def names(self) -> tuple[str, ...]:
        if self._names is not None:
            return self._names
        return tuple(f"v{i}" for i in range(self._n))

    @property
    def index(self) -> Mapping[str, int]:
        if self._index_cache is None:
            self._index_cache = {v: i for i, v in enumerate(self.names)}
        return self._index_cache

    @property
    def vertices(self) -> frozenset[str]:
        return frozenset(self.names)

    @property
    def edges(self) -> list[tuple[str, str, str]]:
        return [(self.vertex_id(int(p)), self.vertex_id(int(c)), self._labels[int(k)])
                for p, c, k in zip(self._src, self._dst, self._lab)]

    # -- validation ------------------------------------------------------

    def violations(self) -> list[str]:
        if self._trusted_order:
            return self._preorder_violations()
        n = self._n
        out = []
        if self._undeclared:
            out.append(f"edges reference undeclared vertices: {_short(sorted(self._undeclared))}")
        indeg = np.bincount(self._dst, minlength=n)
        if indeg[self._root] > 0:
            out.append(f"root {self.root} has an incoming edge")
        orphans = [i for i in np.nonzero(indeg == 0)[0].tolist() if i != self._root]
        if orphans:
            out.append("multiple roots: " + _short([self.root] + [self.vertex_id(i) for i in orphans]))
        multi = np.nonzero(indeg > 1)[0].tolist()
        for i in multi[:20]:
            out.append(f"vertex {self.vertex_id(i)} has {int(indeg[i])} parents")
        out.extend(self._duplicate_labels())
        # reachability from the root detects cycles and detached components
        parent = np.full(n, -1, dtype=np.int64)
        parent[self._dst] = self._src
        ptr, kids = _kernels.sorted_children(parent, np.zeros(n, dtype=np.int64))
        seen = np.zeros(n, dtype=bool)
        seen[self._root] = True
        frontier = np.array([self._root], dtype=np.int64)
        while frontier.size:
            nxt = _kernels._gather_children(ptr, kids, frontier)
            nxt = nxt[~seen[nxt]]
            seen[nxt] = True
            frontier = nxt
        lost = [i for i in np.nonzero(~seen)[0].tolist() if indeg[i] > 0]
        if lost:
            out.append("vertices unreachable from the root (cycle or detached component): "
                       + _short([self.vertex_id(i) for i in lost]))
        return out

    def _duplicate_labels(self) -> list[str]:
        out = []
        if self._src.size:
            key = self._src * (len(self._labels) + 1) + self._lab
            uniq, counts = np.unique(key, return_counts=True)
            for k in uniq[counts > 1][:20].tolist():
                v, lab = divmod(k, len(self._labels) + 1)
                out.append(f"vertex {self.vertex_id(v)} has duplicate edge label {self._labels[lab]}")
        return out

    @cached_property
    def _preorder_problems(self) -> tuple[str, ...]:
        # parent[i] < i makes the tree connected and acyclic by construction
        if self._src.size and not (np.all(self._src >= 0) and np.all(self._src < self._dst)):
            return ("arrays are not in preorder: some parent does not precede its child",)
        parent = np.concatenate([[-1], self._src])
        label = np.concatenate([[-1], self._lab])
        i = _kernels.sibling_disorder(parent, label)
        if i < 0:
            return ()
        if label[i] in label[1:i][parent[1:i] == parent[i]]:
            return (f"vertex {self.vertex_id(int(parent[i]))} has duplicate edge label {self._labels[label[i]]}",)
        return (f"children of vertex {self.vertex_id(int(parent[i]))} are not in label order",)

    def _preorder_violations(self) -> list[str]:
        return list(self._preorder_problems)

    @cached_property
    def layout(self) -> Layout:
        if not self._trusted_order:
            bad = self.violations()
            if bad:
                raise StructureError(bad)
        n = self._n
        parent = np.full(n, -1, dtype=np.int64)
        parent[self._dst] = self._src
        label = np.full(n, -1, dtype=np.int64)
        label[self._dst] = self._lab
        if self._trusted_order:
            bad = self._preorder_violations()
            if bad:
                raise StructureError(bad)
            order = np.arange(n, dtype=np.int64)
        else:
            order = _kernels.preorder(parent, label, self._root)
        position = np.empty(n, dtype=np.int64)
        position[order] = np.arange(n, dtype=np.int64)
        ppos = parent[order]
        ppos[ppos >= 0] = position[ppos[ppos >= 0]]
        lpos = label[order]
        nchild = np.bincount(ppos[1:], minlength=n) if n > 1 else np.zeros(n, dtype=np.int64)
        leaves = np.nonzero(nchild == 0)[0]
        for a in (order, position, ppos, lpos, nchild, leaves):
            a.flags.writeable = False
        return Layout(order, position, ppos, lpos, nchild, leaves, _kernels.Sweeper(ppos))


@dataclass(frozen=True)
class Stage:
    """A set of non-leaf vertices sharing one floret distribution."""

    id: str
    members: frozenset[str]
    colour: str
    edge_signature: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        object.__setattr__(self, "edge_signature", tuple(self.edge_signature))


@dataclass(frozen=True)
class Atom:
    """A root-to-leaf path: ``path`` holds (vertex id, outgoing edge label) pairs."""

    path: tuple[tuple[str, str], ...]
    leaf: str

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for _, lab in self.path)

    def __str__(self) -> str:
        return "/".join(self.labels) or "<root>"


@dataclass(frozen=True)
class TriggerLayout:
    """Where an adversary may react: the trigger stage and its reaction stage.

    ``stay`` is the reaction edge meaning "carry on as planned", when the
    reaction stage has one.
    """

    trigger: str
    reaction_stage: str
    stay: str | None = None


@dataclass(frozen=True)
class ReactionLayout:
    """Knowledge and reaction stages added when a model is embellished."""

    knowledge_stage: str
    triggers: tuple[TriggerLayout, ...]
    discovered_label: str = "discovered"

    def trigger(self, stage: str) -> TriggerLayout:
        for t in self.triggers:
            if t.trigger == stage:
                return t
        raise KeyError(stage)


@dataclass(frozen=True)
class StagedLayout:
    stage: np.ndarray  # position -> stage index, -1 for leaves
    slot: np.ndarray  # position -> flat factor index; root points at a trailing 1.0
    offsets: np.ndarray  # stage index -> offset into the flat factor vector
    n_slots: int


class StagedTree:
    """An event tree with a stage partition and (optionally) idle florets.

    Parameters
    ----------
    tree : EventTree
    stages : iterable of Stage
    florets : mapping of stage id to probabilities, optional
        The idle factor set for this tree.
    reactions : ReactionLayout, optional
        Present on models embellished with adversary knowledge/reaction
        vertices.
    """

    def __init__(self, tree: EventTree, stages: Iterable[Stage], florets: Mapping | None = None,
                 reactions: ReactionLayout | None = None):
        stages = tuple(stages)
        vertex_stage = np.full(tree.n_vertices, -1, dtype=np.int64)
        problems = []
        ids = [s.id for s in stages]
        for k, s in enumerate(stages):
            if not s.members:
                problems.append(f"stage {s.id} has no members")
            for m in sorted(s.members):
                i = tree.index.get(m)
                if i is None:
                    problems.append(f"stage {s.id} lists unknown vertex {m}")
                elif vertex_stage[i] >= 0:
                    problems.append(f"vertex {m} is in stages {ids[vertex_stage[i]]} and {s.id}")
                else:
                    vertex_stage[i] = k
        self._setup(tree, tuple(ids), tuple(s.colour for s in stages),
                    tuple(s.edge_signature for s in stages), vertex_stage, florets, reactions, problems)
        self.__dict__["stages"] = stages

    def _setup(self, tree, ids, colours, signatures, vertex_stage, florets, reactions, problems=()):
        self.tree = tree
        self.stage_ids = ids
        self.colours = colours
        self.signatures = signatures
        self._vertex_stage = vertex_stage
        self._vertex_stage.flags.writeable = False
        self.florets = None if florets is None else (
            florets if isinstance(florets, FactorSet) else FactorSet(florets))
        self.reactions = reactions
        self._problems = list(problems)
        self.stage_index = {s: k for k, s in enumerate(ids)}

    @classmethod
    def from_arrays(cls, tree: EventTree, stage_ids: Sequence[str], colours: Sequence[str],
                    signatures: Sequence[Sequence[str]], vertex_stage: np.ndarray,
                    florets: Mapping | None = None, reactions: ReactionLayout | None = None) -> StagedTree:
        """Fast constructor: ``vertex_stage[i]`` is the stage index of vertex ``i`` or -1."""
        self = cls.__new__(cls)
        self._setup(tree, tuple(stage_ids), tuple(colours), tuple(tuple(s) for s in signatures),
                    np.asarray(vertex_stage, dtype=np.int64), florets, reactions)
        return self

    def replace(self, florets: Mapping | None = ..., reactions: ReactionLayout | None = ...) -> StagedTree:
        """Same tree and stages with other florets or reaction layout."""
        out = StagedTree.from_arrays(
            self.tree, self.stage_ids, self.colours, self.signatures, self._vertex_stage,
            self.florets if florets is ... else florets,
            self.reactions if reactions is ... else reactions)
        out._problems = list(self._problems)
        return out

    @cached_property
    def stages(self) -> tuple[Stage, ...]:
        names = self.tree.names
        members: list[list[str]] = [[] for _ in self.stage_ids]
        for i, k in enumerate(self._vertex_stage.tolist()):
            if k >= 0:
                members[k].append(names[i])
        return tuple(Stage(s, frozenset(m), c, sig) for s, m, c, sig in
                     zip(self.stage_ids, members, self.colours, self.signatures))

    def stage(self, stage_id: str) -> Stage:
        return self.stages[self.stage_index[stage_id]]

    def stage_of(self, vertex: str) -> str | None:
        k = int(self._vertex_stage[self.tree.index[vertex]])
        return self.stage_ids[k] if k >= 0 else None

    @property
    def vertex_stage(self) -> np.ndarray:
        return self._vertex_stage

    @property
    def layout(self) -> Layout:
        return self.tree.layout

    @cached_property
    def staged_layout(self) -> StagedLayout:
        bad = validate_staged_tree(self, check_florets=False)
        if bad:
            raise StructureError(bad)
        lay = self.tree.layout
        pstage = self._vertex_stage[lay.order]
        n_labels = len(self.tree.labels)
        lookup = np.full((len(self.stage_ids), max(n_labels, 1)), -1, dtype=np.int64)
        label_of = {lab: k for k, lab in enumerate(self.tree.labels)}
        for k, sig in enumerate(self.signatures):
            for j, lab in enumerate(sig):
                if lab in label_of:
                    lookup[k, label_of[lab]] = j
        sizes = np.array([len(s) for s in self.signatures], dtype=np.int64)
        offsets = np.zeros(len(sizes), dtype=np.int64)
        if len(sizes):
            offsets[1:] = np.cumsum(sizes)[:-1]
        n_slots = int(sizes.sum())
        slot = np.full(lay.size, n_slots, dtype=np.int64)
        if lay.size > 1:
            ps = pstage[lay.parent[1:]]
            slot[1:] = offsets[ps] + lookup[ps, lay.label[1:]]
        for a in (pstage, slot, offsets):
            a.flags.writeable = False
        return StagedLayout(pstage, slot, offsets, n_slots)

    def factor_vector(self, f: Mapping | None = None) -> np.ndarray:
        """Per-position edge probabilities (preorder) under factor set ``f``."""
        f = self.florets if f is None else f
        if f is None:
            raise ValueError("no factor set given and the model carries no florets")
        sl = self.staged_layout
        flat = np.empty(sl.n_slots + 1, dtype=np.float64)
        for k, sid in enumerate(self.stage_ids):
            probs = f[sid].probs if hasattr(f[sid], "probs") else tuple(f[sid])
            if len(probs) != len(self.signatures[k]):
                raise ValueError(f"stage {sid}: floret has {len(probs)} entries, "
                                 f"signature has {len(self.signatures[k])}")
            flat[sl.offsets[k]:sl.offsets[k] + len(probs)] = probs
        flat[sl.n_slots] = 1.0
        return flat[sl.slot]

    def leaf_ids(self) -> list[str]:
        lay = self.tree.layout
        return [self.tree.vertex_id(int(v)) for v in lay.order[lay.leaves]]

    def label_counts(self, label: str) -> np.ndarray:
        """Number of edges labelled ``label`` on each atom, in atom order."""
        lay = self.tree.layout
        try:
            k = self.tree.labels.index(label)
        except ValueError:
            return np.zeros(lay.leaves.shape[0])
        weight = (lay.label == k).astype(np.float64)
        return lay.sweeper.sums(weight)[lay.leaves]

    def __repr__(self) -> str:
        return (f"StagedTree({self.tree.n_vertices} vertices, {len(self.stage_ids)} stages, "
                f"root={self.tree.root!r})")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def validate_staged_tree(model: StagedTree, check_florets: bool = True) -> list[str]:
    """Every violated structural invariant of ``model``; empty when valid."""
    tree = model.tree
    out = tree.violations()
    out.extend(model._problems)
    if len(set(model.stage_ids)) != len(model.stage_ids):
        dup = sorted({s for s in model.stage_ids if model.stage_ids.count(s) > 1})
        out.append(f"duplicate stage ids: {_short(dup)}")
    vs = model.vertex_stage
    src, lab = tree._src, tree._lab
    outdeg = np.bincount(src, minlength=tree.n_vertices)
    unassigned = np.nonzero((outdeg > 0) & (vs < 0))[0].tolist()
    if unassigned:
        out.append("non-leaf vertices without a stage: " + _short([tree.vertex_id(i) for i in unassigned]))
    leafy = np.nonzero((outdeg == 0) & (vs >= 0))[0]
    for k in np.unique(vs[leafy]).tolist():
        members = [tree.vertex_id(i) for i in leafy[vs[leafy] == k].tolist()]
        out.append(f"stage {model.stage_ids[k]} contains leaves: {_short(members)}")
    if model.stage_ids:
        label_of = {x: j for j, x in enumerate(tree.labels)}
        lookup = np.zeros((len(model.stage_ids), max(len(tree.labels), 1)), dtype=bool)
        for k, sig in enumerate(model.signatures):
            for x in sig:
                if x in label_of:
                    lookup[k, label_of[x]] = True
        siglen = np.array([len(sig) for sig in model.signatures], dtype=np.int64)
        bad = (vs >= 0) & (outdeg > 0) & (outdeg != siglen[np.maximum(vs, 0)])
        ek = vs[src]
        stray = (ek >= 0) & ~lookup[np.maximum(ek, 0), lab]
        bad[src[stray]] = True
        bad_idx = np.nonzero(bad)[0]
        for k, sig in enumerate(model.signatures):
            if len(set(sig)) != len(sig):
                out.append(f"stage {model.stage_ids[k]}: edge signature repeats a label")
        for k in np.unique(vs[bad_idx]).tolist():
            members = [tree.vertex_id(i) for i in bad_idx[vs[bad_idx] == k].tolist()]
            sig = model.signatures[k]
            out.append(f"stage {model.stage_ids[k]}: members {_short(members)} emanate edges "
                       f"that do not match the edge signature ({', '.join(sig)})")
    if check_florets and model.florets is not None:
        for sid, sig in zip(model.stage_ids, model.signatures):
            if sid not in model.florets:
                out.append(f"stage {sid}: no floret distribution")
            elif len(model.florets[sid]) != len(sig):
                out.append(f"stage {sid}: floret has {len(model.florets[sid])} entries, "
                           f"signature has {len(sig)}")
    r = model.reactions
    if r is not None:
        known = set(model.stage_ids)
        for sid in [r.knowledge_stage] + [t.reaction_stage for t in r.triggers] + [t.trigger for t in r.triggers]:
            if sid not in known:
                out.append(f"reaction layout references unknown stage {sid}")
        if r.knowledge_stage in known and r.discovered_label not in model.signatures[model.stage_index[r.knowledge_stage]]:
            out.append(f"knowledge stage {r.knowledge_stage} lacks edge {r.discovered_label}")
    return out


def enumerate_atoms(model: StagedTree) -> list[Atom]:
    """All root-to-leaf paths in depth-first order, children by edge label."""
    lay = model.tree.layout
    names = model.tree.names
    labels = model.tree.labels
    order = lay.order.tolist()
    parent = lay.parent.tolist()
    lab = lay.label.tolist()
    nchild = lay.n_children.tolist()
    depth = [0] * lay.size
    stack: list[tuple[str, str]] = []
    atoms = []
    if nchild[0] == 0:
        return [Atom((), names[order[0]])]
    for i in range(1, lay.size):
        p = parent[i]
        depth[i] = depth[p] + 1
        del stack[depth[p]:]
        stack.append((names[order[p]], labels[lab[i]]))
        if nchild[i] == 0:
            atoms.append(Atom(tuple(stack), names[order[i]]))
    return atoms


def ceg_positions(model: StagedTree) -> list[frozenset[str]]:
    """Partition non-leaf vertices into CEG positions.

    Two vertices share a position when they are in the same stage and their
    downstream staged subtrees coincide (same labels, stages and florets all
    the way down). Positions are returned in preorder of their first member.
    """
    sl = model.staged_layout
    lay = model.tree.layout
    parent = lay.parent.tolist()
    lab = lay.label.tolist()
    stage = sl.stage.tolist()
    children: list[list[int]] = [[] for _ in range(lay.size)]
    for i in range(1, lay.size):
        children[parent[i]].append(i)
    intern: dict[tuple, int] = {}
    key = [0] * lay.size
    for i in range(lay.size - 1, -1, -1):
        if not children[i]:
            key[i] = -1
            continue
        sig = (stage[i], tuple((lab[c], key[c]) for c in children[i]))
        key[i] = intern.setdefault(sig, len(intern))
    groups: dict[int, list[int]] = {}
    for i in range(lay.size):
        if key[i] >= 0:
            groups.setdefault(key[i], []).append(i)
    names = model.tree.names
    order = lay.order
    result = sorted(groups.values(), key=lambda g: g[0])
    return [frozenset(names[int(order[i])] for i in g) for g in result]
