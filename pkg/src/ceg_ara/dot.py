"""Graphviz DOT rendering of staged trees."""

from __future__ import annotations

from collections.abc import Mapping

from .factors import FactorSet
from .graph import StagedTree


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(model: StagedTree, factors: Mapping | None = None, name: str = "staged_tree") -> str:
    """DOT text for ``model``.

    Non-leaf vertices are filled with their stage colour, so vertices in one
    stage share a colour. Edges carry their label and, when factors are
    available, the edge probability to four decimals.
    """
    f = factors if factors is not None else model.florets
    if f is not None and not isinstance(f, FactorSet):
        f = FactorSet(f)
    lines = [f"digraph {_quote(name)} {{", "  rankdir=LR;", '  node [style=filled, fontname="Helvetica"];']
    tree = model.tree
    lay = tree.layout
    stage_of = {}
    for st in model.stages:
        for v in st.members:
            stage_of[v] = st
    for pos in range(lay.size):
        v = tree.vertex_id(int(lay.order[pos]))
        st = stage_of.get(v)
        if st is None:
            lines.append(f"  {_quote(v)} [shape=box, fillcolor=white];")
        else:
            lines.append(f"  {_quote(v)} [fillcolor={_quote(st.colour)}, tooltip={_quote(st.id)}];")
    labels = tree.labels
    for pos in range(1, lay.size):
        p = int(lay.parent[pos])
        src = tree.vertex_id(int(lay.order[p]))
        dst = tree.vertex_id(int(lay.order[pos]))
        lab = labels[int(lay.label[pos])]
        text = lab.replace("\\", "\\\\").replace('"', '\\"')
        st = stage_of.get(src)
        if f is not None and st is not None and st.id in f:
            prob = f[st.id].probs[st.edge_signature.index(lab)]
            text = f"{text}\\n{prob:.4f}"
        lines.append(f"  {_quote(src)} -> {_quote(dst)} [label=\"{text}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"
