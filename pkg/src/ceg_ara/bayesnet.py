"""Discrete Bayesian networks with "do" interventions by truncated factorisation.

Only exact enumeration is provided; the networks this module targets have a
handful of variables.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

from .factors import NORMALIZATION_TOL


@dataclass(frozen=True)
class BayesNet:
    """Variables (in a topological order), parent lists and CPTs.

    ``cpts[v]`` maps a tuple of parent values (in ``parents[v]`` order) to a
    probability vector over ``v``'s domain.
    """

    variables: tuple[tuple[str, tuple], ...]
    parents: Mapping[str, tuple[str, ...]]
    cpts: Mapping[str, Mapping[tuple, tuple[float, ...]]]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple((n, tuple(dom)) for n, dom in self.variables))
        object.__setattr__(self, "parents", {n: tuple(self.parents.get(n, ())) for n, _ in self.variables})
        object.__setattr__(self, "cpts", {v: {tuple(k): tuple(float(x) for x in p) for k, p in t.items()}
                                          for v, t in self.cpts.items()})

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.variables)

    def domain(self, v: str) -> tuple:
        return dict(self.variables)[v]

    def violations(self) -> list[str]:
        out = []
        seen: set[str] = set()
        doms = dict(self.variables)
        for name, dom in self.variables:
            for p in self.parents[name]:
                if p not in seen:
                    out.append(f"{name}: parent {p} does not precede it")
            seen.add(name)
            table = self.cpts.get(name)
            if table is None:
                out.append(f"{name}: missing CPT")
                continue
            for cfg in itertools.product(*(doms.get(p, ()) for p in self.parents[name])):
                row = table.get(cfg)
                if row is None:
                    out.append(f"{name}: missing CPT row for parents {cfg}")
                elif len(row) != len(dom):
                    out.append(f"{name}: CPT row {cfg} has {len(row)} entries for {len(dom)} values")
                elif abs(math.fsum(row) - 1.0) > NORMALIZATION_TOL or min(row) < 0:
                    out.append(f"{name}: CPT row {cfg} is not a distribution")
        return out


@dataclass(frozen=True)
class BnIntervention:
    """do(X_i = x_i) for each assigned variable."""

    assignments: Mapping[str, object] = field(default_factory=dict)


def _check(bn: BayesNet, d: BnIntervention) -> None:
    bad = bn.violations()
    if bad:
        raise ValueError("invalid Bayesian network: " + "; ".join(bad))
    doms = dict(bn.variables)
    for v, x in d.assignments.items():
        if v not in doms:
            raise ValueError(f"do() on unknown variable {v}")
        if x not in doms[v]:
            raise ValueError(f"do({v}={x!r}): value outside domain {doms[v]}")


def bn_do_distribution(bn: BayesNet, d: BnIntervention | None = None) -> dict[tuple, float]:
    """Joint over full assignments (tuples in variable order) after ``d``.

    Intervened variables contribute an indicator of their forced value; every
    other variable keeps its idle CPT row.
    """
    d = d or BnIntervention()
    _check(bn, d)
    names = bn.names
    pos = {n: i for i, n in enumerate(names)}
    doms = [dom for _, dom in bn.variables]
    parent_idx = [tuple(pos[p] for p in bn.parents[n]) for n in names]
    value_idx = [{x: j for j, x in enumerate(dom)} for dom in doms]
    out = {}
    for assignment in itertools.product(*doms):
        p = 1.0
        for i, n in enumerate(names):
            if n in d.assignments:
                factor = 1.0 if assignment[i] == d.assignments[n] else 0.0
            else:
                cfg = tuple(assignment[j] for j in parent_idx[i])
                factor = bn.cpts[n][cfg][value_idx[i][assignment[i]]]
            p *= factor
            if p == 0.0:
                break
        out[assignment] = p
    return out


def bn_query(bn: BayesNet, d: BnIntervention | None, event: Callable[[Mapping[str, object]], bool]) -> float:
    """Probability of ``event`` (a predicate on ``{name: value}``) after ``d``."""
    names = bn.names
    joint = bn_do_distribution(bn, d)
    return math.fsum(p for a, p in joint.items() if event(dict(zip(names, a))))


def chain(p1: float, p2_given_1: float, p2_given_0: float) -> BayesNet:
    """Two binary variables X1 -> X2, values 0/1."""
    return BayesNet(
        variables=(("X1", (0, 1)), ("X2", (0, 1))),
        parents={"X2": ("X1",)},
        cpts={"X1": {(): (1 - p1, p1)},
              "X2": {(0,): (1 - p2_given_0, p2_given_0), (1,): (1 - p2_given_1, p2_given_1)}},
    )


def random_binary_net(rng, n: int, max_parents: int = 3, names: Sequence[str] | None = None) -> BayesNet:
    """Random net on ``n`` binary variables with up to ``max_parents`` earlier parents each."""
    names = list(names or [f"X{i + 1}" for i in range(n)])
    parents = {}
    cpts = {}
    for i, v in enumerate(names):
        k = int(rng.integers(0, min(i, max_parents) + 1))
        ps = tuple(sorted(rng.choice(i, size=k, replace=False).tolist())) if k else ()
        parents[v] = tuple(names[j] for j in ps)
        table = {}
        for cfg in itertools.product((0, 1), repeat=k):
            q = float(rng.random())
            table[cfg] = (1 - q, q)
        cpts[v] = table
    return BayesNet(tuple((v, (0, 1)) for v in names), parents, cpts)
