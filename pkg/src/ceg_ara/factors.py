"""Floret distributions, factor sets and the shared/replaced factor partition."""

from __future__ import annotations

import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .graph import StagedTree

#: Authoring slack allowed when checking that a floret sums to one.
NORMALIZATION_TOL = 1e-9
#: Two florets count as the same factor when every entry agrees this closely.
SHARED_TOL = 1e-12


@dataclass(frozen=True)
class FloretDistribution:
    """Probabilities on the edges of one stage, in edge-signature order."""

    stage: str
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    def __len__(self) -> int:
        return len(self.probs)

    def __iter__(self):
        return iter(self.probs)

    def violations(self, tol: float = NORMALIZATION_TOL) -> list[str]:
        out = []
        for j, p in enumerate(self.probs):
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                out.append(f"stage {self.stage}: entry {j} = {p!r} outside [0, 1]")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > tol:
            word = "exceeds" if total > 1.0 else "falls short of"
            out.append(f"stage {self.stage}: sum {total:.12g} {word} 1 beyond tolerance {tol:g}")
        return out

    def close_to(self, other: FloretDistribution, tol: float = SHARED_TOL) -> bool:
        return len(self.probs) == len(other.probs) and all(
            abs(a - b) <= tol for a, b in zip(self.probs, other.probs)
        )

    @classmethod
    def degenerate(cls, stage: str, size: int, index: int) -> FloretDistribution:
        return cls(stage, tuple(1.0 if j == index else 0.0 for j in range(size)))


def _coerce(stage: str, value) -> FloretDistribution:
    if isinstance(value, FloretDistribution):
        if value.stage != stage:
            return FloretDistribution(stage, value.probs)
        return value
    return FloretDistribution(stage, tuple(value))


class FactorSet(Mapping[str, FloretDistribution]):
    """Immutable map from stage id to its floret distribution.

    Values may be given as :class:`FloretDistribution` or as plain sequences
    of probabilities.
    """

    __slots__ = ("_entries", "_hash")

    def __init__(self, entries: Mapping[str, object] | None = None):
        self._entries = {s: _coerce(s, v) for s, v in (entries or {}).items()}
        self._hash = None

    def __getitem__(self, stage: str) -> FloretDistribution:
        return self._entries[stage]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        if isinstance(other, FactorSet):
            return self._entries == other._entries
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._entries.items()))
        return self._hash

    def __repr__(self) -> str:
        body = ", ".join(f"{s}: {list(f.probs)}" for s, f in self._entries.items())
        return f"FactorSet({{{body}}})"

    def updated(self, changes: Mapping[str, object]) -> FactorSet:
        """Copy with the given stages replaced."""
        merged = dict(self._entries)
        for s, v in changes.items():
            merged[s] = _coerce(s, v)
        return FactorSet(merged)

    def probs(self, stage: str) -> tuple[float, ...]:
        return self._entries[stage].probs


@dataclass(frozen=True)
class FactorPartition:
    """Split of an intervened factor set into idle-equal and replaced parts."""

    shared: frozenset[str]
    replaced: FactorSet = field(default_factory=FactorSet)

    def apply(self, idle: FactorSet) -> FactorSet:
        """Overlay the replaced factors on ``idle``."""
        return idle.updated(self.replaced)


def validate_factor_set(model: StagedTree, f: Mapping[str, object]) -> list[str]:
    """List every problem with ``f`` as a factor set for ``model``."""
    f = f if isinstance(f, FactorSet) else FactorSet(f)
    out = []
    for sid, sig in zip(model.stage_ids, model.signatures):
        if sid not in f:
            out.append(f"stage {sid}: missing floret distribution")
            continue
        dist = f[sid]
        if len(dist) != len(sig):
            out.append(f"stage {sid}: floret has {len(dist)} entries, signature has {len(sig)}")
        out.extend(dist.violations())
    known = set(model.stage_ids)
    for sid in f:
        if sid not in known:
            out.append(f"stage {sid}: floret given for unknown stage")
    return out


def partition_factors(idle: FactorSet, intervened: FactorSet) -> FactorPartition:
    """Stages whose florets survive the intervention versus those it replaces."""
    if set(idle) != set(intervened):
        missing = sorted(set(idle) ^ set(intervened))
        raise ValueError(f"factor sets cover different stages: {', '.join(missing)}")
    shared = set()
    replaced = {}
    for sid in idle:
        if idle[sid].close_to(intervened[sid]):
            shared.add(sid)
        else:
            replaced[sid] = intervened[sid]
    return FactorPartition(frozenset(shared), FactorSet(replaced))
