"""Defender scores: expected utilities of interventions, Monte Carlo and sweeps."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .adversary import (AdversaryProfile, _weighted, affected_triggers, best_response,
                        reaction_factors)
from .algebra import Intervention, _factors, apply_intervention
from .factors import NORMALIZATION_TOL, FactorSet, FloretDistribution
from .graph import DETECTED, Atom, StagedTree

UTILITY_KINDS = ("detection_indicator", "linear_in_detections", "custom_atom_utility")
#: Scores closer than this count as tied when picking the best intervention.
SCORE_TIE_TOL = 1e-12


@dataclass(frozen=True)
class DefenderUtility:
    """The defender's utility over atoms.

    ``custom`` maps leaf ids (or :class:`Atom` objects) to values and is only
    used with ``custom_atom_utility``.
    """

    kind: str = "detection_indicator"
    custom: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.kind not in UTILITY_KINDS:
            raise ValueError(f"unknown defender utility {self.kind!r}")
        if (self.custom is not None) != (self.kind == "custom_atom_utility"):
            raise ValueError("custom values must be given exactly when kind is custom_atom_utility")
        if self.custom is not None:
            table = {(k.leaf if isinstance(k, Atom) else str(k)): float(v) for k, v in self.custom.items()}
            object.__setattr__(self, "custom", dict(sorted(table.items())))

    def atom_values(self, model: StagedTree) -> np.ndarray:
        if self.kind == "detection_indicator":
            return (model.label_counts(DETECTED) > 0).astype(np.float64)
        if self.kind == "linear_in_detections":
            return model.label_counts(DETECTED)
        leaves = model.leaf_ids()
        missing = [v for v in leaves if v not in self.custom]
        if missing:
            raise ValueError(f"custom utility has no value for atoms ending at {', '.join(missing[:5])}")
        return np.array([self.custom[v] for v in leaves], dtype=np.float64)


def expected_utility(model: StagedTree, f: FactorSet, u: DefenderUtility) -> float:
    """Sum of utility times probability over the atoms of ``model`` under ``f``."""
    lay = model.layout
    probs = lay.sweeper.products(model.factor_vector(f))[lay.leaves]
    return float(np.dot(probs, u.atom_values(model)))


def reacted_factors(model: StagedTree, d_factors: FactorSet, profile: AdversaryProfile,
                    d: Intervention) -> FactorSet:
    """D's factors for ``d`` with the profile's knowledge and best response substituted."""
    r = best_response(model, d_factors, profile, d)
    return reaction_factors(model, d_factors, profile.knowledge.discovery_prob, {r: 1.0}, d)


def seu_score(model: StagedTree, idle: Mapping | None, d: Intervention, profile=None,
              u: DefenderUtility | None = None) -> float:
    """Defender's expected utility of enacting ``d``, net of its cost.

    ``profile`` is an :class:`AdversaryProfile` or a weighted list of them;
    with a list the score is the weighted average of the per-profile scores.
    Without a profile the adversary is assumed not to react.
    """
    u = u or DefenderUtility()
    f = apply_intervention(model, idle, d)
    if profile is None:
        return expected_utility(model, f, u) - d.cost
    if model.reactions is None:
        raise ValueError("a profile was given but the model has no knowledge/reaction stages")
    if not affected_triggers(model, d):
        return expected_utility(model, f, u) - d.cost
    total = 0.0
    for p, w in _weighted(profile):
        total += w * expected_utility(model, reacted_factors(model, f, p, d), u)
    return total - d.cost


@dataclass(frozen=True)
class ScoreReport:
    """Scores, deltas against the null decision and the best decision."""

    scores: Mapping[str, float]
    deltas: Mapping[str, float]
    best: str
    standard_errors: Mapping[str, float] | None = None
    baseline: str = "d0"

    def to_dict(self) -> dict:
        out = {"scores": dict(self.scores), "deltas": dict(self.deltas), "best": self.best,
               "baseline": self.baseline}
        if self.standard_errors is not None:
            out["standard_errors"] = dict(self.standard_errors)
        return out


def null_intervention(ds: Sequence[Intervention]) -> Intervention:
    for d in ds:
        if d.is_null:
            return d
    raise ValueError("the intervention list must include the null decision (kind 'none')")


def pick_best(scores: Mapping[str, float], tol: float = SCORE_TIE_TOL) -> str:
    top = max(scores.values())
    return min(name for name, s in scores.items() if s >= top - tol)


def score_table(model: StagedTree, idle: Mapping | None, ds: Sequence[Intervention], profile=None,
                u: DefenderUtility | None = None) -> ScoreReport:
    """Score every intervention and pick the best, ties going to the smallest name."""
    names = [d.name for d in ds]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate intervention names: {', '.join(dup)}")
    base = null_intervention(ds)
    scores = {d.name: seu_score(model, idle, d, profile, u) for d in ds}
    deltas = {n: s - scores[base.name] for n, s in scores.items()}
    return ScoreReport(scores, deltas, pick_best(scores), None, base.name)


# ---------------------------------------------------------------------------
# uncertainty
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscretePrior:
    """Finitely many candidate florets with their prior weights."""

    support: tuple[tuple[tuple[float, ...], float], ...]

    def __post_init__(self):
        sup = tuple((tuple(float(x) for x in probs), float(w)) for probs, w in self.support)
        if not sup:
            raise ValueError("discrete prior needs at least one support point")
        _check_weights([w for _, w in sup])
        object.__setattr__(self, "support", sup)

    def draw(self, rng: np.random.Generator) -> tuple[int, tuple[float, ...]]:
        k = _draw_index(rng, [w for _, w in self.support])
        return k, self.support[k][0]


@dataclass(frozen=True)
class IntervalPrior:
    """Independent uniform draws for every edge but the last, which takes the rest."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not b:
            raise ValueError("interval prior needs bounds for at least one edge")
        for lo, hi in b:
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"interval [{lo}, {hi}] is not inside [0, 1]")
        if math.fsum(hi for _, hi in b) > 1.0 + NORMALIZATION_TOL:
            raise ValueError("interval upper bounds sum above 1; the last edge could go negative")
        object.__setattr__(self, "bounds", b)

    def draw(self, rng: np.random.Generator) -> tuple[int | None, tuple[float, ...]]:
        lo = np.array([x for x, _ in self.bounds])
        hi = np.array([x for _, x in self.bounds])
        head = lo + (hi - lo) * rng.random(len(self.bounds))
        return None, tuple(head.tolist()) + (max(0.0, 1.0 - float(head.sum())),)


@dataclass(frozen=True)
class UncertaintySpec:
    """D's priors over the adversary profile and over idle florets."""

    profile_prior: tuple[tuple[AdversaryProfile, float], ...] = ()
    factor_priors: Mapping[str, DiscretePrior | IntervalPrior] = field(default_factory=dict)

    def __post_init__(self):
        prior = tuple((p, float(w)) for p, w in self.profile_prior)
        if prior:
            _check_weights([w for _, w in prior])
        object.__setattr__(self, "profile_prior", prior)
        object.__setattr__(self, "factor_priors", dict(sorted(self.factor_priors.items())))

    @property
    def is_empty(self) -> bool:
        return not self.profile_prior and not self.factor_priors


def _check_weights(weights: Sequence[float]) -> None:
    if any(w < 0 for w in weights) or abs(math.fsum(weights) - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"prior weights must be non-negative and sum to 1, got {list(weights)}")


def _draw_index(rng: np.random.Generator, weights: Sequence[float]) -> int:
    if len(weights) == 1:
        return 0
    x = rng.random()
    acc = 0.0
    for k, w in enumerate(weights):
        acc += w
        if x < acc:
            return k
    return max(k for k, w in enumerate(weights) if w > 0)


def monte_carlo_score(model: StagedTree, idle: Mapping | None, d: Intervention, unc: UncertaintySpec,
                      u: DefenderUtility | None = None, samples: int = 1000, seed: int = 0
                      ) -> tuple[float, float]:
    """Mean and standard error of the score over draws from ``unc``.

    Sample ``i`` uses its own generator seeded with ``(seed, i)``, so the
    result does not depend on evaluation order.
    """
    if samples < 1:
        raise ValueError("samples must be a positive integer")
    if unc.is_empty:
        raise ValueError("uncertainty spec has empty priors")
    idle = _factors(model, idle)
    for sid in unc.factor_priors:
        if sid not in model.stage_index:
            raise ValueError(f"factor prior for unknown stage {sid}")
    cacheable = all(isinstance(p, DiscretePrior) for p in unc.factor_priors.values())
    cache: dict[tuple, float] = {}
    out = np.empty(samples, dtype=np.float64)
    for i in range(samples):
        rng = np.random.default_rng([seed, i])
        if unc.profile_prior:
            k = _draw_index(rng, [w for _, w in unc.profile_prior])
            profile = unc.profile_prior[k][0]
        else:
            k, profile = -1, None
        draws = {}
        key = [k]
        for sid, prior in unc.factor_priors.items():
            j, probs = prior.draw(rng)
            key.append(j)
            draws[sid] = FloretDistribution(sid, probs)
        key = tuple(key)
        if cacheable and key in cache:
            out[i] = cache[key]
            continue
        f = idle.updated(draws) if draws else idle
        out[i] = seu_score(model, f, d, profile, u)
        if cacheable:
            cache[key] = out[i]
    # centring on the first draw keeps a zero-variance prior exact
    mean = float(out[0] + np.mean(out - out[0]))
    se = float(np.std(out, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return mean, se


def renormalized(probs: Sequence[float], index: int, value: float) -> tuple[float, ...]:
    """Set edge ``index`` to ``value`` and rescale the others to keep the sum at 1."""
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"sweep value {value} outside [0, 1]")
    probs = list(probs)
    if not 0 <= index < len(probs):
        raise ValueError(f"edge index {index} out of range for a floret of size {len(probs)}")
    rest = math.fsum(p for j, p in enumerate(probs) if j != index)
    if rest == 0.0:
        if value != 1.0:
            raise ValueError("cannot renormalise: the remaining edges carry no mass")
        scale = 0.0
    else:
        scale = (1.0 - value) / rest
    return tuple(value if j == index else p * scale for j, p in enumerate(probs))


def parameter_sweep(model: StagedTree, idle: Mapping | None, d: Intervention, profile,
                    u: DefenderUtility | None, parameter: tuple[str, int], grid: Sequence[float]
                    ) -> list[tuple[float, float]]:
    """Score ``d`` with one idle floret entry moved across ``grid``."""
    idle = _factors(model, idle)
    stage, index = parameter
    if stage not in model.stage_index:
        raise ValueError(f"unknown stage {stage}")
    out = []
    for v in grid:
        f = idle.updated({stage: renormalized(idle[stage].probs, index, float(v))})
        out.append((float(v), seu_score(model, f, d, profile, u)))
    return out
