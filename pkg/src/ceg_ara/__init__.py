"""Causal algebras on staged trees with a rational-adversary layer.

The package scores a defender's interventions on an event process described
by a staged tree (equivalently a chain event graph). Interventions replace
stage florets; an adversary who learns of an intervention reacts by the
expected-utility maximising choice, which is folded back into the florets.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .adversary import (NO_CHANGE, AdversaryProfile, Capability, KnowledgeModel, Reaction, ReactionSchema,
                        TriggerSpec, UtilitySpec, adversary_seu, best_response, embellish_graph,
                        reaction_distribution, reaction_space, simplify_graph)
from .algebra import (Intervention, apply_intervention, atom_probabilities, atom_probability,
                      event_probability, intervened_distribution, marginalize)
from .bayesnet import BayesNet, BnIntervention, bn_do_distribution, bn_query
from .decision import (DefenderUtility, DiscretePrior, IntervalPrior, ScoreReport, UncertaintySpec,
                       monte_carlo_score, parameter_sweep, score_table, seu_score)
from .dynamic import (DcegModel, DynamicIntervention, cumulative_discovery, dynamic_delta_score,
                      unfold_dceg)
from .factors import FactorPartition, FactorSet, FloretDistribution, partition_factors, validate_factor_set
from .graph import (Atom, EventTree, Stage, StagedTree, StructureError, ceg_positions, enumerate_atoms,
                    validate_staged_tree)
from .models import ModelBundle, ModelError, builtin_model, load_model, save_model

__all__ = [
    "BACKEND", "NO_CHANGE", "AdversaryProfile", "Atom", "BayesNet", "BnIntervention", "Capability",
    "DcegModel", "DefenderUtility", "DiscretePrior", "DynamicIntervention", "EventTree", "FactorPartition",
    "FactorSet", "FloretDistribution", "IntervalPrior", "Intervention", "KnowledgeModel", "ModelBundle",
    "ModelError", "Reaction", "ReactionSchema", "ScoreReport", "Stage", "StagedTree", "StructureError",
    "TriggerSpec", "UncertaintySpec", "UtilitySpec", "adversary_seu", "apply_intervention",
    "atom_probabilities", "atom_probability", "best_response", "bn_do_distribution", "bn_query",
    "builtin_model", "ceg_positions", "cumulative_discovery", "dynamic_delta_score", "embellish_graph",
    "enumerate_atoms", "event_probability", "intervened_distribution", "load_model", "marginalize",
    "monte_carlo_score", "parameter_sweep", "partition_factors", "reaction_distribution", "reaction_space",
    "save_model", "score_table", "seu_score", "simplify_graph", "unfold_dceg", "validate_factor_set",
    "validate_staged_tree",
]
