"""ruletpp: weighted temporal-logic rule learning for event sequences."""

from .rules import (PredicateLibrary, Rule, TemporalRelation, WeightedRuleSet,
                    canonicalize, format_rule, jaccard, parse_rule,
                    relation_holds)
from .events import EventSequence
from .features import (COUNT_KERNEL, FeatureTrace, KernelKind, KernelSpec,
                       feature, feature_trace, valid_groundings)
from .model import (grad_loglik, intensity, log_likelihood,
                    predict_next_event_time)

__all__ = [
    "PredicateLibrary", "Rule", "TemporalRelation", "WeightedRuleSet",
    "canonicalize", "format_rule", "jaccard", "parse_rule", "relation_holds",
    "EventSequence", "COUNT_KERNEL", "FeatureTrace", "KernelKind",
    "KernelSpec", "feature", "feature_trace", "valid_groundings",
    "grad_loglik", "intensity", "log_likelihood", "predict_next_event_time",
]

__version__ = "0.1.0"
