"""Ownership-network risk analytics.

Directed firm-to-firm investment graphs with binary "discreditable" labels:
component and degree-tail statistics, label-aggregation permutation nulls,
neighbor-effect curves, distance-pattern lift, network-feature logistic
classification, and a synthetic corpus generator for end-to-end testing.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("firmnet")
except PackageNotFoundError:  # editable checkout without metadata
    __version__ = "0.0.0"

from .aggregation import (aggregation_stats, aggregation_summary,
                          null_aggregation)
from .classifier import (TrainedModel, cross_validate, likelihood,
                         precision_curve, train, weight_report)
from .features import (FEATURE_GROUPS, FeatureSchema, assemble_dataset,
                       network_features)
from .graph_store import (FirmGraph, LoadError, load_cache, load_graph,
                          save_cache)
from .propagation import (influence_by_distance, lm_curve,
                          pattern_neighbors)
from .synthgen import GenParams, generate_corpus
from .topology import (components, fit_power_law, fit_zipf, graph_stats,
                       zipf_to_powerlaw_exponent)

__all__ = [
    "__version__",
    "FirmGraph", "LoadError", "load_graph", "load_cache", "save_cache",
    "components", "graph_stats", "fit_power_law", "fit_zipf",
    "zipf_to_powerlaw_exponent",
    "aggregation_stats", "null_aggregation", "aggregation_summary",
    "lm_curve", "influence_by_distance", "pattern_neighbors",
    "FeatureSchema", "FEATURE_GROUPS", "assemble_dataset",
    "network_features",
    "TrainedModel", "train", "likelihood", "precision_curve",
    "cross_validate", "weight_report",
    "GenParams", "generate_corpus",
]
