"""Robust federated learning at desk scale.

A seeded simulator and library: clients train locally, an attacker poisons a
fraction of the uploads, a forecast-based pre-aggregation filter scores and
drops suspicious updates, and classical robust aggregation rules produce the
next global model. Built on numpy/scipy; every experiment is a pure function
of its config.
"""

from .aggregators import (
    AggregationInput,
    bulyan,
    dnc,
    fed_avg,
    fed_median,
    make_aggregator,
    multi_krum,
    trimmed_mean,
)
from .attacks import (
    AttackContext,
    attack_adaptive,
    attack_agr_mm,
    attack_gauss,
    attack_lie,
    attack_opt,
)
from .filtering import (
    AnomalyScores,
    amend_matrix,
    anomaly_scores,
    filter_round,
    sample_param_indices,
    select_top_k,
)
from .linalg import frobenius_norm_sq, solve_spd, top_right_singular_vector
from .mar import HistoryWindow, MarModel, UpdateMatrix, estimate_mar, forecast, mar_loss
from .metrics import (
    DetectionLedger,
    avg_tdmi,
    detection_pr,
    prob_at_least_one_malicious,
    tdmi,
    welch_one_tailed_t,
)
from .simulation import ExperimentConfig, RoundRecord, local_train, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AggregationInput",
    "AnomalyScores",
    "AttackContext",
    "DetectionLedger",
    "ExperimentConfig",
    "HistoryWindow",
    "MarModel",
    "RoundRecord",
    "UpdateMatrix",
    "amend_matrix",
    "anomaly_scores",
    "attack_adaptive",
    "attack_agr_mm",
    "attack_gauss",
    "attack_lie",
    "attack_opt",
    "avg_tdmi",
    "bulyan",
    "detection_pr",
    "dnc",
    "estimate_mar",
    "fed_avg",
    "fed_median",
    "filter_round",
    "forecast",
    "frobenius_norm_sq",
    "local_train",
    "make_aggregator",
    "mar_loss",
    "multi_krum",
    "prob_at_least_one_malicious",
    "run_experiment",
    "sample_param_indices",
    "select_top_k",
    "solve_spd",
    "tdmi",
    "top_right_singular_vector",
    "trimmed_mean",
    "welch_one_tailed_t",
]
