"""End-to-end seeded federated simulation.

One experiment: partition a task across K clients, then for T rounds select
clients, train locally, inject the configured attack into the malicious
subset, optionally filter the round through the forecast-based anomaly
filter, aggregate, and record metrics. Everything downstream of the config
(including every random draw) is reproducible bit-for-bit.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import attacks as atk
from .aggregators import AggregationInput, make_aggregator
from .datasets import ClientState, Dataset, load_idx_subset, make_blobs_task, partition_dirichlet
from .errors import ConfigError
from .filtering import AnomalyScores, amend_matrix, filter_round, sample_param_indices
from .mar import HistoryWindow, UpdateMatrix
from .metrics import DetectionLedger, detection_pr
from .models import ModelSpec, accuracy, init_params, loss_and_grad
from .streams import (
    DOMAIN_INIT_MODEL,
    DOMAIN_MALICIOUS,
    DOMAIN_SELECTION,
    DOMAIN_TRAIN,
    substream,
)

TASKS = ("synthetic_logreg", "mnist_subset")
ATTACKS = ("none", "gauss", "lie", "opt", "agr_mm", "adaptive")


@dataclass
class ExperimentConfig:
    """Flat parameterization of one experiment; every field is a config key."""

    K: int = 20
    m: int = 0  # 0 -> select all K clients each round
    r: float = 0.0
    T: int = 20
    k: int = 0  # 0 -> keep m - ceil(r*m)
    l: int = 2
    d_tilde: int = 0  # 0 -> track every parameter
    als_iters: int = 100
    alpha_d: float = 0.5
    seed: int = 0
    task: str = "synthetic_logreg"
    attack: str = "none"
    aggregator: str = "fedavg"
    fallback_aggregator: str = ""  # "" -> same as aggregator
    filter_enabled: bool = True

    ridge_a: float = 0.0
    ridge_b: float = 0.0

    model: str = "logreg"
    mlp_hidden: int = 16
    epochs: int = 5
    lr: float = 0.5
    batch: int = 32
    weight_decay: float = 0.0
    weight_mode: str = "uniform"

    n_examples: int = 1200
    n_test: int = 400
    n_features: int = 16
    n_classes: int = 4
    center_spread: float = 3.0
    data_noise: float = 1.0

    idx_images: str = ""
    idx_labels: str = ""
    idx_limit: int = 2000
    test_fraction: float = 0.2

    gauss_sigma: float = 10.0
    gauss_per_coordinate: bool = False
    opt_tau: float = 1e-5
    opt_lambda_init: float = 10.0
    agr_tau: float = 1e-5
    agr_gamma_init: float = 5.0
    agr_perturbation: str = "inv_std"
    agr_literal_reciprocal: bool = False
    adaptive_knowledge: str = "omniscient"
    adaptive_window: int = 2
    attack_fixed_ids: bool = False
    attack_start: int = 1  # rounds before this are attack-free

    trim_beta: float = 0.2
    agg_num_malicious: int = -1  # -1 -> 0 when filtering, ceil(r*m) otherwise
    krum_k_select: int = 0  # 0 -> inputs minus assumed malicious
    dnc_niters: int = 5
    dnc_filter_frac: float = 1.0
    dnc_sub_dim: int = 0  # 0 -> min(d, 500)

    export_scores: bool = True
    export_trajectories: bool = True

    def __post_init__(self):
        self.validate()

    @property
    def m_eff(self) -> int:
        return self.m if self.m else self.K

    @property
    def b(self) -> int:
        return math.ceil(self.r * self.m_eff)

    @property
    def k_eff(self) -> int:
        return self.k if self.k else max(1, self.m_eff - self.b)

    def validate(self) -> None:
        if not (1 <= self.m_eff <= self.K):
            raise ConfigError(f"need 1 <= m <= K, got m={self.m_eff}, K={self.K}")
        if not (0.0 <= self.r <= 1.0):
            raise ConfigError(f"r must be in [0, 1], got {self.r}")
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if not (1 <= self.k_eff <= self.m_eff):
            raise ConfigError(f"need 1 <= k <= m, got k={self.k_eff}, m={self.m_eff}")
        if self.l < 2:
            raise ConfigError(f"window size l must be >= 2, got {self.l}")
        if self.alpha_d <= 0:
            raise ConfigError(f"alpha_d must be > 0, got {self.alpha_d}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.attack not in ATTACKS:
            raise ConfigError(f"unknown attack {self.attack!r}")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, known[key])
        return cls(**kwargs)

    def to_flat_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(key: str, raw, annotation):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if annotation == "bool":
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if annotation == "int":
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if annotation == "float":
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    return text


@dataclass
class RoundRecord:
    round_id: int
    selected: tuple[int, ...]
    malicious: tuple[int, ...]
    flagged: tuple[int, ...]
    accuracy: float
    ms: float
    scores: Optional[AnomalyScores]
    precision_so_far: float
    recall_so_far: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RoundRecord]
    summary: dict
    trajectories: dict[int, list[tuple[int, np.ndarray]]]
    sampled_indices: np.ndarray
    ever_malicious: set[int]
    runtime_ms: float


def local_train(
    params: np.ndarray,
    spec: ModelSpec,
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    lr: float,
    batch: int,
    rng: np.random.Generator,
    weight_decay: float = 0.0,
) -> np.ndarray:
    """Mini-batch gradient descent on mean cross-entropy plus optional L2."""
    out = params.copy()
    n = features.shape[0]
    batch = max(1, min(batch, n))
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            sel = order[start : start + batch]
            _, grad = loss_and_grad(out, features[sel], labels[sel], spec)
            if weight_decay:
                grad = grad + weight_decay * out
            out -= lr * grad
    return out


def _load_task(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if config.task == "synthetic_logreg":
        return make_blobs_task(
            config.n_examples,
            config.n_test,
            config.n_features,
            config.n_classes,
            config.seed,
            config.center_spread,
            config.data_noise,
        )
    full = load_idx_subset(
        config.idx_images, config.idx_labels, config.idx_limit, config.seed
    )
    n_test = max(1, int(round(config.test_fraction * len(full))))
    train = Dataset(full.features[:-n_test], full.labels[:-n_test], full.n_classes)
    test = Dataset(full.features[-n_test:], full.labels[-n_test:], full.n_classes)
    return train, test


class _Experiment:
    """Mutable state threaded through the round loop."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        train, self.test = _load_task(config)
        self.clients = partition_dirichlet(train, config.K, config.alpha_d, config.seed)
        if config.task == "synthetic_logreg":
            n_features, n_classes = config.n_features, config.n_classes
        else:
            n_features = train.features.shape[1]
            n_classes = train.n_classes
        self.spec = ModelSpec(config.model, n_features, n_classes, config.mlp_hidden)
        self.global_params = init_params(self.spec, substream(config.seed, DOMAIN_INIT_MODEL))
        d = self.spec.dim
        d_tilde = config.d_tilde if config.d_tilde else d
        self.sampled = sample_param_indices(d, min(d_tilde, d), config.seed)
        self.history = HistoryWindow(capacity=config.l)
        self.ledger = DetectionLedger()
        self.memory = atk.AttackerMemory()
        self.trajectories: dict[int, list[tuple[int, np.ndarray]]] = {}
        self.ever_malicious: set[int] = set()
        self.fixed_malicious: Optional[tuple[int, ...]] = None

    def aggregator_for(self, stage: str):
        cfg = self.config
        if cfg.agg_num_malicious >= 0:
            hint = cfg.agg_num_malicious
        elif stage == "filtered":
            hint = 0  # the filter already removed the suspects
        else:
            hint = cfg.b
        name = cfg.aggregator
        if stage == "fallback" and cfg.fallback_aggregator:
            name = cfg.fallback_aggregator
        return make_aggregator(
            name,
            num_malicious=hint,
            trim_beta=cfg.trim_beta,
            krum_k_select=cfg.krum_k_select or None,
            dnc_niters=cfg.dnc_niters,
            dnc_filter_frac=cfg.dnc_filter_frac,
            dnc_sub_dim=cfg.dnc_sub_dim or None,
            seed=cfg.seed,
        )

    def aggregate(self, stage: str, pairs: list[tuple[int, np.ndarray]]) -> np.ndarray:
        weights = None
        if self.config.weight_mode == "data_size":
            sizes = np.array(
                [self.clients[cid].n_examples for cid, _ in pairs], dtype=np.float64
            )
            weights = sizes / sizes.sum()
        return self.aggregator_for(stage)(AggregationInput.from_pairs(pairs, weights))


def _select_clients(config: ExperimentConfig, t: int) -> list[int]:
    rng = substream(config.seed, DOMAIN_SELECTION, t)
    return sorted(rng.choice(config.K, size=config.m_eff, replace=False).tolist())


def _draw_malicious(exp: _Experiment, t: int, selected: list[int]) -> tuple[int, ...]:
    config = exp.config
    if config.b == 0 or config.attack == "none" or t < config.attack_start:
        return ()
    if config.attack_fixed_ids:
        if exp.fixed_malicious is None:
            rng = substream(config.seed, DOMAIN_MALICIOUS)
            exp.fixed_malicious = tuple(
                sorted(rng.choice(selected, size=config.b, replace=False).tolist())
            )
        return tuple(cid for cid in exp.fixed_malicious if cid in selected)
    rng = substream(config.seed, DOMAIN_MALICIOUS, t)
    return tuple(sorted(rng.choice(selected, size=config.b, replace=False).tolist()))


def _craft_attack(
    exp: _Experiment,
    t: int,
    malicious: tuple[int, ...],
    honest: dict[int, np.ndarray],
) -> dict[int, np.ndarray]:
    config = exp.config
    if not malicious or config.attack == "none":
        return {}
    benign_pairs = [(cid, vec) for cid, vec in sorted(honest.items()) if cid not in malicious]
    ctx = atk.AttackContext(
        benign_updates=benign_pairs,
        malicious_ids=malicious,
        global_model=exp.global_params.copy(),
        rng_seed=config.seed,
        round_id=t,
    )
    honest_mal = {cid: honest[cid] for cid in malicious}
    if config.attack == "gauss":
        return atk.attack_gauss(
            ctx, honest_mal, config.gauss_sigma, config.gauss_per_coordinate
        )
    if config.attack == "lie":
        return atk.attack_lie(ctx)
    if config.attack == "opt":
        aggregate = lambda pairs: exp.aggregate("standalone", pairs)
        crafted, _ = atk.attack_opt(ctx, aggregate, config.opt_tau, config.opt_lambda_init)
        return crafted
    if config.attack == "agr_mm":
        crafted, _ = atk.attack_agr_mm(
            ctx,
            config.agr_tau,
            config.agr_gamma_init,
            config.agr_perturbation,
            config.agr_literal_reciprocal,
        )
        return crafted
    # adaptive: craft from past own history, then remember this round's models
    if config.adaptive_knowledge == "omniscient":
        coords = exp.sampled
    else:
        coords = np.arange(exp.spec.dim - exp.sampled.size, exp.spec.dim)
    crafted = {}
    if len(exp.memory.rounds) >= 2:
        crafted = atk.attack_adaptive(
            ctx,
            honest_mal,
            exp.memory,
            config.adaptive_knowledge,
            exp.sampled,
            window=config.adaptive_window,
            iters=config.als_iters,
        )
    own = np.stack([honest_mal[cid][coords] for cid in sorted(malicious)], axis=1)
    exp.memory.push(own)
    return crafted


def run_round(exp: _Experiment, t: int) -> RoundRecord:
    config = exp.config
    started = time.perf_counter()

    selected = _select_clients(config, t)
    malicious = _draw_malicious(exp, t, selected)
    exp.ever_malicious.update(malicious)

    honest: dict[int, np.ndarray] = {}
    for cid in selected:
        client = exp.clients[cid]
        honest[cid] = local_train(
            exp.global_params,
            exp.spec,
            client.features,
            client.labels,
            config.epochs,
            config.lr,
            config.batch,
            substream(config.seed, DOMAIN_TRAIN, t, cid),
            config.weight_decay,
        )
    sent = dict(honest)
    sent.update(_craft_attack(exp, t, malicious, honest))

    observed = UpdateMatrix(
        np.stack([sent[cid][exp.sampled] for cid in selected], axis=1),
        tuple(selected),
        t,
    )
    for cid in selected:
        exp.trajectories.setdefault(cid, []).append((t, sent[cid][exp.sampled].copy()))

    scores: Optional[AnomalyScores] = None
    flagged: tuple[int, ...] = ()
    if config.filter_enabled and t == 1:
        pairs = [(cid, sent[cid]) for cid in selected]
        new_global = exp.aggregate("fallback", pairs)
        exp.history.push(observed)
    elif config.filter_enabled:
        kept, scores, _model = filter_round(
            exp.history,
            observed,
            exp.global_params[exp.sampled],
            config.k_eff,
            iters=config.als_iters,
            ridge_a=config.ridge_a,
            ridge_b=config.ridge_b,
        )
        flagged = tuple(sorted(set(selected) - kept))
        exp.ledger.record(flagged, malicious)
        pairs = [(cid, sent[cid]) for cid in sorted(kept)]
        new_global = exp.aggregate("filtered", pairs)
        amended = amend_matrix(
            observed, set(flagged), exp.history.newest, exp.global_params[exp.sampled]
        )
        exp.history.push(amended)
    else:
        pairs = [(cid, sent[cid]) for cid in selected]
        new_global = exp.aggregate("standalone", pairs)
        exp.history.push(observed)

    exp.global_params = np.asarray(new_global, dtype=np.float64)
    acc = accuracy(exp.global_params, exp.test.features, exp.test.labels, exp.spec)

    if exp.ledger.rounds:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            precision, recall = detection_pr(exp.ledger)
    else:
        precision, recall = 1.0, 1.0
    ms = (time.perf_counter() - started) * 1000.0
    return RoundRecord(
        t, tuple(selected), malicious, flagged, acc, ms, scores, precision, recall
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run T sequential rounds and summarize."""
    started = time.perf_counter()
    exp = _Experiment(config)
    records = [run_round(exp, t) for t in range(1, config.T + 1)]
    runtime_ms = (time.perf_counter() - started) * 1000.0

    best = max(rec.accuracy for rec in records)
    final = records[-1].accuracy
    summary = {
        "config": config.to_flat_dict(),
        "best_accuracy": best,
        "final_accuracy": final,
        "precision": records[-1].precision_so_far,
        "recall": records[-1].recall_so_far,
        "detection_rounds": len(exp.ledger.rounds),
        "rounds": config.T,
    }
    return ExperimentResult(
        config,
        records,
        summary,
        exp.trajectories,
        exp.sampled,
        exp.ever_malicious,
        runtime_ms,
    )
