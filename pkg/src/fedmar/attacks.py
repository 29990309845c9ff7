"""Untargeted model-poisoning strategies.

Each attack perturbs the malicious clients' honestly trained local models
post hoc, with full (omniscient) visibility of the benign updates of the
round. Every draw is keyed by (master seed, round, client), so reruns craft
bit-identical payloads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from .errors import DegenerateHistory, DegenerateStatistics
from .mar import HistoryWindow, UpdateMatrix, estimate_mar, forecast
from .streams import DOMAIN_ATTACK, substream

QUANTILE_CLIP = 1e-6  # keeps the inverse-normal finite once b >= n/2


@dataclass(frozen=True)
class AttackContext:
    """Round-local view handed to an attack."""

    benign_updates: list[tuple[int, np.ndarray]]
    malicious_ids: tuple[int, ...]
    global_model: np.ndarray
    rng_seed: int
    round_id: int


@dataclass
class HalvingSearchInfo:
    """Outcome of a geometric halving search."""

    final_value: float
    iterations: int
    succeeded: bool


def _benign_matrix(ctx: AttackContext) -> np.ndarray:
    if not ctx.benign_updates:
        raise DegenerateStatistics("no benign updates visible")
    return np.stack([v for _, v in ctx.benign_updates], axis=0)


def attack_gauss(
    ctx: AttackContext,
    honest_locals: dict[int, np.ndarray],
    sigma: float,
    per_coordinate: bool = False,
) -> dict[int, np.ndarray]:
    """Add zero-mean Gaussian noise of scale sigma to each malicious model.

    By default one scalar draw per client per round is added to every
    parameter; per_coordinate=True draws independent noise per parameter.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    crafted = {}
    for cid in ctx.malicious_ids:
        rng = substream(ctx.rng_seed, DOMAIN_ATTACK, ctx.round_id, cid)
        base = honest_locals[cid]
        if per_coordinate:
            noise = rng.normal(0.0, sigma, size=base.shape)
        else:
            noise = rng.normal(0.0, sigma)
        crafted[cid] = base + noise
    return crafted


def lie_z_score(n: int, b: int) -> float:
    """Deviation multiplier: how far below the benign mean stays plausible.

    s = floor(n/2) + 1 - b supporters are needed for a majority; the quantile
    argument (n - b - s) / (n - b) leaves (0, 1) once b >= n/2, so it is
    clipped, capping z at roughly +/-4.75.
    """
    if n - b < 2:
        raise DegenerateStatistics(f"need >= 2 benign updates, got {n - b}")
    s = math.floor(n / 2) + 1 - b
    q = (n - b - s) / (n - b)
    q = min(max(q, QUANTILE_CLIP), 1.0 - QUANTILE_CLIP)
    return float(scipy.special.ndtri(q))


def attack_lie(ctx: AttackContext) -> dict[int, np.ndarray]:
    """All malicious clients send mean - z * std of the benign updates."""
    benign = _benign_matrix(ctx)
    if benign.shape[0] < 2:
        raise DegenerateStatistics("need >= 2 benign updates")
    n = benign.shape[0] + len(ctx.malicious_ids)
    z = lie_z_score(n, len(ctx.malicious_ids))
    mu = np.mean(benign, axis=0)
    sd = np.std(benign, axis=0)
    payload = mu - z * sd
    return {cid: payload.copy() for cid in ctx.malicious_ids}


def attack_opt(
    ctx: AttackContext,
    aggregate,
    tau: float,
    lambda_init: float = 10.0,
) -> tuple[dict[int, np.ndarray], HalvingSearchInfo]:
    """Push the aggregate along the negated sign of the benign mean.

    The candidate mean + lambda * s is halved until the poisoned aggregate
    lands strictly closer to the candidate than to the clean aggregate, or
    lambda drops below tau (recorded as a failure, the last candidate is
    still emitted). `aggregate` maps a list of (client_id, vector) pairs to
    the aggregated vector, mirroring the server's configured rule.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    benign = _benign_matrix(ctx)
    mu = np.mean(benign, axis=0)
    direction = -np.sign(mu)
    clean = aggregate(list(ctx.benign_updates))

    lam = float(lambda_init)
    iterations = 0
    succeeded = False
    candidate = mu + lam * direction
    while lam >= tau:
        iterations += 1
        candidate = mu + lam * direction
        poisoned_inputs = list(ctx.benign_updates) + [
            (cid, candidate) for cid in ctx.malicious_ids
        ]
        poisoned = aggregate(poisoned_inputs)
        if np.linalg.norm(poisoned - candidate) < np.linalg.norm(poisoned - clean):
            succeeded = True
            break
        lam /= 2.0
    info = HalvingSearchInfo(lam, iterations, succeeded)
    return {cid: candidate.copy() for cid in ctx.malicious_ids}, info


def attack_agr_mm(
    ctx: AttackContext,
    tau: float,
    gamma_init: float = 5.0,
    perturbation: str = "inv_std",
    literal_reciprocal: bool = False,
) -> tuple[dict[int, np.ndarray], HalvingSearchInfo]:
    """Scaled perturbation of the benign mean under the min-max constraint.

    gamma halves from gamma_init until the crafted model's largest distance
    to any benign update is no greater than the largest pairwise distance
    among the benign updates, or gamma falls below tau.

    perturbation="unit_vector" uses the negated normalized benign mean;
    "inv_std" uses the negated, unit-normalized coordinate standard
    deviations (set literal_reciprocal=True for the element-wise reciprocal
    reading instead).
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    benign = _benign_matrix(ctx)
    if benign.shape[0] < 2:
        raise DegenerateStatistics("need >= 2 benign updates")
    mu = np.mean(benign, axis=0)

    if perturbation == "unit_vector":
        norm = np.linalg.norm(mu)
        vec = np.zeros_like(mu) if norm == 0 else -mu / norm
    elif perturbation == "inv_std":
        sd = np.std(benign, axis=0)
        if literal_reciprocal:
            with np.errstate(divide="ignore"):
                vec = np.where(sd > 0, 1.0 / np.where(sd > 0, sd, 1.0), 0.0)
            vec = -vec
        else:
            vec = -sd
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
    else:
        raise ValueError(f"unknown perturbation {perturbation!r}")

    max_pairwise = 0.0
    for i in range(benign.shape[0]):
        dists = np.linalg.norm(benign - benign[i], axis=1)
        max_pairwise = max(max_pairwise, float(np.max(dists)))

    gamma = float(gamma_init)
    iterations = 0
    succeeded = False
    while gamma >= tau:
        iterations += 1
        candidate = mu + gamma * vec
        worst = float(np.max(np.linalg.norm(benign - candidate, axis=1)))
        if worst <= max_pairwise:
            succeeded = True
            break
        gamma /= 2.0
    candidate = mu + gamma * vec
    info = HalvingSearchInfo(gamma, iterations, succeeded)
    return {cid: candidate.copy() for cid in ctx.malicious_ids}, info


@dataclass
class AttackerMemory:
    """Per-round snapshots of the models the attacker's clients sent."""

    rounds: list[np.ndarray] = field(default_factory=list)  # each d_tilde' x b

    def push(self, matrix: np.ndarray) -> None:
        self.rounds.append(np.asarray(matrix, dtype=np.float64))


def attack_adaptive(
    ctx: AttackContext,
    honest_locals: dict[int, np.ndarray],
    own_history: AttackerMemory,
    knowledge: str,
    sampled_indices: np.ndarray,
    window: int = 2,
    iters: int = 100,
) -> dict[int, np.ndarray]:
    """Forecast-substitution attack against a forecasting-based filter.

    The attacker fits the same bilinear autoregression to the series of its
    own clients' past models, restricted to the coordinates it believes the
    server tracks: the server's exact sample when omniscient, or a guess (the
    tail slice of the parameter vector, i.e. the last layer) otherwise. The
    forecast values overwrite those coordinates; everything else stays at the
    honestly trained values.
    """
    if len(own_history.rounds) < 2:
        raise DegenerateHistory("adaptive attack needs >= 2 rounds of own history")
    some = next(iter(honest_locals.values()))
    d = some.shape[0]
    if knowledge == "omniscient":
        coords = np.asarray(sampled_indices, dtype=np.intp)
    elif knowledge == "non_omniscient":
        coords = np.arange(d - len(sampled_indices), d, dtype=np.intp)
    else:
        raise ValueError(f"unknown knowledge level {knowledge!r}")

    slots = tuple(range(own_history.rounds[0].shape[1]))
    hist = HistoryWindow(capacity=max(2, window))
    start = max(0, len(own_history.rounds) - max(2, window))
    for rid, mat in enumerate(own_history.rounds[start:]):
        hist.push(UpdateMatrix(mat, slots, rid))
    model = estimate_mar(hist, iters=iters)
    predicted = forecast(model, hist.newest)

    crafted = {}
    for slot, cid in enumerate(sorted(ctx.malicious_ids)):
        vec = honest_locals[cid].copy()
        if slot < predicted.values.shape[1]:
            vec[coords] = predicted.values[:, slot]
        crafted[cid] = vec
    return crafted
