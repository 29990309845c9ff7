"""Aggregation rules mapping one round's local models to a global model.

All rules canonicalize their input by ascending client id, so the result is
invariant to the order updates arrive in; remaining ties (equal scores) also
break by ascending id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, OvertrimError, TooFewClients
from .linalg import top_right_singular_vector
from .streams import DOMAIN_DNC, substream


@dataclass(frozen=True)
class AggregationInput:
    """Local models for one round, keyed by client id, optionally weighted."""

    ids: tuple[int, ...]
    matrix: np.ndarray  # m x d, row i belongs to ids[i]; rows id-sorted
    weights: np.ndarray | None = None

    @classmethod
    def from_pairs(cls, pairs, weights=None) -> "AggregationInput":
        pairs = list(pairs)
        if not pairs:
            raise TooFewClients("need at least one local model")
        if weights is not None:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != (len(pairs),):
                raise DimensionMismatch("one weight per local model required")
            if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
                raise DimensionMismatch("weights must be non-negative and sum to 1")
            order = np.argsort([cid for cid, _ in pairs], kind="stable")
            weights = weights[order]
        pairs.sort(key=lambda item: item[0])
        ids = tuple(int(cid) for cid, _ in pairs)
        if len(set(ids)) != len(ids):
            raise DimensionMismatch("client ids must be unique")
        vectors = [np.asarray(v, dtype=np.float64).ravel() for _, v in pairs]
        d = vectors[0].shape[0]
        if any(v.shape[0] != d for v in vectors):
            raise DimensionMismatch("all local models must have the same dimension")
        matrix = np.stack(vectors, axis=0)
        if not np.all(np.isfinite(matrix)):
            raise DimensionMismatch("local models contain non-finite entries")
        return cls(ids, matrix, weights)

    @property
    def m(self) -> int:
        return len(self.ids)


def fed_avg(inp: AggregationInput) -> np.ndarray:
    """Weighted mean, uniform when no weights are given."""
    if inp.weights is None:
        return np.mean(inp.matrix, axis=0)
    return inp.weights @ inp.matrix


def fed_median(inp: AggregationInput) -> np.ndarray:
    """Coordinate-wise median; even counts average the two middle values."""
    return np.median(inp.matrix, axis=0)


def trimmed_mean(inp: AggregationInput, beta: float) -> np.ndarray:
    """Drop the floor(beta*m) largest and smallest values per coordinate."""
    if not (0.0 <= beta < 0.5):
        raise OvertrimError(f"beta must be in [0, 0.5), got {beta}")
    cut = int(math.floor(beta * inp.m))
    if inp.m - 2 * cut < 1:
        raise OvertrimError(f"trimming {cut} per side leaves no values out of {inp.m}")
    ordered = np.sort(inp.matrix, axis=0)
    kept = ordered[cut : inp.m - cut]
    return np.mean(kept, axis=0)


def _pairwise_sq_dists(matrix: np.ndarray) -> np.ndarray:
    diffs = matrix[:, None, :] - matrix[None, :, :]
    return np.einsum("ijk,ijk->ij", diffs, diffs)


def _krum_scores(matrix: np.ndarray, num_malicious: int) -> np.ndarray:
    """Per model: summed squared distances to its n - b - 2 nearest peers."""
    n = matrix.shape[0]
    neighbors = max(0, n - num_malicious - 2)
    dists = _pairwise_sq_dists(matrix)
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(dists[i], i)
        others.sort()
        scores[i] = others[:neighbors].sum()
    return scores


def multi_krum(inp: AggregationInput, num_malicious: int, k_select: int) -> np.ndarray:
    """Average of the k_select models with the lowest Krum scores.

    k_select = 1 degenerates to plain Krum.
    """
    if inp.m < num_malicious + 3:
        raise TooFewClients(
            f"Krum needs m >= b + 3, got m={inp.m}, b={num_malicious}"
        )
    if not (1 <= k_select <= inp.m):
        raise TooFewClients(f"need 1 <= k_select <= {inp.m}, got {k_select}")
    scores = _krum_scores(inp.matrix, num_malicious)
    order = sorted(range(inp.m), key=lambda i: (scores[i], inp.ids[i]))
    chosen = sorted(order[:k_select])  # id order = row order after canonicalization
    return np.mean(inp.matrix[chosen], axis=0)


def bulyan(inp: AggregationInput, num_malicious: int) -> np.ndarray:
    """Two-stage rule: repeated Krum selection, then a trimmed coordinate mean.

    Krum (single winner) runs alpha = m - 2b times on a shrinking pool; over
    the alpha winners, each coordinate averages the beta = alpha - 2b values
    closest to that coordinate's median.
    """
    b = num_malicious
    if inp.m < 4 * b + 3:
        raise TooFewClients(f"Bulyan needs m >= 4b + 3, got m={inp.m}, b={b}")
    alpha = inp.m - 2 * b
    beta = alpha - 2 * b

    pool = list(range(inp.m))
    winners = []
    for _ in range(alpha):
        sub = inp.matrix[pool]
        scores = _krum_scores(sub, b)
        best = min(range(len(pool)), key=lambda i: (scores[i], inp.ids[pool[i]]))
        winners.append(pool.pop(best))

    winners.sort()  # canonical coordinate-stage order for tie stability
    selected = inp.matrix[winners]
    med = np.median(selected, axis=0)
    dist = np.abs(selected - med)
    keep = np.sort(np.argsort(dist, axis=0, kind="stable")[:beta], axis=0)
    return np.mean(np.take_along_axis(selected, keep, axis=0), axis=0)


def dnc(
    inp: AggregationInput,
    niters: int,
    filter_frac: float,
    sub_dim: int,
    num_malicious: int,
    seed: int,
) -> np.ndarray:
    """Spectral outlier filter: drop the largest projections, average the rest.

    Each iteration subsamples sub_dim coordinates, centers the slice, projects
    every centered row on its top right singular direction, and marks the
    ceil(filter_frac * num_malicious) largest squared projections as outliers.
    Clients marked in no iteration are averaged; if everyone was marked, the
    single client with the lowest total squared projection is returned.
    """
    if inp.m < 2:
        raise TooFewClients("spectral filtering needs at least 2 local models")
    d = inp.matrix.shape[1]
    if not (1 <= sub_dim <= d):
        raise DimensionMismatch(f"need 1 <= sub_dim <= {d}, got {sub_dim}")
    remove = math.ceil(filter_frac * num_malicious)

    marked = np.zeros(inp.m, dtype=bool)
    totals = np.zeros(inp.m)
    for it in range(niters):
        rng = substream(seed, DOMAIN_DNC, it)
        coords = np.sort(rng.choice(d, size=sub_dim, replace=False))
        sliced = inp.matrix[:, coords]
        centered = sliced - np.mean(sliced, axis=0)
        direction = top_right_singular_vector(
            centered, iters=50, seed=int(rng.integers(2**63))
        )
        proj_sq = (centered @ direction) ** 2
        totals += proj_sq
        if remove > 0:
            order = sorted(range(inp.m), key=lambda i: (-proj_sq[i], inp.ids[i]))
            marked[order[:remove]] = True

    kept = [i for i in range(inp.m) if not marked[i]]
    if not kept:
        survivor = min(range(inp.m), key=lambda i: (totals[i], inp.ids[i]))
        kept = [survivor]
    return np.mean(inp.matrix[kept], axis=0)


AGGREGATOR_NAMES = ("fedavg", "fedmedian", "trimmed_mean", "multi_krum", "bulyan", "dnc")


def make_aggregator(
    name: str,
    *,
    num_malicious: int = 0,
    trim_beta: float = 0.2,
    krum_k_select: int | None = None,
    dnc_niters: int = 5,
    dnc_filter_frac: float = 1.0,
    dnc_sub_dim: int | None = None,
    seed: int = 0,
):
    """Build an `AggregationInput -> vector` callable from a config string.

    `krum_k_select=None` keeps m - num_malicious models; `dnc_sub_dim=None`
    subsamples min(d, 500) coordinates.
    """
    if name == "fedavg":
        return fed_avg
    if name == "fedmedian":
        return fed_median
    if name == "trimmed_mean":
        return lambda inp: trimmed_mean(inp, trim_beta)
    if name == "multi_krum":

        def _mk(inp: AggregationInput) -> np.ndarray:
            k = krum_k_select if krum_k_select is not None else max(1, inp.m - num_malicious)
            return multi_krum(inp, num_malicious, min(k, inp.m))

        return _mk
    if name == "bulyan":
        return lambda inp: bulyan(inp, num_malicious)
    if name == "dnc":

        def _dnc(inp: AggregationInput) -> np.ndarray:
            sub = dnc_sub_dim if dnc_sub_dim is not None else min(inp.matrix.shape[1], 500)
            return dnc(inp, dnc_niters, dnc_filter_frac, sub, num_malicious, seed)

        return _dnc
    raise ValueError(f"unknown aggregator {name!r}, expected one of {AGGREGATOR_NAMES}")
