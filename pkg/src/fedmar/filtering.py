"""Pre-aggregation anomaly filter.

Each round the server forecasts the incoming update matrix from its history,
scores every selected client by the squared L2 distance between the observed
and predicted column (falling back to the distance from the current global
model for clients with no column in the forecast source), keeps the k lowest
scores, and patches the flagged columns before the matrix enters the history.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidDimension, InvalidK
from .mar import HistoryWindow, MarModel, UpdateMatrix, estimate_mar, forecast
from .streams import DOMAIN_PARAM_SAMPLE, substream


@dataclass(frozen=True)
class AnomalyScores:
    """Scores for one round; clients without an entry are undefined."""

    scores: dict[int, float]
    round_id: int

    def __post_init__(self):
        for cid, s in self.scores.items():
            if not np.isfinite(s) or s < 0:
                raise DimensionMismatch(f"score for client {cid} is {s}")

    def get(self, client_id: int) -> float | None:
        return self.scores.get(client_id)

    @property
    def defined_ids(self) -> list[int]:
        return sorted(self.scores)


def sample_param_indices(d: int, d_tilde: int, seed: int) -> np.ndarray:
    """d_tilde distinct coordinates in [0, d), uniform without replacement.

    Drawn once per experiment and reused every round; returned sorted.
    """
    if not (1 <= d_tilde <= d):
        raise InvalidDimension(f"need 1 <= d_tilde <= d, got d_tilde={d_tilde}, d={d}")
    rng = substream(seed, DOMAIN_PARAM_SAMPLE)
    idx = rng.choice(d, size=d_tilde, replace=False)
    return np.sort(idx)


def anomaly_scores(
    observed: UpdateMatrix,
    predicted: UpdateMatrix,
    global_model: np.ndarray,
    history: HistoryWindow,
) -> AnomalyScores:
    """Squared-L2 score per selected client.

    A client is warm iff it has a column in the matrix the forecast was made
    from (the newest history matrix: the prediction only exists for those
    columns); warm clients are scored against their predicted column, the
    rest against the current global model.
    """
    if observed.values.shape[0] != predicted.values.shape[0]:
        raise DimensionMismatch(
            f"observed has {observed.values.shape[0]} rows, "
            f"predicted has {predicted.values.shape[0]}"
        )
    global_model = np.asarray(global_model, dtype=np.float64)
    if global_model.shape != (observed.values.shape[0],):
        raise DimensionMismatch(
            f"global model has shape {global_model.shape}, "
            f"expected ({observed.values.shape[0]},)"
        )
    warm_ids = set(predicted.client_ids)
    scores: dict[int, float] = {}
    for cid in observed.client_ids:
        col = observed.column(cid)
        if cid in warm_ids:
            diff = col - predicted.column(cid)
        else:
            diff = global_model - col
        scores[cid] = float(diff @ diff)
    return AnomalyScores(scores, observed.round_id)


def select_top_k(scores: AnomalyScores, k: int) -> set[int]:
    """The k client ids with the smallest defined scores; ties break by id."""
    defined = sorted(scores.scores.items(), key=lambda item: (item[1], item[0]))
    if not (1 <= k <= len(defined)):
        raise InvalidK(f"need 1 <= k <= {len(defined)}, got {k}")
    return {cid for cid, _ in defined[:k]}


def amend_matrix(
    observed: UpdateMatrix,
    flagged: set[int],
    previous_amended: UpdateMatrix | None,
    global_model: np.ndarray,
) -> UpdateMatrix:
    """Replace flagged columns before the matrix enters the history.

    A flagged client's column is taken from the previous round's amended
    matrix when the client appears there (that column was legitimate or
    already patched), otherwise from the current global model.
    """
    unknown = flagged - set(observed.client_ids)
    if unknown:
        raise DimensionMismatch(f"flagged ids not in round: {sorted(unknown)}")
    global_model = np.asarray(global_model, dtype=np.float64)
    values = observed.values.copy()
    for col, cid in enumerate(observed.client_ids):
        if cid not in flagged:
            continue
        if previous_amended is not None and cid in previous_amended.client_ids:
            values[:, col] = previous_amended.column(cid)
        else:
            values[:, col] = global_model
    return observed.with_values(values)


def filter_round(
    history: HistoryWindow,
    observed: UpdateMatrix,
    global_model: np.ndarray,
    k: int,
    iters: int = 100,
    ridge_a: float = 0.0,
    ridge_b: float = 0.0,
) -> tuple[set[int], AnomalyScores, MarModel]:
    """Score one round and return (kept ids, scores, fitted model).

    With a single matrix in the history (the round right after the fallback
    round) there is no consecutive pair to train on yet, so the matrix is
    paired with itself: the stationary fit predicts each column to stay put,
    which scores clients by how far they moved from their previous update.
    The caller pushes the amended observation into the history afterwards.
    """
    if len(history) == 0:
        raise InvalidK("filter_round needs a non-empty history")
    if len(history) >= 2:
        train_window = history
    else:
        only = history.newest
        train_window = HistoryWindow(
            capacity=2,
            window=[
                UpdateMatrix(only.values, only.client_ids, only.round_id - 1),
                only,
            ],
        )
    model = estimate_mar(train_window, iters=iters, ridge_a=ridge_a, ridge_b=ridge_b)
    predicted = forecast(model, history.newest)
    scores = anomaly_scores(observed, predicted, global_model, history)
    kept = select_top_k(scores, k)
    return kept, scores, model


def write_scores_csv(path, rows) -> None:
    """Append-free dump of per-round score rows.

    Each row is (round_id, client_id, score-or-None, flagged, truth); an
    undefined score is written as "NA".
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round_id", "client_id", "score", "flagged", "truth"])
        for round_id, client_id, score, flagged, truth in rows:
            writer.writerow(
                [
                    round_id,
                    client_id,
                    "NA" if score is None else repr(float(score)),
                    str(bool(flagged)).lower(),
                    str(bool(truth)).lower(),
                ]
            )
