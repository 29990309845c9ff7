"""Bilinear matrix autoregression over per-round update matrices.

The server stacks the local models received in one round into a parameters x
clients matrix. A first-order bilinear recurrence (left coefficient acting on
parameter rows, right coefficient mixing client columns) is fit to a short
sliding window of those matrices by alternating least squares: each half-step
is the exact closed-form minimizer of the squared Frobenius one-step-ahead
error in that coefficient block, with an optional ridge added inside the
inverted Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateHistory, DimensionMismatch, RidgeExhausted, SingularSystem
from .linalg import as_matrix, frobenius_norm_sq, load_matrices, save_matrices, solve_spd

DEFAULT_ITERS = 100
CONVERGENCE_TOL = 1e-9
RIDGE_GROWTH = 10.0
RIDGE_SPAN = 1e6  # give up once the ridge exceeds RIDGE_SPAN x its initial value


@dataclass(frozen=True)
class UpdateMatrix:
    """One round's sampled local models: column c holds client_ids[c]'s update."""

    values: np.ndarray
    client_ids: tuple[int, ...]
    round_id: int

    def __post_init__(self):
        values = as_matrix(self.values, "update matrix")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "client_ids", tuple(int(c) for c in self.client_ids))
        if len(self.client_ids) != values.shape[1]:
            raise DimensionMismatch(
                f"{len(self.client_ids)} client ids for {values.shape[1]} columns"
            )
        if len(set(self.client_ids)) != len(self.client_ids):
            raise DimensionMismatch("client ids must be unique")

    def column(self, client_id: int) -> np.ndarray:
        return self.values[:, self.client_ids.index(client_id)]

    def with_values(self, values: np.ndarray) -> "UpdateMatrix":
        return UpdateMatrix(values, self.client_ids, self.round_id)


@dataclass
class HistoryWindow:
    """Sliding window of at most `capacity` update matrices, oldest first."""

    capacity: int
    window: list[UpdateMatrix] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 2:
            raise ValueError("window capacity must be >= 2")
        for prev, cur in zip(self.window, self.window[1:]):
            self._check_compatible(prev, cur)

    @staticmethod
    def _check_compatible(prev: UpdateMatrix, cur: UpdateMatrix) -> None:
        if cur.values.shape != prev.values.shape:
            raise DimensionMismatch(
                f"window holds {prev.values.shape} matrices, got {cur.values.shape}"
            )
        if cur.round_id != prev.round_id + 1:
            raise DimensionMismatch(
                f"round ids must be consecutive, got {cur.round_id} "
                f"after {prev.round_id}"
            )

    def push(self, matrix: UpdateMatrix) -> None:
        if self.window:
            self._check_compatible(self.window[-1], matrix)
        self.window.append(matrix)
        if len(self.window) > self.capacity:
            del self.window[: len(self.window) - self.capacity]

    def __len__(self) -> int:
        return len(self.window)

    @property
    def newest(self) -> UpdateMatrix:
        return self.window[-1]

    @property
    def round_ids(self) -> list[int]:
        return [m.round_id for m in self.window]


@dataclass(frozen=True)
class MarModel:
    """Fitted coefficients: forecast(next) = a_coef @ last @ b_coef."""

    a_coef: np.ndarray
    b_coef: np.ndarray
    ridge_a: float
    ridge_b: float
    iters_used: int

    def __post_init__(self):
        a = as_matrix(self.a_coef, "a_coef")
        b = as_matrix(self.b_coef, "b_coef")
        if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
            raise DimensionMismatch("coefficient matrices must be square")
        object.__setattr__(self, "a_coef", a)
        object.__setattr__(self, "b_coef", b)


def _training_pairs(history: HistoryWindow) -> list[tuple[np.ndarray, np.ndarray]]:
    if len(history) < 2:
        raise DegenerateHistory(
            f"need at least 2 history matrices, have {len(history)}"
        )
    mats = [m.values for m in history.window]
    return [(mats[i], mats[i + 1]) for i in range(len(mats) - 1)]


class _RidgeState:
    """Holds one coefficient block's ridge, escalating x10 on singular solves."""

    def __init__(self, initial: float):
        self.initial = float(initial)
        self.current = float(initial)
        self._base = None  # set on first escalation when initial == 0

    def solve(self, gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        while True:
            try:
                return solve_spd(gram, rhs, self.current)
            except SingularSystem:
                self._escalate(gram)

    def _escalate(self, gram: np.ndarray) -> None:
        if self._base is None:
            if self.initial > 0:
                self._base = self.initial
            else:
                # scale-aware floor so an exactly-zero requested ridge can grow
                n = gram.shape[0]
                self._base = 1e-10 * (1.0 + float(np.trace(gram)) / n)
        nxt = self._base if self.current == 0.0 else self.current * RIDGE_GROWTH
        if nxt > RIDGE_SPAN * self._base:
            raise RidgeExhausted(
                f"ridge escalated past {RIDGE_SPAN:g} x initial ({self._base:g})"
            )
        self.current = nxt


def estimate_mar(
    history: HistoryWindow,
    iters: int = DEFAULT_ITERS,
    ridge_a: float = 0.0,
    ridge_b: float = 0.0,
) -> MarModel:
    """Fit the bilinear recurrence to consecutive pairs in the window.

    The right coefficient starts at the identity and the left block is solved
    first, so the opening half-step is a plain multi-target least squares.
    Iteration stops at `iters` or once both blocks move less than 1e-9 in
    Frobenius norm over a full sweep.
    """
    pairs = _training_pairs(history)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    d = pairs[0][0].shape[0]
    m = pairs[0][0].shape[1]

    a = np.eye(d)
    b = np.eye(m)
    state_a = _RidgeState(ridge_a)
    state_b = _RidgeState(ridge_b)
    used = 0
    for _ in range(iters):
        used += 1
        # Left block: minimize sum ||Y - A (X B)||^2 (+ ridge ||A||^2).
        gram_a = np.zeros((d, d))
        rhs_a = np.zeros((d, d))
        for x, y in pairs:
            w = x @ b
            gram_a += w @ w.T
            rhs_a += w @ y.T  # transposed system: (gram + ridge I) A^T = rhs
        a_new = state_a.solve(gram_a, rhs_a).T

        # Right block: minimize sum ||Y - (A X) B||^2 (+ ridge ||B||^2).
        gram_b = np.zeros((m, m))
        rhs_b = np.zeros((m, m))
        for x, y in pairs:
            z = a_new @ x
            gram_b += z.T @ z
            rhs_b += z.T @ y
        b_new = state_b.solve(gram_b, rhs_b)

        moved = max(np.linalg.norm(a_new - a), np.linalg.norm(b_new - b))
        a, b = a_new, b_new
        if moved < CONVERGENCE_TOL:
            break

    return MarModel(a, b, state_a.current, state_b.current, used)


def forecast(model: MarModel, last: UpdateMatrix) -> UpdateMatrix:
    """One-step-ahead prediction, keeping `last`'s client-id column map."""
    d, m = last.values.shape
    if model.a_coef.shape[0] != d or model.b_coef.shape[0] != m:
        raise DimensionMismatch(
            f"model is {model.a_coef.shape[0]}x{model.b_coef.shape[0]}, "
            f"matrix is {d}x{m}"
        )
    predicted = model.a_coef @ last.values @ model.b_coef
    return UpdateMatrix(predicted, last.client_ids, last.round_id + 1)


def mar_loss(model: MarModel, history: HistoryWindow) -> float:
    """Sum of squared Frobenius one-step prediction errors over the window."""
    total = 0.0
    for x, y in _training_pairs(history):
        total += frobenius_norm_sq(y - model.a_coef @ x @ model.b_coef)
    return total


def save_model(path, model: MarModel) -> None:
    save_matrices(path, [model.a_coef, model.b_coef])


def load_model(path, ridge_a: float = 0.0, ridge_b: float = 0.0) -> MarModel:
    mats = load_matrices(path)
    if len(mats) != 2:
        raise DimensionMismatch(f"expected 2 matrices in {path}, found {len(mats)}")
    return MarModel(mats[0], mats[1], ridge_a, ridge_b, 0)
