"""Flat-parameter classifiers trained by the simulated clients.

Models are pure functions of a flat float64 parameter vector, so the rest of
the package can treat a local model as an opaque point in R^d. Multinomial
logistic regression is the default; a one-hidden-layer tanh network is
available where a nonlinear decision surface is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelSpec:
    kind: str  # "logreg" | "mlp"
    n_features: int
    n_classes: int
    hidden: int = 16

    def __post_init__(self):
        if self.kind not in ("logreg", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")

    @property
    def dim(self) -> int:
        if self.kind == "logreg":
            return self.n_classes * self.n_features + self.n_classes
        return (
            self.hidden * self.n_features
            + self.hidden
            + self.n_classes * self.hidden
            + self.n_classes
        )


def init_params(spec: ModelSpec, rng: np.random.Generator, scale: float = 0.01) -> np.ndarray:
    return scale * rng.standard_normal(spec.dim)


def _unpack_logreg(params: np.ndarray, spec: ModelSpec):
    c, f = spec.n_classes, spec.n_features
    w = params[: c * f].reshape(c, f)
    b = params[c * f : c * f + c]
    return w, b


def _unpack_mlp(params: np.ndarray, spec: ModelSpec):
    h, f, c = spec.hidden, spec.n_features, spec.n_classes
    o = 0
    w1 = params[o : o + h * f].reshape(h, f)
    o += h * f
    b1 = params[o : o + h]
    o += h
    w2 = params[o : o + c * h].reshape(c, h)
    o += c * h
    b2 = params[o : o + c]
    return w1, b1, w2, b2


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def logits(params: np.ndarray, features: np.ndarray, spec: ModelSpec) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if spec.kind == "logreg":
        w, b = _unpack_logreg(params, spec)
        return features @ w.T + b
    w1, b1, w2, b2 = _unpack_mlp(params, spec)
    hidden = np.tanh(features @ w1.T + b1)
    return hidden @ w2.T + b2


def loss_and_grad(
    params: np.ndarray, features: np.ndarray, labels: np.ndarray, spec: ModelSpec
) -> tuple[float, np.ndarray]:
    """Mean multinomial cross-entropy and its gradient on one batch."""
    params = np.asarray(params, dtype=np.float64)
    n = features.shape[0]
    onehot = np.zeros((n, spec.n_classes))
    onehot[np.arange(n), labels] = 1.0

    if spec.kind == "logreg":
        w, b = _unpack_logreg(params, spec)
        probs = _softmax(features @ w.T + b)
        delta = (probs - onehot) / n
        grad_w = delta.T @ features
        grad_b = delta.sum(axis=0)
        grad = np.concatenate([grad_w.ravel(), grad_b])
    else:
        w1, b1, w2, b2 = _unpack_mlp(params, spec)
        pre = features @ w1.T + b1
        hidden = np.tanh(pre)
        probs = _softmax(hidden @ w2.T + b2)
        delta2 = (probs - onehot) / n
        grad_w2 = delta2.T @ hidden
        grad_b2 = delta2.sum(axis=0)
        delta1 = (delta2 @ w2) * (1.0 - hidden * hidden)
        grad_w1 = delta1.T @ features
        grad_b1 = delta1.sum(axis=0)
        grad = np.concatenate(
            [grad_w1.ravel(), grad_b1, grad_w2.ravel(), grad_b2]
        )

    idx = np.arange(n)
    picked = np.clip(probs[idx, labels], 1e-300, None)
    loss = float(-np.mean(np.log(picked)))
    return loss, grad


def predict(params: np.ndarray, features: np.ndarray, spec: ModelSpec) -> np.ndarray:
    return np.argmax(logits(params, features, spec), axis=1)


def accuracy(
    params: np.ndarray, features: np.ndarray, labels: np.ndarray, spec: ModelSpec
) -> float:
    return float(np.mean(predict(params, features, spec) == labels))
