"""Multinomial logistic objective and a closed-form quadratic test problem.

The trained model is a weight matrix ``W`` of shape ``(m, d)`` scoring the
``m`` classes. The per-example objective is the softmax cross-entropy plus
an L2 term shared by every example,

    phi_s(W) = -log softmax(W x_s)[y_s] + (lam/2) ||W||_F^2,

so the full objective ``P(W)`` is the plain average of the ``phi_s``. All
gradients below are of the ``phi_s`` (each carries its own ``lam * W``),
which keeps weighted minibatch sums unbiased for the full gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset, LabeledInstance


@dataclass(frozen=True, eq=False)
class Model:
    """Immutable weights ``(m, d)`` and regularization strength."""

    weights: np.ndarray
    lam: float

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        if W.ndim != 2:
            raise ValueError("weights must be a 2-d array")
        if not np.all(np.isfinite(W)):
            raise ValueError("weights must be finite")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lambda must be finite and >= 0")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]


def zero_model(m: int, d: int, lam: float) -> Model:
    return Model(np.zeros((m, d)), lam)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=-1, keepdims=True)
    return shifted


def _nll(scores: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-row ``-log softmax(scores)[y]``, max-shifted for stability."""
    shift = scores.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(scores - shift).sum(axis=-1)) + shift[..., 0]
    return lse - scores[np.arange(len(y)), y]


def _check_dim(model: Model, dim_needed: int) -> None:
    if dim_needed > model.d:
        raise ValueError(
            f"instance touches feature {dim_needed}, model has d={model.d}"
        )


def example_loss(model: Model, instance: LabeledInstance) -> float:
    x = instance.features.to_dense(model.d)
    if instance.features.entries:
        _check_dim(model, instance.features.entries[-1][0] + 1)
    scores = model.weights @ x
    nll = float(_nll(scores[None, :], np.array([instance.label]))[0])
    reg = 0.5 * model.lam * float(np.sum(model.weights * model.weights))
    return nll + reg


def example_gradient(model: Model, instance: LabeledInstance) -> np.ndarray:
    x = instance.features.to_dense(model.d)
    if instance.features.entries:
        _check_dim(model, instance.features.entries[-1][0] + 1)
    p = _softmax(model.weights @ x)
    p[instance.label] -= 1.0
    return np.outer(p, x) + model.lam * model.weights


def full_objective(model: Model, dataset: Dataset) -> float:
    """``P(W)``: mean cross-entropy plus ``(lam/2)||W||_F^2``."""
    scores = np.asarray(dataset.X @ model.weights.T)
    nll = _nll(scores, dataset.y)
    reg = 0.5 * model.lam * float(np.sum(model.weights * model.weights))
    return float(nll.mean()) + reg


def _residuals(model: Model, X, y: np.ndarray) -> np.ndarray:
    """``softmax(W x) - e_y`` per row: the data part of each gradient."""
    scores = np.asarray(X @ model.weights.T)
    A = _softmax(scores)
    A[np.arange(len(y)), y] -= 1.0
    return A


def full_gradient(model: Model, dataset: Dataset) -> np.ndarray:
    A = _residuals(model, dataset.X, dataset.y)
    G = np.asarray(dataset.X.T @ A).T / dataset.n
    return G + model.lam * model.weights


def batch_gradient(model: Model, dataset: Dataset, batch) -> np.ndarray:
    """Weighted gradient sum ``sum_s w_s grad phi_s`` over a minibatch.

    With weights summing to one (both samplers guarantee it) this is an
    unbiased estimate of :func:`full_gradient`.
    """
    idx = np.asarray(batch.indices, dtype=np.int64)
    w = np.asarray(batch.weights, dtype=float)
    Xb = dataset.X[idx]
    A = _residuals(model, Xb, dataset.y[idx])
    G = np.asarray(Xb.T @ (A * w[:, None])).T
    return G + float(w.sum()) * model.lam * model.weights


def test_error(model: Model, dataset: Dataset) -> float:
    """Fraction misclassified; argmax ties resolve to the lowest class id."""
    scores = np.asarray(dataset.X @ model.weights.T)
    pred = np.argmax(scores, axis=1)
    return float(np.mean(pred != dataset.y))


def per_cluster_gradient_sse(model: Model, dataset: Dataset, clusters) -> np.ndarray:
    """Per-cluster ``sum_s ||grad phi_s - mean_cluster grad||_F^2``.

    Computed from sufficient statistics without materializing any
    per-example gradient:

        ||grad phi_s||^2 = ||a_s||^2 ||x_s||^2 + 2 lam a_s.(W x_s)
                           + lam^2 ||W||_F^2,
        mean_C grad      = (A_C^T X_C)/n_C + lam W,

    with ``a_s = softmax(W x_s) - e_{y_s}``, then
    ``SSE_C = sum ||grad||^2 - n_C ||mean||^2`` (clamped at zero).
    """
    X = dataset.X
    scores = np.asarray(X @ model.weights.T)
    A = _softmax(scores)
    A[np.arange(dataset.n), dataset.y] -= 1.0
    wsq = float(np.sum(model.weights * model.weights))
    per_example = (
        np.einsum("ij,ij->i", A, A) * dataset.row_squared_norms()
        + 2.0 * model.lam * np.einsum("ij,ij->i", A, scores)
        + model.lam * model.lam * wsq
    )
    out = np.empty(len(clusters))
    for i, members in enumerate(clusters):
        n_i = len(members)
        if n_i == 1:
            out[i] = 0.0  # a lone gradient is its own mean, exactly
            continue
        mean_grad = (
            np.asarray(X[members].T @ A[members]).T / n_i
            + model.lam * model.weights
        )
        sse = per_example[members].sum() - n_i * float(
            np.sum(mean_grad * mean_grad)
        )
        out[i] = max(sse, 0.0)
    return out


def save_model(model: Model, path) -> None:
    payload = {
        "shape": [model.m, model.d],
        "lambda": model.lam,
        "weights": model.weights.ravel().tolist(),
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh)


def load_model(path) -> Model:
    with open(path, "r", encoding="ascii") as fh:
        payload = json.load(fh)
    for key in ("shape", "lambda", "weights"):
        if key not in payload:
            raise ValueError(f"model JSON missing {key!r}")
    m, d = (int(v) for v in payload["shape"])
    flat = np.asarray(payload["weights"], dtype=float)
    if flat.size != m * d:
        raise ValueError(
            f"model JSON holds {flat.size} weights, shape says {m * d}"
        )
    return Model(flat.reshape(m, d), float(payload["lambda"]))


# ---------------------------------------------------------------------------
# quadratic test problem


class QuadraticProblem:
    """``phi_i(w) = (H/2) ||w - z_i||^2`` around anchor points ``z_i``.

    Everything about this problem is available in closed form, which makes
    it the workhorse for numeric verification: the optimum is the anchor
    mean, each ``phi_i`` is ``H``-smooth and the average is ``H``-strongly
    convex, gradients are linear in ``w``, and the sampling variance of any
    minibatch scheme does not depend on ``w`` at all.
    """

    def __init__(self, anchors: np.ndarray, strength: float = 1.0):
        anchors = np.array(anchors, dtype=float)
        if anchors.ndim != 2:
            raise ValueError("anchors must be (n, d)")
        if not np.all(np.isfinite(anchors)):
            raise ValueError("anchors must be finite")
        if not (np.isfinite(strength) and strength > 0):
            raise ValueError("strength must be positive")
        anchors.setflags(write=False)
        self._anchors = anchors
        self._H = float(strength)
        self._mean = anchors.mean(axis=0)

    @property
    def anchors(self) -> np.ndarray:
        return self._anchors

    @property
    def strength(self) -> float:
        """Smoothness/strong-convexity modulus ``H``."""
        return self._H

    @property
    def gamma(self) -> float:
        """Co-coercivity constant of each ``grad phi_i``: ``1/H``."""
        return 1.0 / self._H

    @property
    def n(self) -> int:
        return self._anchors.shape[0]

    @property
    def dim(self) -> int:
        return self._anchors.shape[1]

    def optimum(self) -> np.ndarray:
        return self._mean.copy()

    def value(self, w: np.ndarray) -> float:
        diff = w[None, :] - self._anchors
        return 0.5 * self._H * float(np.einsum("ij,ij->i", diff, diff).mean())

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return self._H * (w - self._mean)

    def example_gradient(self, i: int, w: np.ndarray) -> np.ndarray:
        return self._H * (w - self._anchors[i])

    def batch_gradient(self, w: np.ndarray, indices, weights) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        wts = np.asarray(weights, dtype=float)
        return self._H * (float(wts.sum()) * w - wts @ self._anchors[idx])

    def per_cluster_gradient_sse(self, clusters) -> np.ndarray:
        """``H^2 * sum_s ||z_s - mean_C z||^2`` per cluster (w-free)."""
        out = np.empty(len(clusters))
        for i, members in enumerate(clusters):
            zc = self._anchors[np.asarray(members, dtype=np.int64)]
            diff = zc - zc.mean(axis=0)
            out[i] = self._H**2 * float(np.einsum("ij,ij->i", diff, diff).sum())
        return out


def quadratic_gradient(problem: QuadraticProblem, w, indices=None, weights=None):
    """Full gradient, or the weighted minibatch estimate when given draws."""
    if indices is None:
        return problem.gradient(np.asarray(w, dtype=float))
    if weights is None:
        weights = np.full(len(indices), 1.0 / len(indices))
    return problem.batch_gradient(np.asarray(w, dtype=float), indices, weights)
