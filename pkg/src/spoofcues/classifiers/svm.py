"""Soft-margin SVM trained by sequential minimal optimisation.

The dual ``min 1/2 a'Qa - e'a  s.t. 0 <= a <= C, y'a = 0`` (``Q = yy'K``) is
solved with maximal-violating-pair working sets and the analytic two-variable
update. Kernel rows come from a full matrix when it fits the memory budget,
otherwise from an LRU row cache.
"""

from __future__ import annotations

import warnings
from collections import OrderedDict

import numpy as np

from ..errors import NonConvergenceWarning
from .base import LabeledMatrix, TrainedModel, Variant, register_scorer, rowwise_dot

TAU = 1e-12
DEFAULT_CACHE_BYTES = 512 * 1024 * 1024


def resolve_gamma(gamma, X: np.ndarray) -> float:
    """``"scale"`` means 1 / (n_features * mean per-feature variance)."""
    if gamma == "scale":
        v = float(np.mean(X.var(axis=0)))
        return 1.0 / (X.shape[1] * v) if v > 0 else 1.0
    g = float(gamma)
    if g <= 0:
        raise ValueError("gamma must be positive")
    return g


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float | None) -> np.ndarray:
    G = A @ B.T
    if kernel == "linear":
        return G
    if kernel == "rbf":
        sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * G
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


class KernelRows:
    """Rows of the training kernel, either precomputed or LRU-cached."""

    def __init__(self, X, kernel, gamma, cache_bytes=DEFAULT_CACHE_BYTES):
        self.X, self.kernel, self.gamma = X, kernel, gamma
        n = X.shape[0]
        self.sqnorm = np.sum(X * X, axis=1)
        if n * n * 8 <= cache_bytes:
            self.full = kernel_matrix(X, X, kernel, gamma)
            self.diag = np.diag(self.full).copy()
        else:
            self.full = None
            self.capacity = max(2, cache_bytes // (8 * n))
            self.cache = OrderedDict()
            self.diag = np.ones(n) if kernel == "rbf" else self.sqnorm.copy()

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is not None:
            self.cache.move_to_end(i)
            return r
        r = kernel_matrix(self.X[i : i + 1], self.X, self.kernel, self.gamma)[0]
        self.cache[i] = r
        if len(self.cache) > self.capacity:
            self.cache.popitem(last=False)
        return r


def smo(K: KernelRows, y: np.ndarray, C: float, tol: float = 1e-3, max_updates: int = 1_000_000):
    """Solve the dual; returns ``(alpha, b, violation, updates)`` for the decision ``sum a y K + b``."""
    n = y.size
    yf = y.astype(np.float64)
    alpha = np.zeros(n)
    G = -np.ones(n)
    updates = 0
    violation = np.inf
    while True:
        up = ((alpha < C) & (y > 0)) | ((alpha > 0) & (y < 0))
        low = ((alpha < C) & (y < 0)) | ((alpha > 0) & (y > 0))
        f = -yf * G
        fu = np.where(up, f, -np.inf)
        fl = np.where(low, f, np.inf)
        i = int(np.argmax(fu))
        j = int(np.argmin(fl))
        violation = fu[i] - fl[j]
        if violation < tol or updates >= max_updates:
            break
        Ki, Kj = K.row(i), K.row(j)
        Qii, Qjj = K.diag[i], K.diag[j]
        Qij = yf[i] * yf[j] * Ki[j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(Qii + Qjj + 2.0 * Qij, TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = max(Qii + Qjj - 2.0 * Qij, TAU)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        di, dj = ni - ai, nj - aj
        alpha[i], alpha[j] = ni, nj
        # Q_i = y_i * y * K_i
        G += (yf[i] * di) * yf * Ki + (yf[j] * dj) * yf * Kj
        updates += 1

    free = (alpha > 0) & (alpha < C)
    yG = yf * G
    if free.any():
        rho = float(np.mean(yG[free]))
    else:
        ub, lb = np.inf, -np.inf
        at_zero, at_c = alpha <= 0, alpha >= C
        ub_mask = (at_c & (y < 0)) | (at_zero & (y > 0))
        lb_mask = (at_c & (y > 0)) | (at_zero & (y < 0))
        if ub_mask.any():
            ub = float(yG[ub_mask].min())
        if lb_mask.any():
            lb = float(yG[lb_mask].max())
        rho = 0.5 * (ub + lb)
    return alpha, -rho, float(violation), updates


def dual_objective(alpha: np.ndarray, y: np.ndarray, Kmat: np.ndarray) -> float:
    ay = alpha * y
    return 0.5 * float(ay @ Kmat @ ay) - float(alpha.sum())


def train_svm(data: LabeledMatrix, kernel: str = "rbf", C: float = 1.0, gamma="scale",
              tol: float = 1e-3, max_updates: int = 1_000_000,
              cache_bytes: int = DEFAULT_CACHE_BYTES) -> TrainedModel:
    data.require_both_classes()
    if C <= 0:
        raise ValueError("C must be positive")
    X = data.X
    y = np.where(data.y == 1, 1, -1).astype(np.int8)
    g = resolve_gamma(gamma, X) if kernel == "rbf" else None
    rows = KernelRows(X, kernel, g, cache_bytes)
    alpha, b, violation, updates = smo(rows, y, C, tol, max_updates)
    converged = violation < tol
    if not converged:
        warnings.warn(f"SMO stopped after {updates} updates with KKT violation {violation:.3g}",
                      NonConvergenceWarning)
    sv = np.flatnonzero(alpha > 0)
    coef = alpha[sv] * y[sv]
    params = {"support": sv.astype(np.int64), "support_vectors": X[sv], "dual_coef": coef,
              "alpha": alpha, "b": b}
    if kernel == "linear":
        params["w"] = coef @ X[sv] if sv.size else np.zeros(X.shape[1])
    variant = Variant.LINEAR_SVM if kernel == "linear" else Variant.RBF_SVM
    hyper = {"kernel": kernel, "C": C, "tol": tol}
    if kernel == "rbf":
        hyper["gamma"] = gamma
        hyper["gamma_value"] = g
    return TrainedModel.build(variant, params, hyper, data,
                              converged=converged, kkt_violation=violation, updates=updates,
                              n_support=int(sv.size))


@register_scorer(Variant.LINEAR_SVM)
def _linear_score(model, X):
    return rowwise_dot(X, model.params["w"]) + model.params["b"]


@register_scorer(Variant.RBF_SVM)
def _rbf_score(model, X, chunk: int = 64):
    p = model.params
    g = model.hyperparams["gamma_value"]
    sv = p["support_vectors"]
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        diff = X[s : s + chunk, None, :] - sv[None, :, :]
        Kx = np.exp(-g * np.sum(diff * diff, axis=2))
        out[s : s + chunk] = rowwise_dot(Kx, p["dual_coef"]) + p["b"]
    return out


def decision_on_training(model: TrainedModel, data: LabeledMatrix) -> np.ndarray:
    """Signed margins y_i f(x_i) on the training rows."""
    from .base import predict_scores
    y = np.where(data.y == 1, 1.0, -1.0)
    return y * predict_scores(model, data.X).scores
