"""L2-regularised, class-weighted logistic regression by gradient descent."""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import NonConvergenceWarning
from .base import LabeledMatrix, TrainedModel, Variant, register_scorer, rowwise_dot


def class_weights(y: np.ndarray) -> np.ndarray:
    """Balanced per-row weights N / (2 N_c)."""
    n = y.size
    n_fake = int(y.sum())
    w_fake, w_real = n / (2.0 * n_fake), n / (2.0 * (n - n_fake))
    return np.where(y == 1, w_fake, w_real)


def objective(theta, X, y, sw, l2):
    """Weighted logistic loss plus (l2/2)|w|^2 and its gradient; ``theta = [w..., b]``."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    loss = float(sw @ (np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(w @ w)
    # sigmoid written to stay finite for large |z|
    p = np.exp(-np.logaddexp(0.0, -z))
    r = sw * (p - y)
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ r + l2 * w
    grad[-1] = r.sum()
    return loss, grad


def train_logreg(data: LabeledMatrix, l2: float = 1.0, class_weighted: bool = True,
                 tol: float = 1e-6, max_iter: int = 5000) -> TrainedModel:
    """Minimise the penalised loss with Armijo-backtracking gradient steps.

    Each trial step starts from the Barzilai-Borwein length; the bias is not
    penalised. Stops when the gradient infinity-norm drops below ``tol``.
    """
    data.require_both_classes()
    X = data.X
    y = data.y.astype(np.float64)
    sw = class_weights(data.y) if class_weighted else np.ones_like(y)
    theta = np.zeros(X.shape[1] + 1)
    loss, grad = objective(theta, X, y, sw, l2)
    step = 1.0 / (0.25 * float(sw.sum()) * (1.0 + np.max(np.sum(X * X, axis=1))) + l2)
    prev_theta = prev_grad = None
    gnorm = float(np.max(np.abs(grad)))
    it = 0
    while gnorm >= tol and it < max_iter:
        it += 1
        if prev_theta is not None:
            s, g = theta - prev_theta, grad - prev_grad
            sg = float(s @ g)
            if sg > 0:
                step = float(s @ s) / sg
        gg = float(grad @ grad)
        while True:
            cand = theta - step * grad
            c_loss, c_grad = objective(cand, X, y, sw, l2)
            if c_loss <= loss - 1e-4 * step * gg or step < 1e-20:
                break
            step *= 0.5
        prev_theta, prev_grad = theta, grad
        theta, loss, grad = cand, c_loss, c_grad
        gnorm = float(np.max(np.abs(grad)))
    converged = gnorm < tol
    if not converged:
        warnings.warn(f"logistic regression stopped after {it} iterations "
                      f"(gradient inf-norm {gnorm:.3g})", NonConvergenceWarning)
    return TrainedModel.build(
        Variant.LOGREG,
        {"w": theta[:-1], "b": float(theta[-1])},
        {"l2": l2, "class_weighted": class_weighted, "tol": tol, "max_iter": max_iter},
        data,
        converged=converged, iterations=it, grad_norm=gnorm,
    )


@register_scorer(Variant.LOGREG)
def _score(model, X):
    return rowwise_dot(X, model.params["w"]) + model.params["b"]


def predict_proba_fake(model: TrainedModel, X) -> np.ndarray:
    z = _score(model, np.asarray(X, dtype=np.float64))
    return np.exp(-np.logaddexp(0.0, -z))
