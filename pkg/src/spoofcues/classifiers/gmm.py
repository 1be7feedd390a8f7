"""Per-class Gaussian mixtures fitted by EM; classification by log-likelihood ratio."""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..errors import DataError, EmptyComponent, NonConvergenceWarning
from .base import LabeledMatrix, TrainedModel, Variant, register_scorer, rowwise_matmul
from .discriminant import LOG_2PI, regularize
from scipy.linalg import solve_triangular

VAR_FLOOR = 1e-6


def kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def component_logpdf(X, means, covs, covariance_type) -> np.ndarray:
    """(n, k) matrix of per-component Gaussian log-densities."""
    n, d = X.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for c in range(k):
        if covariance_type == "diag":
            var = covs[c]
            out[:, c] = -0.5 * (d * LOG_2PI + np.sum(np.log(var))
                                + np.sum((X - means[c]) ** 2 / var, axis=1))
        else:
            L = np.linalg.cholesky(covs[c])
            inv = solve_triangular(L, np.eye(d), lower=True)
            z = rowwise_matmul(X - means[c], inv.T)
            out[:, c] = -0.5 * (d * LOG_2PI + 2.0 * np.sum(np.log(np.diag(L))) + np.sum(z * z, axis=1))
    return out


def mixture_loglik(X, weights, means, covs, covariance_type) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    return _logsumexp(component_logpdf(X, means, covs, covariance_type) + logw, axis=1)


def _m_step(X, resp, covariance_type):
    nk = resp.sum(axis=0)
    weights = nk / X.shape[0]
    means = (resp.T @ X) / nk[:, None]
    if covariance_type == "diag":
        covs = (resp.T @ (X * X)) / nk[:, None] - means ** 2
        covs = np.maximum(covs, VAR_FLOOR)
    else:
        covs = []
        for c in range(means.shape[0]):
            D = X - means[c]
            covs.append(regularize((resp[:, c, None] * D).T @ D / nk[c]))
        covs = np.array(covs)
    return weights, means, covs


def fit_mixture(X, k, rng, covariance_type="diag", tol=1e-6, max_iter=300):
    """One EM run from a k-means++ start.

    Returns ``(weights, means, covs, history)`` where history is the mean
    per-sample log-likelihood after every E-step; it never decreases.
    """
    n, d = X.shape
    centers = kmeans_pp(X, k, rng)
    labels = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
    resp = np.zeros((n, k))
    resp[np.arange(n), labels] = 1.0
    # a centre with no nearest point still gets a sliver of responsibility
    resp = resp + 1e-10
    resp /= resp.sum(axis=1, keepdims=True)
    weights, means, covs = _m_step(X, resp, covariance_type)
    history = []
    reseeded = set()
    for _ in range(max_iter):
        logp = component_logpdf(X, means, covs, covariance_type)
        with np.errstate(divide="ignore"):
            joint = logp + np.log(weights)
        ll = _logsumexp(joint, axis=1)
        history.append(float(ll.mean()))
        if len(history) >= 2:
            drop = history[-2] - history[-1]
            if drop > 1e-9 * max(1.0, abs(history[-2])):
                raise ArithmeticError(f"EM log-likelihood decreased by {drop:.3g}")
            if history[-1] - history[-2] < tol:
                break
        resp = np.exp(joint - ll[:, None])
        nk = resp.sum(axis=0)
        empty = np.flatnonzero(nk < 1e-8 * n)
        if empty.size:
            for c in empty:
                if c in reseeded:
                    raise EmptyComponent(f"component {c} collapsed twice")
                reseeded.add(int(c))
                resp[:, c] = 0.0
                resp[rng.integers(n), c] = 1.0
            resp /= resp.sum(axis=1, keepdims=True)
            # likelihood is not comparable across a reseed
            history.clear()
        weights, means, covs = _m_step(X, resp, covariance_type)
    return weights, means, covs, history


def train_gmm_classifier(data: LabeledMatrix, k: int = 8, seed: int = 0, covariance_type: str = "diag",
                         n_restarts: int = 3, tol: float = 1e-6, max_iter: int = 300) -> TrainedModel:
    """Fit one mixture per class (best of ``n_restarts`` EM runs each).

    Both classes draw their restarts from identically seeded generators, so
    swapping the class labels swaps the fitted mixtures exactly.
    """
    data.require_both_classes()
    if covariance_type not in ("diag", "full"):
        raise ValueError("covariance_type must be 'diag' or 'full'")
    d = data.n_features
    p = {}
    histories = {}
    n = data.X.shape[0]
    for c, tag in ((0, "real"), (1, "fake")):
        Xc = data.X[data.y == c]
        if Xc.shape[0] < k * (d + 1):
            raise DataError(f"{tag} class has {Xc.shape[0]} rows; GMM with k={k} needs {k * (d + 1)}")
        rng = np.random.default_rng(seed)
        best = None
        for r in range(n_restarts):
            w, m, cv, hist = fit_mixture(Xc, k, rng, covariance_type, tol, max_iter)
            if hist and (len(hist) >= max_iter):
                warnings.warn(f"EM for the {tag} class hit {max_iter} iterations", NonConvergenceWarning)
            final = float(mixture_loglik(Xc, w, m, cv, covariance_type).mean())
            if best is None or final > best[0]:
                best = (final, w, m, cv, hist)
        _, w, m, cv, hist = best
        p[f"{tag}_weights"], p[f"{tag}_means"], p[f"{tag}_covs"] = w, m, cv
        p[f"{tag}_prior"] = Xc.shape[0] / n
        histories[tag] = hist
    return TrainedModel.build(
        Variant.GMM, p,
        {"k": k, "covariance_type": covariance_type, "n_restarts": n_restarts, "tol": tol,
         "max_iter": max_iter, "seed": seed},
        data, loglik_history=histories,
    )


@register_scorer(Variant.GMM)
def _score(model, X):
    p = model.params
    ct = model.hyperparams["covariance_type"]
    ll = {}
    for tag in ("real", "fake"):
        ll[tag] = (mixture_loglik(X, p[f"{tag}_weights"], p[f"{tag}_means"], p[f"{tag}_covs"], ct)
                   + math.log(p[f"{tag}_prior"]))
    return ll["fake"] - ll["real"]
