"""Gaussian generative classifiers: LDA, QDA and Gaussian naive Bayes."""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import DataError, SingularCovariance
from .base import LabeledMatrix, TrainedModel, Variant, register_scorer, rowwise_dot, rowwise_matmul

LOG_2PI = math.log(2.0 * math.pi)


def regularize(cov: np.ndarray) -> np.ndarray:
    """Sigma + lambda I with lambda = 1e-6 * trace(Sigma) / d."""
    d = cov.shape[0]
    lam = 1e-6 * float(np.trace(cov)) / d
    return cov + lam * np.eye(d)


def cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance("covariance not positive definite after regularisation") from None


def gaussian_logpdf(X: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Multivariate normal log-density from a lower Cholesky factor."""
    inv = solve_triangular(chol, np.eye(chol.shape[0]), lower=True)
    z = rowwise_matmul(X - mean, inv.T)
    maha = np.sum(z * z, axis=1)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (X.shape[1] * LOG_2PI + logdet + maha)


def _class_moments(data: LabeledMatrix):
    out = []
    for c in (0, 1):
        Xc = data.X[data.y == c]
        mu = Xc.mean(axis=0)
        D = Xc - mu
        out.append((Xc.shape[0], mu, D.T @ D / Xc.shape[0]))
    return out


def _check_rows(data: LabeledMatrix, need: int):
    for c in (0, 1):
        n = int((data.y == c).sum())
        if n < need:
            raise DataError(f"class {c} has {n} rows; need at least {need}")


def train_lda(data: LabeledMatrix) -> TrainedModel:
    """Shared-covariance Gaussian classifier (maximum-likelihood pooled covariance)."""
    data.require_both_classes()
    d = data.n_features
    _check_rows(data, d + 1)
    (n0, mu0, c0), (n1, mu1, c1) = _class_moments(data)
    n = n0 + n1
    pooled = regularize((n0 * c0 + n1 * c1) / n)
    L = cholesky(pooled)
    # Sigma^-1 (mu1 - mu0) via two triangular solves
    w = solve_triangular(L.T, solve_triangular(L, mu1 - mu0, lower=True), lower=False)
    b = -0.5 * float((mu1 + mu0) @ w) + math.log(n1 / n) - math.log(n0 / n)
    return TrainedModel.build(
        Variant.LDA,
        {"means": np.stack([mu0, mu1]), "priors": np.array([n0 / n, n1 / n]),
         "cov": pooled, "w": w, "b": b},
        {}, data,
    )


@register_scorer(Variant.LDA)
def _lda_score(model, X):
    return rowwise_dot(X, model.params["w"]) + model.params["b"]


def train_qda(data: LabeledMatrix) -> TrainedModel:
    data.require_both_classes()
    d = data.n_features
    _check_rows(data, d + 1)
    moments = _class_moments(data)
    n = sum(m[0] for m in moments)
    covs = [regularize(c) for _, _, c in moments]
    chols = [cholesky(c) for c in covs]
    return TrainedModel.build(
        Variant.QDA,
        {"means": np.stack([m[1] for m in moments]),
         "priors": np.array([m[0] / n for m in moments]),
         "covs": np.stack(covs), "chols": np.stack(chols)},
        {}, data,
    )


def qda_from_parameters(means, covs, priors, data: LabeledMatrix) -> TrainedModel:
    """A QDA model with given class parameters (used to compare model families)."""
    covs = np.asarray(covs, dtype=np.float64)
    chols = np.stack([cholesky(c) for c in covs])
    return TrainedModel.build(
        Variant.QDA,
        {"means": np.asarray(means, dtype=np.float64), "priors": np.asarray(priors, dtype=np.float64),
         "covs": covs, "chols": chols},
        {"derived": True}, data,
    )


def pooled_qda(model: TrainedModel, data: LabeledMatrix) -> TrainedModel:
    """Replace a QDA model's class covariances by their prior-weighted average."""
    pri = model.params["priors"]
    avg = pri[0] * model.params["covs"][0] + pri[1] * model.params["covs"][1]
    return qda_from_parameters(model.params["means"], np.stack([avg, avg]), pri, data)


@register_scorer(Variant.QDA)
def _qda_score(model, X):
    p = model.params
    ll = [gaussian_logpdf(X, p["means"][c], p["chols"][c]) + math.log(p["priors"][c]) for c in (0, 1)]
    return ll[1] - ll[0]


def train_gnb(data: LabeledMatrix) -> TrainedModel:
    """Per-class independent Gaussians; variances floored at 1e-9 x the largest feature variance."""
    data.require_both_classes()
    _check_rows(data, 2)
    n = data.X.shape[0]
    floor = 1e-9 * float(np.max(data.X.var(axis=0))) if n > 1 else 1e-9
    floor = max(floor, 1e-300)
    means, vars_, priors = [], [], []
    for c in (0, 1):
        Xc = data.X[data.y == c]
        means.append(Xc.mean(axis=0))
        vars_.append(np.maximum(Xc.var(axis=0), floor))
        priors.append(Xc.shape[0] / n)
    return TrainedModel.build(
        Variant.GNB,
        {"means": np.stack(means), "vars": np.stack(vars_), "priors": np.array(priors)},
        {"var_floor": floor}, data,
    )


@register_scorer(Variant.GNB)
def _gnb_score(model, X):
    p = model.params
    mu, var, pri = p["means"], p["vars"], p["priors"]
    terms = []
    for c, sign in ((1, 1.0), (0, -1.0)):
        t = -0.5 * (np.log(2.0 * math.pi * var[c]) + (X - mu[c]) ** 2 / var[c])
        terms.append(sign * t)
    per_feature = terms[0] + terms[1]
    prior_term = math.log(pri[1]) - math.log(pri[0])
    # exactly rounded sums make scores independent of feature order
    return np.array([math.fsum([prior_term, *row]) for row in per_feature.tolist()])
