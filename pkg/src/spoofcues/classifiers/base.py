"""Shared model container, scoring facade and JSON persistence."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from ..errors import DataError, SchemaMismatch


class Variant(str, enum.Enum):
    LOGREG = "LogReg"
    LDA = "LDA"
    QDA = "QDA"
    GNB = "GNB"
    LINEAR_SVM = "LinearSVM"
    RBF_SVM = "RbfSVM"
    GMM = "GMM"


def schema_fingerprint(names) -> str:
    return hashlib.sha256("\x1f".join(names).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class LabeledMatrix:
    """Standardised features ``X`` with labels ``y`` (1 = Fake, 0 = Real)."""

    X: np.ndarray
    y: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("X must be 2-D")
        y = np.asarray(self.y).astype(np.int8)
        if y.shape != (X.shape[0],):
            raise DataError("y length does not match X")
        if np.isnan(X).any():
            raise DataError("LabeledMatrix must not contain missing values")
        if not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 (Real) or 1 (Fake)")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{i}" for i in range(X.shape[1])))
        if len(self.names) != X.shape[1]:
            raise DataError("names do not match X columns")

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.names)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def require_both_classes(self):
        if not ((self.y == 1).any() and (self.y == 0).any()):
            raise DataError("training data must contain both classes")

    def subset(self, idx) -> "LabeledMatrix":
        return LabeledMatrix(self.X[idx], self.y[idx], self.names)

    @classmethod
    def from_table(cls, table) -> "LabeledMatrix":
        return cls(table.X, table.y, tuple(table.names))


def _freeze(value):
    if isinstance(value, np.ndarray):
        v = value.copy()
        v.setflags(write=False)
        return v
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


@dataclass(frozen=True)
class TrainedModel:
    variant: Variant
    params: MappingProxyType
    hyperparams: MappingProxyType
    fingerprint: str
    n_features: int
    metadata: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    @classmethod
    def build(cls, variant, params: dict, hyperparams: dict, data: LabeledMatrix, **metadata):
        return cls(
            Variant(variant),
            MappingProxyType({k: _freeze(v) for k, v in params.items()}),
            MappingProxyType(dict(hyperparams)),
            data.fingerprint,
            data.n_features,
            MappingProxyType(dict(metadata)),
        )

    @property
    def name(self) -> str:
        return self.variant.value


@dataclass(frozen=True)
class ScoreSet:
    """Real-valued scores, larger means more likely Fake; Fake is predicted when score > threshold."""

    scores: np.ndarray
    threshold: float = 0.0

    @property
    def predictions(self) -> np.ndarray:
        return (self.scores > self.threshold).astype(np.int8)

    def __len__(self):
        return self.scores.size


def rowwise_dot(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """X @ w with a per-row reduction order that does not depend on the batch size."""
    return np.einsum("ij,j->i", X, w)


def rowwise_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """A @ B computed row by row (no BLAS), so any row's result is batch-independent."""
    return np.einsum("ij,jk->ik", A, B)


_SCORERS = {}


def register_scorer(variant):
    def deco(fn):
        _SCORERS[Variant(variant)] = fn
        return fn
    return deco


def predict_scores(model: TrainedModel, X, fingerprint: str | None = None) -> ScoreSet:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise SchemaMismatch(f"model expects {model.n_features} features, got {X.shape[1]}")
    if fingerprint is not None and fingerprint != model.fingerprint:
        raise SchemaMismatch("feature schema fingerprint differs from the model's")
    s = np.asarray(_SCORERS[model.variant](model, X), dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise DataError("non-finite scores")
    return ScoreSet(s)


def score_matrix(model: TrainedModel, data: LabeledMatrix) -> ScoreSet:
    return predict_scores(model, data.X, data.fingerprint)


# --------------------------------------------------------------------------
# persistence


def _encode(v):
    if isinstance(v, np.ndarray):
        return {"__ndarray__": v.tolist(), "dtype": str(v.dtype), "shape": list(v.shape)}
    if isinstance(v, tuple):
        return {"__tuple__": [_encode(x) for x in v]}
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, MappingProxyType):
        return {k: _encode(x) for k, x in v.items()}
    if isinstance(v, dict):
        return {k: _encode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_encode(x) for x in v]
    return v


def _decode(v):
    if isinstance(v, dict):
        if "__ndarray__" in v:
            return np.array(v["__ndarray__"], dtype=v["dtype"]).reshape(v["shape"])
        if "__tuple__" in v:
            return tuple(_decode(x) for x in v["__tuple__"])
        return {k: _decode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_decode(x) for x in v]
    return v


def model_to_json(model: TrainedModel, extra: dict | None = None) -> str:
    """Serialise at full precision (float repr round-trips exactly)."""
    doc = {
        "variant": model.variant.value,
        "fingerprint": model.fingerprint,
        "n_features": model.n_features,
        "hyperparams": _encode(model.hyperparams),
        "metadata": _encode(model.metadata),
        "params": _encode(model.params),
    }
    if extra:
        doc["header"] = extra
    return json.dumps(doc, indent=1, sort_keys=True)


def model_from_json(text: str) -> TrainedModel:
    d = json.loads(text)
    return TrainedModel(
        Variant(d["variant"]),
        MappingProxyType({k: _freeze(v) for k, v in _decode(d["params"]).items()}),
        MappingProxyType(_decode(d["hyperparams"])),
        d["fingerprint"],
        int(d["n_features"]),
        MappingProxyType(_decode(d["metadata"])),
    )
