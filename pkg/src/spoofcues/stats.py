"""Feature cleaning, ANOVA selection, train-only preprocessing and correlation analysis."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .audio import ClipLabel, SplitTag
from .errors import AllFeaturesDropped, DataError, NoFeatureSurvives, NotFitted, TooFewRows
from .features import FEATURE_NAMES
from .specfun import f_sf

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureTable:
    """Rows of clip features over one schema; ``nan`` marks missing cells.

    ``y`` is 1 for Fake and 0 for Real; ``train`` flags Train-split rows.
    ``scaled`` is set once a Preprocessor has been applied.
    """

    names: tuple
    X: np.ndarray
    y: np.ndarray
    train: np.ndarray
    clips: tuple = ()
    scaled: bool = False
    dropped: tuple = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.names):
            raise DataError("table shape does not match its schema")
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate feature names")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int8))
        object.__setattr__(self, "train", np.asarray(self.train, dtype=bool))
        object.__setattr__(self, "names", tuple(self.names))
        if not self.clips:
            object.__setattr__(self, "clips", tuple(str(i) for i in range(X.shape[0])))

    @classmethod
    def from_vectors(cls, vectors, names=FEATURE_NAMES) -> "FeatureTable":
        vectors = list(vectors)
        X = np.array([v.values for v in vectors], dtype=np.float64).reshape(len(vectors), len(names))
        y = [v.label.positive for v in vectors]
        train = [v.split is SplitTag.TRAIN for v in vectors]
        return cls(tuple(names), X, y, train, tuple(v.clip_ref for v in vectors))

    def __len__(self):
        return self.X.shape[0]

    def rows(self, mask) -> "FeatureTable":
        mask = np.asarray(mask)
        return replace(self, X=self.X[mask], y=self.y[mask], train=self.train[mask],
                       clips=tuple(np.asarray(self.clips, dtype=object)[mask]))

    def train_rows(self) -> "FeatureTable":
        return self.rows(self.train)

    def test_rows(self) -> "FeatureTable":
        return self.rows(~self.train)

    def columns(self, names) -> "FeatureTable":
        idx = [self.names.index(n) for n in names]
        return replace(self, names=tuple(names), X=self.X[:, idx])

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]


def clean(table: FeatureTable) -> FeatureTable:
    """Map +-inf to missing and drop columns missing in every training row."""
    X = np.array(table.X)
    X[np.isinf(X)] = np.nan
    tr = X[table.train] if table.train.any() else X
    empty = np.all(np.isnan(tr), axis=0)
    keep = [n for n, e in zip(table.names, empty) if not e]
    dropped = tuple(n for n, e in zip(table.names, empty) if e)
    if not keep:
        raise AllFeaturesDropped("every feature is entirely missing")
    out = replace(table, X=X, dropped=table.dropped + dropped)
    return out.columns(keep) if dropped else out


# --------------------------------------------------------------------------
# ANOVA


def anova_oneway(values_real, values_fake) -> tuple[float, float]:
    """Two-group one-way ANOVA; returns ``(F, p)``. Missing values are ignored.

    Zero within-group variance gives ``(0, 1)`` for equal means and
    ``(inf, 0)`` otherwise.
    """
    groups = []
    for g in (values_real, values_fake):
        g = np.asarray(g, dtype=np.float64)
        g = g[~np.isnan(g)]
        if g.size < 2:
            raise DataError("each ANOVA group needs at least two values")
        groups.append(g)
    allv = np.concatenate(groups)
    n, k = allv.size, len(groups)
    grand = allv.mean()
    means = [g.mean() for g in groups]
    ss_between = sum(g.size * (m - grand) ** 2 for g, m in zip(groups, means))
    ss_within = sum(float(np.sum((g - m) ** 2)) for g, m in zip(groups, means))
    scale = max(float(np.max(np.abs(allv))), 1e-300)
    if ss_within <= (1e-15 * scale) ** 2 * n:
        if abs(means[0] - means[1]) <= 1e-12 * scale:
            return 0.0, 1.0
        return math.inf, 0.0
    F = (ss_between / (k - 1)) / (ss_within / (n - k))
    return float(F), f_sf(F, k - 1, n - k)


@dataclass(frozen=True)
class AnovaRow:
    feature: str
    F: float
    p: float
    kept: bool
    mean_real: float
    mean_fake: float


@dataclass(frozen=True)
class AnovaReport:
    rows: tuple
    alpha: float

    @property
    def kept(self) -> tuple:
        return tuple(r.feature for r in self.rows if r.kept)

    def by_feature(self, name: str) -> AnovaRow:
        for r in self.rows:
            if r.feature == name:
                return r
        raise KeyError(name)

    def ranked(self) -> list:
        return sorted(self.rows, key=lambda r: (r.p, -r.F if math.isfinite(r.F) else -math.inf, r.feature))

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "F", "p", "kept"])
        for r in self.ranked():
            w.writerow([r.feature, repr(float(r.F)), repr(float(r.p)), int(r.kept)])
        return buf.getvalue()


def select_features(table: FeatureTable, alpha: float = 0.05) -> tuple[tuple, AnovaReport]:
    """Keep features whose training-set ANOVA p-value is below ``alpha``.

    Returns the kept feature names (schema order) and the full report. Features
    with fewer than two non-missing values in a class are dropped with p = 1.
    """
    tr = table.train_rows()
    if not ((tr.y == 1).any() and (tr.y == 0).any()):
        raise DataError("training rows must contain both classes")
    rows = []
    for j, name in enumerate(table.names):
        col = tr.X[:, j]
        real, fake = col[tr.y == 0], col[tr.y == 1]
        try:
            F, p = anova_oneway(real, fake)
        except DataError:
            F, p = 0.0, 1.0
        rows.append(AnovaRow(name, F, p, p < alpha, float(np.nanmean(real)) if np.any(~np.isnan(real)) else math.nan,
                             float(np.nanmean(fake)) if np.any(~np.isnan(fake)) else math.nan))
    report = AnovaReport(tuple(rows), alpha)
    if not report.kept:
        raise NoFeatureSurvives(f"no feature reaches p < {alpha}")
    return report.kept, report


# --------------------------------------------------------------------------
# preprocessing


@dataclass(frozen=True)
class Preprocessor:
    """Training-set medians (imputation) and mean/std (z-scoring), frozen after fit."""

    names: tuple = ()
    median: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    std: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fitted: bool = False

    def apply(self, table: FeatureTable) -> FeatureTable:
        if not self.fitted:
            raise NotFitted("preprocessor has not been fitted")
        if table.scaled:
            raise DataError("table is already standardised; apply consumes raw tables only")
        if tuple(table.names) != self.names:
            table = table.columns(self.names)
        X = np.where(np.isnan(table.X), self.median, table.X)
        X = (X - self.mean) / self.std
        return replace(table, X=X, scaled=True)

    def to_json(self) -> str:
        if not self.fitted:
            raise NotFitted("preprocessor has not been fitted")
        body = {n: {"median": float(a), "mean": float(b), "std": float(c)}
                for n, a, b, c in zip(self.names, self.median, self.mean, self.std)}
        return json.dumps({"features": body, "order": list(self.names)}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Preprocessor":
        d = json.loads(text)
        order = tuple(d["order"])
        f = d["features"]
        return cls(order,
                   np.array([f[n]["median"] for n in order]),
                   np.array([f[n]["mean"] for n in order]),
                   np.array([f[n]["std"] for n in order]), True)


def fit_preprocessor(table: FeatureTable) -> Preprocessor:
    tr = table.train_rows()
    if len(tr) == 0:
        raise DataError("no training rows to fit on")
    if table.scaled:
        raise DataError("fit on raw features, not an already standardised table")
    X = np.array(tr.X)
    med = np.array([np.median(c[~np.isnan(c)]) if np.any(~np.isnan(c)) else 0.0 for c in X.T])
    X = np.where(np.isnan(X), med, X)
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return Preprocessor(tuple(table.names), med, mean, std, True)


# --------------------------------------------------------------------------
# correlation


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple
    r: np.ndarray
    label: ClipLabel
    constant: tuple = ()

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", *self.names])
        for n, row in zip(self.names, self.r):
            w.writerow([n, *(repr(float(v)) for v in row)])
        return buf.getvalue()


def correlation_matrix(table: FeatureTable, label: ClipLabel) -> CorrelationMatrix:
    """Pairwise-complete Pearson correlation over the rows of one class."""
    X = table.X[table.y == label.positive]
    if X.shape[0] < 3:
        raise TooFewRows(f"{X.shape[0]} {label.value} rows; need at least 3")
    p = X.shape[1]
    r = np.eye(p)
    constant = set()
    ok = ~np.isnan(X)
    for i in range(p):
        for j in range(i + 1, p):
            m = ok[:, i] & ok[:, j]
            if m.sum() < 3:
                continue
            a, b = X[m, i] - X[m, i].mean(), X[m, j] - X[m, j].mean()
            sa, sb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
            if sa == 0.0 or sb == 0.0:
                if sa == 0.0:
                    constant.add(table.names[i])
                if sb == 0.0:
                    constant.add(table.names[j])
                continue
            v = float(np.clip((a @ b) / (sa * sb), -1.0, 1.0))
            r[i, j] = r[j, i] = v
    return CorrelationMatrix(tuple(table.names), r, label, tuple(sorted(constant)))


def class_histograms(table: FeatureTable, name: str, bins: int = 50) -> dict:
    """Per-class counts over ``bins`` equal bins spanning the pooled min-max of a feature."""
    col = table.column(name)
    ok = ~np.isnan(col)
    if not ok.any():
        raise DataError(f"feature {name} has no values")
    lo, hi = float(col[ok].min()), float(col[ok].max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    out = {"edges": edges}
    for label in ClipLabel:
        v = col[ok & (table.y == label.positive)]
        out[label.value] = np.histogram(v, bins=edges)[0]
    return out
