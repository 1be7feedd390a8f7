"""Detection metrics: accuracy, ROC/AUC, EER, DET curves and McNemar tests.

Fake is the positive class throughout. FAR(t) is the fraction of Real clips
scored above t and FRR(t) the fraction of Fake clips scored at or below t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classifiers.base import LabeledMatrix, ScoreSet, TrainedModel, score_matrix
from .errors import LengthMismatch, SingleClass
from .specfun import chi2_1_sf, probit

PROBIT_CLAMP = 1e-4
EXACT_BELOW = 25


def _split(scores, labels):
    s = scores.scores if isinstance(scores, ScoreSet) else np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.int8)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores for {y.size} labels")
    if not ((y == 1).any() and (y == 0).any()):
        raise SingleClass("both Real and Fake rows are required")
    return s, y


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self) -> str:
        rows = ["fpr,tpr"] + [f"{f!r},{t!r}" for f, t in self.points]
        return "\n".join(rows) + "\n"


def roc_and_auc(scores, labels) -> RocCurve:
    """One vertex per distinct score (ties grouped), swept from the top down."""
    s, y = _split(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of every run of tied scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y == 1)[ends]
    fp = np.cumsum(y == 0)[ends]
    P, N = tp[-1], fp[-1]
    tpr = np.r_[0, tp] / P
    fpr = np.r_[0, fp] / N
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(np.r_[np.inf, s[ends]], fpr, tpr, auc)


def _far_frr(s, y):
    """FAR and FRR at t = -inf followed by every distinct score ascending."""
    t = np.unique(s)
    real, fake = np.sort(s[y == 0]), np.sort(s[y == 1])
    far = 1.0 - np.searchsorted(real, t, side="right") / real.size
    frr = np.searchsorted(fake, t, side="right") / fake.size
    return np.r_[-np.inf, t], np.r_[1.0, far], np.r_[0.0, frr]


def _crossing(far, frr) -> float:
    d = far - frr
    i = int(np.argmax(d <= 0))
    if d[i] == 0:
        return float(far[i])
    # FAR falls and FRR rises step by step; interpolate between vertices i-1 and i
    a = d[i - 1] / (d[i - 1] - d[i])
    return float(far[i - 1] + a * (far[i] - far[i - 1]))


def eer(scores, labels) -> float:
    s, y = _split(scores, labels)
    _, far, frr = _far_frr(s, y)
    return _crossing(far, frr)


@dataclass(frozen=True)
class DetCurve:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    probit_far: np.ndarray = field(repr=False, default=None)
    probit_frr: np.ndarray = field(repr=False, default=None)

    @property
    def points(self):
        return list(zip(self.far.tolist(), self.frr.tolist()))

    def to_csv(self) -> str:
        rows = ["threshold,far,frr"] + [f"{t!r},{a!r},{r!r}" for t, a, r in
                                        zip(self.thresholds.tolist(), self.far.tolist(), self.frr.tolist())]
        return "\n".join(rows) + "\n"


def probit_clamped(rates) -> np.ndarray:
    r = np.clip(np.asarray(rates, dtype=np.float64), PROBIT_CLAMP, 1.0 - PROBIT_CLAMP)
    return np.array([probit(float(v)) for v in r])


def det_curve(scores, labels) -> DetCurve:
    s, y = _split(scores, labels)
    t, far, frr = _far_frr(s, y)
    return DetCurve(t, far, frr, _crossing(far, frr), probit_clamped(far), probit_clamped(frr))


@dataclass(frozen=True)
class McNemarResult:
    b: int
    c: int
    chi2_cc: float
    p_asymptotic: float
    p_exact: float

    @property
    def p(self) -> float:
        """The exact p below 25 discordant pairs, the chi-square p otherwise."""
        return self.p_exact if self.b + self.c < EXACT_BELOW else self.p_asymptotic


def binomial_two_sided(b: int, c: int) -> float:
    n = b + c
    if n == 0:
        return 1.0
    lo = sum(math.comb(n, i) for i in range(min(b, c) + 1))
    # integer arithmetic keeps the tail exact; one division at the end
    return min(1.0, 2 * lo / 2 ** n)


def mcnemar(preds_a, preds_b, labels) -> McNemarResult:
    a = np.asarray(preds_a).astype(np.int8)
    b_ = np.asarray(preds_b).astype(np.int8)
    y = np.asarray(labels).astype(np.int8)
    if not (a.shape == b_.shape == y.shape):
        raise LengthMismatch("prediction vectors and labels differ in length")
    ra, rb = a == y, b_ == y
    b = int(np.sum(ra & ~rb))
    c = int(np.sum(~ra & rb))
    if b + c == 0:
        return McNemarResult(0, 0, 0.0, 1.0, 1.0)
    stat = (abs(b - c) - 1.0) ** 2 / (b + c)
    return McNemarResult(b, c, stat, chi2_1_sf(stat), binomial_two_sided(b, c))


@dataclass(frozen=True)
class EvalReport:
    model: str
    split: str
    accuracy: float
    auc: float
    eer: float
    roc: RocCurve
    det: DetCurve
    tp: int
    tn: int
    fp: int
    fn: int
    predictions: np.ndarray = field(repr=False, default=None)
    scores: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def evaluate(model: TrainedModel, data: LabeledMatrix, split: str = "test", name: str | None = None) -> EvalReport:
    ss = score_matrix(model, data)
    pred = ss.predictions
    y = data.y
    tp = int(np.sum((pred == 1) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    roc = roc_and_auc(ss, y)
    det = det_curve(ss, y)
    return EvalReport(name or model.name, split, (tp + tn) / y.size, roc.auc, det.eer, roc, det,
                      tp, tn, fp, fn, pred, ss.scores)


@dataclass(frozen=True)
class Comparison:
    names: tuple
    results: dict
    edges: tuple  # (better, worse) pairs with p < 0.05

    def p_matrix(self) -> np.ndarray:
        k = len(self.names)
        m = np.ones((k, k))
        for i, a in enumerate(self.names):
            for j, b in enumerate(self.names):
                if i != j:
                    m[i, j] = self.results[(a, b)].p_exact
        return m

    def to_csv(self) -> str:
        m = self.p_matrix()
        rows = ["model," + ",".join(self.names)]
        for i, a in enumerate(self.names):
            rows.append(a + "," + ",".join(repr(float(v)) for v in m[i]))
        return "\n".join(rows) + "\n"


def compare_all(reports, labels, alpha: float = 0.05) -> Comparison:
    """Pairwise McNemar tests; an edge A > B exists iff A wins more discordant
    pairs and the (exact-or-asymptotic) p is below ``alpha``."""
    names = tuple(r.model for r in reports)
    by = {r.model: r for r in reports}
    res, edges = {}, []
    for a in names:
        for b in names:
            if a == b:
                continue
            r = mcnemar(by[a].predictions, by[b].predictions, labels)
            res[(a, b)] = r
            if r.b > r.c and r.p < alpha:
                edges.append((a, b))
    return Comparison(names, res, tuple(edges))


def eval_table_csv(train: dict, test: dict, header_comment: str | None = None) -> str:
    """Rows ``model,train_acc,train_auc,test_acc,test_auc,test_eer`` sorted by test AUC, best first."""
    rows = []
    for name, te in test.items():
        tr = train.get(name)
        rows.append((te.auc, name, tr, te))
    rows.sort(key=lambda r: (-r[0], r[1]))
    out = [f"# {header_comment}"] if header_comment else []
    out.append("model,train_acc,train_auc,test_acc,test_auc,test_eer")
    for _, name, tr, te in rows:
        tra = "" if tr is None else f"{tr.accuracy:.6f}"
        trc = "" if tr is None else f"{tr.auc:.6f}"
        out.append(f"{name},{tra},{trc},{te.accuracy:.6f},{te.auc:.6f},{te.eer:.6f}")
    return "\n".join(out) + "\n"
