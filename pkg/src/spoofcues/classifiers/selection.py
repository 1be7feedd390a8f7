"""Stratified k-fold plans and cross-validated grid search for the RBF SVM."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ClassTooSmall, DataError, SpoofCuesError
from .base import LabeledMatrix, predict_scores
from .svm import resolve_gamma, train_svm

log = logging.getLogger(__name__)

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_GRID = ("scale", 0.01, 0.1)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def folds(self):
        """Yield ``(train_idx, val_idx)`` for each fold."""
        for f in range(self.k):
            yield np.flatnonzero(self.assignments != f), np.flatnonzero(self.assignments == f)


def stratified_kfold(y, k: int = 3, seed: int = 0) -> FoldPlan:
    """Shuffle each class, then deal its rows round-robin over the folds.

    The second class starts dealing at the fold where the first stopped, so
    fold sizes as well as per-class counts stay within one of each other.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(seed)
    assign = np.full(y.size, -1, dtype=np.int64)
    start = 0
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        if idx.size < k:
            raise ClassTooSmall(f"class {c} has {idx.size} rows; need at least {k}")
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = (start + np.arange(idx.size)) % k
        start = (start + idx.size) % k
    return FoldPlan(k, assign, seed)


@dataclass(frozen=True)
class GridCell:
    C: float
    gamma: object
    fold_acc: tuple = ()
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def mean_acc(self) -> float:
        return float(np.mean(self.fold_acc)) if self.fold_acc and not self.failed else float("nan")


@dataclass(frozen=True)
class GridResult:
    cells: tuple
    best: GridCell
    gamma_values: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        k = max((len(c.fold_acc) for c in self.cells), default=0)
        head = ["C", "gamma"] + [f"fold{i}" for i in range(k)] + ["mean_acc", "status"]
        out = [",".join(head)]
        for c in self.cells:
            folds = [repr(a) for a in c.fold_acc] + [""] * (k - len(c.fold_acc))
            status = "failed" if c.failed else ("best" if c is self.best else "ok")
            out.append(",".join([repr(c.C), str(c.gamma), *folds,
                                 "" if c.failed else repr(c.mean_acc), status]))
        return "\n".join(out) + "\n"


def _run_cell(args):
    data, C, gamma, plan, svm_kw = args
    accs = []
    try:
        for tr, va in plan.folds():
            m = train_svm(data.subset(tr), kernel="rbf", C=C, gamma=gamma, **svm_kw)
            pred = predict_scores(m, data.X[va]).predictions
            accs.append(float(np.mean(pred == data.y[va])))
    except (SpoofCuesError, ValueError, ArithmeticError) as exc:
        return GridCell(C, gamma, tuple(accs), f"{type(exc).__name__}: {exc}")
    return GridCell(C, gamma, tuple(accs))


def grid_search(data: LabeledMatrix, C_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID,
                plan: FoldPlan | None = None, workers: int = 1, **svm_kw) -> GridResult:
    """Mean validation accuracy per (C, gamma) cell.

    ``"scale"`` is resolved inside every fold from that fold's training rows.
    Ties go to the smaller C and then the smaller gamma, where ``"scale"`` is
    ranked by its value on the full data, so the winner does not depend on
    the order in which the grid is listed.
    """
    if not C_grid or not gamma_grid:
        raise DataError("grid must be non-empty")
    plan = plan or stratified_kfold(data.y, 3, 0)
    jobs = [(data, float(C), g, plan, svm_kw) for C in C_grid for g in gamma_grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            cells = list(ex.map(_run_cell, jobs))
    else:
        cells = [_run_cell(j) for j in jobs]
    gvals = {str(g): resolve_gamma(g, data.X) for g in gamma_grid}
    ok = [c for c in cells if not c.failed]
    for c in cells:
        if c.failed:
            log.warning("grid cell C=%s gamma=%s failed: %s", c.C, c.gamma, c.error)
    if not ok:
        raise DataError("every grid-search cell failed")
    best = min(ok, key=lambda c: (-c.mean_acc, c.C, gvals[str(c.gamma)]))
    return GridResult(tuple(cells), best, gvals)
