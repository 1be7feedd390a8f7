"""Seven classical detectors behind one train/score interface."""

from .base import (LabeledMatrix, ScoreSet, TrainedModel, Variant, model_from_json, model_to_json,
                   predict_scores, schema_fingerprint, score_matrix)
from .discriminant import pooled_qda, qda_from_parameters, train_gnb, train_lda, train_qda
from .gmm import train_gmm_classifier
from .logreg import train_logreg
from .selection import (DEFAULT_C_GRID, DEFAULT_GAMMA_GRID, FoldPlan, GridResult, grid_search,
                        stratified_kfold)
from .svm import train_svm

ALL_VARIANTS = tuple(v.value for v in Variant)


def train_model(variant, data: LabeledMatrix, **kw) -> TrainedModel:
    """Dispatch by variant name; keyword arguments go to the specific trainer."""
    v = Variant(variant)
    if v is Variant.LOGREG:
        return train_logreg(data, **kw)
    if v is Variant.LDA:
        return train_lda(data)
    if v is Variant.QDA:
        return train_qda(data)
    if v is Variant.GNB:
        return train_gnb(data)
    if v is Variant.LINEAR_SVM:
        return train_svm(data, kernel="linear", **kw)
    if v is Variant.RBF_SVM:
        return train_svm(data, kernel="rbf", **kw)
    return train_gmm_classifier(data, **kw)


__all__ = [
    "ALL_VARIANTS", "DEFAULT_C_GRID", "DEFAULT_GAMMA_GRID", "FoldPlan", "GridResult", "LabeledMatrix",
    "ScoreSet", "TrainedModel", "Variant", "grid_search", "model_from_json", "model_to_json",
    "pooled_qda", "predict_scores", "qda_from_parameters", "schema_fingerprint", "score_matrix",
    "stratified_kfold", "train_gmm_classifier", "train_gnb", "train_lda", "train_logreg", "train_model",
    "train_qda", "train_svm",
]
