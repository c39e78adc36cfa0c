from .dataset import Dataset, downsample_negatives, upsample_positives
from .gridsearch import DEFAULT_CANDIDATES, GridRow, grid_search_c
from .l1svm import TrainConfig, l1svm_objective, train_l1svm
from .model import LinearModel, Loss, format_score, load_model, predict_matrix, predict_scores, save_model
from .sgd import train_sgd_online
from .stacking import (
    StackedEnsemble,
    fit_stack,
    logistic_objective,
    out_of_fold_scores,
    stratified_folds,
    train_stacker,
)

__all__ = [
    "DEFAULT_CANDIDATES",
    "Dataset",
    "GridRow",
    "LinearModel",
    "Loss",
    "StackedEnsemble",
    "TrainConfig",
    "downsample_negatives",
    "fit_stack",
    "format_score",
    "grid_search_c",
    "l1svm_objective",
    "load_model",
    "logistic_objective",
    "out_of_fold_scores",
    "predict_matrix",
    "predict_scores",
    "save_model",
    "stratified_folds",
    "train_l1svm",
    "train_sgd_online",
    "train_stacker",
    "upsample_positives",
]
