"""Transductive zero-shot learning over precomputed feature embeddings.

A semantic-to-feature projection network is first trained inductively on
labeled seen-class embeddings, then refined transductively with an
unsupervised pseudo-label triplet loss over unlabeled test embeddings.
Includes standard and generalized inference, accuracy/harmonic-mean
metrics, a hubness (k-occurrence skewness) diagnostic, Monte Carlo
cross-validation, and a synthetic data generator for desk-scale
experiments.
"""

from .data import (
    Dataset,
    EmbeddingRecord,
    SemanticTable,
    SynthConfig,
    TrainView,
    generate_synthetic,
    halve_unlabeled,
    hold_out_seen,
    load_dataset,
    normalize_features,
    save_dataset,
    split_seen_for_validation,
)
from .errors import DataFormatError, NumericError, ShapeError, ValidationError
from .evaluate import (
    EvalReport,
    HubnessReport,
    evaluate,
    evaluate_qfsl_protocol,
    fisher_pearson_skewness,
    harmonic_mean_accuracy,
    hubness_skewness,
    predict_gzsl,
    predict_zsl,
)
from .losses import (
    LossBreakdown,
    euclidean_loss,
    inductive_loss,
    transductive_loss,
    triplet_loss,
    weight_norm_sq,
)
from .network import (
    AdamState,
    ProjectionNet,
    adam_step,
    backward,
    finite_diff_grad,
    forward,
    init_adam,
    init_net,
    zeros_like_net,
)
from .train import (
    Checkpoint,
    CvRow,
    TrainConfig,
    load_checkpoint,
    monte_carlo_cv,
    save_checkpoint,
    train_inductive,
    train_transductive,
)
from .triplets import (
    TripletAssignment,
    assign_negative,
    assign_positive_gzsl,
    assign_positive_zsl,
    form_triplets,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Checkpoint",
    "CvRow",
    "DataFormatError",
    "Dataset",
    "EmbeddingRecord",
    "EvalReport",
    "HubnessReport",
    "LossBreakdown",
    "NumericError",
    "ProjectionNet",
    "SemanticTable",
    "ShapeError",
    "SynthConfig",
    "TrainConfig",
    "TrainView",
    "TripletAssignment",
    "ValidationError",
    "adam_step",
    "assign_negative",
    "assign_positive_gzsl",
    "assign_positive_zsl",
    "backward",
    "euclidean_loss",
    "evaluate",
    "evaluate_qfsl_protocol",
    "finite_diff_grad",
    "fisher_pearson_skewness",
    "form_triplets",
    "forward",
    "generate_synthetic",
    "halve_unlabeled",
    "harmonic_mean_accuracy",
    "hold_out_seen",
    "hubness_skewness",
    "inductive_loss",
    "init_adam",
    "init_net",
    "load_checkpoint",
    "load_dataset",
    "monte_carlo_cv",
    "normalize_features",
    "predict_gzsl",
    "predict_zsl",
    "save_checkpoint",
    "save_dataset",
    "split_seen_for_validation",
    "train_inductive",
    "train_transductive",
    "transductive_loss",
    "triplet_loss",
    "weight_norm_sq",
    "zeros_like_net",
]
