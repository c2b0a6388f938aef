"""Inference and evaluation: top-1 metrics, hubness diagnostic, protocols.

Prediction is nearest projected class semantic vector — over the unseen
classes in standard mode, over the seen+unseen union in generalized mode.
Evaluation consumes the ground-truth labels stored on test records, which
training never sees.

The hubness diagnostic counts, for each candidate class, how often its
projection appears among the k nearest neighbors of a test query, and
summarizes the hit-count distribution by its Fisher-Pearson adjusted
sample skewness. Strong positive skew means a few projected classes "hub"
the neighborhoods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .data import Dataset, halve_unlabeled
from .errors import ValidationError
from .network import ProjectionNet
from .train import TrainConfig, train_inductive, train_transductive
from .triplets import MODE_GZSL, MODE_ZSL, class_projections, squared_distances

Array = NDArray[np.float64]

AVERAGING_OVERALL = "overall"
AVERAGING_PER_CLASS = "per-class-mean"

DIRECTION_SEMANTIC_TO_INPUT = "semantic_to_input"
DIRECTION_INPUT_TO_SEMANTIC = "input_to_semantic"


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Accuracy summary. All accuracies are percentages.

    ``overall_top1`` is always correct/total over the scored records.
    ``acc_seen``/``acc_unseen``/``harmonic_mean`` are generalized-mode
    only (None otherwise) and respect the ``averaging`` flag. The
    confusion matrix rows follow ``class_ids`` (true class), columns
    likewise (predicted class).
    """

    mode: str
    averaging: str
    overall_top1: float
    per_class_top1: dict[str, float]
    acc_seen: float | None
    acc_unseen: float | None
    harmonic_mean: float | None
    confusion: np.ndarray
    class_ids: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class HubnessReport:
    """Per-class k-occurrence counts and their adjusted sample skewness."""

    k: int
    n_k: dict[str, int]
    skewness: float
    direction: str


def harmonic_mean_accuracy(acc_seen: float, acc_unseen: float) -> float:
    """2su/(s+u), defined as 0 when both accuracies are 0."""
    if acc_seen < 0 or acc_unseen < 0:
        raise ValidationError("accuracies must be >= 0")
    denom = acc_seen + acc_unseen
    if denom == 0:
        return 0.0
    return 2.0 * acc_seen * acc_unseen / denom


def fisher_pearson_skewness(values) -> float:
    """Adjusted sample skewness, n/((n-1)(n-2)) * sum(((x-mean)/s)^3).

    Exact 0 for constant input. Needs at least 3 values.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    n = x.size
    if n < 3:
        raise ValidationError(f"skewness needs at least 3 values, got {n}")
    dev = x - x.mean()
    m2 = float(np.sum(dev * dev))
    if m2 == 0.0:
        return 0.0
    s = math.sqrt(m2 / (n - 1))
    return n / ((n - 1) * (n - 2)) * float(np.sum((dev / s) ** 3))


def _predict_indices(
    net: ProjectionNet, features: Array, semantics, subset: str
) -> np.ndarray:
    candidates = semantics.indices(subset)
    if candidates.size == 0:
        raise ValidationError(f"no {subset} classes to predict over")
    d = squared_distances(features, class_projections(net, semantics))
    sub = d[:, candidates]
    return candidates[np.argmin(sub, axis=1)]


def predict_zsl(net: ProjectionNet, feature, semantics) -> str:
    """Label of the nearest projected unseen-class semantic vector."""
    idx = _predict_indices(net, np.asarray(feature, dtype=np.float64), semantics, "unseen")
    return semantics.class_ids[idx[0]]


def predict_gzsl(net: ProjectionNet, feature, semantics) -> str:
    """Label of the nearest projected class over the seen+unseen union."""
    idx = _predict_indices(net, np.asarray(feature, dtype=np.float64), semantics, "all")
    return semantics.class_ids[idx[0]]


def _group_accuracy(
    averaging: str,
    true_idx: np.ndarray,
    correct: np.ndarray,
    group_classes: np.ndarray,
) -> float:
    in_group = np.isin(true_idx, group_classes)
    if averaging == AVERAGING_OVERALL:
        total = int(in_group.sum())
        if total == 0:
            return 0.0
        return 100.0 * float(correct[in_group].sum()) / total
    per_class = []
    for c in group_classes:
        mask = true_idx == c
        if mask.any():
            per_class.append(100.0 * float(correct[mask].sum()) / int(mask.sum()))
    return float(np.mean(per_class)) if per_class else 0.0


def evaluate(
    net: ProjectionNet, dataset: Dataset, mode: str, averaging: str = AVERAGING_OVERALL
) -> EvalReport:
    """Score predictions on the dataset's test records.

    Standard mode predicts over unseen classes and scores only the test
    records whose ground-truth class is unseen; generalized mode predicts
    over the union and scores every test record, reporting seen/unseen
    accuracies and their harmonic mean. Every scored record must carry an
    evaluation label. ``averaging`` selects how the group accuracies are
    aggregated; ``overall_top1`` is always correct/total.
    """
    if mode not in (MODE_ZSL, MODE_GZSL):
        raise ValidationError(f"mode must be zsl|gzsl, got {mode!r}")
    if averaging not in (AVERAGING_OVERALL, AVERAGING_PER_CLASS):
        raise ValidationError(f"unknown averaging {averaging!r}")
    sem = dataset.semantics
    test = dataset.test_records()
    if not test:
        raise ValidationError("dataset has no test records to evaluate")
    for r in test:
        if r.label is None:
            raise ValidationError(f"test record {r.id!r} lacks an evaluation label")

    if mode == MODE_ZSL:
        scored = [r for r in test if not sem.is_seen(r.label)]
        if not scored:
            raise ValidationError("no test records from unseen classes to score")
        subset = "unseen"
    else:
        scored = list(test)
        subset = "all"

    feats = np.array([r.feature for r in scored])
    pred_idx = _predict_indices(net, feats, sem, subset)
    true_idx = np.array([sem.index_of(r.label) for r in scored])
    correct = pred_idx == true_idx

    n_classes = sem.n_classes
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (true_idx, pred_idx), 1)

    per_class: dict[str, float] = {}
    for c in range(n_classes):
        mask = true_idx == c
        if mask.any():
            per_class[sem.class_ids[c]] = 100.0 * float(correct[mask].sum()) / int(mask.sum())

    overall = 100.0 * float(correct.sum()) / len(scored)
    if mode == MODE_GZSL:
        acc_s = _group_accuracy(averaging, true_idx, correct, sem.indices("seen"))
        acc_u = _group_accuracy(averaging, true_idx, correct, sem.indices("unseen"))
        hm = harmonic_mean_accuracy(acc_s, acc_u)
    else:
        acc_s = acc_u = hm = None
    return EvalReport(
        mode=mode,
        averaging=averaging,
        overall_top1=overall,
        per_class_top1=per_class,
        acc_seen=acc_s,
        acc_unseen=acc_u,
        harmonic_mean=hm,
        confusion=confusion,
        class_ids=sem.class_ids,
    )


def hubness_skewness(
    net: ProjectionNet,
    dataset: Dataset,
    k: int = 1,
    direction: str = DIRECTION_SEMANTIC_TO_INPUT,
    candidates: str = "unseen",
) -> HubnessReport:
    """k-occurrence skewness of projected classes as neighbors of queries.

    Queries are the test-record features (labels are not used). Candidate
    classes default to the unseen set, matching standard-mode inference;
    pass ``candidates="all"`` for the generalized candidate set. Only the
    semantic-to-input projection direction is supported: the reverse
    direction would need a separately trained reverse projection.
    """
    if direction == DIRECTION_INPUT_TO_SEMANTIC:
        raise ValidationError(
            "input->semantic hubness needs a reverse projection model; "
            "only semantic_to_input is supported"
        )
    if direction != DIRECTION_SEMANTIC_TO_INPUT:
        raise ValidationError(f"unknown projection direction {direction!r}")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    test = dataset.test_records()
    if not test:
        raise ValidationError("dataset has no test records")
    sem = dataset.semantics
    cand = sem.indices(candidates)
    if k > cand.size:
        raise ValidationError(f"k={k} exceeds the {cand.size} candidate classes")

    feats = np.array([r.feature for r in test])
    proj = class_projections(net, sem)[cand]
    d = squared_distances(feats, proj)
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    counts = np.bincount(nearest.ravel(), minlength=cand.size)
    n_k = {sem.class_ids[cand[i]]: int(counts[i]) for i in range(cand.size)}
    return HubnessReport(k, n_k, fisher_pearson_skewness(counts), direction)


def _mean_reports(reports: list[EvalReport]) -> EvalReport:
    def mean_opt(values):
        vals = [v for v in values if v is not None]
        return float(np.mean(vals)) if vals else None

    per_class: dict[str, float] = {}
    for cid in reports[0].class_ids:
        vals = [r.per_class_top1[cid] for r in reports if cid in r.per_class_top1]
        if vals:
            per_class[cid] = float(np.mean(vals))
    return EvalReport(
        mode=reports[0].mode,
        averaging=reports[0].averaging,
        overall_top1=float(np.mean([r.overall_top1 for r in reports])),
        per_class_top1=per_class,
        acc_seen=mean_opt([r.acc_seen for r in reports]),
        acc_unseen=mean_opt([r.acc_unseen for r in reports]),
        harmonic_mean=mean_opt([r.harmonic_mean for r in reports]),
        confusion=sum(r.confusion for r in reports),
        class_ids=reports[0].class_ids,
    )


def evaluate_qfsl_protocol(
    dataset: Dataset, config: TrainConfig, averaging: str = AVERAGING_OVERALL
) -> tuple[EvalReport, tuple[EvalReport, EvalReport]]:
    """Split-in-halves generalized evaluation.

    The unlabeled pool is halved (stratified by hidden label); two models
    are trained, each using one half as its unlabeled training data and
    evaluated on the other half's test records. Returns the arithmetic
    mean of the two reports (confusion matrices are summed) plus both
    half-reports. Requires generalized mode.
    """
    if config.mode != MODE_GZSL:
        raise ValidationError("the split-in-halves protocol is a gzsl evaluation")
    half_a, half_b = halve_unlabeled(dataset, seed=config.seed)
    reports = []
    for train_ds, eval_ds in ((half_a, half_b), (half_b, half_a)):
        inductive = train_inductive(train_ds, config)
        refined = train_transductive(train_ds, config, inductive)
        reports.append(evaluate(refined.net, eval_ds, MODE_GZSL, averaging))
    return _mean_reports(reports), (reports[0], reports[1])


def format_eval_report(report: EvalReport) -> str:
    """Flat metric=value text form."""
    lines = [
        f"mode={report.mode}",
        f"averaging={report.averaging}",
        f"overall_top1={repr(report.overall_top1)}",
    ]
    if report.acc_seen is not None:
        lines.append(f"acc_seen={repr(report.acc_seen)}")
    if report.acc_unseen is not None:
        lines.append(f"acc_unseen={repr(report.acc_unseen)}")
    if report.harmonic_mean is not None:
        lines.append(f"harmonic_mean={repr(report.harmonic_mean)}")
    for cid in report.class_ids:
        if cid in report.per_class_top1:
            lines.append(f"per_class.{cid}={repr(report.per_class_top1[cid])}")
    return "\n".join(lines) + "\n"


def format_confusion_csv(report: EvalReport) -> str:
    """CSV with true classes as rows and predicted classes as columns."""
    header = "true\\pred," + ",".join(report.class_ids)
    rows = [header]
    for i, cid in enumerate(report.class_ids):
        rows.append(cid + "," + ",".join(str(int(v)) for v in report.confusion[i]))
    return "\n".join(rows) + "\n"


def format_hubness_report(report: HubnessReport) -> str:
    lines = [
        f"k={report.k}",
        f"direction={report.direction}",
        f"skewness={repr(report.skewness)}",
    ]
    for cid, count in report.n_k.items():
        lines.append(f"n_k.{cid}={count}")
    return "\n".join(lines) + "\n"
