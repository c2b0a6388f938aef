"""Training objectives and their exact gradients.

Three scalar losses over the projection network:

* supervised fit — mean squared distance between each labeled feature and
  the projection of its class semantic vector, plus an L2 penalty on the
  two weight matrices (biases excluded);
* unlabeled triplet hinge — for each retained anchor,
  ``max(0, d(a, pos)^2 + margin - d(a, neg)^2)``, averaged over the full
  unlabeled batch size (discarded anchors count in the denominator but
  contribute nothing); subgradient at the hinge kink is 0;
* combined semi-supervised objective — supervised term + alpha * unlabeled
  term + lambda * L2 penalty, the penalty applied exactly once.

A ``euclidean`` variant of the unlabeled term (mean squared distance to
the positive projection, no negatives, no margin) is available as the
transductive baseline.

Gradients route through :func:`tzsl.network.backward`, so the batch
reduction order is fixed and batch gradients decompose exactly into
per-sample contributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .data import EmbeddingRecord, SemanticTable
from .errors import ShapeError, ValidationError
from .network import ProjectionNet, backward, forward, zeros_like_net
from .triplets import TripletAssignment

Array = NDArray[np.float64]

VARIANT_TRIPLET = "triplet"
VARIANT_EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss decomposition; ``total`` composes the terms exactly as
    ``supervised + alpha * unsupervised + lambda * regularizer``."""

    total: float
    supervised: float
    unsupervised: float
    regularizer: float
    retained_count: int


def weight_norm_sq(net: ProjectionNet) -> float:
    """Sum of squared entries of the two weight matrices (no biases)."""
    return float(np.sum(net.w1 * net.w1) + np.sum(net.w2 * net.w2))


def stack_labeled_batch(
    records: Sequence[EmbeddingRecord], semantics: SemanticTable
) -> tuple[Array, Array]:
    """Resolve labeled records to (semantic inputs, target features) arrays."""
    if not records:
        raise ValidationError("empty labeled batch")
    sems, feats = [], []
    for r in records:
        if r.label is None:
            raise ValidationError(f"unlabeled record {r.id!r} in labeled batch")
        if not semantics.is_seen(r.label):
            raise ValidationError(
                f"record {r.id!r} labeled with non-seen class {r.label!r}"
            )
        sems.append(semantics.vector_for(r.label))
        feats.append(r.feature)
    return np.array(sems), np.array(feats)


def _supervised_term_arrays(
    net: ProjectionNet, sem_inputs: Array, targets: Array
) -> tuple[float, ProjectionNet]:
    """Mean squared residual over the batch and its parameter gradient."""
    y = forward(net, sem_inputs)
    if y.shape != targets.shape:
        raise ShapeError("target features", y.shape, targets.shape)
    resid = y - targets
    n = sem_inputs.shape[0]
    value = float(np.sum(resid * resid) / n)
    grad = backward(net, sem_inputs, (2.0 / n) * resid)
    return value, grad


def _add_scaled(acc: ProjectionNet, other: ProjectionNet, scale: float) -> None:
    for a, o in zip(acc.arrays(), other.arrays()):
        a += scale * o


def _add_reg_grad(acc: ProjectionNet, net: ProjectionNet, lam: float) -> None:
    if lam != 0.0:
        np.add(acc.w1, (2.0 * lam) * net.w1, out=acc.w1)
        np.add(acc.w2, (2.0 * lam) * net.w2, out=acc.w2)


def inductive_loss_from_arrays(
    net: ProjectionNet, sem_inputs: Array, targets: Array, lam: float
) -> tuple[LossBreakdown, ProjectionNet]:
    """Array-level core of :func:`inductive_loss`."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    sup, grad = _supervised_term_arrays(net, sem_inputs, targets)
    reg = weight_norm_sq(net)
    _add_reg_grad(grad, net, lam)
    return LossBreakdown(sup + lam * reg, sup, 0.0, reg, 0), grad


def inductive_loss(
    net: ProjectionNet,
    records: Sequence[EmbeddingRecord],
    semantics: SemanticTable,
    lam: float,
) -> tuple[LossBreakdown, ProjectionNet]:
    """Supervised objective over a labeled seen-class batch."""
    e, x = stack_labeled_batch(records, semantics)
    return inductive_loss_from_arrays(net, e, x, lam)


def _retained_arrays(
    assignments: Sequence[TripletAssignment],
    features: Array,
    semantics: SemanticTable,
) -> tuple[Array, Array, Array]:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ShapeError("anchor features", "(n, m) array", feats.shape)
    if feats.shape[0] != len(assignments):
        raise ValidationError(
            f"assignments must cover the unlabeled batch: "
            f"{len(assignments)} assignments for {feats.shape[0]} anchors"
        )
    keep = [i for i, a in enumerate(assignments) if a.retained]
    anchors = feats[keep]
    pos = np.array([semantics.vector_for(assignments[i].positive) for i in keep])
    neg = np.array([semantics.vector_for(assignments[i].negative) for i in keep])
    if not keep:
        pos = pos.reshape(0, semantics.dim)
        neg = neg.reshape(0, semantics.dim)
    return anchors, pos, neg


def triplet_loss(
    net: ProjectionNet,
    assignments: Sequence[TripletAssignment],
    features: Array,
    semantics: SemanticTable,
    margin: float,
) -> tuple[float, ProjectionNet]:
    """Hinged triplet objective over retained anchors.

    Value is averaged over the full batch size (retained or not); the
    gradient flows only through active hinges of retained anchors.
    """
    if margin < 0:
        raise ValidationError(f"margin must be >= 0, got {margin}")
    if not assignments:
        raise ValidationError("empty assignment batch")
    n = len(assignments)
    anchors, pos, neg = _retained_arrays(assignments, features, semantics)
    if anchors.shape[0] == 0:
        return 0.0, zeros_like_net(net)

    y_pos = forward(net, pos)
    y_neg = forward(net, neg)
    d_pos = np.sum((anchors - y_pos) ** 2, axis=1)
    d_neg = np.sum((anchors - y_neg) ** 2, axis=1)
    hinge = d_pos + margin - d_neg
    active = hinge > 0.0
    value = float(np.sum(hinge[active]) / n)
    if not active.any():
        return value, zeros_like_net(net)

    # Gradient batch: active positives first, then active negatives,
    # each in anchor order; reduction order is inherited from backward.
    up_pos = (2.0 / n) * (y_pos[active] - anchors[active])
    up_neg = -(2.0 / n) * (y_neg[active] - anchors[active])
    inputs = np.vstack([pos[active], neg[active]])
    upstream = np.vstack([up_pos, up_neg])
    return value, backward(net, inputs, upstream)


def euclidean_loss(
    net: ProjectionNet,
    assignments: Sequence[TripletAssignment],
    features: Array,
    semantics: SemanticTable,
) -> tuple[float, ProjectionNet]:
    """Baseline unlabeled objective: mean squared distance to the positive."""
    if not assignments:
        raise ValidationError("empty assignment batch")
    n = len(assignments)
    anchors, pos, _ = _retained_arrays(assignments, features, semantics)
    if anchors.shape[0] == 0:
        return 0.0, zeros_like_net(net)
    y_pos = forward(net, pos)
    resid = y_pos - anchors
    value = float(np.sum(resid * resid) / n)
    return value, backward(net, pos, (2.0 / n) * resid)


def transductive_loss_from_arrays(
    net: ProjectionNet,
    sem_inputs: Array,
    targets: Array,
    unlabeled_features: Array,
    assignments: Sequence[TripletAssignment],
    semantics: SemanticTable,
    alpha: float,
    lam: float,
    margin: float,
    variant: str = VARIANT_TRIPLET,
) -> tuple[LossBreakdown, ProjectionNet]:
    """Array-level core of :func:`transductive_loss`."""
    if alpha < 0:
        raise ValidationError(f"alpha must be >= 0, got {alpha}")
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    if variant not in (VARIANT_TRIPLET, VARIANT_EUCLIDEAN):
        raise ValidationError(f"unknown unsupervised variant {variant!r}")

    sup, grad = _supervised_term_arrays(net, sem_inputs, targets)
    if variant == VARIANT_TRIPLET:
        unsup, unsup_grad = triplet_loss(net, assignments, unlabeled_features, semantics, margin)
    else:
        unsup, unsup_grad = euclidean_loss(net, assignments, unlabeled_features, semantics)
    if alpha != 0.0:
        _add_scaled(grad, unsup_grad, alpha)
    reg = weight_norm_sq(net)
    _add_reg_grad(grad, net, lam)
    total = sup + alpha * unsup + lam * reg
    retained = sum(1 for a in assignments if a.retained)
    return LossBreakdown(total, sup, unsup, reg, retained), grad


def transductive_loss(
    net: ProjectionNet,
    records: Sequence[EmbeddingRecord],
    unlabeled_features: Array,
    assignments: Sequence[TripletAssignment],
    semantics: SemanticTable,
    alpha: float,
    lam: float,
    margin: float,
    variant: str = VARIANT_TRIPLET,
) -> tuple[LossBreakdown, ProjectionNet]:
    """Semi-supervised objective: supervised + alpha * unlabeled + penalty.

    With ``alpha == 0`` the gradient is computed through exactly the same
    operations as :func:`inductive_loss`, so the two coincide bitwise.
    """
    e, x = stack_labeled_batch(records, semantics)
    return transductive_loss_from_arrays(
        net, e, x, unlabeled_features, assignments, semantics,
        alpha, lam, margin, variant,
    )
