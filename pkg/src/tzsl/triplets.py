"""Pseudo-label triplet formation over unlabeled feature vectors.

Each unlabeled anchor gets a positive class (nearest projected semantic
vector among the mode's candidate set) and a negative class (nearest
projected *seen* semantic vector). In generalized mode an anchor whose
nearest class overall is seen is discarded: its assignment is kept for
bookkeeping but marked not retained, and it contributes nothing to any
loss.

All distances are squared Euclidean in 64-bit; ties break toward the
smallest index in semantic-table order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .data import SemanticTable
from .errors import ShapeError, ValidationError
from .network import ProjectionNet, forward

Array = NDArray[np.float64]

MODE_ZSL = "zsl"
MODE_GZSL = "gzsl"


@dataclass(frozen=True)
class TripletAssignment:
    """Anchor's positive/negative class choice; ``retained=False`` means
    the anchor is discarded and must not contribute to any loss."""

    anchor_id: str
    positive: str
    negative: str
    retained: bool

    def __post_init__(self):
        if self.retained and self.positive == self.negative:
            raise ValidationError(
                f"anchor {self.anchor_id!r}: retained assignment with positive == negative"
            )


def class_projections(net: ProjectionNet, semantics: SemanticTable) -> Array:
    """Project every class semantic vector; rows follow table order."""
    if semantics.dim != net.input_dim:
        raise ShapeError("semantic vectors", net.input_dim, semantics.dim)
    return forward(net, semantics.vectors)


def squared_distances(features: Array, points: Array) -> Array:
    """Pairwise squared Euclidean distances, shape (n_features, n_points).

    Single code path shared by triplet assignment and inference so the two
    agree bitwise on every comparison.
    """
    f = np.asarray(features, dtype=np.float64)
    p = np.asarray(points, dtype=np.float64)
    if f.ndim == 1:
        f = f[None, :]
    if f.shape[1] != p.shape[1]:
        raise ShapeError("feature dimension", p.shape[1], f.shape[1])
    diff = f[:, None, :] - p[None, :, :]
    return np.sum(diff * diff, axis=2)


def _nearest(dists: Array, column_indices: np.ndarray) -> np.ndarray:
    """Per-row table index of the nearest among the given columns."""
    sub = dists[:, column_indices]
    return column_indices[np.argmin(sub, axis=1)]


def assign_positive_zsl(net: ProjectionNet, anchor, semantics: SemanticTable) -> str:
    """Nearest unseen class to the anchor after projection."""
    unseen = semantics.indices("unseen")
    if unseen.size == 0:
        raise ValidationError("no unseen classes to choose a positive from")
    d = squared_distances(anchor, class_projections(net, semantics))
    return semantics.class_ids[_nearest(d, unseen)[0]]


def assign_positive_gzsl(
    net: ProjectionNet, anchor, semantics: SemanticTable
) -> tuple[str, bool]:
    """Nearest class over the seen+unseen union; retained iff it is unseen."""
    if semantics.n_classes == 0:
        raise ValidationError("empty semantic table")
    d = squared_distances(anchor, class_projections(net, semantics))
    idx = int(_nearest(d, semantics.indices("all"))[0])
    return semantics.class_ids[idx], not semantics.seen[idx]


def assign_negative(
    net: ProjectionNet, anchor, semantics: SemanticTable, positive: str | None = None
) -> str:
    """Nearest *seen* class to the same unlabeled anchor.

    The selection does not depend on ``positive``: retained positives are
    unseen, so they can never collide with a seen negative.
    """
    seen = semantics.indices("seen")
    if seen.size == 0:
        raise ValidationError("no seen classes to choose a negative from")
    d = squared_distances(anchor, class_projections(net, semantics))
    return semantics.class_ids[_nearest(d, seen)[0]]


def form_triplets(
    net: ProjectionNet,
    anchor_ids,
    features: Array,
    semantics: SemanticTable,
    mode: str,
) -> list[TripletAssignment]:
    """Assign positives and negatives for a whole unlabeled batch.

    Vectorized over anchors but distance-for-distance identical to the
    single-anchor operations. Preserves batch order; deterministic.
    """
    if mode not in (MODE_ZSL, MODE_GZSL):
        raise ValidationError(f"mode must be zsl|gzsl, got {mode!r}")
    ids = list(anchor_ids)
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ShapeError("anchor features", "(n, m) array", feats.shape)
    if len(ids) != feats.shape[0]:
        raise ShapeError("anchor ids", feats.shape[0], len(ids))
    if not ids:
        raise ValidationError("empty anchor batch")

    seen = semantics.indices("seen")
    if seen.size == 0:
        raise ValidationError("no seen classes to choose a negative from")
    d = squared_distances(feats, class_projections(net, semantics))

    if mode == MODE_ZSL:
        unseen = semantics.indices("unseen")
        if unseen.size == 0:
            raise ValidationError("no unseen classes to choose a positive from")
        pos_idx = _nearest(d, unseen)
        retained = np.ones(len(ids), dtype=bool)
    else:
        pos_idx = _nearest(d, semantics.indices("all"))
        retained = ~np.asarray(semantics.seen, dtype=bool)[pos_idx]
    neg_idx = _nearest(d, seen)

    return [
        TripletAssignment(
            anchor_id=ids[i],
            positive=semantics.class_ids[pos_idx[i]],
            negative=semantics.class_ids[neg_idx[i]],
            retained=bool(retained[i]),
        )
        for i in range(len(ids))
    ]
