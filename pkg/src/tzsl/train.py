"""Two-stage training: supervised warm start, then semi-supervised refinement.

Stage one minimizes the supervised objective over shuffled seen-class
mini-batches. Stage two starts from those weights (with a fresh optimizer
state), and each epoch first recomputes the pseudo-label triplet
assignments for every unlabeled record with the current weights, then
walks paired mini-batches of seen and unlabeled data minimizing the
combined objective. The shorter stream cycles; an epoch ends when the
longer stream is exhausted.

Reproducibility: all randomness derives from the config seed through
fixed, independently keyed streams — weight init on one stream, the
per-epoch shuffles of the seen and unlabeled sequences on two others
keyed by a global epoch counter that continues across stages. Identical
(seed, config, dataset) therefore reproduce every checkpoint bitwise, and
training resumed from a saved checkpoint matches an uninterrupted run.
"""

from __future__ import annotations

import dataclasses
import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, split_seen_for_validation
from .errors import DataFormatError, ShapeError, ValidationError
from .fileio import atomic_write_bytes
from .losses import (
    VARIANT_EUCLIDEAN,
    VARIANT_TRIPLET,
    LossBreakdown,
    inductive_loss_from_arrays,
    stack_labeled_batch,
    transductive_loss_from_arrays,
)
from .network import AdamState, ProjectionNet, adam_step, init_adam, init_net
from .triplets import MODE_GZSL, MODE_ZSL, form_triplets

STAGE_INDUCTIVE = "inductive"
STAGE_TRANSDUCTIVE = "transductive"

# Stream tags for seeded RNGs; the epoch-keyed streams take the global
# epoch counter so stages compose without replaying each other's draws.
_STREAM_INIT = 0
_STREAM_SEEN = 1
_STREAM_UNLABELED = 2

EARLY_STOP_REL_TOL = 1e-5
EARLY_STOP_PATIENCE = 5


@dataclass(frozen=True)
class TrainConfig:
    """All hyperparameters of a run.

    ``batch_unlabeled=None`` means "same as batch_seen". The defaults are
    the settings used throughout: lr 1e-4, alpha 0.15, lambda 1e-4, seen
    batch 32, margin 1.0.
    """

    mode: str = MODE_ZSL
    alpha: float = 0.15
    lam: float = 1e-4
    margin: float = 1.0
    lr: float = 1e-4
    batch_seen: int = 32
    batch_unlabeled: int | None = None
    epochs_inductive: int = 200
    epochs_transductive: int = 200
    hidden_dim: int = 512
    seed: int = 0
    variant: str = VARIANT_TRIPLET
    early_stop: bool = False

    def __post_init__(self):
        if self.mode not in (MODE_ZSL, MODE_GZSL):
            raise ValidationError(f"mode must be zsl|gzsl, got {self.mode!r}")
        if self.variant not in (VARIANT_TRIPLET, VARIANT_EUCLIDEAN):
            raise ValidationError(f"variant must be triplet|euclidean, got {self.variant!r}")
        if self.alpha < 0 or self.lam < 0 or self.margin < 0:
            raise ValidationError("alpha, lambda and margin must be >= 0")
        if self.lr <= 0:
            raise ValidationError(f"learning rate must be > 0, got {self.lr}")
        if self.batch_seen < 1:
            raise ValidationError(f"batch_seen must be >= 1, got {self.batch_seen}")
        if self.batch_unlabeled is not None and self.batch_unlabeled < 1:
            raise ValidationError(
                f"batch_unlabeled must be >= 1, got {self.batch_unlabeled}"
            )
        if self.epochs_inductive < 0 or self.epochs_transductive < 0:
            raise ValidationError("epoch counts must be >= 0")
        if self.hidden_dim < 1:
            raise ValidationError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")

    @property
    def effective_batch_unlabeled(self) -> int:
        return self.batch_seen if self.batch_unlabeled is None else self.batch_unlabeled


@dataclass(frozen=True)
class Checkpoint:
    """Weights plus everything needed to reproduce or resume the run."""

    net: ProjectionNet
    config: TrainConfig
    stage: str
    epoch: int
    history: tuple[LossBreakdown, ...]

    def __post_init__(self):
        if self.stage not in (STAGE_INDUCTIVE, STAGE_TRANSDUCTIVE):
            raise ValidationError(f"unknown stage {self.stage!r}")
        if len(self.history) != self.epoch:
            raise ValidationError(
                f"history length {len(self.history)} != epochs completed {self.epoch}"
            )


def _stream_rng(seed: int, stream: int, epoch: int | None = None) -> np.random.Generator:
    key = [seed, stream] if epoch is None else [seed, stream, epoch]
    return np.random.default_rng(key)


def derive_seed(*parts: int) -> int:
    """Fold integer tags into a fresh 32-bit seed, deterministically."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _mean_breakdown(batches: Sequence[LossBreakdown], retained: int) -> LossBreakdown:
    n = len(batches)
    return LossBreakdown(
        total=sum(b.total for b in batches) / n,
        supervised=sum(b.supervised for b in batches) / n,
        unsupervised=sum(b.unsupervised for b in batches) / n,
        regularizer=sum(b.regularizer for b in batches) / n,
        retained_count=retained,
    )


class _EarlyStop:
    """Stop after `patience` consecutive epochs of < rel_tol improvement."""

    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.prev: float | None = None
        self.streak = 0

    def should_stop(self, total: float) -> bool:
        if not self.enabled:
            return False
        if self.prev is not None:
            rel = (self.prev - total) / max(abs(self.prev), 1e-300)
            self.streak = self.streak + 1 if rel < EARLY_STOP_REL_TOL else 0
        self.prev = total
        return self.streak >= EARLY_STOP_PATIENCE


def _seen_batches(order: np.ndarray, batch: int) -> list[np.ndarray]:
    return [order[i : i + batch] for i in range(0, len(order), batch)]


def train_inductive(dataset: Dataset, config: TrainConfig) -> Checkpoint:
    """Stage one: fit the projection on labeled seen-class records only."""
    view = dataset.train_view()
    if not view.seen_records:
        raise ValidationError("dataset has no labeled train records")
    net = init_net(
        dataset.semantic_dim, config.hidden_dim, dataset.feature_dim,
        seed=[config.seed, _STREAM_INIT],
    )
    state = init_adam(net)
    history: list[LossBreakdown] = []
    stopper = _EarlyStop(config.early_stop)
    sem_inputs, targets = stack_labeled_batch(view.seen_records, view.semantics)
    n_seen = len(view.seen_records)
    for epoch in range(config.epochs_inductive):
        order = _stream_rng(config.seed, _STREAM_SEEN, epoch).permutation(n_seen)
        batch_logs = []
        for idx in _seen_batches(order, config.batch_seen):
            breakdown, grad = inductive_loss_from_arrays(
                net, sem_inputs[idx], targets[idx], config.lam
            )
            net, state = adam_step(net, grad, state, config.lr)
            batch_logs.append(breakdown)
        history.append(_mean_breakdown(batch_logs, 0))
        if stopper.should_stop(history[-1].total):
            break
    return Checkpoint(net, config, STAGE_INDUCTIVE, len(history), tuple(history))


def _cycled(order: np.ndarray, start: int, count: int) -> np.ndarray:
    n = len(order)
    return order[(start + np.arange(count)) % n]


def train_transductive(dataset: Dataset, config: TrainConfig, init: Checkpoint) -> Checkpoint:
    """Stage two: refine inductive weights with the unlabeled objective.

    Per epoch, triplet assignments are recomputed once for all unlabeled
    records with the current weights and held fixed through the epoch's
    mini-batches. Requires an inductive-stage checkpoint as ``init``.
    """
    if init.stage != STAGE_INDUCTIVE:
        raise ValidationError(
            f"init must be an inductive-stage checkpoint, got {init.stage!r}"
        )
    view = dataset.train_view()
    if not view.seen_records:
        raise ValidationError("dataset has no labeled train records")
    n_unl = view.unlabeled_features.shape[0]
    if n_unl == 0:
        raise ValidationError("dataset has no unlabeled test records")
    net = init.net
    if (net.input_dim, net.output_dim) != (dataset.semantic_dim, dataset.feature_dim):
        raise ShapeError(
            "checkpoint network dims",
            (dataset.semantic_dim, dataset.feature_dim),
            (net.input_dim, net.output_dim),
        )

    state = init_adam(net)
    history = list(init.history)
    stopper = _EarlyStop(config.early_stop)
    sem_inputs, targets = stack_labeled_batch(view.seen_records, view.semantics)
    n_seen = len(view.seen_records)
    n_batch_s = config.batch_seen
    n_batch_u = config.effective_batch_unlabeled
    steps_seen = math.ceil(n_seen / n_batch_s)
    steps_unl = math.ceil(n_unl / n_batch_u)
    steps = max(steps_seen, steps_unl)
    seen_is_longer = steps_seen >= steps_unl

    completed = 0
    for local_epoch in range(config.epochs_transductive):
        epoch = init.epoch + local_epoch
        assignments = form_triplets(
            net, view.unlabeled_ids, view.unlabeled_features, view.semantics, config.mode
        )
        retained = sum(1 for a in assignments if a.retained)
        seen_order = _stream_rng(config.seed, _STREAM_SEEN, epoch).permutation(n_seen)
        unl_order = _stream_rng(config.seed, _STREAM_UNLABELED, epoch).permutation(n_unl)
        batch_logs = []
        for t in range(steps):
            if seen_is_longer:
                s_idx = seen_order[t * n_batch_s : (t + 1) * n_batch_s]
                u_idx = _cycled(unl_order, t * n_batch_u, n_batch_u)
            else:
                u_idx = unl_order[t * n_batch_u : (t + 1) * n_batch_u]
                s_idx = _cycled(seen_order, t * n_batch_s, n_batch_s)
            feats = view.unlabeled_features[u_idx]
            batch_assignments = [assignments[i] for i in u_idx]
            breakdown, grad = transductive_loss_from_arrays(
                net, sem_inputs[s_idx], targets[s_idx], feats, batch_assignments,
                view.semantics, config.alpha, config.lam, config.margin, config.variant,
            )
            net, state = adam_step(net, grad, state, config.lr)
            batch_logs.append(breakdown)
        history.append(_mean_breakdown(batch_logs, retained))
        completed += 1
        if stopper.should_stop(history[-1].total):
            break
    return Checkpoint(net, config, STAGE_TRANSDUCTIVE, init.epoch + completed, tuple(history))


@dataclass(frozen=True)
class CvRow:
    """Cross-validation score for one grid point."""

    alpha: float
    lam: float
    margin: float
    mean_score: float
    std_score: float
    scores: tuple[float, ...]


def monte_carlo_cv(
    dataset: Dataset,
    grid: Sequence[tuple[float, float, float]],
    repetitions: int,
    fraction: float,
    base_config: TrainConfig,
) -> tuple[tuple[float, float, float], list[CvRow]]:
    """Hyperparameter search by repeated pseudo-unseen splits.

    For every (alpha, lambda, margin) grid point and repetition, a random
    subset of seen classes plays unseen: both stages run on the relabeled
    view and the transductive model is scored by top-1 accuracy on the
    pseudo-unseen records. Splits and training seeds depend only on the
    base seed and the repetition index, so grid points face identical
    splits. Ties go to the earliest grid point.
    """
    from .evaluate import evaluate  # deferred: evaluate imports this module

    if repetitions < 1:
        raise ValidationError(f"repetitions must be >= 1, got {repetitions}")
    grid = list(grid)
    if not grid:
        raise ValidationError("empty hyperparameter grid")

    rows: list[CvRow] = []
    for alpha, lam, margin in grid:
        scores = []
        for rep in range(repetitions):
            cv_ds, pseudo_view = split_seen_for_validation(
                dataset, fraction, seed=[base_config.seed, 7001, rep]
            )
            cfg = dataclasses.replace(
                base_config,
                mode=MODE_ZSL,
                alpha=alpha,
                lam=lam,
                margin=margin,
                seed=derive_seed(base_config.seed, 7002, rep),
            )
            ind = train_inductive(cv_ds, cfg)
            tns = train_transductive(cv_ds, cfg, ind)
            scores.append(evaluate(tns.net, pseudo_view, mode=MODE_ZSL).overall_top1)
        arr = np.array(scores)
        rows.append(
            CvRow(alpha, lam, margin, float(arr.mean()), float(arr.std()), tuple(scores))
        )

    best = rows[0]
    for row in rows[1:]:
        if row.mean_score > best.mean_score:
            best = row
    return (best.alpha, best.lam, best.margin), rows


_CKPT_MAGIC = b"ZSLCKPT v1\n"


def _config_to_text(config: TrainConfig) -> list[str]:
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"config.{f.name}={text}")
    return lines


def _config_from_items(items: dict[str, str]) -> TrainConfig:
    kwargs = {}
    for f in dataclasses.fields(TrainConfig):
        raw = items.get(f.name)
        if raw is None:
            continue
        if raw == "none":
            kwargs[f.name] = None
        elif f.type in ("int", "int | None"):
            kwargs[f.name] = int(raw)
        elif f.type == "float":
            kwargs[f.name] = float(raw)
        elif f.type == "bool":
            kwargs[f.name] = raw == "true"
        else:
            kwargs[f.name] = raw
    return TrainConfig(**kwargs)


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    """Versioned little-endian binary checkpoint; weights stored losslessly."""
    net = checkpoint.net
    blob = bytearray()
    blob += _CKPT_MAGIC
    blob += struct.pack("<III", net.input_dim, net.hidden_dim, net.output_dim)
    for arr in net.arrays():
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    lines = [f"stage={checkpoint.stage}", f"epoch={checkpoint.epoch}"]
    lines += _config_to_text(checkpoint.config)
    for h in checkpoint.history:
        lines.append(
            "history="
            f"{repr(h.total)},{repr(h.supervised)},{repr(h.unsupervised)},"
            f"{repr(h.regularizer)},{h.retained_count}"
        )
    text = ("\n".join(lines) + "\n").encode("utf-8")
    blob += struct.pack("<Q", len(text))
    blob += text
    atomic_write_bytes(path, bytes(blob))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_CKPT_MAGIC):
        if blob.startswith(b"ZSLCKPT"):
            raise DataFormatError(path, None, "unsupported checkpoint version")
        raise DataFormatError(path, None, "not a checkpoint file")
    off = len(_CKPT_MAGIC)

    def take(nbytes: int, what: str) -> bytes:
        nonlocal off
        if off + nbytes > len(blob):
            raise DataFormatError(path, None, f"truncated checkpoint ({what})")
        chunk = blob[off : off + nbytes]
        off += nbytes
        return chunk

    d, h1, m = struct.unpack("<III", take(12, "dimensions"))
    shapes = [(d, h1), (h1,), (h1, m), (m,)]
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        raw = take(count * 8, f"array {shape}")
        arrays.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape))
    (text_len,) = struct.unpack("<Q", take(8, "text length"))
    text = take(text_len, "text block").decode("utf-8")
    if off != len(blob):
        raise DataFormatError(path, None, f"{len(blob) - off} trailing bytes")

    items: dict[str, str] = {}
    history: list[LossBreakdown] = []
    for line in text.splitlines():
        if not line:
            continue
        key, _, value = line.partition("=")
        if key == "history":
            parts = value.split(",")
            if len(parts) != 5:
                raise DataFormatError(path, None, f"malformed history entry {value!r}")
            history.append(
                LossBreakdown(
                    float(parts[0]), float(parts[1]), float(parts[2]),
                    float(parts[3]), int(parts[4]),
                )
            )
        elif key.startswith("config."):
            items[key[len("config."):]] = value
        else:
            items[key] = value
    try:
        config = _config_from_items(items)
        return Checkpoint(
            ProjectionNet(*arrays), config, items.get("stage", ""),
            int(items.get("epoch", "-1")), tuple(history),
        )
    except (ValidationError, KeyError, ValueError) as exc:
        raise DataFormatError(path, None, f"invalid checkpoint payload: {exc}") from None
