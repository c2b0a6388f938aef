"""Embedding datasets: data model, text formats, splits, synthetic generator.

A dataset couples per-sample feature embeddings with a semantic table that
maps every class to a semantic vector and marks it seen or unseen. Records
are tagged either ``train`` (labeled, seen classes) or ``test`` (unlabeled
as far as training is concerned; a ground-truth label may be stored but is
only ever consumed by evaluation).

File formats (UTF-8 text, comma-separated, floats in shortest round-trip
decimal via ``repr``):

* feature file — header ``EMB v1 m=<int>`` then one record per line,
  ``<id>,<train|test>,<label-or-_>,<v1>,...,<vm>``; ``_`` means no label.
* semantic file — header ``SEM v1 d=<int>`` then one class per line,
  ``<class-id>,<name>,<seen|unseen>,<v1>,...,<vd>``.

Loaders reject unknown format versions. On load, features are affinely
rescaled per dimension into [-0.9, 0.9] so that targets are representable
by a tanh-bounded projection; the applied map is recorded on the dataset.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DataFormatError, ShapeError, ValidationError
from .fileio import atomic_write_text

Array = NDArray[np.float64]

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"

NO_LABEL = "_"

FEATURE_SCALE_LOW = -0.9
FEATURE_SCALE_HIGH = 0.9

_EMB_HEADER = re.compile(r"^EMB v1 m=(\d+)$")
_SEM_HEADER = re.compile(r"^SEM v1 d=(\d+)$")


@dataclass(frozen=True)
class EmbeddingRecord:
    """One sample: id, feature vector, optional class label, split tag."""

    id: str
    feature: Array
    label: str | None
    split: str

    def __post_init__(self):
        object.__setattr__(self, "feature", np.asarray(self.feature, dtype=np.float64))
        if self.feature.ndim != 1:
            raise ShapeError(f"feature of record {self.id!r}", "1-d vector", self.feature.shape)
        if self.split not in (SPLIT_TRAIN, SPLIT_TEST):
            raise ValidationError(f"record {self.id!r}: unknown split {self.split!r}")
        if self.split == SPLIT_TRAIN and self.label is None:
            raise ValidationError(f"record {self.id!r}: train records must carry a label")
        if self.label == NO_LABEL:
            raise ValidationError(f"record {self.id!r}: {NO_LABEL!r} is reserved for no-label")


@dataclass(frozen=True)
class SemanticTable:
    """Ordered class table: ids, display names, semantic vectors, seen flags.

    Table order is significant: argmin tie-breaking and report ordering
    both follow it. Seen and unseen sets are disjoint by construction
    (each class carries exactly one flag).
    """

    class_ids: tuple[str, ...]
    names: tuple[str, ...]
    vectors: Array
    seen: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_ids", tuple(self.class_ids))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "seen", tuple(bool(s) for s in self.seen))
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2:
            raise ShapeError("semantic vectors", "(n_classes, d) array", vecs.shape)
        object.__setattr__(self, "vectors", vecs)
        n = len(self.class_ids)
        if len(self.names) != n or len(self.seen) != n or vecs.shape[0] != n:
            raise ValidationError(
                f"semantic table size mismatch: {n} ids, {len(self.names)} names, "
                f"{len(self.seen)} flags, {vecs.shape[0]} vectors"
            )
        for cid in self.class_ids:
            if not cid or cid == NO_LABEL:
                raise ValidationError(f"invalid class id {cid!r}")
        index = {}
        for i, cid in enumerate(self.class_ids):
            if cid in index:
                raise ValidationError(f"duplicate class id {cid!r}")
            index[cid] = i
        object.__setattr__(self, "_index", index)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    @property
    def seen_ids(self) -> tuple[str, ...]:
        return tuple(c for c, s in zip(self.class_ids, self.seen) if s)

    @property
    def unseen_ids(self) -> tuple[str, ...]:
        return tuple(c for c, s in zip(self.class_ids, self.seen) if not s)

    def indices(self, subset: str = "all") -> np.ndarray:
        """Class indices for ``subset`` in {'all', 'seen', 'unseen'}, table order."""
        flags = np.asarray(self.seen, dtype=bool)
        if subset == "all":
            return np.arange(self.n_classes)
        if subset == "seen":
            return np.flatnonzero(flags)
        if subset == "unseen":
            return np.flatnonzero(~flags)
        raise ValidationError(f"unknown class subset {subset!r}")

    def index_of(self, class_id: str) -> int:
        try:
            return self._index[class_id]  # type: ignore[attr-defined]
        except KeyError:
            raise ValidationError(f"unknown class {class_id!r}") from None

    def is_seen(self, class_id: str) -> bool:
        return self.seen[self.index_of(class_id)]

    def vector_for(self, class_id: str) -> Array:
        return self.vectors[self.index_of(class_id)]

    def with_pseudo_unseen(self, pseudo_unseen: set[str]) -> "SemanticTable":
        """Copy of the table with the given seen classes re-flagged unseen."""
        for cid in pseudo_unseen:
            if not self.is_seen(cid):
                raise ValidationError(f"class {cid!r} is not seen; cannot re-flag it")
        flags = tuple(s and c not in pseudo_unseen for c, s in zip(self.class_ids, self.seen))
        return SemanticTable(self.class_ids, self.names, self.vectors, flags)


@dataclass(frozen=True)
class TrainView:
    """What training is allowed to see.

    Labeled records for the train split; for the test split only ids and
    features. Test-record labels are structurally absent, so no training
    code path can read them.
    """

    seen_records: tuple[EmbeddingRecord, ...]
    unlabeled_ids: tuple[str, ...]
    unlabeled_features: Array
    semantics: SemanticTable


@dataclass(frozen=True)
class Dataset:
    """Validated collection of records plus the semantic table.

    ``feature_scale``, when present, is the (2, m) array [a; b] of the
    per-dimension affine map ``x -> a*x + b`` applied by the last
    normalization, kept for reporting.
    """

    records: tuple[EmbeddingRecord, ...]
    semantics: SemanticTable
    feature_dim: int
    feature_scale: Array | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.feature_dim < 1:
            raise ValidationError(f"feature dim must be >= 1, got {self.feature_dim}")
        for r in self.records:
            if r.feature.shape != (self.feature_dim,):
                raise ShapeError(
                    f"feature of record {r.id!r}", (self.feature_dim,), r.feature.shape
                )
            if r.label is not None:
                idx = self.semantics.index_of(r.label)
                if r.split == SPLIT_TRAIN and not self.semantics.seen[idx]:
                    raise ValidationError(
                        f"train record {r.id!r} labeled with unseen class {r.label!r}"
                    )
        if self.feature_scale is not None:
            fs = np.asarray(self.feature_scale, dtype=np.float64)
            if fs.shape != (2, self.feature_dim):
                raise ShapeError("feature_scale", (2, self.feature_dim), fs.shape)
            object.__setattr__(self, "feature_scale", fs)

    @property
    def semantic_dim(self) -> int:
        return self.semantics.dim

    def train_records(self) -> tuple[EmbeddingRecord, ...]:
        return tuple(r for r in self.records if r.split == SPLIT_TRAIN)

    def test_records(self) -> tuple[EmbeddingRecord, ...]:
        return tuple(r for r in self.records if r.split == SPLIT_TEST)

    def train_view(self) -> TrainView:
        """Label-hygienic view for training; never touches test labels."""
        seen = []
        unl_ids = []
        unl_feats = []
        for r in self.records:
            if r.split == SPLIT_TRAIN:
                seen.append(r)
            else:
                unl_ids.append(r.id)
                unl_feats.append(r.feature)
        feats = (
            np.array(unl_feats) if unl_feats else np.zeros((0, self.feature_dim))
        )
        return TrainView(tuple(seen), tuple(unl_ids), feats, self.semantics)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic embedding-space generator.

    ``cluster_quality`` in [0, 1] widens the per-class sample spread by a
    factor ``1 + 3*cluster_quality``: 0 gives tight, well-separated
    clusters, 1 gives diffuse ones. ``sigma_proto`` offsets each class
    prototype away from the smooth semantic-to-feature map, which is what
    an inductively trained projector cannot predict.
    """

    seen_classes: int = 20
    unseen_classes: int = 8
    semantic_dim: int = 16
    feature_dim: int = 32
    samples_per_class: int = 50
    sigma_proto: float = 0.35
    sigma_sample: float = 0.06
    cluster_quality: float = 0.6
    seed: int = 1

    def __post_init__(self):
        for name in ("seen_classes", "unseen_classes", "semantic_dim", "feature_dim",
                     "samples_per_class"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.sigma_proto < 0 or self.sigma_sample < 0:
            raise ValidationError("noise sigmas must be >= 0")
        if not 0.0 <= self.cluster_quality <= 1.0:
            raise ValidationError(
                f"cluster_quality must be in [0, 1], got {self.cluster_quality}"
            )


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Build a synthetic dataset with a learnable semantic-feature relation.

    Semantic vectors are standard normal. A fixed random linear map sends
    them through tanh to class prototypes, each offset by prototype noise;
    samples scatter around their prototype. Seen-class samples become
    labeled train records; unseen-class samples become test records whose
    labels are retained for evaluation only. Deterministic in the seed.
    """
    rng = np.random.default_rng(cfg.seed)
    n_seen, n_unseen = cfg.seen_classes, cfg.unseen_classes
    n_classes = n_seen + n_unseen
    d, m = cfg.semantic_dim, cfg.feature_dim

    sem = rng.standard_normal((n_classes, d))
    lin_map = rng.standard_normal((m, d)) / math.sqrt(d)
    protos = np.tanh(sem @ lin_map.T)
    protos = protos + cfg.sigma_proto * rng.standard_normal((n_classes, m))
    spread = cfg.sigma_sample * (1.0 + 3.0 * cfg.cluster_quality)

    class_ids = tuple(
        f"s{c:02d}" if c < n_seen else f"u{c - n_seen:02d}" for c in range(n_classes)
    )
    records = []
    for c, cid in enumerate(class_ids):
        split = SPLIT_TRAIN if c < n_seen else SPLIT_TEST
        for i in range(cfg.samples_per_class):
            feat = protos[c] + spread * rng.standard_normal(m)
            records.append(EmbeddingRecord(f"{cid}-{i:03d}", feat, cid, split))

    table = SemanticTable(class_ids, class_ids, sem, tuple(c < n_seen for c in range(n_classes)))
    return normalize_features(Dataset(tuple(records), table, m))


def normalize_features(
    dataset: Dataset, low: float = FEATURE_SCALE_LOW, high: float = FEATURE_SCALE_HIGH
) -> Dataset:
    """Affinely rescale every feature dimension into [low, high].

    The min/max are taken over all records (train and test features are
    both available by construction of the transductive setting; labels are
    not involved). Constant dimensions map to 0. The applied map is stored
    in ``feature_scale``. Idempotent up to rounding.
    """
    if low >= high:
        raise ValidationError(f"need low < high, got [{low}, {high}]")
    m = dataset.feature_dim
    if not dataset.records:
        scale = np.vstack([np.ones(m), np.zeros(m)])
        return dataclasses.replace(dataset, feature_scale=scale)
    x = np.array([r.feature for r in dataset.records])
    mn, mx = x.min(axis=0), x.max(axis=0)
    span = mx - mn
    a = np.where(span > 0, (high - low) / np.where(span > 0, span, 1.0), 1.0)
    b = np.where(span > 0, low - a * mn, -mn)
    records = tuple(
        dataclasses.replace(r, feature=r.feature * a + b) for r in dataset.records
    )
    return dataclasses.replace(
        dataset, records=records, feature_scale=np.vstack([a, b])
    )


def _format_float(v: float) -> str:
    return repr(float(v))


def save_dataset(dataset: Dataset, features_path, semantics_path) -> None:
    """Write the two-file text form of the dataset (atomic, deterministic)."""
    for cid, name in zip(dataset.semantics.class_ids, dataset.semantics.names):
        for text, what in ((cid, "class id"), (name, "class name")):
            if "," in text or "\n" in text:
                raise ValidationError(f"{what} {text!r} may not contain commas or newlines")
    for r in dataset.records:
        if "," in r.id or "\n" in r.id:
            raise ValidationError(f"record id {r.id!r} may not contain commas or newlines")

    lines = [f"EMB v1 m={dataset.feature_dim}"]
    for r in dataset.records:
        label = NO_LABEL if r.label is None else r.label
        values = ",".join(_format_float(v) for v in r.feature)
        lines.append(f"{r.id},{r.split},{label},{values}")
    atomic_write_text(features_path, "\n".join(lines) + "\n")

    sem = dataset.semantics
    lines = [f"SEM v1 d={sem.dim}"]
    for i, cid in enumerate(sem.class_ids):
        part = "seen" if sem.seen[i] else "unseen"
        values = ",".join(_format_float(v) for v in sem.vectors[i])
        lines.append(f"{cid},{sem.names[i]},{part},{values}")
    atomic_write_text(semantics_path, "\n".join(lines) + "\n")


def _read_lines(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().splitlines()


def _parse_floats(fields: list[str], path, lineno: int) -> list[float]:
    out = []
    for f in fields:
        try:
            out.append(float(f))
        except ValueError:
            raise DataFormatError(path, lineno, f"cannot parse real number from {f!r}") from None
    return out


def load_semantics(path) -> SemanticTable:
    lines = _read_lines(path)
    if not lines:
        raise DataFormatError(path, 1, "empty file, expected 'SEM v1 d=<int>' header")
    match = _SEM_HEADER.match(lines[0])
    if not match:
        if lines[0].startswith("SEM v"):
            raise DataFormatError(path, 1, f"unsupported semantic-file version: {lines[0]!r}")
        raise DataFormatError(path, 1, f"malformed header {lines[0]!r}, expected 'SEM v1 d=<int>'")
    d = int(match.group(1))
    ids, names, flags, vecs = [], [], [], []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 3 + d:
            raise DataFormatError(
                path, lineno, f"expected {3 + d} fields for d={d}, got {len(fields)}"
            )
        cid, name, part = fields[0], fields[1], fields[2]
        if cid in seen_ids:
            raise DataFormatError(path, lineno, f"duplicate class id {cid!r}")
        seen_ids.add(cid)
        if part not in ("seen", "unseen"):
            raise DataFormatError(path, lineno, f"partition must be seen|unseen, got {part!r}")
        ids.append(cid)
        names.append(name)
        flags.append(part == "seen")
        vecs.append(_parse_floats(fields[3:], path, lineno))
    vectors = np.array(vecs) if vecs else np.zeros((0, d))
    try:
        return SemanticTable(tuple(ids), tuple(names), vectors, tuple(flags))
    except ValidationError as exc:
        raise DataFormatError(path, None, str(exc)) from None


def load_dataset(features_path, semantics_path) -> Dataset:
    """Load and validate a dataset, then normalize features into [-0.9, 0.9]."""
    semantics = load_semantics(semantics_path)
    lines = _read_lines(features_path)
    if not lines:
        raise DataFormatError(features_path, 1, "empty file, expected 'EMB v1 m=<int>' header")
    match = _EMB_HEADER.match(lines[0])
    if not match:
        if lines[0].startswith("EMB v"):
            raise DataFormatError(
                features_path, 1, f"unsupported feature-file version: {lines[0]!r}"
            )
        raise DataFormatError(
            features_path, 1, f"malformed header {lines[0]!r}, expected 'EMB v1 m=<int>'"
        )
    m = int(match.group(1))
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 3 + m:
            raise DataFormatError(
                features_path, lineno,
                f"expected {3 + m} fields for m={m}, got {len(fields)}",
            )
        rid, split, label = fields[0], fields[1], fields[2]
        if split not in (SPLIT_TRAIN, SPLIT_TEST):
            raise DataFormatError(
                features_path, lineno, f"split must be train|test, got {split!r}"
            )
        if label == NO_LABEL:
            if split == SPLIT_TRAIN:
                raise DataFormatError(
                    features_path, lineno, f"train record {rid!r} has no label"
                )
            parsed_label = None
        else:
            if label not in semantics.class_ids:
                raise DataFormatError(
                    features_path, lineno,
                    f"record {rid!r} labeled with unknown class {label!r}",
                )
            parsed_label = label
        feature = np.array(_parse_floats(fields[3:], features_path, lineno))
        try:
            records.append(EmbeddingRecord(rid, feature, parsed_label, split))
        except ValidationError as exc:
            raise DataFormatError(features_path, lineno, str(exc)) from None
    try:
        dataset = Dataset(tuple(records), semantics, m)
    except ValidationError as exc:
        raise DataFormatError(features_path, None, str(exc)) from None
    return normalize_features(dataset)


def split_seen_for_validation(dataset: Dataset, fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Class-level pseudo-unseen split of the seen classes, for cross-validation.

    Randomly re-flags round(fraction * S) of the S seen classes (at least
    one) as unseen; their train records become test records with labels
    retained for scoring. Real unseen classes and real test records are
    dropped from the view. Returns (full CV dataset, view of just the
    pseudo-unseen test records). Deterministic in the seed.
    """
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"fraction must be in (0, 1), got {fraction}")
    seen_ids = dataset.semantics.seen_ids
    n_seen = len(seen_ids)
    if n_seen < 2:
        raise ValidationError(f"need at least 2 seen classes, have {n_seen}")
    n_pseudo = max(1, int(math.floor(fraction * n_seen + 0.5)))
    if n_pseudo >= n_seen:
        raise ValidationError(
            f"fraction {fraction} would leave no training classes ({n_pseudo} of {n_seen})"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n_seen, size=n_pseudo, replace=False)
    pseudo = {seen_ids[i] for i in chosen}

    sem = dataset.semantics
    keep = [i for i, s in enumerate(sem.seen) if s]
    table = SemanticTable(
        tuple(sem.class_ids[i] for i in keep),
        tuple(sem.names[i] for i in keep),
        sem.vectors[keep],
        tuple(sem.class_ids[i] not in pseudo for i in keep),
    )
    records = []
    for r in dataset.records:
        if r.split != SPLIT_TRAIN:
            continue
        if r.label in pseudo:
            records.append(dataclasses.replace(r, split=SPLIT_TEST))
        else:
            records.append(r)
    cv_dataset = Dataset(tuple(records), table, dataset.feature_dim, dataset.feature_scale)
    pseudo_view = Dataset(
        tuple(r for r in records if r.split == SPLIT_TEST),
        table, dataset.feature_dim, dataset.feature_scale,
    )
    return cv_dataset, pseudo_view


def halve_unlabeled(dataset: Dataset, seed) -> tuple[Dataset, Dataset]:
    """Random disjoint halves of the test records, stratified by hidden label.

    Each half keeps all train records; half sizes differ by at most one.
    Records without an evaluation label form their own stratum.
    """
    test_idx = [i for i, r in enumerate(dataset.records) if r.split == SPLIT_TEST]
    if len(test_idx) < 2:
        raise ValidationError(f"need at least 2 test records, have {len(test_idx)}")

    strata: dict[str | None, list[int]] = {}
    for i in test_idx:
        strata.setdefault(dataset.records[i].label, []).append(i)
    ordered_keys: list[str | None] = [
        cid for cid in dataset.semantics.class_ids if cid in strata
    ]
    if None in strata:
        ordered_keys.append(None)

    rng = np.random.default_rng(seed)
    half_a: list[int] = []
    half_b: list[int] = []
    for key in ordered_keys:
        idx = np.array(strata[key])
        shuffled = idx[rng.permutation(len(idx))]
        n_a = len(idx) // 2
        if len(idx) % 2 == 1 and len(half_a) <= len(half_b):
            n_a += 1
        half_a.extend(shuffled[:n_a].tolist())
        half_b.extend(shuffled[n_a:].tolist())

    def build(keep: set[int]) -> Dataset:
        records = tuple(
            r for i, r in enumerate(dataset.records)
            if r.split == SPLIT_TRAIN or i in keep
        )
        return Dataset(records, dataset.semantics, dataset.feature_dim, dataset.feature_scale)

    return build(set(half_a)), build(set(half_b))


def hold_out_seen(dataset: Dataset, fraction: float, seed) -> Dataset:
    """Move a per-class fraction of seen train records to the test split.

    Labels are retained (evaluation-only), which is what a generalized
    evaluation needs to measure seen-class accuracy. At least one train
    record per class is always kept. Deterministic in the seed.
    """
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"fraction must be in (0, 1), got {fraction}")
    by_class: dict[str, list[int]] = {}
    for i, r in enumerate(dataset.records):
        if r.split == SPLIT_TRAIN:
            by_class.setdefault(r.label, []).append(i)

    rng = np.random.default_rng(seed)
    to_test: set[int] = set()
    for cid in dataset.semantics.class_ids:
        idx = by_class.get(cid)
        if not idx:
            continue
        k = min(int(math.floor(len(idx) * fraction + 0.5)), len(idx) - 1)
        if k <= 0:
            continue
        arr = np.array(idx)
        chosen = arr[rng.permutation(len(arr))][:k]
        to_test.update(chosen.tolist())

    records = tuple(
        dataclasses.replace(r, split=SPLIT_TEST) if i in to_test else r
        for i, r in enumerate(dataset.records)
    )
    return Dataset(records, dataset.semantics, dataset.feature_dim, dataset.feature_scale)
