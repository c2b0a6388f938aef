import dataclasses

import numpy as np
import pytest

from tzsl import (
    DataFormatError,
    Dataset,
    EmbeddingRecord,
    SemanticTable,
    SynthConfig,
    ValidationError,
    generate_synthetic,
    halve_unlabeled,
    hold_out_seen,
    load_dataset,
    normalize_features,
    save_dataset,
    split_seen_for_validation,
)

from conftest import make_dataset


class TestSyntheticGenerator:
    def test_record_counts(self):
        cfg = SynthConfig(seen_classes=5, unseen_classes=3, semantic_dim=4,
                          feature_dim=6, samples_per_class=20, seed=0)
        ds = generate_synthetic(cfg)
        assert len(ds.train_records()) == 100
        assert len(ds.test_records()) == 60
        assert all(r.label is not None for r in ds.records)

    def test_zero_noise_collapses_to_prototypes(self):
        cfg = SynthConfig(seen_classes=3, unseen_classes=2, semantic_dim=4,
                          feature_dim=5, samples_per_class=7,
                          sigma_proto=0.0, sigma_sample=0.0, seed=1)
        ds = generate_synthetic(cfg)
        by_class = {}
        for r in ds.records:
            by_class.setdefault(r.label, []).append(r.feature)
        for feats in by_class.values():
            for f in feats[1:]:
                assert np.array_equal(f, feats[0])

    def test_same_seed_bitwise_identical(self):
        cfg = SynthConfig(seen_classes=4, unseen_classes=2, semantic_dim=3,
                          feature_dim=4, samples_per_class=5, seed=11)
        a = generate_synthetic(cfg)
        b = generate_synthetic(cfg)
        assert len(a.records) == len(b.records)
        for ra, rb in zip(a.records, b.records):
            assert ra.id == rb.id and ra.label == rb.label and ra.split == rb.split
            assert ra.feature.tobytes() == rb.feature.tobytes()
        assert a.semantics.vectors.tobytes() == b.semantics.vectors.tobytes()

    def test_noise_free_unseen_classes_are_nearest_prototype_separable(self):
        cfg = SynthConfig(seen_classes=6, unseen_classes=4, semantic_dim=5,
                          feature_dim=8, samples_per_class=10,
                          sigma_sample=0.0, cluster_quality=0.0, seed=3)
        ds = generate_synthetic(cfg)
        protos = {}
        for r in ds.records:
            protos.setdefault(r.label, r.feature)
        correct = 0
        test = ds.test_records()
        for r in test:
            best = min(protos, key=lambda c: float(np.sum((r.feature - protos[c]) ** 2)))
            correct += best == r.label
        assert correct == len(test)

    def test_features_normalized_into_tanh_range(self):
        ds = generate_synthetic(SynthConfig(seed=5))
        x = np.array([r.feature for r in ds.records])
        assert x.min() >= -0.9 - 1e-12 and x.max() <= 0.9 + 1e-12

    def test_invalid_config_rejected(self):
        with pytest.raises(ValidationError):
            SynthConfig(samples_per_class=0)
        with pytest.raises(ValidationError):
            SynthConfig(sigma_proto=-0.1)
        with pytest.raises(ValidationError):
            SynthConfig(cluster_quality=1.5)


class TestFileRoundTrip:
    def test_round_trip_preserves_features(self, tmp_path):
        ds = generate_synthetic(SynthConfig(seen_classes=4, unseen_classes=3,
                                            semantic_dim=3, feature_dim=5,
                                            samples_per_class=4, seed=2))
        fp, sp = tmp_path / "f.emb", tmp_path / "s.sem"
        save_dataset(ds, fp, sp)
        back = load_dataset(fp, sp)
        assert len(back.records) == len(ds.records)
        for a, b in zip(ds.records, back.records):
            assert a.id == b.id and a.label == b.label and a.split == b.split
            assert np.abs(a.feature - b.feature).max() < 1e-12
        assert np.abs(ds.semantics.vectors - back.semantics.vectors).max() == 0.0

    def test_empty_record_list(self, tmp_path):
        sem = SemanticTable(("a", "b"), ("a", "b"), np.zeros((2, 3)), (True, False))
        ds = Dataset((), sem, 4)
        fp, sp = tmp_path / "f.emb", tmp_path / "s.sem"
        save_dataset(ds, fp, sp)
        back = load_dataset(fp, sp)
        assert back.records == ()
        assert back.feature_dim == 4

    def test_semantic_file_row_count(self, tmp_path):
        ds = generate_synthetic(SynthConfig(seen_classes=7, unseen_classes=3,
                                            semantic_dim=3, feature_dim=4,
                                            samples_per_class=2, seed=0))
        fp, sp = tmp_path / "f.emb", tmp_path / "s.sem"
        save_dataset(ds, fp, sp)
        lines = [l for l in sp.read_text().splitlines() if l]
        assert len(lines) == 1 + 10

    def test_save_is_deterministic(self, tmp_path):
        ds = generate_synthetic(SynthConfig(seen_classes=3, unseen_classes=2,
                                            semantic_dim=3, feature_dim=4,
                                            samples_per_class=3, seed=9))
        save_dataset(ds, tmp_path / "a.emb", tmp_path / "a.sem")
        save_dataset(ds, tmp_path / "b.emb", tmp_path / "b.sem")
        assert (tmp_path / "a.emb").read_bytes() == (tmp_path / "b.emb").read_bytes()
        assert (tmp_path / "a.sem").read_bytes() == (tmp_path / "b.sem").read_bytes()


def _write(path, text):
    path.write_text(text, encoding="utf-8")


GOOD_SEM = "SEM v1 d=2\nc1,one,seen,0.1,0.2\nc2,two,unseen,0.3,0.4\n"


class TestLoaderErrors:
    def test_malformed_feature_header(self, tmp_path):
        _write(tmp_path / "s.sem", GOOD_SEM)
        _write(tmp_path / "f.emb", "EMBED m=3\nx,train,c1,1,2,3\n")
        with pytest.raises(DataFormatError, match="malformed header"):
            load_dataset(tmp_path / "f.emb", tmp_path / "s.sem")

    def test_unknown_feature_version(self, tmp_path):
        _write(tmp_path / "s.sem", GOOD_SEM)
        _write(tmp_path / "f.emb", "EMB v9 m=3\n")
        with pytest.raises(DataFormatError, match="version"):
            load_dataset(tmp_path / "f.emb", tmp_path / "s.sem")

    def test_dimension_mismatch_cites_line(self, tmp_path):
        _write(tmp_path / "s.sem", GOOD_SEM)
        _write(tmp_path / "f.emb",
               "EMB v1 m=3\nr1,train,c1,1.0,2.0,3.0\nr2,train,c1,1.0,2.0,3.0,4.0\n")
        with pytest.raises(DataFormatError, match=r"f\.emb:3"):
            load_dataset(tmp_path / "f.emb", tmp_path / "s.sem")

    def test_unknown_class_label(self, tmp_path):
        _write(tmp_path / "s.sem", GOOD_SEM)
        _write(tmp_path / "f.emb", "EMB v1 m=2\nr1,train,ghost,1.0,2.0\n")
        with pytest.raises(DataFormatError, match="ghost"):
            load_dataset(tmp_path / "f.emb", tmp_path / "s.sem")

    def test_duplicate_class_id(self, tmp_path):
        _write(tmp_path / "s.sem",
               "SEM v1 d=2\nc1,one,seen,0.1,0.2\nc1,dup,unseen,0.3,0.4\n")
        _write(tmp_path / "f.emb", "EMB v1 m=2\n")
        with pytest.raises(DataFormatError, match="duplicate"):
            load_dataset(tmp_path / "f.emb", tmp_path / "s.sem")

    def test_unlabeled_train_record(self, tmp_path):
        _write(tmp_path / "s.sem", GOOD_SEM)
        _write(tmp_path / "f.emb", "EMB v1 m=2\nr1,train,_,1.0,2.0\n")
        with pytest.raises(DataFormatError, match="no label"):
            load_dataset(tmp_path / "f.emb", tmp_path / "s.sem")

    def test_bad_split(self, tmp_path):
        _write(tmp_path / "s.sem", GOOD_SEM)
        _write(tmp_path / "f.emb", "EMB v1 m=2\nr1,weird,c1,1.0,2.0\n")
        with pytest.raises(DataFormatError, match="split"):
            load_dataset(tmp_path / "f.emb", tmp_path / "s.sem")

    def test_unparseable_float(self, tmp_path):
        _write(tmp_path / "s.sem", GOOD_SEM)
        _write(tmp_path / "f.emb", "EMB v1 m=2\nr1,train,c1,1.0,zap\n")
        with pytest.raises(DataFormatError, match="zap"):
            load_dataset(tmp_path / "f.emb", tmp_path / "s.sem")

    def test_bad_semantic_partition(self, tmp_path):
        _write(tmp_path / "s.sem", "SEM v1 d=2\nc1,one,sorta,0.1,0.2\n")
        _write(tmp_path / "f.emb", "EMB v1 m=2\n")
        with pytest.raises(DataFormatError, match="seen"):
            load_dataset(tmp_path / "f.emb", tmp_path / "s.sem")


class TestNormalization:
    def test_spans_target_interval(self):
        ds = make_dataset(per_class=6)
        out = normalize_features(ds)
        x = np.array([r.feature for r in out.records])
        assert np.allclose(x.min(axis=0), -0.9, atol=1e-12)
        assert np.allclose(x.max(axis=0), 0.9, atol=1e-12)
        assert out.feature_scale is not None

    def test_idempotent_within_tolerance(self):
        ds = normalize_features(make_dataset(per_class=5))
        again = normalize_features(ds)
        for a, b in zip(ds.records, again.records):
            assert np.abs(a.feature - b.feature).max() < 1e-12

    def test_constant_dimension_maps_to_zero(self):
        sem = SemanticTable(("c",), ("c",), np.zeros((1, 2)), (True,))
        recs = tuple(
            EmbeddingRecord(f"r{i}", np.array([5.0, float(i)]), "c", "train")
            for i in range(3)
        )
        out = normalize_features(Dataset(recs, sem, 2))
        for r in out.records:
            assert r.feature[0] == 0.0


class TestValidationSplit:
    def test_thirty_classes_fraction_17_percent_gives_five(self):
        ds = make_dataset(n_seen=30, n_unseen=2, per_class=2, seed=4)
        cv, pseudo = split_seen_for_validation(ds, 0.17, seed=0)
        assert len(cv.semantics.unseen_ids) == 5
        assert len(cv.semantics.seen_ids) == 25

    def test_two_classes_fraction_half(self):
        ds = make_dataset(n_seen=2, n_unseen=1, per_class=3, seed=4)
        cv, _ = split_seen_for_validation(ds, 0.5, seed=1)
        assert len(cv.semantics.unseen_ids) == 1
        assert len(cv.semantics.seen_ids) == 1

    def test_same_seed_same_partition(self):
        ds = make_dataset(n_seen=10, n_unseen=2, per_class=2, seed=4)
        a, _ = split_seen_for_validation(ds, 0.3, seed=7)
        b, _ = split_seen_for_validation(ds, 0.3, seed=7)
        assert a.semantics.unseen_ids == b.semantics.unseen_ids

    def test_pseudo_records_moved_class_level(self):
        ds = make_dataset(n_seen=6, n_unseen=2, per_class=4, seed=4)
        cv, pseudo = split_seen_for_validation(ds, 0.34, seed=7)
        pseudo_classes = set(cv.semantics.unseen_ids)
        for r in cv.records:
            expected = "test" if r.label in pseudo_classes else "train"
            assert r.split == expected
        assert {r.label for r in pseudo.records} == pseudo_classes
        # real unseen classes and their records are excluded from the view
        assert all(not cid.startswith("u") for cid in cv.semantics.class_ids)

    def test_disjoint_partition_after_view(self):
        ds = make_dataset(n_seen=8, n_unseen=2, per_class=2, seed=4)
        cv, _ = split_seen_for_validation(ds, 0.25, seed=3)
        assert not set(cv.semantics.seen_ids) & set(cv.semantics.unseen_ids)

    def test_erroneous_fractions(self):
        ds = make_dataset(n_seen=2, n_unseen=1, per_class=2, seed=4)
        with pytest.raises(ValidationError):
            split_seen_for_validation(ds, 0.9, seed=0)
        with pytest.raises(ValidationError):
            split_seen_for_validation(ds, 0.0, seed=0)


class TestHalveUnlabeled:
    def _dataset_with_test(self, n_test, seed=0):
        cfg = SynthConfig(seen_classes=3, unseen_classes=4, semantic_dim=3,
                          feature_dim=4, samples_per_class=max(1, (n_test + 3) // 4 + 1),
                          seed=seed)
        ds = generate_synthetic(cfg)
        # trim test records to exactly n_test
        test = [r for r in ds.records if r.split == "test"][:n_test]
        train = [r for r in ds.records if r.split == "train"]
        return Dataset(tuple(train + test), ds.semantics, ds.feature_dim)

    def test_even_split(self):
        ds = self._dataset_with_test(100)
        a, b = halve_unlabeled(ds, seed=0)
        assert len(a.test_records()) == 50
        assert len(b.test_records()) == 50

    def test_odd_split(self):
        ds = self._dataset_with_test(101)
        a, b = halve_unlabeled(ds, seed=0)
        sizes = sorted([len(a.test_records()), len(b.test_records())])
        assert sizes == [50, 51]

    def test_partition_property(self):
        ds = self._dataset_with_test(37)
        a, b = halve_unlabeled(ds, seed=5)
        ids_a = {r.id for r in a.test_records()}
        ids_b = {r.id for r in b.test_records()}
        assert not ids_a & ids_b
        assert ids_a | ids_b == {r.id for r in ds.test_records()}
        # both halves keep the full train pool
        assert len(a.train_records()) == len(ds.train_records())

    def test_deterministic(self):
        ds = self._dataset_with_test(40)
        a1, _ = halve_unlabeled(ds, seed=9)
        a2, _ = halve_unlabeled(ds, seed=9)
        assert [r.id for r in a1.test_records()] == [r.id for r in a2.test_records()]

    def test_too_few_records(self):
        ds = self._dataset_with_test(1)
        with pytest.raises(ValidationError):
            halve_unlabeled(ds, seed=0)


class TestTrainViewHygiene:
    def test_view_carries_no_test_labels(self):
        ds = make_dataset()
        view = ds.train_view()
        assert not hasattr(view, "unlabeled_labels")
        assert view.unlabeled_features.shape[0] == len(ds.test_records())
        assert all(r.split == "train" for r in view.seen_records)

    def test_view_never_reads_test_labels(self):
        ds = make_dataset()

        class Spy(EmbeddingRecord):
            @property
            def label(self):
                raise AssertionError("test label was read")

        spies = []
        for r in ds.records:
            if r.split == "test":
                spy = object.__new__(Spy)
                for field in ("id", "feature", "split"):
                    object.__setattr__(spy, field, getattr(r, field))
                spies.append(spy)
            else:
                spies.append(r)
        object.__setattr__(ds, "records", tuple(spies))
        view = ds.train_view()
        assert view.unlabeled_features.shape[0] == len(spies) - len(ds.train_records())


class TestHoldOutSeen:
    def test_moves_expected_fraction(self):
        ds = make_dataset(n_seen=4, n_unseen=2, per_class=10, seed=1)
        out = hold_out_seen(ds, 0.3, seed=2)
        for cid in out.semantics.seen_ids:
            train = [r for r in out.records if r.label == cid and r.split == "train"]
            test = [r for r in out.records if r.label == cid and r.split == "test"]
            assert len(test) == 3 and len(train) == 7

    def test_labels_retained_and_at_least_one_train_left(self):
        ds = make_dataset(n_seen=2, n_unseen=1, per_class=2, seed=1)
        out = hold_out_seen(ds, 0.9, seed=0)
        for cid in out.semantics.seen_ids:
            train = [r for r in out.records if r.label == cid and r.split == "train"]
            assert len(train) >= 1
        assert all(r.label is not None for r in out.test_records())


class TestRecordValidation:
    def test_train_record_needs_label(self):
        with pytest.raises(ValidationError):
            EmbeddingRecord("x", np.zeros(3), None, "train")

    def test_reserved_label_rejected(self):
        with pytest.raises(ValidationError):
            EmbeddingRecord("x", np.zeros(3), "_", "test")

    def test_train_label_must_be_seen(self):
        sem = SemanticTable(("a", "b"), ("a", "b"), np.zeros((2, 2)), (True, False))
        rec = EmbeddingRecord("r", np.zeros(3), "b", "train")
        with pytest.raises(ValidationError):
            Dataset((rec,), sem, 3)

    def test_duplicate_class_ids_rejected(self):
        with pytest.raises(ValidationError):
            SemanticTable(("a", "a"), ("a", "a"), np.zeros((2, 2)), (True, False))
