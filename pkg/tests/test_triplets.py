import numpy as np
import pytest

from tzsl import (
    ProjectionNet,
    TripletAssignment,
    ValidationError,
    assign_negative,
    assign_positive_gzsl,
    assign_positive_zsl,
    form_triplets,
)
from tzsl.triplets import class_projections, squared_distances

from conftest import make_semantics, random_net


def scan_argmin(anchor, projections, indices, class_ids, transform=lambda d: d):
    """Exhaustive scan oracle: first class (table order) with minimal distance."""
    best_idx, best = None, None
    for idx in indices:
        d = 0.0
        for a, p in zip(anchor, projections[idx]):
            d += (a - p) ** 2
        d = transform(d)
        if best is None or d < best:
            best, best_idx = d, idx
    return class_ids[best_idx]


class TestPositiveZsl:
    def test_single_unseen_class(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(3, 1, 3, rng)
        assert assign_positive_zsl(net, rng.standard_normal(4), sem) == "u0"

    def test_exact_projection_match(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(2, 3, 3, rng)
        proj = class_projections(net, sem)
        anchor = proj[sem.index_of("u1")]
        assert assign_positive_zsl(net, anchor, sem) == "u1"

    def test_matches_brute_force_scan(self, rng):
        net = random_net(rng, d=4, h1=6, m=5)
        sem = make_semantics(4, 5, 4, rng)
        proj = class_projections(net, sem)
        unseen = sem.indices("unseen")
        for _ in range(20):
            anchor = rng.uniform(-1, 1, size=5)
            expected = scan_argmin(anchor, proj, unseen, sem.class_ids)
            assert assign_positive_zsl(net, anchor, sem) == expected

    def test_no_unseen_classes(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(3, 0, 3, rng)
        with pytest.raises(ValidationError):
            assign_positive_zsl(net, rng.standard_normal(4), sem)


class TestPositiveGzsl:
    def test_seen_nearest_is_discarded(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(2, 2, 3, rng)
        proj = class_projections(net, sem)
        anchor = proj[sem.index_of("s1")]
        cid, retained = assign_positive_gzsl(net, anchor, sem)
        assert cid == "s1" and retained is False

    def test_unseen_nearest_is_retained(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(2, 2, 3, rng)
        proj = class_projections(net, sem)
        anchor = proj[sem.index_of("u0")]
        cid, retained = assign_positive_gzsl(net, anchor, sem)
        assert cid == "u0" and retained is True

    def test_matches_brute_force_scan(self, rng):
        net = random_net(rng, d=4, h1=5, m=6)
        sem = make_semantics(5, 4, 4, rng)
        proj = class_projections(net, sem)
        everything = sem.indices("all")
        for _ in range(50):
            anchor = rng.uniform(-1, 1, size=6)
            expected = scan_argmin(anchor, proj, everything, sem.class_ids)
            cid, retained = assign_positive_gzsl(net, anchor, sem)
            assert cid == expected
            assert retained == (not sem.is_seen(expected))


class TestNegative:
    def test_single_seen_class(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(1, 3, 3, rng)
        assert assign_negative(net, rng.standard_normal(4), sem) == "s0"

    def test_anchor_on_seen_projection(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(3, 2, 3, rng)
        proj = class_projections(net, sem)
        anchor = proj[sem.index_of("s2")]
        assert assign_negative(net, anchor, sem) == "s2"

    def test_matches_brute_force_scan(self, rng):
        net = random_net(rng, d=4, h1=5, m=6)
        sem = make_semantics(6, 3, 4, rng)
        proj = class_projections(net, sem)
        seen = sem.indices("seen")
        for _ in range(50):
            anchor = rng.uniform(-1, 1, size=6)
            expected = scan_argmin(anchor, proj, seen, sem.class_ids)
            assert assign_negative(net, anchor, sem) == expected

    def test_no_seen_classes(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(0, 3, 3, rng)
        with pytest.raises(ValidationError):
            assign_negative(net, rng.standard_normal(4), sem)


class TestFormTriplets:
    def test_zsl_batch_of_one_is_retained(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(2, 2, 3, rng)
        out = form_triplets(net, ["a"], rng.uniform(-1, 1, (1, 4)), sem, "zsl")
        assert len(out) == 1 and out[0].retained

    def test_gzsl_all_near_seen_all_discarded(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(3, 1, 3, rng)
        proj = class_projections(net, sem)
        anchors = proj[sem.indices("seen")]
        ids = [f"a{i}" for i in range(len(anchors))]
        out = form_triplets(net, ids, anchors, sem, "gzsl")
        assert all(not t.retained for t in out)

    def test_matches_single_anchor_operations(self, rng):
        net = random_net(rng, d=4, h1=5, m=5)
        sem = make_semantics(4, 3, 4, rng)
        feats = rng.uniform(-1, 1, (30, 5))
        ids = [f"a{i}" for i in range(30)]
        for mode in ("zsl", "gzsl"):
            out = form_triplets(net, ids, feats, sem, mode)
            assert [t.anchor_id for t in out] == ids
            for i, t in enumerate(out):
                if mode == "zsl":
                    assert t.positive == assign_positive_zsl(net, feats[i], sem)
                    assert t.retained
                else:
                    cid, retained = assign_positive_gzsl(net, feats[i], sem)
                    assert (t.positive, t.retained) == (cid, retained)
                assert t.negative == assign_negative(net, feats[i], sem, t.positive)

    def test_gzsl_discard_rate_matches_scan(self, rng):
        net = random_net(rng, d=4, h1=5, m=5)
        sem = make_semantics(4, 3, 4, rng)
        proj = class_projections(net, sem)
        feats = rng.uniform(-1, 1, (40, 5))
        out = form_triplets(net, [str(i) for i in range(40)], feats, sem, "gzsl")
        expected_discards = 0
        for i in range(40):
            cid = scan_argmin(feats[i], proj, sem.indices("all"), sem.class_ids)
            expected_discards += sem.is_seen(cid)
        assert sum(1 for t in out if not t.retained) == expected_discards

    def test_retained_positive_is_global_minimum(self, rng):
        net = random_net(rng, d=4, h1=5, m=5)
        sem = make_semantics(4, 3, 4, rng)
        proj = class_projections(net, sem)
        feats = rng.uniform(-1, 1, (25, 5))
        d = squared_distances(feats, proj)
        out = form_triplets(net, [str(i) for i in range(25)], feats, sem, "zsl")
        for i, t in enumerate(out):
            pos_d = d[i, sem.index_of(t.positive)]
            for u in sem.indices("unseen"):
                assert pos_d <= d[i, u]
            assert sem.is_seen(t.negative)

    def test_argmin_invariant_under_distance_scaling(self, rng):
        net = random_net(rng, d=4, h1=5, m=5)
        sem = make_semantics(4, 3, 4, rng)
        proj = class_projections(net, sem)
        feats = rng.uniform(-1, 1, (20, 5))
        out = form_triplets(net, [str(i) for i in range(20)], feats, sem, "zsl")
        for i, t in enumerate(out):
            scaled = scan_argmin(feats[i], proj, sem.indices("unseen"),
                                 sem.class_ids, transform=lambda d: 7.25 * d)
            assert t.positive == scaled

    def test_tie_breaks_to_first_table_entry(self, rng):
        # all-zero net projects every class to the origin: all distances tie
        net = ProjectionNet(np.zeros((3, 4)), np.zeros(4), np.zeros((4, 5)), np.zeros(5))
        sem = make_semantics(3, 3, 3, rng)
        out = form_triplets(net, ["a"], rng.uniform(-1, 1, (1, 5)), sem, "zsl")
        assert out[0].positive == "u0"
        assert out[0].negative == "s0"

    def test_empty_batch_rejected(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(2, 2, 3, rng)
        with pytest.raises(ValidationError):
            form_triplets(net, [], np.zeros((0, 4)), sem, "zsl")

    def test_unknown_mode_rejected(self, rng):
        net = random_net(rng, d=3, h1=4, m=4)
        sem = make_semantics(2, 2, 3, rng)
        with pytest.raises(ValidationError):
            form_triplets(net, ["a"], np.zeros((1, 4)), sem, "weird")


class TestAssignmentInvariants:
    def test_retained_requires_distinct_positive_negative(self):
        with pytest.raises(ValidationError):
            TripletAssignment("a", "c1", "c1", True)
        TripletAssignment("a", "c1", "c1", False)  # discarded may collide
