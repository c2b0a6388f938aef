import numpy as np
import pytest

from tzsl import Dataset, EmbeddingRecord, SemanticTable, init_net


def random_net(rng, d=None, h1=None, m=None):
    """Small random net with dims <= 8 unless given explicitly."""
    d = d or int(rng.integers(1, 9))
    h1 = h1 or int(rng.integers(1, 9))
    m = m or int(rng.integers(1, 9))
    return init_net(d, h1, m, seed=int(rng.integers(0, 2**31)))


def make_semantics(n_seen, n_unseen, d, rng, prefix=("s", "u")):
    ids = [f"{prefix[0]}{i}" for i in range(n_seen)]
    ids += [f"{prefix[1]}{i}" for i in range(n_unseen)]
    flags = [True] * n_seen + [False] * n_unseen
    return SemanticTable(tuple(ids), tuple(ids), rng.standard_normal((len(ids), d)), tuple(flags))


def make_dataset(n_seen=3, n_unseen=2, d=4, m=5, per_class=4, seed=0):
    """Tiny labeled dataset: train records for seen classes, test for unseen."""
    rng = np.random.default_rng(seed)
    sem = make_semantics(n_seen, n_unseen, d, rng)
    records = []
    for ci, cid in enumerate(sem.class_ids):
        split = "train" if sem.seen[ci] else "test"
        for k in range(per_class):
            records.append(
                EmbeddingRecord(f"{cid}-{k}", rng.uniform(-0.8, 0.8, size=m), cid, split)
            )
    return Dataset(tuple(records), sem, m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
