import numpy as np
import pytest

from lowrank_occupancy.data import LevelBlock, TupleDataset
from lowrank_occupancy.errors import ShapeMismatch
from lowrank_occupancy.mdp import MarkovPolicy
from lowrank_occupancy.sampling import sample_level_dataset

from conftest import random_mdp


def _dataset(seed=0):
    m = random_mdp(seed, X=4, K=2, H=3, d=2)
    u = MarkovPolicy.uniform(3, 4, 2)
    return m, TupleDataset(tuple(sample_level_dataset(m, k, [u], u, 40, seed) for k in range(2)), m.init_dist, 4, 2)


def test_split_must_partition():
    e = np.arange(4)
    with pytest.raises(ShapeMismatch):
        LevelBlock(0, e, e, e, np.full((4, 2), 0.5), [0, 1], [1, 2])
    with pytest.raises(ShapeMismatch):
        LevelBlock(0, e, e, e[:3], np.full((4, 2), 0.5), [0, 1], [2, 3])


def test_block_levels_must_be_ordered():
    m, ds = _dataset()
    with pytest.raises(ShapeMismatch):
        TupleDataset((ds[1], ds[0]), m.init_dist, 4, 2)


def test_jsonl_round_trip(tmp_path):
    m, ds = _dataset(3)
    p = tmp_path / "d.jsonl"
    ds.save_jsonl(p)
    lines = p.read_text().splitlines()
    assert '"kind": "dataset"' in lines[0] and '"kind": "header"' in lines[1]
    back = TupleDataset.load_jsonl(p)
    assert len(back) == len(ds)
    for a, b in zip(ds.blocks, back.blocks):
        for f in ("x", "a", "x_next", "mle_idx", "reg_idx"):
            assert np.array_equal(getattr(a, f), getattr(b, f))
        assert np.array_equal(a.data_policy, b.data_policy)
        assert b.rollin == ()
    assert np.array_equal(back.init_dist, ds.init_dist)


def test_accessors():
    m, ds = _dataset()
    b = ds[0]
    x, a, y = b.reg_tuples()
    assert x.size == b.n_reg
    assert np.array_equal(b.mle_states(), b.x[b.mle_idx])
    assert np.array_equal(b.mle_next_states(), b.x_next[b.mle_idx])
