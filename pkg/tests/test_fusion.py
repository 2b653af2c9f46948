import numpy as np
import pytest

import oracles
from fusiongnn import tensor as T
from fusiongnn.errors import DimensionError, UsageError
from fusiongnn.fusion import attention_weights, fuse, init_fusion
from fusiongnn.topology import FUSIONS


def vals(*arrays):
    return [T.constant(np.asarray(a, dtype=float)) for a in arrays]


def params(op, d=2, slots=2, seed=0):
    p = init_fusion(op, d, slots, np.random.default_rng(seed))
    for w in p.parameters():
        w.data[...] = np.random.default_rng(seed + 1).normal(size=w.shape)
    return p


def test_elementwise_examples():
    xs = vals([[1, 2]], [[3, 4]])
    assert fuse("SUM", None, xs).data.tolist() == [[4, 6]]
    assert fuse("MEAN", None, xs).data.tolist() == [[2, 3]]
    assert fuse("MAX", None, xs).data.tolist() == [[3, 4]]


@pytest.mark.parametrize("op", ["SUM", "MEAN", "MAX"])
def test_singleton_identity(op):
    x = np.random.default_rng(0).normal(size=(4, 3))
    assert np.array_equal(fuse(op, None, vals(x)).data, x)


def test_att_zero_scorer_is_mean():
    p = init_fusion("ATT", 2, 3, np.random.default_rng(0))
    p.weights["a"].data[...] = 0.0
    rng = np.random.default_rng(1)
    xs = [rng.normal(size=(5, 2)) for _ in range(3)]
    assert np.allclose(fuse("ATT", p, vals(*xs)).data, sum(xs) / 3)


def test_att_weights_sum_to_one():
    p = params("ATT", d=3)
    rng = np.random.default_rng(2)
    w = attention_weights(p, vals(*[rng.normal(size=(6, 3)) for _ in range(4)])).data
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_concat_stacked_identity_is_sum():
    p = init_fusion("CONCAT", 3, 2, np.random.default_rng(0))
    p.weights["P"].data[...] = np.vstack([np.eye(3), np.eye(3)])
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    assert np.allclose(fuse("CONCAT", p, vals(x, y)).data, x + y)


def test_concat_slots_equal_zero_filled_full_projection():
    p = params("CONCAT", d=2, slots=4)
    rng = np.random.default_rng(3)
    xs = [rng.normal(size=(3, 2)) for _ in range(2)]
    got = fuse("CONCAT", p, vals(*xs), slots=[1, 3]).data
    want = oracles.fuse("CONCAT", xs, {"P": p.weights["P"].data}, slots=[1, 3])
    assert np.allclose(got, want, atol=1e-14)


@pytest.mark.parametrize("op", FUSIONS)
@pytest.mark.parametrize("seed", range(4))
def test_fusions_match_oracle(op, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    p = params(op, d=3, slots=k, seed=seed)
    xs = [rng.normal(size=(5, 3)) for _ in range(k)]
    w = {name: v.data for name, v in p.weights.items()}
    assert np.max(np.abs(fuse(op, p, vals(*xs)).data - oracles.fuse(op, xs, w))) < 1e-12


def test_lstm_order_matters():
    p = params("LSTM", d=2)
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    assert not np.allclose(fuse("LSTM", p, vals(x, y)).data, fuse("LSTM", p, vals(y, x)).data)


@pytest.mark.parametrize("op", FUSIONS)
def test_all_zero_inputs_give_zero(op):
    p = init_fusion(op, 2, 3, np.random.default_rng(0))
    out = fuse(op, p, vals(*[np.zeros((4, 2))] * 3)).data
    assert np.array_equal(out, np.zeros((4, 2)))


def test_errors():
    with pytest.raises(UsageError):
        fuse("SUM", None, [])
    with pytest.raises(DimensionError):
        fuse("SUM", None, vals(np.ones((2, 2)), np.ones((2, 3))))
    with pytest.raises(UsageError):
        init_fusion("MIN", 2, 1, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        fuse("CONCAT", params("CONCAT", slots=2), vals(np.ones((2, 2))), slots=[2])
    with pytest.raises(UsageError):
        fuse("ATT", params("LSTM"), vals(np.ones((2, 2))))
