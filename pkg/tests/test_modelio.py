import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurosoc.modelio import (MAGIC, ModelFormatError, deserialize, load_model, pack12, save_model,
                              serialize, serialized_size, unpack12)
from neurosoc.neuraltree import NeuralTreeModel, quantize, softmax
from neurosoc.pipeline import default_specs


@given(st.lists(st.integers(-2048, 2047), max_size=40))
def test_pack12_signed_round_trip(vals):
    buf = pack12(vals)
    assert len(buf) == 3 * ((len(vals) + 1) // 2)
    assert unpack12(buf, len(vals), signed=True) == vals


@given(st.lists(st.integers(0, 4095), max_size=40))
def test_pack12_unsigned_round_trip(vals):
    assert unpack12(pack12(vals), len(vals), signed=False) == vals


def test_pack12_layout():
    assert pack12([0xABC, 0x123]) == bytes((0xBC, 0x3A, 0x12))


def _dense_model(rng, depth=4, D=64, K=2):
    specs = tuple(default_specs(10))[:D]
    I, L = (1 << depth) - 1, 1 << depth
    m = NeuralTreeModel(depth, K, specs, rng.normal(0, 1, (I, D)), rng.normal(0, 1, I),
                        softmax(rng.normal(0, 2, (L, K))))
    return quantize(m)


def test_round_trip_bit_exact(rng):
    q = _dense_model(rng, depth=3, D=20, K=5)
    back = deserialize(serialize(q))
    assert back.feature_specs == q.feature_specs
    for a, b in zip((q.quant.weights, q.quant.bias, q.quant.phi, q.quant.weight_frac, q.quant.bias_frac),
                    (back.quant.weights, back.quant.bias, back.quant.phi, back.quant.weight_frac,
                     back.quant.bias_frac)):
        assert np.array_equal(a, b)
    assert np.array_equal(back.leaf_labels(), q.leaf_labels())
    assert serialize(back) == serialize(q)


def test_dense_depth4_fits_budget(rng):
    # every node uses all 64 features: the worst case for this layout
    assert serialized_size(_dense_model(rng)) <= 2930


def test_file_round_trip(tmp_path, rng):
    q = _dense_model(rng, depth=2, D=8)
    n = save_model(q, tmp_path / "m.ntre")
    assert n == (tmp_path / "m.ntre").stat().st_size
    assert serialize(load_model(tmp_path / "m.ntre")) == serialize(q)


def test_corrupt_inputs(tmp_path, rng):
    buf = serialize(_dense_model(rng, depth=2, D=8))
    with pytest.raises(ModelFormatError, match="not a NeuralTree"):
        deserialize(b"XXXX" + buf[4:])
    with pytest.raises(ModelFormatError, match="truncated"):
        deserialize(buf[:-5])
    with pytest.raises(ModelFormatError, match="trailing"):
        deserialize(buf + b"\0")
    with pytest.raises(ModelFormatError, match="version"):
        deserialize(MAGIC + b"\x09" + buf[5:])
    with pytest.raises(ModelFormatError, match="cannot read"):
        load_model(tmp_path / "missing.ntre")


def test_unquantised_model_rejected(rng):
    m = NeuralTreeModel(1, 2, tuple(default_specs(1))[:2], np.ones((1, 2)), np.zeros(1), np.eye(2))
    with pytest.raises(ValueError):
        serialize(m)
