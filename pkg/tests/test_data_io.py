import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpopt.config import ExperimentConfig, dump_config, load_config
from tpopt.data_io import (idx_from_array, load_bundle, load_dataset, load_idx, parse_idx,
                           read_tensor, save_bundle, save_dataset, serialize_idx, tensor_bytes,
                           tensor_from_bytes, tree_hashes, write_tensor)
from tpopt.errors import ConfigurationError, IdxParseError, StageDependencyError
from tpopt.families import ChirpFamily
from tpopt.observation import DatasetConfig, make_dataset

IMAGE = bytes([0, 0, 8, 3]) + struct.pack(">3I", 1, 2, 2) + bytes([0, 255, 51, 102])
LABELS = bytes([0, 0, 8, 1]) + struct.pack(">I", 3) + bytes([3, 1, 4])


def test_minimal_image():
    t = parse_idx(IMAGE)
    assert t.magic == 0x00000803 and t.dims == (1, 2, 2)
    np.testing.assert_array_equal(t.data[0], [[0, 255], [51, 102]])
    np.testing.assert_allclose(t.images()[0], [[0.0, 1.0], [0.2, 0.4]])


def test_labels():
    t = parse_idx(LABELS)
    assert t.magic == 0x00000801
    assert list(t.data) == [3, 1, 4]
    with pytest.raises(ConfigurationError):
        t.images()


def test_truncated_payload_offset():
    with pytest.raises(IdxParseError) as info:
        parse_idx(IMAGE[:-1])
    assert info.value.offset == len(IMAGE) - 1
    with pytest.raises(IdxParseError) as info:
        parse_idx(IMAGE[:9])
    assert info.value.offset == 9


def test_header_errors():
    cases = [(b"\x00", 1), (b"\x01\x00\x08\x01" + IMAGE[4:], 0), (b"\x00\x00\x07\x01", 2),
             (b"\x00\x00\x08\x00", 3), (IMAGE + b"\x00", len(IMAGE))]
    for raw, offset in cases:
        with pytest.raises(IdxParseError) as info:
            parse_idx(raw)
        assert info.value.offset == offset


def test_round_trip_fixtures(tmp_path):
    for raw in (IMAGE, LABELS):
        assert serialize_idx(parse_idx(raw)) == raw
    path = tmp_path / "img.idx.gz"
    path.write_bytes(gzip.compress(IMAGE))
    assert serialize_idx(load_idx(path)) == IMAGE


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["u1", "i1", ">i2", ">i4", ">f4", ">f8"]),
       st.lists(st.integers(1, 4), min_size=1, max_size=3), st.integers(0, 1000))
def test_idx_round_trip(dtype, dims, seed):
    rng = np.random.default_rng(seed)
    arr = (rng.random(dims) * 100).astype(dtype)
    raw = serialize_idx(idx_from_array(arr))
    assert serialize_idx(parse_idx(raw)) == raw
    np.testing.assert_array_equal(parse_idx(raw).data, arr)


def test_tensor_round_trip(tmp_path):
    for arr in (np.arange(12.0).reshape(3, 4), np.array([1, -2, 3]), np.zeros((0, 5))):
        back = tensor_from_bytes(tensor_bytes(arr))
        assert back.shape == arr.shape
        np.testing.assert_array_equal(back, arr)
    raw = tensor_bytes(np.ones(3))
    assert raw[:8] == b"TPOPTTNS"
    for bad in (b"XXXXXXXX" + raw[8:], raw[:-1]):
        with pytest.raises(ConfigurationError):
            tensor_from_bytes(bad)
    write_tensor(tmp_path / "a.tensor", np.eye(2))
    np.testing.assert_array_equal(read_tensor(tmp_path / "a.tensor"), np.eye(2))


def test_bundle_and_dataset(tmp_path):
    save_bundle(tmp_path / "b", {"w": np.ones((2, 2))}, {"note": "x"})
    arrays, meta = load_bundle(tmp_path / "b")
    assert meta["format_version"] == 1 and meta["note"] == "x"
    np.testing.assert_array_equal(arrays["w"], np.ones((2, 2)))
    with pytest.raises(StageDependencyError):
        load_bundle(tmp_path / "missing")
    ds = make_dataset(ChirpFamily(), DatasetConfig(5, 3, 0.1, 1.0, "validation"), seed=2)
    save_dataset(tmp_path / "ds", ds)
    back = load_dataset(tmp_path / "ds")
    assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y)
    assert back.metadata() == ds.metadata()
    h1 = tree_hashes(tmp_path / "ds")
    save_dataset(tmp_path / "ds", ds)
    assert tree_hashes(tmp_path / "ds") == h1


def test_config_defaults():
    cfg = load_config("seed: 4\ntrain: {}\nfamily:\n")
    assert cfg == ExperimentConfig(seed=4)
    assert cfg.data.sigma == 0.1 and cfg.train.beta2 == 0.999


def test_config_errors():
    with pytest.raises(ConfigurationError, match="seed"):
        load_config("data: {sigma: 0.2}")
    with pytest.raises(ConfigurationError, match="sigmaa"):
        load_config("seed: 1\ndata: {sigmaa: 0.2}")
    with pytest.raises(ConfigurationError, match="colour"):
        load_config("seed: 1\ncolour: red")
    with pytest.raises(ConfigurationError, match="data.n_train"):
        load_config("seed: 1\ndata: {n_train: 1.5}")
    with pytest.raises(ConfigurationError, match="tune.mode"):
        load_config("seed: 1\ntune: {mode: newton}")
    with pytest.raises(ConfigurationError):
        load_config("seed: [1")
    with pytest.raises(ConfigurationError):
        load_config("- 1\n- 2")
    with pytest.raises(ConfigurationError):
        load_config("seed: 1\ntrain: {train_bandwidths: 1}")
    with pytest.raises(ConfigurationError):
        load_config("seed: 1\ndata: {sigma: fast}")
    with pytest.raises(ConfigurationError):
        load_config("seed: 1\neval: {layers: 3}")
    with pytest.raises(ConfigurationError):
        load_config("seed: 1\nfamily: {kind: 3}")
    with pytest.raises(ConfigurationError):
        load_config("seed: 1\ndata: 7")


def test_config_exponent_floats():
    cfg = load_config("seed: 1\ntrain: {learning_rate: 1e-2}\ntune: {steps: [0.0, 5e-3]}")
    assert cfg.train.learning_rate == 0.01 and cfg.tune.steps == [0.0, 0.005]
    with pytest.raises(ConfigurationError):
        load_config("seed: 1\ntrain: {epochs: 1e2}")


def test_config_double_round_trip():
    text = "seed: 9\ndata: {sigma: 0.05}\neval: {layers: [1, 3]}\nfamily: {f0_range: [30, 40]}\n"
    once = dump_config(load_config(text))
    twice = dump_config(load_config(once))
    assert once == twice
    cfg = load_config(once)
    assert cfg.family.f0_range == [30.0, 40.0] and cfg.eval.layers == [1, 3]
