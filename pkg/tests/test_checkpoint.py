import numpy as np
import pytest

from depformer.checkpoint import CheckpointError, check_shapes, load_arrays, save_arrays


def _arrays():
    rng = np.random.default_rng(0)
    return {"b": rng.normal(size=(3, 2)), "a": rng.normal(size=4), "s": np.array(1.5)}


def test_round_trip_is_exact(tmp_path):
    arrays = _arrays()
    save_arrays(tmp_path / "m.ckpt", arrays, {"config": {"d": 4}})
    loaded, meta = load_arrays(tmp_path / "m.ckpt")
    assert list(loaded) == list(arrays)
    for name in arrays:
        assert loaded[name].tobytes() == arrays[name].tobytes()
        assert loaded[name].shape == arrays[name].shape
    assert meta["config"] == {"d": 4}


def test_identical_inputs_give_identical_bytes(tmp_path):
    save_arrays(tmp_path / "x.ckpt", _arrays(), {"z": 1, "a": [1, 2]})
    save_arrays(tmp_path / "y.ckpt", _arrays(), {"a": [1, 2], "z": 1})
    assert (tmp_path / "x.ckpt").read_bytes() == (tmp_path / "y.ckpt").read_bytes()


def test_payload_is_little_endian(tmp_path):
    save_arrays(tmp_path / "m.ckpt", {"x": np.array([1.0])}, {})
    assert (tmp_path / "m.ckpt").read_bytes().endswith(np.array([1.0], dtype="<f8").tobytes())


def test_bad_magic(tmp_path):
    (tmp_path / "m.ckpt").write_bytes(b"NOTACKPT" + bytes(20))
    with pytest.raises(CheckpointError, match="magic"):
        load_arrays(tmp_path / "m.ckpt")


def test_truncated(tmp_path):
    save_arrays(tmp_path / "m.ckpt", _arrays(), {})
    raw = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "short.ckpt").write_bytes(raw[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_arrays(tmp_path / "short.ckpt")
    (tmp_path / "tiny.ckpt").write_bytes(raw[:12])
    with pytest.raises(CheckpointError):
        load_arrays(tmp_path / "tiny.ckpt")


def test_shape_check():
    arrays = {"w": np.zeros((2, 3))}
    check_shapes(arrays, {"w": (2, 3)})
    with pytest.raises(CheckpointError, match="shape"):
        check_shapes(arrays, {"w": (3, 2)})
    with pytest.raises(CheckpointError, match="missing"):
        check_shapes(arrays, {"w": (2, 3), "v": (1,)})
