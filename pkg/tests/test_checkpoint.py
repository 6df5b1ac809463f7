import numpy as np
import pytest

from trajlstm.neural import (CheckpointError, CheckpointShapeError, CheckpointVersionError,
                             TruncatedCheckpointError, init_params, load_checkpoint, model_forward,
                             save_checkpoint, variant_config)


@pytest.fixture
def small_params():
    return init_params(variant_config("two-lstm", lstm_size=5, dense_sizes=(4, 3)), 9)


def test_round_trip_bitwise(tmp_path, small_params):
    small_params.step = 77
    save_checkpoint(small_params, tmp_path / "a.ckpt")
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.config == small_params.config
    assert (back.seed, back.step) == (9, 77)
    for k, v in small_params.arrays.items():
        assert back[k].tobytes() == v.tobytes()
    x = np.random.default_rng(0).normal(size=(20, 49))
    assert np.array_equal(model_forward(back, x)[0], model_forward(small_params, x)[0])


def test_header_layout(tmp_path, small_params):
    save_checkpoint(small_params, tmp_path / "a.ckpt")
    raw = (tmp_path / "a.ckpt").read_bytes()
    head, payload = raw.split(b"end\n", 1)
    lines = head.decode().splitlines()
    assert lines[:3] == ["trajlstm-checkpoint", "version=1", "seed=9"]
    assert "block=lstm0.W:20x54" in lines
    first = small_params["lstm0.W"].reshape(-1)[0]
    assert np.frombuffer(payload[:8], "<f8")[0] == first
    assert len(payload) == 8 * small_params.size


def test_no_temp_files_left(tmp_path, small_params):
    save_checkpoint(small_params, tmp_path / "a.ckpt")
    save_checkpoint(small_params, tmp_path / "a.ckpt")
    assert [p.name for p in tmp_path.iterdir()] == ["a.ckpt"]


def test_truncated_by_eight_bytes(tmp_path, small_params):
    path = tmp_path / "a.ckpt"
    save_checkpoint(small_params, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(TruncatedCheckpointError):
        load_checkpoint(path)


def test_hidden_size_edit_is_shape_error(tmp_path):
    path = tmp_path / "ref.ckpt"
    save_checkpoint(init_params(variant_config("reference"), 0), path)
    raw = path.read_bytes()
    path.write_bytes(raw.replace(b"lstm_layers=256\n", b"lstm_layers=128\n", 1))
    with pytest.raises(CheckpointShapeError):
        load_checkpoint(path)


def test_version_mismatch(tmp_path, small_params):
    path = tmp_path / "a.ckpt"
    save_checkpoint(small_params, path)
    path.write_bytes(path.read_bytes().replace(b"version=1\n", b"version=2\n", 1))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_error_kinds_are_distinct():
    kinds = {TruncatedCheckpointError, CheckpointShapeError, CheckpointVersionError}
    assert all(issubclass(k, CheckpointError) for k in kinds)
    assert len(kinds) == 3


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "junk"
    path.write_bytes(b"hello\nworld\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
