import json
import struct

import numpy as np
import pytest

from synmt import checkpoint as ckpt_io
from synmt.checkpoint import MAGIC, Checkpoint, CheckpointError
from synmt.model import init_params
from synmt.training import AdaDeltaState, TrainState


@pytest.fixture
def state(tiny):
    params = tiny.params("parallel", seed=3)
    opt = AdaDeltaState.for_params(params)
    rng = np.random.default_rng(8)
    for k in opt.sq_grad:
        opt.sq_grad[k][...] = rng.random(opt.sq_grad[k].shape)
    return TrainState(params, opt, rng, epoch=4, updates=40, best_dev=0.25)


def vocabs(tiny):
    sv, tv, lv = tiny.vocabs["parallel"]
    return {"src": sv, "tgt": tv, "labels": lv}


def test_round_trip_is_exact(tiny, state, tmp_path):
    c = ckpt_io.from_train_state(state, vocabs(tiny), {"seed": 1})
    path = ckpt_io.save(c, tmp_path / "m.ckpt")
    back = ckpt_io.load(path)
    for k, t in state.params.items():
        assert back.params[k].data.tobytes() == t.data.tobytes()
        assert back.optimizer.sq_grad[k].tobytes() == state.optimizer.sq_grad[k].tobytes()
    assert back.params.config == state.params.config
    assert back.vocabs == vocabs(tiny)
    assert (back.epoch, back.updates, back.best_dev, back.run_config) == (4, 40, 0.25, {"seed": 1})
    assert ckpt_io.to_bytes(back) == path.read_bytes()


def test_rng_stream_continues(tiny, state):
    back = ckpt_io.from_bytes(ckpt_io.to_bytes(ckpt_io.from_train_state(state))).train_state()
    assert back.rng.random(5).tolist() == state.rng.random(5).tolist()


def test_layout_is_little_endian_float64(tiny, state):
    data = ckpt_io.to_bytes(ckpt_io.from_train_state(state))
    magic, version, n = struct.unpack_from("<8sIQ", data)
    assert magic == MAGIC and version == ckpt_io.VERSION
    header = json.loads(data[20 : 20 + n])
    entry = next(e for e in header["tensors"] if e["name"] == "param/att.v")
    assert entry["dtype"] == "<f8"
    lo = 20 + n + entry["offset"]
    raw = np.frombuffer(data[lo : lo + 8 * int(np.prod(entry["shape"]))], dtype="<f8")
    assert raw.tolist() == state.params["att.v"].data.ravel().tolist()


def test_params_only_checkpoint(tiny):
    p = init_params(tiny.config("baseline"), 0)
    back = ckpt_io.from_bytes(ckpt_io.to_bytes(Checkpoint(p)))
    assert back.optimizer is None and back.vocabs == {}
    assert back.train_state().optimizer.sq_grad.keys() == p.tensors.keys()


@pytest.mark.parametrize(
    "mangle, match",
    [
        (lambda d: b"NOTACKPT" + d[8:], "magic"),
        (lambda d: d[:8] + struct.pack("<I", 99) + d[12:], "version"),
        (lambda d: d[:-9], "truncated"),
        (lambda d: d[:10], "truncated"),
    ],
)
def test_corrupt_files_rejected(tiny, state, mangle, match):
    data = ckpt_io.to_bytes(ckpt_io.from_train_state(state))
    with pytest.raises(CheckpointError, match=match):
        ckpt_io.from_bytes(mangle(data))


def test_shape_mismatch_rejected(tiny, state):
    c = ckpt_io.from_train_state(state)
    c.params.tensors["att.v"].data = np.zeros((2, 2))
    with pytest.raises(CheckpointError, match="att.v"):
        ckpt_io.from_bytes(ckpt_io.to_bytes(c))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ckpt_io.load(tmp_path / "nope.ckpt")


def test_save_leaves_no_temp_file(tiny, state, tmp_path):
    ckpt_io.save(ckpt_io.from_train_state(state), tmp_path / "a" / "m.ckpt")
    assert [p.name for p in (tmp_path / "a").iterdir()] == ["m.ckpt"]
