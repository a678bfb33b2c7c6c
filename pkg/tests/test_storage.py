import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from ddcisenet.cascade import CascadeConfig, init_model
from ddcisenet.errors import ConfigMismatchError, FormatError
from ddcisenet.storage import (
    decode_checkpoint,
    decode_tensor,
    encode_checkpoint,
    encode_tensor,
    export_pgm,
    load_checkpoint,
    read_tensor,
    save_checkpoint,
    write_tensor,
)
from ddcisenet.tensor_core import make_rng
from ddcisenet.training import OptimState

from conftest import random_complex

TINY = CascadeConfig.for_coils(1, hidden=4, reduction=2, iterations=1, blocks=1)


def read_pgm(path):
    data = open(path, "rb").read()
    parts = data.split(maxsplit=4)
    assert parts[0] == b"P5"
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    assert maxval == 65535
    pix = np.frombuffer(parts[4], dtype=">u2")
    return pix.reshape(h, w)


def test_tensor_round_trip(tmp_path, rng):
    for arr in (random_complex(rng, (3, 4, 6)), rng.standard_normal((2, 5)), np.zeros((0, 3)), np.float64(2.5)):
        p = tmp_path / "t.ddt"
        write_tensor(p, arr)
        first = p.read_bytes()
        back = read_tensor(p)
        assert np.array_equal(back, arr) and back.shape == np.shape(arr)
        write_tensor(p, back)
        assert p.read_bytes() == first


@settings(max_examples=50)
@given(hnp.arrays(np.float64, hnp.array_shapes(max_dims=4, max_side=5), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_tensor_round_trip_property(arr):
    assert np.array_equal(decode_tensor(encode_tensor(arr)), arr)


def test_complex_file_size():
    blob = encode_tensor(np.zeros((1, 2, 2), complex))
    assert len(blob) == 4 + 1 + 1 + 3 * 4 + 2 * 2 * 16
    assert blob[:4] == b"DDT1" and blob[4] == 2 and blob[5] == 3


def test_bad_headers():
    good = encode_tensor(np.ones((2, 2)))
    with pytest.raises(FormatError):
        decode_tensor(b"XXXX" + good[4:])
    with pytest.raises(FormatError):
        decode_tensor(good[:4] + b"\x07" + good[5:])
    with pytest.raises(FormatError):
        decode_tensor(good[:-1])
    # dims claiming 2^32-1 x 2^32-1 elements must be rejected before allocation
    huge = b"DDT1" + struct.pack("<BB", 1, 2) + struct.pack("<II", 2**32 - 1, 2**32 - 1) + b"\0" * 8
    with pytest.raises(FormatError):
        decode_tensor(huge)
    nan = encode_tensor(np.array([np.nan]))
    with pytest.raises(FormatError):
        decode_tensor(nan)


def test_tensor_fuzz_never_crashes(rng):
    good = encode_tensor(random_complex(rng, (2, 3, 4)))
    outcomes = {"error": 0, "ok": 0}
    for cut in range(len(good)):
        with pytest.raises(FormatError):
            decode_tensor(good[:cut])
        outcomes["error"] += 1
    for _ in range(1000):
        blob = bytearray(good)
        for _ in range(int(rng.integers(1, 4))):
            blob[int(rng.integers(len(blob)))] = int(rng.integers(256))
        try:
            decode_tensor(bytes(blob))
            outcomes["ok"] += 1
        except FormatError:
            outcomes["error"] += 1
    assert outcomes["error"] > len(good)


@pytest.fixture
def ckpt():
    params = init_model(TINY, make_rng(1))
    state = OptimState.for_params(params, lr=3e-4)
    state.step = 7
    for k in params:
        state.m[k] += 0.1
        state.v[k] += 0.2
    return params, state


def test_checkpoint_round_trip(tmp_path, ckpt):
    params, state = ckpt
    p = tmp_path / "a.ddck"
    save_checkpoint(params, state, p, TINY)
    loaded = load_checkpoint(p)
    assert loaded.config == TINY
    assert loaded.state.step == 7 and loaded.state.lr == 3e-4
    for k in params:
        assert np.array_equal(loaded.params[k], params[k])
        assert np.array_equal(loaded.state.m[k], state.m[k])
    q = tmp_path / "b.ddck"
    save_checkpoint(loaded.params, loaded.state, q, loaded.config)
    assert p.read_bytes() == q.read_bytes()


def test_checkpoint_config_mismatch(tmp_path, ckpt):
    params, state = ckpt
    p = tmp_path / "a.ddck"
    save_checkpoint(params, state, p, TINY)
    other = CascadeConfig.for_coils(1, hidden=4, reduction=2, iterations=1, blocks=1, cir_enabled=False)
    with pytest.raises(ConfigMismatchError, match="config mismatch"):
        load_checkpoint(p, expected=other)
    load_checkpoint(p, expected=TINY)


def test_checkpoint_truncation_and_corruption_fuzz(ckpt):
    params, state = ckpt
    good = encode_checkpoint(params, state, TINY)
    rng = make_rng(3)
    cuts = sorted(set(int(c) for c in rng.integers(0, len(good), 600)))
    n = 0
    for cut in cuts:
        with pytest.raises(FormatError):
            decode_checkpoint(good[:cut])
        n += 1
    while n < 1200:
        blob = bytearray(good)
        pos = int(rng.integers(len(blob)))
        blob[pos] ^= 1 << int(rng.integers(8))
        with pytest.raises(FormatError):
            decode_checkpoint(bytes(blob))
        n += 1
    with pytest.raises(FormatError):
        decode_checkpoint(b"")
    with pytest.raises(FormatError):
        decode_checkpoint(b"DDCK" + good[4:] + b"\0")


def test_export_pgm(tmp_path):
    p = tmp_path / "x.pgm"
    export_pgm(np.array([[0.0, 1.0], [1.0, 0.0]]), p)
    assert read_pgm(p).tolist() == [[0, 65535], [65535, 0]]
    export_pgm(np.full((3, 5), 7.0), p)
    pix = read_pgm(p)
    assert pix.shape == (3, 5) and not pix.any()


def test_export_pgm_reference_reader(tmp_path, rng):
    PIL = pytest.importorskip("PIL.Image")
    img = rng.uniform(0, 3, (6, 10))
    p = tmp_path / "r.pgm"
    export_pgm(img, p)
    with PIL.open(p) as im:
        assert im.size == (10, 6)
        arr = np.array(im)
    expected = np.rint((img - img.min()) / (img.max() - img.min()) * 65535)
    np.testing.assert_array_equal(arr.astype(np.int64), expected.astype(np.int64))
