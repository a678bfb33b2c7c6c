"""Binary file formats: DDT1 tensors, DDCK checkpoints and 16-bit PGM export.

DDT1 (little-endian)::

    b"DDT1" | u8 dtype (1 = f64 real, 2 = f64 complex interleaved) | u8 rank
    | rank x u32 dims | payload (8 or 16 bytes per element, row-major)

DDCK (little-endian)::

    b"DDCK" | u32 version | 32-byte SHA-256 of the config text
    | u32 config length | config text (UTF-8, sorted key=value lines)
    | u64 optimizer step | 4 x f64 (lr, beta1, beta2, eps)
    | u32 parameter count P | u32 moment count M (= 2P)
    | P + M blocks of: u32 name length | name (UTF-8) | u64 block length | DDT1 bytes
    | u32 CRC-32 of everything before it

Moment blocks are named ``m:<param>`` and ``v:<param>``.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .cascade import CascadeConfig, model_shapes
from .errors import ConfigMismatchError, FormatError, ParameterError, ShapeError
from .phantom import GroundTruth, SensitivitySet

__all__ = [
    "encode_tensor",
    "decode_tensor",
    "write_tensor",
    "read_tensor",
    "Checkpoint",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "config_digest",
    "export_pgm",
    "atomic_write",
    "save_dataset",
    "load_dataset",
]

TENSOR_MAGIC = b"DDT1"
CKPT_MAGIC = b"DDCK"
CKPT_VERSION = 1
DTYPE_REAL = 1
DTYPE_COMPLEX = 2
MAX_RANK = 8
_ITEM = {DTYPE_REAL: 8, DTYPE_COMPLEX: 16}
_NP = {DTYPE_REAL: "<f8", DTYPE_COMPLEX: "<c16"}


def atomic_write(path, data: bytes) -> None:
    """Write via a temporary sibling file and rename, so failures leave no partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- tensors -------------------------------------------------------------------


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        code = DTYPE_COMPLEX
    elif np.issubdtype(arr.dtype, np.number) or arr.dtype == bool:
        code = DTYPE_REAL
    else:
        raise ShapeError(f"cannot store dtype {arr.dtype}")
    if arr.ndim > MAX_RANK:
        raise ShapeError(f"rank {arr.ndim} exceeds {MAX_RANK}")
    if any(d > 0xFFFFFFFF for d in arr.shape):
        raise ShapeError(f"dimension too large in {arr.shape}")
    header = TENSOR_MAGIC + struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_NP[code]).tobytes()


def _decode_tensor_at(buf: bytes, offset: int, end: int) -> np.ndarray:
    if end - offset < 6:
        raise FormatError("truncated tensor header")
    if buf[offset : offset + 4] != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {bytes(buf[offset:offset + 4])!r}")
    code, rank = struct.unpack_from("<BB", buf, offset + 4)
    if code not in _ITEM:
        raise FormatError(f"unknown tensor dtype code {code}")
    if rank > MAX_RANK:
        raise FormatError(f"tensor rank {rank} exceeds {MAX_RANK}")
    pos = offset + 6
    if end - pos < 4 * rank:
        raise FormatError("truncated tensor dims")
    dims = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    count = 1
    for d in dims:
        count *= d
    nbytes = count * _ITEM[code]
    if nbytes != end - pos:
        raise FormatError(f"payload is {end - pos} bytes, header {dims} implies {nbytes}")
    arr = np.frombuffer(buf, dtype=_NP[code], count=count, offset=pos).reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise FormatError("tensor payload contains non-finite values")
    return arr.astype(np.complex128 if code == DTYPE_COMPLEX else np.float64)


def decode_tensor(buf: bytes) -> np.ndarray:
    return _decode_tensor_at(buf, 0, len(buf))


def write_tensor(path, arr) -> None:
    atomic_write(path, encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


# -- checkpoints ---------------------------------------------------------------


def config_digest(cfg: CascadeConfig) -> bytes:
    return hashlib.sha256(cfg.canonical().encode("utf-8")).digest()


@dataclass
class Checkpoint:
    params: dict
    state: "OptimState"
    config: CascadeConfig


def encode_checkpoint(params: dict, state, cfg: CascadeConfig) -> bytes:
    text = cfg.canonical().encode("utf-8")
    names = list(model_shapes(cfg))
    if set(names) != set(params):
        raise ParameterError("parameters do not match the cascade config")
    parts = [
        CKPT_MAGIC,
        struct.pack("<I", CKPT_VERSION),
        config_digest(cfg),
        struct.pack("<I", len(text)),
        text,
        struct.pack("<Q4d", state.step, state.lr, state.beta1, state.beta2, state.eps),
        struct.pack("<II", len(names), 2 * len(names)),
    ]
    blocks = [(k, params[k]) for k in names]
    blocks += [(f"m:{k}", state.m[k]) for k in names] + [(f"v:{k}", state.v[k]) for k in names]
    for name, arr in blocks:
        nb = name.encode("utf-8")
        body = encode_tensor(arr)
        parts += [struct.pack("<I", len(nb)), nb, struct.pack("<Q", len(body)), body]
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


class _Reader:
    def __init__(self, buf: bytes, end: int):
        self.buf, self.pos, self.end = buf, 0, end

    def take(self, n: int) -> int:
        if n < 0 or self.end - self.pos < n:
            raise FormatError("truncated checkpoint")
        start = self.pos
        self.pos += n
        return start

    def unpack(self, fmt: str):
        start = self.take(struct.calcsize(fmt))
        return struct.unpack_from(fmt, self.buf, start)


def decode_checkpoint(buf: bytes, expected: Optional[CascadeConfig] = None) -> Checkpoint:
    from .training import OptimState

    if len(buf) < 8 or buf[:4] != CKPT_MAGIC:
        raise FormatError("not a DDCK checkpoint (bad magic)")
    (crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
    if zlib.crc32(buf[:-4]) != crc:
        raise FormatError("checkpoint checksum mismatch (corrupt or truncated file)")
    r = _Reader(buf, len(buf) - 4)
    r.take(4)
    (version,) = r.unpack("<I")
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    digest = buf[r.take(32) : r.pos]
    (tlen,) = r.unpack("<I")
    text_start = r.take(tlen)
    try:
        text = buf[text_start : r.pos].decode("utf-8")
        cfg = CascadeConfig.from_canonical(text)
    except (UnicodeDecodeError, ParameterError, ValueError) as exc:
        raise FormatError(f"unreadable checkpoint config: {exc}") from exc
    if config_digest(cfg) != digest or cfg.canonical() != text:
        raise FormatError("checkpoint config digest does not match its config text")
    if expected is not None and config_digest(expected) != digest:
        raise ConfigMismatchError("config mismatch: checkpoint was written for a different cascade config")
    step, lr, b1, b2, eps = r.unpack("<Q4d")
    n_params, n_moments = r.unpack("<II")
    shapes = model_shapes(cfg)
    if n_params != len(shapes) or n_moments != 2 * n_params:
        raise FormatError("checkpoint tensor counts do not match its config")
    blocks = {}
    for _ in range(n_params + n_moments):
        (nlen,) = r.unpack("<I")
        ns = r.take(nlen)
        try:
            name = buf[ns : r.pos].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("bad block name") from exc
        (blen,) = r.unpack("<Q")
        bs = r.take(blen)
        blocks[name] = _decode_tensor_at(buf, bs, r.pos)
    if r.pos != r.end:
        raise FormatError("trailing bytes after checkpoint blocks")
    params, m, v = {}, {}, {}
    for k, shape in shapes.items():
        try:
            params[k], m[k], v[k] = blocks[k], blocks[f"m:{k}"], blocks[f"v:{k}"]
        except KeyError as exc:
            raise FormatError(f"checkpoint is missing block {exc}") from exc
        for arr in (params[k], m[k], v[k]):
            if arr.shape != shape or np.iscomplexobj(arr):
                raise FormatError(f"block for {k} has shape {arr.shape}, expected {shape}")
    state = OptimState(m=m, v=v, step=step, lr=lr, beta1=b1, beta2=b2, eps=eps)
    return Checkpoint(params=params, state=state, config=cfg)


def save_checkpoint(params: dict, state, path, cfg: CascadeConfig) -> None:
    atomic_write(path, encode_checkpoint(params, state, cfg))


def load_checkpoint(path, expected: Optional[CascadeConfig] = None) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes(), expected)


# -- image export ---------------------------------------------------------------


def pgm_bytes(img) -> bytes:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"PGM export needs a 2D image, got shape {img.shape}")
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        pix = np.rint((img - lo) / (hi - lo) * 65535.0)
    else:
        pix = np.zeros_like(img)
    h, w = img.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    return header + pix.astype(">u2").tobytes()


def export_pgm(img, path) -> None:
    """16-bit binary greymap, min-max scaled to [0, 65535]; a constant image maps to 0."""
    atomic_write(path, pgm_bytes(img))


# -- dataset directories --------------------------------------------------------

MANIFEST = "manifest.json"
_KINDS = ("kfull", "imgfull", "sens")


def case_file(idx: int, kind: str) -> str:
    return f"case_{idx}_{kind}.ddt"


def save_dataset(ground_truths, out_dir, config: dict) -> list[Path]:
    """Write ``case_<i>_{kfull,imgfull,sens}.ddt`` plus ``manifest.json``.

    Returns the written paths; on failure everything written so far is removed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        cases = []
        for idx, gt in enumerate(ground_truths):
            entry = {}
            for kind, arr in zip(_KINDS, (gt.k_full, gt.image_full, gt.sens.maps)):
                path = out_dir / case_file(idx, kind)
                write_tensor(path, arr)
                written.append(path)
                entry[kind] = path.name
            cases.append(entry)
        manifest = {"format": "ddcisenet-dataset-1", "n": len(cases), "config": config, "cases": cases}
        path = out_dir / MANIFEST
        atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"))
        written.append(path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return written


def load_dataset(data_dir) -> tuple[list[GroundTruth], dict]:
    data_dir = Path(data_dir)
    try:
        manifest = json.loads((data_dir / MANIFEST).read_text("utf-8"))
        entries = manifest["cases"]
    except (json.JSONDecodeError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise FormatError(f"bad dataset manifest in {data_dir}: {exc}") from exc
    cases = []
    for entry in entries:
        k_full = read_tensor(data_dir / entry["kfull"])
        image = read_tensor(data_dir / entry["imgfull"])
        sens = read_tensor(data_dir / entry["sens"])
        if k_full.ndim != 3 or k_full.shape != image.shape or sens.shape != image.shape:
            raise FormatError(f"inconsistent case files for {entry}")
        cases.append(GroundTruth(image_full=image, k_full=k_full, sens=SensitivitySet(maps=sens)))
    return cases, manifest.get("config", {})
