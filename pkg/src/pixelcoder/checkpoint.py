"""Binary checkpoints: named float32 tensor table with CRC integrity.

Layout (little-endian):

    magic    4 bytes "PXCK"
    version  u16    currently 1
    config   u32 length + UTF-8 JSON (model config plus free-form extras)
    step     u64    training step counter
    params   u32 count, then per tensor:
                 u16 name length + UTF-8 name
                 u8 ndim, u32 per dim
                 float32 data
    opt      u8 flag; if 1: u64 optimizer step, then first/second moment
             tensor records (same encoding, names prefixed "m:" / "v:")
    crc32    u32 over everything before it

Any single corrupted byte flips either a structural check or the CRC, so a
damaged file never loads silently.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .model import ModelParameters, PixelConfig
from .optim import OptimizerState
from .tensor import Tensor

CKPT_MAGIC = b"PXCK"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    out = struct.pack("<H", len(raw)) + raw
    out += struct.pack("<B", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    out += np.ascontiguousarray(array, dtype="<f4").tobytes()
    return out


class _Reader:
    def __init__(self, blob: bytes, offset: int = 0):
        self.blob = blob
        self.at = offset

    def take(self, n: int) -> bytes:
        if self.at + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        out = self.blob[self.at : self.at + n]
        self.at += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def tensor(self):
        (name_len,) = self.unpack("<H")
        name = self.take(name_len).decode("utf-8")
        (ndim,) = self.unpack("<B")
        shape = self.unpack(f"<{ndim}I")
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(shape)
        return name, data


def save_checkpoint(params: ModelParameters, state: OptimizerState | None, path, step: int = 0, extra: dict | None = None) -> None:
    config = {"pixel": asdict(params.cfg), "extra": extra or {}}
    blob = bytearray()
    blob += CKPT_MAGIC
    blob += struct.pack("<H", CKPT_VERSION)
    cfg_raw = json.dumps(config, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(cfg_raw)) + cfg_raw
    blob += struct.pack("<Q", step)
    blob += struct.pack("<I", len(params.named))
    for name, p in params.named.items():
        blob += _pack_tensor(name, p.data)
    if state is None:
        blob += struct.pack("<B", 0)
    else:
        blob += struct.pack("<B", 1)
        blob += struct.pack("<Q", state.step)
        for name in params.named:
            blob += _pack_tensor("m:" + name, state.m[name])
        for name in params.named:
            blob += _pack_tensor("v:" + name, state.v[name])
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path):
    """Returns (ModelParameters, OptimizerState | None, step, extra dict)."""
    blob = Path(path).read_bytes()
    if len(blob) < 10:
        raise CheckpointError("file too short to be a checkpoint")
    if blob[:4] != CKPT_MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}")
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError("checksum mismatch: checkpoint is corrupted")
    reader = _Reader(blob[:-4], offset=4)
    (version,) = reader.unpack("<H")
    if version != CKPT_VERSION:
        raise CheckpointError(f"incompatible checkpoint version {version} (expected {CKPT_VERSION})")
    (cfg_len,) = reader.unpack("<I")
    try:
        config = json.loads(reader.take(cfg_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable config block: {exc}") from exc
    pixel_kwargs = dict(config["pixel"])
    pixel_kwargs["mask_cumulative_weights"] = tuple(pixel_kwargs["mask_cumulative_weights"])
    cfg = PixelConfig(**pixel_kwargs)
    (step,) = reader.unpack("<Q")
    (n_params,) = reader.unpack("<I")
    named = {}
    for _ in range(n_params):
        name, data = reader.tensor()
        named[name] = Tensor(data.copy(), requires_grad=True)
    (opt_flag,) = reader.unpack("<B")
    state = None
    if opt_flag == 1:
        (opt_step,) = reader.unpack("<Q")
        state = OptimizerState(step=opt_step)
        for _ in range(n_params):
            name, data = reader.tensor()
            if not name.startswith("m:"):
                raise CheckpointError(f"expected first-moment record, got {name!r}")
            state.m[name[2:]] = data.copy()
        for _ in range(n_params):
            name, data = reader.tensor()
            if not name.startswith("v:"):
                raise CheckpointError(f"expected second-moment record, got {name!r}")
            state.v[name[2:]] = data.copy()
    elif opt_flag != 0:
        raise CheckpointError(f"bad optimizer flag {opt_flag}")
    if reader.at != len(reader.blob):
        raise CheckpointError(f"{len(reader.blob) - reader.at} unexpected trailing bytes")

    params = ModelParameters(cfg, named)
    _validate_names(params, state)
    return params, state, step, config.get("extra", {})


def _validate_names(params: ModelParameters, state: OptimizerState | None) -> None:
    expected = set(expected_param_names(params.cfg))
    loaded = {n for n in params.named if not n.startswith(("m:", "v:"))}
    model_names = {n for n in loaded if not _is_head_name(n)}
    missing = expected - model_names
    extra_model = model_names - expected
    if missing or extra_model:
        raise CheckpointError(
            f"parameter name set mismatch: missing {sorted(missing)[:4]}, unexpected {sorted(extra_model)[:4]}"
        )
    if state is not None and (set(state.m) != set(params.named) or set(state.v) != set(params.named)):
        raise CheckpointError("optimizer state does not cover the parameter set")


_HEAD_PREFIXES = ("token_head.", "biaffine.", "seq_head.", "qa_head.")


def _is_head_name(name: str) -> bool:
    return name.startswith(_HEAD_PREFIXES)


def expected_param_names(cfg: PixelConfig) -> list:
    """Backbone parameter names implied by a config, without allocating."""
    names = ["patch_proj.w", "patch_proj.b", "cls"]
    layer_keys = ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                  "ln1_g", "ln1_b", "ln2_g", "ln2_b", "w1", "b1", "w2", "b2"]
    for i in range(cfg.enc_layers):
        names += [f"enc.{i}.{k}" for k in layer_keys]
    names += ["enc_norm.g", "enc_norm.b", "dec_proj.w", "dec_proj.b", "mask_embed"]
    for i in range(cfg.dec_layers):
        names += [f"dec.{i}.{k}" for k in layer_keys]
    names += ["dec_norm.g", "dec_norm.b", "out_proj.w", "out_proj.b"]
    return names
