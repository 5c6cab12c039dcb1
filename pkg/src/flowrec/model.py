"""Model configuration, parameter initialization, and checkpoint IO.

One parameter dict backs the whole model (video tower, text tower, alignment);
every classifier in the ensemble reads the same dict, so weight sharing holds
by construction. Checkpoints store named groups with shape metadata and a
float32 little-endian payload; a JSON sidecar carries the class list and the
configuration needed to rebuild the model for inference.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .nn import Params, init_block_params, xavier_normal

_CKPT_MAGIC = b"AMCP"
_CKPT_VERSION = 0x01


@dataclass(frozen=True)
class EncoderConfig:
    """Shared architecture knobs for the video and text towers."""

    patch_size: int = 8
    embed_dim: int = 64
    heads: int = 4
    frame_layers: int = 1
    temporal_layers: int = 1
    text_layers: int = 1
    max_text_len: int = 16

    def __post_init__(self):
        for name in (
            "patch_size",
            "embed_dim",
            "heads",
            "frame_layers",
            "temporal_layers",
            "text_layers",
            "max_text_len",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} must be divisible by heads {self.heads}"
            )


def init_params(cfg: EncoderConfig, vocab_size: int, seed: int) -> Params:
    """Deterministic parameter initialization for a fresh model.

    Weights and the summary token draw from a zero-mean normal with variance
    2/(fan_in + fan_out); biases, the token-kind table, and the alignment
    output projection start at zero (so alignment begins as the identity).
    The summary token is not zero-initialized: layer-norming an exact-zero
    vector amplifies gradients by 1/sqrt(eps) and destabilizes plain SGD.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    d = cfg.embed_dim
    patch_dim = cfg.patch_size * cfg.patch_size * 3
    params: Params = {
        "patch.w": xavier_normal(rng, patch_dim, d),
        "patch.b": np.zeros(d),
        "patch.kind": np.zeros((2, d)),
        "patch.summary": xavier_normal(rng, 1, d)[0],
    }
    for i in range(cfg.frame_layers):
        params.update(init_block_params(rng, f"frame.{i}", d))
    params["frame.out.g"] = np.ones(d)
    params["frame.out.b"] = np.zeros(d)
    for i in range(cfg.temporal_layers):
        params.update(init_block_params(rng, f"temporal.{i}", d))
    params["temporal.out.g"] = np.ones(d)
    params["temporal.out.b"] = np.zeros(d)
    params["text.embed"] = xavier_normal(rng, vocab_size, d)
    for i in range(cfg.text_layers):
        params.update(init_block_params(rng, f"text.{i}", d))
    for name in ("wq", "wk", "wv"):
        params[f"align.{name}"] = xavier_normal(rng, d, d)
    params["align.wo"] = np.zeros((d, d))
    for name in ("bq", "bk", "bv", "bo"):
        params[f"align.{name}"] = np.zeros(d)
    return params


def save_checkpoint(path: str | Path, params: Params) -> Path:
    """Write named parameter groups: versioned header, shapes, float32 LE data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = []
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    body = b"".join(chunks)
    blob = (
        _CKPT_MAGIC
        + bytes([_CKPT_VERSION])
        + struct.pack("<I", len(params))
        + body
        + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    )
    path.write_bytes(blob)
    return path


def load_checkpoint(path: str | Path) -> Params:
    """Read a checkpoint back into float64 parameter arrays."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 9 or blob[:4] != _CKPT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    if blob[4] != _CKPT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {blob[4]}")
    (count,) = struct.unpack_from("<I", blob, 5)
    body = blob[9:-4]
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if crc != (zlib.crc32(body) & 0xFFFFFFFF):
        raise DataError(f"{path}: checkpoint CRC mismatch")
    params: Params = {}
    offset = 0
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, offset)
            offset += 2
            name = body[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", body, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", body, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(body, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            params[name] = arr.reshape(shape).astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated checkpoint body") from exc
    if offset != len(body):
        raise DataError(f"{path}: trailing bytes in checkpoint body")
    return params


def sidecar_path(checkpoint: str | Path) -> Path:
    return Path(str(checkpoint) + ".meta.json")


def save_sidecar(checkpoint: str | Path, classes: list[str], cfg: EncoderConfig,
                 extra: dict | None = None) -> Path:
    meta = {"classes": list(classes), "encoder": asdict(cfg)}
    if extra:
        meta.update(extra)
    path = sidecar_path(checkpoint)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_sidecar(checkpoint: str | Path) -> dict:
    path = sidecar_path(checkpoint)
    if not path.is_file():
        raise DataError(f"checkpoint metadata not found: {path}")
    meta = json.loads(path.read_text(encoding="utf-8"))
    if "classes" not in meta or "encoder" not in meta:
        raise DataError(f"{path}: missing classes/encoder metadata")
    return meta
