"""Clip records, frame ingestion, label vocabulary, and the binary flow cache.

The manifest is JSON-lines: one record per line with exactly the fields
``{"clip_id", "frame_source", "frame_count", "labels"}``. Frames live as
ordinary image files in a directory, lexicographically ordered. Dense motion
fields are cached per clip in a small binary format (see ``write_flow_cache``).
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import (
    FlowCacheError,
    FlowCacheShapeError,
    IngestionError,
    ManifestError,
)

MANIFEST_FIELDS = ("clip_id", "frame_source", "frame_count", "labels")
FRAME_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")

_CACHE_MAGIC = b"AMCF"
_CACHE_VERSION = 0x01
_CACHE_HEADER = struct.Struct("<III")  # H, W, count (uint32 LE)


@dataclass(frozen=True)
class ClipRecord:
    """One manifest entry: where a clip's frames live and what it shows."""

    clip_id: str
    frame_source: str
    frame_count: int
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.clip_id:
            raise ValueError("clip_id must be non-empty")
        if self.frame_count < 2:
            raise ValueError(
                f"clip {self.clip_id!r}: frame_count must be >= 2, got {self.frame_count}"
            )
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"clip {self.clip_id!r}: duplicate labels {self.labels}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "clip_id": self.clip_id,
                "frame_source": self.frame_source,
                "frame_count": self.frame_count,
                "labels": list(self.labels),
            }
        )


@dataclass(frozen=True)
class VideoClip:
    """Decoded frame sequence, values in [0, 1], shape [N, H, W, 3]."""

    frames: np.ndarray
    clip_id: str

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must be [N, H, W, 3], got {self.frames.shape}")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


@dataclass(frozen=True)
class FlowField:
    """Dense per-pixel displacement between consecutive frames.

    ``vectors`` has shape [H, W, 2] with components ordered (dx, dy): content
    at (y, x) in the earlier frame appears at (y + dy, x + dx) in the later
    one. Stored float32 so cache round-trips are bit-exact.
    """

    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 3 or self.vectors.shape[-1] != 2:
            raise ValueError(f"flow must be [H, W, 2], got {self.vectors.shape}")
        if self.vectors.dtype != np.float32:
            object.__setattr__(self, "vectors", self.vectors.astype(np.float32))
        if not np.isfinite(self.vectors).all():
            raise ValueError("flow field contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[0], self.vectors.shape[1]


@dataclass(frozen=True)
class LabelVocabulary:
    """Sorted class names; the ordering fixes score-vector coordinates."""

    classes: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class names must be unique")
        object.__setattr__(self, "index", {c: i for i, c in enumerate(self.classes)})

    def __len__(self) -> int:
        return len(self.classes)

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelVocabulary":
        return cls(tuple(sorted(set(labels))))

    @classmethod
    def from_records(cls, records: Iterable[ClipRecord]) -> "LabelVocabulary":
        names: set[str] = set()
        for r in records:
            names.update(r.labels)
        return cls(tuple(sorted(names)))

    def binary_vector(self, labels: Iterable[str]) -> np.ndarray:
        y = np.zeros(len(self.classes), dtype=np.float64)
        for name in labels:
            if name not in self.index:
                raise ManifestError(f"label {name!r} not in vocabulary")
            y[self.index[name]] = 1.0
        return y


def load_manifest(path: str | os.PathLike, *, require_labels: bool = False) -> list[ClipRecord]:
    """Parse a JSON-lines manifest, validating records and clip_id uniqueness."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    records: list[ClipRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            record = _parse_record(raw, f"{path}:{lineno}", require_labels)
            if record.clip_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate clip_id {record.clip_id!r}")
            seen.add(record.clip_id)
            records.append(record)
    return records


def _parse_record(raw: object, where: str, require_labels: bool) -> ClipRecord:
    if not isinstance(raw, dict):
        raise ManifestError(f"{where}: record must be a JSON object")
    if set(raw) != set(MANIFEST_FIELDS):
        raise ManifestError(
            f"{where}: record fields must be exactly {sorted(MANIFEST_FIELDS)}, "
            f"got {sorted(raw)}"
        )
    clip_id, frame_source, frame_count, labels = (
        raw["clip_id"],
        raw["frame_source"],
        raw["frame_count"],
        raw["labels"],
    )
    if not isinstance(clip_id, str) or not isinstance(frame_source, str):
        raise ManifestError(f"{where}: clip_id and frame_source must be strings")
    if not isinstance(frame_count, int) or isinstance(frame_count, bool):
        raise ManifestError(f"{where}: frame_count must be an integer")
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise ManifestError(f"{where}: labels must be a list of strings")
    if require_labels and not labels:
        raise ManifestError(f"{where}: labels must be non-empty for training records")
    try:
        return ClipRecord(clip_id, frame_source, frame_count, tuple(labels))
    except ValueError as exc:
        raise ManifestError(f"{where}: {exc}") from exc


def write_manifest(records: Sequence[ClipRecord], path: str | os.PathLike) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
    return path


def load_clip(record: ClipRecord, root: str | os.PathLike | None = None) -> VideoClip:
    """Decode a clip's frame directory into a [N, H, W, 3] float32 array."""
    src = Path(record.frame_source)
    if not src.is_absolute() and root is not None:
        src = Path(root) / src
    if not src.is_dir():
        raise IngestionError(f"clip {record.clip_id!r}: frame directory not found: {src}")
    files = sorted(p for p in src.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if len(files) != record.frame_count:
        raise IngestionError(
            f"clip {record.clip_id!r}: expected {record.frame_count} frames in {src}, "
            f"found {len(files)}"
        )
    frames = []
    shape: tuple[int, int] | None = None
    for f in files:
        img = np.asarray(Image.open(f).convert("RGB"), dtype=np.uint8)
        if shape is None:
            shape = img.shape[:2]
        elif img.shape[:2] != shape:
            raise IngestionError(
                f"clip {record.clip_id!r}: frame {f.name} has shape {img.shape[:2]}, "
                f"expected {shape}"
            )
        frames.append(img.astype(np.float32) / 255.0)
    return VideoClip(frames=np.stack(frames), clip_id=record.clip_id)


def flow_cache_path(clip_id: str, cache_dir: str | os.PathLike) -> Path:
    if "/" in clip_id or "\\" in clip_id or clip_id in (".", ".."):
        raise ValueError(f"clip_id is not filesystem-safe: {clip_id!r}")
    return Path(cache_dir) / f"{clip_id}.amcf"


def write_flow_cache(
    clip_id: str, flows: Sequence[FlowField], cache_dir: str | os.PathLike
) -> Path:
    """Serialize a clip's flow fields.

    Layout: magic ``AMCF``, version byte 0x01, then H, W, count as uint32 LE;
    body is count fields of H*W*2 float32 LE values, row-major, components
    (dx, dy); a CRC32 (uint32 LE) over the body trails the file.

    Single writer per clip_id; the write is atomic (temp file + rename).
    """
    if not flows:
        raise ValueError("flows must be non-empty")
    h, w = flows[0].shape
    for f in flows:
        if f.shape != (h, w):
            raise ValueError(f"inconsistent flow shapes: {f.shape} vs {(h, w)}")
    path = flow_cache_path(clip_id, cache_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = b"".join(np.ascontiguousarray(f.vectors, dtype="<f4").tobytes() for f in flows)
    blob = (
        _CACHE_MAGIC
        + bytes([_CACHE_VERSION])
        + _CACHE_HEADER.pack(h, w, len(flows))
        + body
        + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    )
    tmp = path.with_suffix(".amcf.tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return path


def read_flow_cache(
    clip_id: str,
    cache_dir: str | os.PathLike,
    *,
    expect_shape: tuple[int, int] | None = None,
    expect_count: int | None = None,
) -> list[FlowField]:
    """Read a cached flow sequence, verifying header, geometry, and CRC."""
    path = flow_cache_path(clip_id, cache_dir)
    if not path.is_file():
        raise FlowCacheError(f"no cached flow for clip {clip_id!r} at {path}")
    blob = path.read_bytes()
    if len(blob) < 5 + _CACHE_HEADER.size + 4:
        raise FlowCacheError(f"{path}: truncated cache file")
    if blob[:4] != _CACHE_MAGIC:
        raise FlowCacheError(f"{path}: bad magic bytes")
    if blob[4] != _CACHE_VERSION:
        raise FlowCacheError(f"{path}: unsupported cache version {blob[4]}")
    h, w, count = _CACHE_HEADER.unpack_from(blob, 5)
    body_start = 5 + _CACHE_HEADER.size
    body_len = count * h * w * 2 * 4
    if len(blob) != body_start + body_len + 4:
        raise FlowCacheError(
            f"{path}: expected {body_start + body_len + 4} bytes, got {len(blob)}"
        )
    body = blob[body_start : body_start + body_len]
    (crc,) = struct.unpack_from("<I", blob, body_start + body_len)
    if crc != (zlib.crc32(body) & 0xFFFFFFFF):
        raise FlowCacheError(f"{path}: CRC mismatch, cache is corrupt")
    if expect_shape is not None and (h, w) != tuple(expect_shape):
        raise FlowCacheShapeError(
            f"{path}: cached fields are {h}x{w}, clip expects "
            f"{expect_shape[0]}x{expect_shape[1]}"
        )
    if expect_count is not None and count != expect_count:
        raise FlowCacheShapeError(f"{path}: cached {count} fields, expected {expect_count}")
    data = np.frombuffer(body, dtype="<f4").reshape(count, h, w, 2)
    return [FlowField(np.array(data[i], dtype=np.float32)) for i in range(count)]


def has_flow_cache(clip_id: str, cache_dir: str | os.PathLike) -> bool:
    return flow_cache_path(clip_id, cache_dir).is_file()
