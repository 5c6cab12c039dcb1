"""Text tower and video-guided alignment.

Behavior labels are lowercased, split on non-alphanumeric runs, and mapped
into a small vocabulary built from the label set (BOS/EOS/UNK reserved).
The tower reuses the shared block design, reads the EOS-position state, and
normalizes it to unit length. Alignment is one cross-attention block with the
class embeddings as queries and the single video embedding as key/value; its
output projection starts at zero, so alignment is the identity at init.

For users with a pretrained text tower, per-class embeddings can be supplied
from a JSON file ({class name: [D floats]}) and used in place of the tower.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import EncoderConfig
from .nn import (
    Grads,
    Params,
    attention_backward,
    attention_forward,
    encoder_backward,
    encoder_forward,
    sinusoid_table,
    unit_normalize_backward,
    unit_normalize_forward,
)

BOS_ID = 0
EOS_ID = 1
UNK_ID = 2
N_RESERVED = 3

_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class WordVocabulary:
    """Sorted words from the label set plus reserved marker ids."""

    words: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "index", {w: N_RESERVED + i for i, w in enumerate(self.words)}
        )

    @property
    def size(self) -> int:
        return N_RESERVED + len(self.words)

    @classmethod
    def from_classes(cls, classes) -> "WordVocabulary":
        words: set[str] = set()
        for name in classes:
            words.update(_WORD_RE.findall(name.lower()))
        return cls(tuple(sorted(words)))


@dataclass(frozen=True)
class TextTokenSequence:
    ids: tuple[int, ...]
    truncated: bool = False


def tokenize(label: str, vocab: WordVocabulary, max_len: int = 16) -> TextTokenSequence:
    """Lowercase, split, map to ids, wrap in BOS/EOS; truncate over-length."""
    words = _WORD_RE.findall(label.lower())
    ids = [BOS_ID] + [vocab.index.get(w, UNK_ID) for w in words] + [EOS_ID]
    truncated = len(ids) > max_len
    if truncated:
        ids = ids[: max_len - 1] + [EOS_ID]
    return TextTokenSequence(tuple(ids), truncated)


def text_tower_forward(ids: tuple[int, ...], cfg: EncoderConfig, params: Params):
    """Token ids -> unit-norm embedding [D] read at the EOS position."""
    idx = np.asarray(ids, dtype=np.intp)
    x = params["text.embed"][idx][None]  # [1, T, D]
    x = x + sinusoid_table(len(ids), cfg.embed_dim)
    z, enc_cache = encoder_forward(x, params, "text", cfg.text_layers, cfg.heads)
    emb, norm_cache = unit_normalize_forward(z[0, -1, :])
    return emb, (enc_cache, norm_cache, idx, z.shape)


def text_tower_backward(demb: np.ndarray, cache, vocab_size: int) -> Grads:
    enc_cache, norm_cache, idx, shape = cache
    dh = unit_normalize_backward(demb, norm_cache)
    dz = np.zeros(shape)
    dz[0, -1, :] = dh
    dx, grads = encoder_backward(dz, enc_cache)
    dembed = np.zeros((vocab_size, shape[-1]))
    np.add.at(dembed, idx, dx[0])
    grads["text.embed"] = dembed
    return grads


def encode_text(tokens: TextTokenSequence, cfg: EncoderConfig, params: Params) -> np.ndarray:
    emb, _ = text_tower_forward(tokens.ids, cfg, params)
    return emb


def encode_classes(
    class_tokens: list[TextTokenSequence], cfg: EncoderConfig, params: Params
) -> np.ndarray:
    """Stack per-class text embeddings into [C, D]."""
    return np.stack([encode_text(t, cfg, params) for t in class_tokens])


def align_forward(
    text_embs: np.ndarray, videos: np.ndarray, cfg: EncoderConfig, params: Params
):
    """Cross-attention refinement of class embeddings under video guidance.

    text_embs [C, D] are the queries; each row of videos [K, D] is a single
    key/value. Residual add then per-row renormalization. Returns [K, C, D].
    """
    text_embs = np.asarray(text_embs, dtype=np.float64)
    videos = np.asarray(videos, dtype=np.float64)
    if text_embs.ndim != 2 or videos.ndim != 2 or text_embs.shape[1] != videos.shape[1]:
        raise ValueError(
            f"dimension mismatch: text {text_embs.shape} vs video {videos.shape}"
        )
    k = videos.shape[0]
    q_in = np.broadcast_to(text_embs, (k,) + text_embs.shape)
    kv_in = videos[:, None, :]  # [K, 1, D]
    out, attn_cache = attention_forward(q_in, kv_in, params, "align", cfg.heads)
    aligned, norm_cache = unit_normalize_forward(text_embs[None] + out)
    return aligned, (attn_cache, norm_cache)


def align_backward(daligned: np.ndarray, cache):
    attn_cache, norm_cache = cache
    du = unit_normalize_backward(daligned, norm_cache)
    dq, dkv, grads = attention_backward(du, attn_cache)
    dtext = du.sum(axis=0) + dq.sum(axis=0)
    dvideos = dkv[:, 0, :]
    return dtext, dvideos, grads


def align(
    text_embs: np.ndarray, video_emb: np.ndarray, cfg: EncoderConfig, params: Params
) -> np.ndarray:
    """Single-video alignment: [C, D] class embeddings -> refined [C, D]."""
    video_emb = np.asarray(video_emb, dtype=np.float64)
    if video_emb.ndim != 1:
        raise ValueError(f"video embedding must be a vector, got {video_emb.shape}")
    aligned, _ = align_forward(text_embs, video_emb[None], cfg, params)
    return aligned[0]


def load_class_embeddings(path: str | Path, classes, embed_dim: int) -> np.ndarray:
    """External per-class embedding file: JSON {class name: [D floats]}."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"class embedding file not found: {path}")
    table = json.loads(path.read_text(encoding="utf-8"))
    rows = []
    for name in classes:
        if name not in table:
            raise DataError(f"{path}: missing embedding for class {name!r}")
        vec = np.asarray(table[name], dtype=np.float64)
        if vec.shape != (embed_dim,):
            raise DataError(
                f"{path}: class {name!r} embedding has shape {vec.shape}, "
                f"expected ({embed_dim},)"
            )
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            raise DataError(f"{path}: class {name!r} embedding has zero norm")
        rows.append(vec / norm)
    return np.stack(rows)
