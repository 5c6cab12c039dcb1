"""Scores, multi-label loss, gradient-descent training, and KNN inference.

Per-class probability is sigmoid(cosine(video, class) / temperature); training
minimizes the mean binary cross-entropy over classes and batch with plain SGD.
``loss_and_grads`` assembles the full differentiable path (patch embedding,
frame and temporal attention, text tower, alignment, scoring) and returns
analytic gradients for every parameter group; ``train_step`` applies one
update and reports the pre-update loss.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericError
from .flow import InterleavedSequence
from .model import EncoderConfig
from .nn import Grads, Params, accumulate
from .text_encoder import (
    TextTokenSequence,
    align_backward,
    align_forward,
    text_tower_backward,
    text_tower_forward,
)
from .video_encoder import (
    encode_videos_backward,
    encode_videos_forward,
    sequence_arrays,
)

_CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    steps: int
    batch_size: int
    temperature: float = 0.07
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _cosine_rows(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """cos between each row pair; u [..., D], v broadcastable to u."""
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    if np.any(nu < 1e-12) or np.any(nv < 1e-12):
        raise NumericError("zero-norm embedding in cosine similarity")
    return (u * v).sum(axis=-1) / (nu * nv)


def score(
    video_emb: np.ndarray, class_embs: np.ndarray, temperature: float = 0.07
) -> np.ndarray:
    """Per-class probabilities sigmoid(cos(video, class_c) / temperature)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    video_emb = np.asarray(video_emb, dtype=np.float64)
    class_embs = np.asarray(class_embs, dtype=np.float64)
    if class_embs.ndim != 2 or video_emb.shape != (class_embs.shape[1],):
        raise ValueError(
            f"shape mismatch: video {video_emb.shape} vs classes {class_embs.shape}"
        )
    cos = _cosine_rows(class_embs, video_emb[None, :])
    return sigmoid(cos / temperature)


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy over classes, probabilities clamped to
    [1e-7, 1 - 1e-7]."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ValueError(f"shape mismatch: probs {probs.shape} vs labels {labels.shape}")
    p = np.clip(probs, _CLAMP_EPS, 1.0 - _CLAMP_EPS)
    return float(-(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)).mean())


def knn_infer(
    video_emb: np.ndarray, class_embs: np.ndarray, k: int
) -> list[tuple[int, float]]:
    """Top-k classes by cosine similarity; ties broken by ascending index."""
    class_embs = np.asarray(class_embs, dtype=np.float64)
    n_classes = class_embs.shape[0]
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if k > n_classes:
        raise ValueError(f"k={k} exceeds class count {n_classes}")
    sims = _cosine_rows(class_embs, np.asarray(video_emb, dtype=np.float64)[None, :])
    order = np.lexsort((np.arange(n_classes), -sims))
    return [(int(i), float(sims[i])) for i in order[:k]]


def _batch_arrays(batch: Sequence[tuple[InterleavedSequence, np.ndarray]]):
    if not batch:
        raise ValueError("batch is empty")
    lengths = {len(seq) for seq, _ in batch}
    if len(lengths) != 1:
        raise ValueError(f"sequences in a batch must share length, got {sorted(lengths)}")
    images = []
    kinds = []
    for seq, _ in batch:
        imgs, kid = sequence_arrays(seq)
        images.append(imgs)
        kinds.append(kid)
    labels = np.stack([np.asarray(y, dtype=np.float64) for _, y in batch])
    return np.concatenate(images), np.concatenate(kinds), labels


def loss_and_grads(
    batch: Sequence[tuple[InterleavedSequence, np.ndarray]],
    params: Params,
    cfg: EncoderConfig,
    class_tokens: list[TextTokenSequence],
    temperature: float,
    *,
    use_temporal_positions: bool = True,
    external_class_embs: np.ndarray | None = None,
) -> tuple[float, Grads, np.ndarray]:
    """Full forward/backward; returns (loss, grads, per-example probabilities)."""
    images, kinds, labels = _batch_arrays(batch)
    n_seq, n_classes = labels.shape
    if external_class_embs is None and len(class_tokens) != n_classes:
        raise ValueError("class token count disagrees with label width")

    videos, video_cache = encode_videos_forward(
        images, kinds, n_seq, cfg, params, use_positions=use_temporal_positions
    )
    if external_class_embs is not None:
        text_embs = np.asarray(external_class_embs, dtype=np.float64)
        text_caches = None
    else:
        outs = [text_tower_forward(t.ids, cfg, params) for t in class_tokens]
        text_embs = np.stack([o[0] for o in outs])
        text_caches = [o[1] for o in outs]
    aligned, align_cache = align_forward(text_embs, videos, cfg, params)

    nu = np.linalg.norm(aligned, axis=-1)  # [K, C]
    nv = np.linalg.norm(videos, axis=-1)  # [K]
    if np.any(nu < 1e-12) or np.any(nv < 1e-12):
        raise NumericError("zero-norm embedding while scoring")
    dots = np.einsum("kcd,kd->kc", aligned, videos)
    cos = dots / (nu * nv[:, None])
    probs = sigmoid(cos / temperature)
    p = np.clip(probs, _CLAMP_EPS, 1.0 - _CLAMP_EPS)
    loss = float(-(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)).mean())
    if not np.isfinite(loss):
        raise NumericError("training loss is non-finite")

    # d(loss)/d(cos/temperature) of mean BCE through the sigmoid
    dcos = (probs - labels) / (n_seq * n_classes * temperature)
    inv = 1.0 / (nu * nv[:, None])
    daligned = dcos[:, :, None] * (
        videos[:, None, :] * inv[:, :, None]
        - aligned * (cos / (nu * nu))[:, :, None]
    )
    dvideos = (
        dcos[:, :, None]
        * (aligned * inv[:, :, None] - videos[:, None, :] * (cos / (nv * nv)[:, None])[:, :, None])
    ).sum(axis=1)

    dtext, dvideos_align, grads = align_backward(daligned, align_cache)
    dvideos = dvideos + dvideos_align
    accumulate(grads, encode_videos_backward(dvideos, video_cache))
    if text_caches is not None:
        vocab_size = params["text.embed"].shape[0]
        for c, cache in enumerate(text_caches):
            accumulate(grads, text_tower_backward(dtext[c], cache, vocab_size))
    for name in params:
        if name not in grads:
            grads[name] = np.zeros_like(params[name])
    return loss, grads, probs


def sgd_update(params: Params, grads: Grads, learning_rate: float) -> Params:
    return {k: params[k] - learning_rate * grads[k] for k in params}


class AdamState:
    """Optional adaptive optimizer behind the same update contract as SGD."""

    def __init__(self, params: Params, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def update(self, params: Params, grads: Grads, learning_rate: float) -> Params:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        out: Params = {}
        for k in params:
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grads[k]
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grads[k] ** 2
            mhat = self.m[k] / bias1
            vhat = self.v[k] / bias2
            out[k] = params[k] - learning_rate * mhat / (np.sqrt(vhat) + self.eps)
        return out


def train_step(
    batch: Sequence[tuple[InterleavedSequence, np.ndarray]],
    params: Params,
    cfg: EncoderConfig,
    class_tokens: list[TextTokenSequence],
    train_cfg: TrainConfig,
    *,
    use_temporal_positions: bool = True,
    external_class_embs: np.ndarray | None = None,
) -> tuple[Params, float]:
    """One SGD step; returns (updated params, pre-update loss)."""
    loss, grads, _ = loss_and_grads(
        batch,
        params,
        cfg,
        class_tokens,
        train_cfg.temperature,
        use_temporal_positions=use_temporal_positions,
        external_class_embs=external_class_embs,
    )
    if train_cfg.learning_rate == 0.0:
        return dict(params), loss
    return sgd_update(params, grads, train_cfg.learning_rate), loss


@dataclass
class TrainLogRow:
    step: int
    loss: float
    wall_ms: float


class StepTimer:
    def __init__(self):
        self._last = time.perf_counter()

    def lap_ms(self) -> float:
        now = time.perf_counter()
        ms = (now - self._last) * 1000.0
        self._last = now
        return ms
