"""Video tower: patch embedding, frame-level attention, temporal attention.

Each token image is cut into non-overlapping patches, projected to the embed
dimension, tagged with fixed sinusoidal spatial positions and a learned
token-kind offset (frame vs flow), and prefixed with a learned summary token.
The frame encoder runs self-attention blocks and reads out the summary slot;
the temporal encoder attends over the per-token embeddings (sinusoidal slot
positions, optional), mean-pools, and layer-normalizes into one video
embedding.

Forward-with-cache variants exist for training; the plain functions are the
inference surface.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .flow import InterleavedSequence
from .model import EncoderConfig
from .nn import (
    Grads,
    Params,
    accumulate,
    encoder_backward,
    encoder_forward,
    layernorm_backward,
    layernorm_forward,
    sinusoid_table,
)


# Pixels arrive in [0, 1]; the encoder standardizes them (mean 0.5, scale
# 0.25) so cached artifacts stay model-agnostic.
_PIXEL_MEAN = 0.5
_PIXEL_SCALE = 0.25


def patch_grid(cfg: EncoderConfig, height: int, width: int) -> tuple[int, int]:
    if height % cfg.patch_size or width % cfg.patch_size:
        raise ConfigError(
            f"image {height}x{width} not divisible by patch size {cfg.patch_size}"
        )
    return height // cfg.patch_size, width // cfg.patch_size


def _patchify(images: np.ndarray, patch: int) -> np.ndarray:
    b, h, w, c = images.shape
    gh, gw = h // patch, w // patch
    x = images.reshape(b, gh, patch, gw, patch, c)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(b, gh * gw, patch * patch * c)


def patch_embed_forward(
    images: np.ndarray, kinds: np.ndarray, cfg: EncoderConfig, params: Params
):
    """[B, H, W, 3] images -> [B, 1 + n_patches, D] tokens (summary first)."""
    b, h, w, _ = images.shape
    gh, gw = patch_grid(cfg, h, w)
    standardized = (np.asarray(images, dtype=np.float64) - _PIXEL_MEAN) / _PIXEL_SCALE
    patches = _patchify(standardized, cfg.patch_size)
    x = patches @ params["patch.w"] + params["patch.b"]
    x = x + sinusoid_table(gh * gw, cfg.embed_dim)
    x = x + params["patch.kind"][kinds][:, None, :]
    summary = np.broadcast_to(params["patch.summary"], (b, 1, cfg.embed_dim))
    tokens = np.concatenate([summary, x], axis=1)
    return tokens, (patches, kinds)


def patch_embed_backward(dtokens: np.ndarray, cache) -> Grads:
    patches, kinds = cache
    dx = dtokens[:, 1:, :]
    patch_dim = patches.shape[-1]
    dim = dtokens.shape[-1]
    grads: Grads = {
        "patch.summary": dtokens[:, 0, :].sum(axis=0),
        "patch.w": patches.reshape(-1, patch_dim).T @ dx.reshape(-1, dim),
        "patch.b": dx.reshape(-1, dim).sum(axis=0),
    }
    dkind = np.zeros((2, dim))
    np.add.at(dkind, kinds, dx.sum(axis=1))
    grads["patch.kind"] = dkind
    return grads


def frame_tower_forward(tokens: np.ndarray, cfg: EncoderConfig, params: Params):
    """[B, T, D] tokens -> [B, D] frame embeddings (summary slot, normalized)."""
    z, enc_cache = encoder_forward(tokens, params, "frame", cfg.frame_layers, cfg.heads)
    emb, ln_cache = layernorm_forward(z[:, 0, :], params["frame.out.g"], params["frame.out.b"])
    return emb, (enc_cache, ln_cache, tokens.shape)


def frame_tower_backward(demb: np.ndarray, cache):
    enc_cache, ln_cache, shape = cache
    ds, dg, db = layernorm_backward(demb, ln_cache)
    dz = np.zeros(shape)
    dz[:, 0, :] = ds
    dtokens, grads = encoder_backward(dz, enc_cache)
    grads["frame.out.g"] = dg
    grads["frame.out.b"] = db
    return dtokens, grads


def temporal_tower_forward(
    frame_embs: np.ndarray,
    cfg: EncoderConfig,
    params: Params,
    *,
    use_positions: bool = True,
):
    """[K, L, D] per-slot embeddings -> [K, D] video embeddings."""
    k, length, dim = frame_embs.shape
    x = frame_embs
    if use_positions:
        x = x + sinusoid_table(length, dim)
    z, enc_cache = encoder_forward(x, params, "temporal", cfg.temporal_layers, cfg.heads)
    pooled = z.mean(axis=1)
    video, ln_cache = layernorm_forward(pooled, params["temporal.out.g"], params["temporal.out.b"])
    return video, (enc_cache, ln_cache, length)


def temporal_tower_backward(dvideo: np.ndarray, cache):
    enc_cache, ln_cache, length = cache
    dpooled, dg, db = layernorm_backward(dvideo, ln_cache)
    dz = np.repeat(dpooled[:, None, :], length, axis=1) / length
    dframe, grads = encoder_backward(dz, enc_cache)
    grads["temporal.out.g"] = dg
    grads["temporal.out.b"] = db
    return dframe, grads


def sequence_arrays(seq: InterleavedSequence) -> tuple[np.ndarray, np.ndarray]:
    """Stack a token sequence into ([L, H, W, 3] images, [L] kind ids)."""
    if len(seq) == 0:
        raise ValueError("token sequence is empty")
    shapes = {t.image.shape for t in seq.tokens}
    if len(shapes) != 1:
        raise ValueError(f"token images disagree in shape: {sorted(shapes)}")
    images = np.stack([t.image for t in seq.tokens]).astype(np.float64)
    return images, seq.kind_ids()


def patch_embed(
    image: np.ndarray, cfg: EncoderConfig, params: Params, kind: int = 0
) -> np.ndarray:
    """Single image -> [1 + n_patches, D] tokens."""
    tokens, _ = patch_embed_forward(
        np.asarray(image, dtype=np.float64)[None], np.array([kind]), cfg, params
    )
    return tokens[0]


def encode_frame(tokens: np.ndarray, cfg: EncoderConfig, params: Params) -> np.ndarray:
    """Token sequence [T, D] -> frame embedding [D] read at slot 0."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[-1] != cfg.embed_dim:
        raise ValueError(f"tokens must be [T, {cfg.embed_dim}], got {tokens.shape}")
    emb, _ = frame_tower_forward(tokens[None], cfg, params)
    return emb[0]


def encode_video(
    seq: InterleavedSequence,
    cfg: EncoderConfig,
    params: Params,
    *,
    use_temporal_positions: bool = True,
) -> np.ndarray:
    """Token sequence -> single video embedding [D]."""
    images, kinds = sequence_arrays(seq)
    tokens, _ = patch_embed_forward(images, kinds, cfg, params)
    frame_embs, _ = frame_tower_forward(tokens, cfg, params)
    video, _ = temporal_tower_forward(
        frame_embs[None], cfg, params, use_positions=use_temporal_positions
    )
    return video[0]


def encode_videos_forward(
    images: np.ndarray,
    kinds: np.ndarray,
    n_sequences: int,
    cfg: EncoderConfig,
    params: Params,
    *,
    use_positions: bool = True,
):
    """Batched cached forward: [K*L, H, W, 3] images -> [K, D] embeddings."""
    total = images.shape[0]
    if total % n_sequences:
        raise ValueError(f"{total} images do not split into {n_sequences} sequences")
    length = total // n_sequences
    tokens, c_patch = patch_embed_forward(images, kinds, cfg, params)
    frame_embs, c_frame = frame_tower_forward(tokens, cfg, params)
    video, c_temp = temporal_tower_forward(
        frame_embs.reshape(n_sequences, length, cfg.embed_dim),
        cfg,
        params,
        use_positions=use_positions,
    )
    return video, (c_patch, c_frame, c_temp, length)


def encode_videos_backward(dvideo: np.ndarray, cache) -> Grads:
    c_patch, c_frame, c_temp, length = cache
    dframe_seq, grads = temporal_tower_backward(dvideo, c_temp)
    dframe = dframe_seq.reshape(-1, dframe_seq.shape[-1])
    dtokens, frame_grads = frame_tower_backward(dframe, c_frame)
    accumulate(grads, frame_grads)
    accumulate(grads, patch_embed_backward(dtokens, c_patch))
    return grads
