"""Dense motion estimation and frame/flow token interleaving.

The reference flow backend is coarse-to-fine block matching: a 3-level image
pyramid, 8x8 blocks, integer search radius 4 per level, sum-of-absolute-
differences cost, ties broken by smallest displacement magnitude then
lexicographic (dx, dy). It stands in for learned flow; precomputed fields can
be dropped into the flow cache instead (same format, see corpus module).

Flow fields are rendered to 3-channel images so frame and flow tokens share
one patch embedder: channels are (dx, dy, magnitude), with dx and dy mapped
affinely from [-R, R] to [0, 1] and magnitude from [0, R*sqrt(2)].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import FlowField, VideoClip

KIND_FRAME = "frame"
KIND_FLOW = "flow"

DEFAULT_BLOCK_SIZE = 8
DEFAULT_SEARCH_RADIUS = 4
DEFAULT_LEVELS = 3
DEFAULT_MAX_DISPLACEMENT = 4.0

MODALITIES = ("rgb+flow", "rgb", "flow")


class Token(NamedTuple):
    kind: str
    image: np.ndarray  # [H, W, 3] in [0, 1]
    index: int  # source frame index


@dataclass(frozen=True)
class InterleavedSequence:
    """Ordered frame/flow tokens fed to the video encoder.

    ``interleave`` produces the strict frame, flow, frame, flow ... pattern;
    the single-modality builders below exist for ablations.
    """

    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def kind_ids(self) -> np.ndarray:
        return np.array([0 if t.kind == KIND_FRAME else 1 for t in self.tokens])


def compute_flow(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    search_radius: int = DEFAULT_SEARCH_RADIUS,
    levels: int = DEFAULT_LEVELS,
) -> FlowField:
    """Estimate per-pixel displacement from frame_a to frame_b."""
    a = np.asarray(frame_a, dtype=np.float64)
    b = np.asarray(frame_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if a.ndim != 3:
        raise ValueError(f"frames must be [H, W, C], got {a.shape}")

    pyramid_a = [a]
    pyramid_b = [b]
    while (
        len(pyramid_a) < levels
        and min(pyramid_a[-1].shape[0], pyramid_a[-1].shape[1]) // 2 >= block_size
    ):
        pyramid_a.append(_halve(pyramid_a[-1]))
        pyramid_b.append(_halve(pyramid_b[-1]))

    flow = np.zeros(pyramid_a[-1].shape[:2] + (2,), dtype=np.float64)
    for level in range(len(pyramid_a) - 1, -1, -1):
        al, bl = pyramid_a[level], pyramid_b[level]
        if level < len(pyramid_a) - 1:
            prior = _upsample(flow, al.shape[:2])
        else:
            prior = flow
        flow = _match_level(al, bl, prior, block_size, search_radius)
    return FlowField(flow.astype(np.float32))


def _halve(img: np.ndarray) -> np.ndarray:
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    crop = img[: 2 * h2, : 2 * w2]
    return 0.25 * (
        crop[0::2, 0::2] + crop[1::2, 0::2] + crop[0::2, 1::2] + crop[1::2, 1::2]
    )


def _upsample(flow: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    up = 2.0 * flow.repeat(2, axis=0).repeat(2, axis=1)
    pad_h = target_hw[0] - up.shape[0]
    pad_w = target_hw[1] - up.shape[1]
    if pad_h or pad_w:
        up = np.pad(up, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    return up


def _match_level(
    a: np.ndarray, b: np.ndarray, prior: np.ndarray, block_size: int, radius: int
) -> np.ndarray:
    height, width = a.shape[:2]
    out = np.empty((height, width, 2), dtype=np.float64)
    for r0 in range(0, height, block_size):
        h = min(block_size, height - r0)
        for c0 in range(0, width, block_size):
            w = min(block_size, width - c0)
            block = a[r0 : r0 + h, c0 : c0 + w]
            pdx = int(round(prior[r0 + h // 2, c0 + w // 2, 0]))
            pdy = int(round(prior[r0 + h // 2, c0 + w // 2, 1]))
            best = None
            # Search around the propagated estimate and around zero; the zero
            # anchor keeps small motions recoverable when coarse levels lack
            # reliable texture and makes the flat-image tie-break exact.
            candidates = dict.fromkeys(
                (py + oy, px + ox)
                for py, px in ((pdy, pdx), (0, 0))
                for oy in range(-radius, radius + 1)
                for ox in range(-radius, radius + 1)
            )
            for dy, dx in candidates:
                rr, cc = r0 + dy, c0 + dx
                if rr < 0 or cc < 0 or rr + h > height or cc + w > width:
                    continue
                sad = float(np.abs(block - b[rr : rr + h, cc : cc + w]).sum())
                key = (sad, dx * dx + dy * dy, dx, dy)
                if best is None or key < best:
                    best = key
            out[r0 : r0 + h, c0 : c0 + w, 0] = best[2]
            out[r0 : r0 + h, c0 : c0 + w, 1] = best[3]
    return out


def flow_to_image(
    flow: FlowField | np.ndarray, max_displacement: float = DEFAULT_MAX_DISPLACEMENT
) -> np.ndarray:
    """Render a flow field as an [H, W, 3] image in [0, 1].

    Channels are (dx, dy, magnitude); dx and dy map [-R, R] -> [0, 1],
    magnitude maps [0, R*sqrt(2)] -> [0, 1]; out-of-range values clamp.
    """
    if max_displacement <= 0:
        raise ValueError("max_displacement must be positive")
    v = flow.vectors if isinstance(flow, FlowField) else np.asarray(flow)
    r = float(max_displacement)
    dx = v[..., 0].astype(np.float64)
    dy = v[..., 1].astype(np.float64)
    mag = np.hypot(dx, dy)
    img = np.stack(
        [
            np.clip(0.5 + dx / (2.0 * r), 0.0, 1.0),
            np.clip(0.5 + dy / (2.0 * r), 0.0, 1.0),
            np.clip(mag / (r * np.sqrt(2.0)), 0.0, 1.0),
        ],
        axis=-1,
    )
    return img.astype(np.float32)


def image_to_flow(
    image: np.ndarray, max_displacement: float = DEFAULT_MAX_DISPLACEMENT
) -> np.ndarray:
    """Invert the (dx, dy) channels of flow_to_image for in-range fields."""
    r = float(max_displacement)
    dx = (np.asarray(image[..., 0], dtype=np.float64) - 0.5) * 2.0 * r
    dy = (np.asarray(image[..., 1], dtype=np.float64) - 0.5) * 2.0 * r
    return np.stack([dx, dy], axis=-1)


def _check_indices(indices: Sequence[int], n_frames: int) -> list[int]:
    idx = [int(i) for i in indices]
    for a, b in zip(idx, idx[1:]):
        if b <= a:
            raise ValueError(f"indices must be strictly increasing, got {idx}")
    if idx and (idx[0] < 0 or idx[-1] >= n_frames):
        raise ValueError(f"indices out of range [0, {n_frames}): {idx}")
    return idx


def interleave(
    clip: VideoClip,
    flows: Sequence[FlowField],
    indices: Sequence[int],
    *,
    max_displacement: float = DEFAULT_MAX_DISPLACEMENT,
) -> InterleavedSequence:
    """Pair each selected frame with its outgoing flow image.

    For selected index t the flow token renders field t (frame t -> t+1);
    the last frame has no outgoing field, so index N-1 reuses field N-2.
    Output alternates frame, flow, ... with length 2 * len(indices).
    """
    n = len(clip)
    if len(flows) != n - 1:
        raise ValueError(f"expected {n - 1} flow fields, got {len(flows)}")
    idx = _check_indices(indices, n)
    tokens: list[Token] = []
    for t in idx:
        tokens.append(Token(KIND_FRAME, clip.frames[t], t))
        field = flows[min(t, n - 2)]
        tokens.append(Token(KIND_FLOW, flow_to_image(field, max_displacement), t))
    return InterleavedSequence(tuple(tokens))


def frames_only(clip: VideoClip, indices: Sequence[int]) -> InterleavedSequence:
    """RGB-only token sequence (ablation mode)."""
    idx = _check_indices(indices, len(clip))
    return InterleavedSequence(
        tuple(Token(KIND_FRAME, clip.frames[t], t) for t in idx)
    )


def flows_only(
    clip: VideoClip,
    flows: Sequence[FlowField],
    indices: Sequence[int],
    *,
    max_displacement: float = DEFAULT_MAX_DISPLACEMENT,
) -> InterleavedSequence:
    """Flow-only token sequence (ablation mode)."""
    n = len(clip)
    if len(flows) != n - 1:
        raise ValueError(f"expected {n - 1} flow fields, got {len(flows)}")
    idx = _check_indices(indices, n)
    return InterleavedSequence(
        tuple(
            Token(KIND_FLOW, flow_to_image(flows[min(t, n - 2)], max_displacement), t)
            for t in idx
        )
    )


def build_token_sequence(
    clip: VideoClip,
    flows: Sequence[FlowField] | None,
    indices: Sequence[int],
    modality: str = "rgb+flow",
    *,
    max_displacement: float = DEFAULT_MAX_DISPLACEMENT,
) -> InterleavedSequence:
    """Dispatch on modality; flows may be None for plain RGB."""
    if modality == "rgb+flow":
        return interleave(clip, flows, indices, max_displacement=max_displacement)
    if modality == "rgb":
        return frames_only(clip, indices)
    if modality == "flow":
        return flows_only(clip, flows, indices, max_displacement=max_displacement)
    raise ValueError(f"unknown modality {modality!r}, expected one of {MODALITIES}")


def clip_flows(clip: VideoClip, **kwargs) -> list[FlowField]:
    """Flow fields between every consecutive frame pair of a clip."""
    return [
        compute_flow(clip.frames[i], clip.frames[i + 1], **kwargs)
        for i in range(len(clip) - 1)
    ]
