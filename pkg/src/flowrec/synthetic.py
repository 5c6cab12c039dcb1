"""Motion-defined toy datasets for desk-scale ablations.

Four behaviors over a textured square on a plain background:

* move-right: the square translates +1 px/frame;
* move-left: the exact frame-reversal of a paired move-right clip, so the two
  classes share identical frame multisets and differ only in temporal order
  (the designed stressor for the motion pathway);
* keeping-still: the square never moves;
* blinking: the square never moves but toggles intensity every frame, labeled
  both "blinking" and "keeping-still" (multi-label).

Generation is deterministic under the seed, down to the PNG bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import ClipRecord, write_manifest

CLASSES = ("blinking", "keeping-still", "move-left", "move-right")
_ARCHETYPES = ("move-right", "move-left", "keeping-still", "blinking")

_BACKGROUND = 0.1
_BLINK_SCALE = 0.45


def _render(
    texture: np.ndarray, x: int, y: int, image_size: int, scale: float = 1.0
) -> np.ndarray:
    frame = np.full((image_size, image_size, 3), _BACKGROUND, dtype=np.float64)
    s = texture.shape[0]
    frame[y : y + s, x : x + s] = np.clip(texture * scale, 0.0, 1.0)
    return frame


def _to_png(frame: np.ndarray, path: Path) -> None:
    img = np.round(frame * 255.0).astype(np.uint8)
    Image.fromarray(img, mode="RGB").save(path)


def generate_moving_shapes(
    n_clips: int,
    frames_per_clip: int = 16,
    seed: int = 0,
    out_dir: str | Path = "synthetic",
    *,
    image_size: int = 32,
    square_size: int = 8,
) -> Path:
    """Write frame directories plus a manifest.jsonl; returns the manifest path."""
    if n_clips < 1 or frames_per_clip < 2:
        raise ValueError("need at least one clip and two frames per clip")
    span = image_size - square_size - (frames_per_clip - 1)
    if span < 1:
        raise ValueError(
            f"{frames_per_clip} frames of +-1 px motion do not fit in {image_size} px"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[ClipRecord] = []
    for i in range(n_clips):
        kind = _ARCHETYPES[i % 4]
        quartet = i // 4
        rng = np.random.default_rng(np.random.SeedSequence((seed, quartet)))
        texture = rng.uniform(0.3, 1.0, size=(square_size, square_size, 3))
        y = int(rng.integers(0, image_size - square_size + 1))
        x0 = int(rng.integers(0, span))
        x_still = int(rng.integers(0, image_size - square_size + 1))

        if kind == "move-right":
            frames = [
                _render(texture, x0 + t, y, image_size) for t in range(frames_per_clip)
            ]
            labels = ("move-right",)
        elif kind == "move-left":
            # exact reversal of the paired move-right trajectory
            frames = [
                _render(texture, x0 + t, y, image_size) for t in range(frames_per_clip)
            ][::-1]
            labels = ("move-left",)
        elif kind == "keeping-still":
            still = _render(texture, x_still, y, image_size)
            frames = [still] * frames_per_clip
            labels = ("keeping-still",)
        else:  # blinking
            bright = _render(texture, x_still, y, image_size)
            dim = _render(texture, x_still, y, image_size, scale=_BLINK_SCALE)
            frames = [bright if t % 2 == 0 else dim for t in range(frames_per_clip)]
            labels = ("blinking", "keeping-still")

        clip_id = f"clip{i:05d}-{kind}"
        clip_dir = out_dir / clip_id
        clip_dir.mkdir(exist_ok=True)
        for t, frame in enumerate(frames):
            _to_png(frame, clip_dir / f"{t:05d}.png")
        records.append(ClipRecord(clip_id, clip_id, frames_per_clip, labels))
    return write_manifest(records, out_dir / "manifest.jsonl")
