"""Frame-selection plans for the classifier ensemble.

Each of the M classifiers focuses on a main window; the windows partition the
video. Three schemes pick the per-classifier frame budget:

* dense: all frames drawn evenly from the classifier's main window;
* semi-dense: ceil(P/2) frames from the main window, floor(P/2) drawn evenly
  from the complementary (contextual) frames;
* sparse: the whole video is split into P quasi-equal strata and one frame is
  drawn per stratum by a deterministic generator keyed on
  (seed, classifier_index, stratum_index), so classifiers differ but runs
  reproduce.

Even draws from a window of length L use index_k = start + floor(k * L / P).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasiblePlanError

SCHEMES = ("dense", "semi-dense", "sparse")


@dataclass(frozen=True)
class Window:
    """Half-open frame-index interval [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid window [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def __contains__(self, index: int) -> bool:
        return self.start <= index < self.end


@dataclass(frozen=True)
class SamplingPlan:
    """Frame indices one classifier will process, plus their provenance."""

    classifier_index: int
    scheme: str
    main_window: Window | None
    frame_indices: tuple[int, ...]
    seed: int

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if any(b <= a for a, b in zip(self.frame_indices, self.frame_indices[1:])):
            raise ValueError("frame_indices must be strictly increasing")

    def to_dict(self) -> dict:
        return {
            "classifier_index": self.classifier_index,
            "scheme": self.scheme,
            "main_window": None
            if self.main_window is None
            else {"start": self.main_window.start, "end": self.main_window.end},
            "frame_indices": list(self.frame_indices),
            "seed": self.seed,
        }


def partition_main_windows(n_frames: int, n_classifiers: int) -> list[Window]:
    """Split [0, n_frames) into n_classifiers contiguous windows.

    Sizes differ by at most one; the first (n_frames mod n_classifiers)
    windows are the larger ones.
    """
    if n_classifiers < 1:
        raise ValueError(f"need at least one classifier, got {n_classifiers}")
    if n_classifiers > n_frames:
        raise ValueError(
            f"cannot partition {n_frames} frames into {n_classifiers} windows"
        )
    base, extra = divmod(n_frames, n_classifiers)
    windows = []
    start = 0
    for m in range(n_classifiers):
        size = base + (1 if m < extra else 0)
        windows.append(Window(start, start + size))
        start += size
    return windows


def _even_indices(start: int, length: int, budget: int) -> list[int]:
    return [start + (k * length) // budget for k in range(budget)]


def sample_dense(window: Window, frame_budget: int) -> list[int]:
    """Evenly draw frame_budget indices from inside the window."""
    if frame_budget < 1:
        raise ValueError(f"frame budget must be positive, got {frame_budget}")
    if frame_budget > len(window):
        raise InfeasiblePlanError(
            f"dense: budget {frame_budget} exceeds window length {len(window)}"
        )
    return _even_indices(window.start, len(window), frame_budget)


def sample_semidense(main: Window, n_frames: int, frame_budget: int) -> list[int]:
    """ceil(P/2) indices from the main window, floor(P/2) from its complement."""
    if frame_budget < 1:
        raise ValueError(f"frame budget must be positive, got {frame_budget}")
    if main.end > n_frames:
        raise ValueError(f"window {main} does not fit in {n_frames} frames")
    main_take = (frame_budget + 1) // 2
    ctx_take = frame_budget // 2
    ctx_len = n_frames - len(main)
    if main_take > len(main):
        raise InfeasiblePlanError(
            f"semi-dense: {main_take} frames needed from main window of {len(main)}"
        )
    if ctx_take > ctx_len:
        raise InfeasiblePlanError(
            f"semi-dense: {ctx_take} frames needed from contextual window of {ctx_len}"
        )
    picked = _even_indices(main.start, len(main), main_take)
    if ctx_take:
        complement = list(range(0, main.start)) + list(range(main.end, n_frames))
        picked += [complement[(k * ctx_len) // ctx_take] for k in range(ctx_take)]
    return sorted(picked)


def sparse_strata(n_frames: int, frame_budget: int) -> list[Window]:
    """Quasi-equal strata for the sparse scheme (same remainder rule as windows)."""
    return partition_main_windows(n_frames, frame_budget)


def sample_sparse(
    n_frames: int, frame_budget: int, seed: int, classifier_index: int
) -> list[int]:
    """One uniformly drawn index per stratum, deterministic under (seed, m)."""
    if frame_budget < 1:
        raise ValueError(f"frame budget must be positive, got {frame_budget}")
    if frame_budget > n_frames:
        raise InfeasiblePlanError(
            f"sparse: budget {frame_budget} exceeds clip length {n_frames}"
        )
    if seed < 0 or classifier_index < 0:
        raise ValueError("seed and classifier_index must be non-negative")
    picked = []
    for s, stratum in enumerate(sparse_strata(n_frames, frame_budget)):
        rng = np.random.default_rng(
            np.random.SeedSequence((seed, classifier_index, s))
        )
        picked.append(int(rng.integers(stratum.start, stratum.end)))
    return picked


def build_plans(
    n_frames: int,
    n_classifiers: int,
    scheme: str,
    frame_budget: int,
    seed: int,
) -> list[SamplingPlan]:
    """One plan per classifier; dense/semi-dense plan m uses main window m."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if n_classifiers < 1:
        raise ValueError(f"need at least one classifier, got {n_classifiers}")
    plans = []
    if scheme == "sparse":
        for m in range(n_classifiers):
            indices = sample_sparse(n_frames, frame_budget, seed, m)
            plans.append(SamplingPlan(m, scheme, None, tuple(indices), seed))
        return plans
    windows = partition_main_windows(n_frames, n_classifiers)
    for m, window in enumerate(windows):
        if scheme == "dense":
            indices = sample_dense(window, frame_budget)
        else:
            indices = sample_semidense(window, n_frames, frame_budget)
        plans.append(SamplingPlan(m, scheme, window, tuple(indices), seed))
    return plans
