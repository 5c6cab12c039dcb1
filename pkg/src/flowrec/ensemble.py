"""Shared-weight classifier ensemble and score aggregation.

All M classifiers read one parameter dict and differ only in their sampling
plan, so weight sharing is structural. Aggregation averages the per-classifier
score vectors elementwise and thresholds the mean for the predicted label set.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .corpus import FlowField, VideoClip
from .flow import build_token_sequence
from .head import score
from .model import EncoderConfig
from .nn import Params
from .sampling import SamplingPlan
from .text_encoder import align
from .video_encoder import encode_video


def run_classifiers(
    clip: VideoClip,
    flows: Sequence[FlowField] | None,
    plans: Sequence[SamplingPlan],
    params: Params,
    cfg: EncoderConfig,
    class_embs: np.ndarray,
    temperature: float = 0.07,
    *,
    modality: str = "rgb+flow",
    max_displacement: float = 4.0,
    use_temporal_positions: bool = True,
) -> list[np.ndarray]:
    """Score the clip once per plan; order follows the plans."""
    if not plans:
        raise ValueError("at least one sampling plan is required")
    scores = []
    for plan in plans:
        seq = build_token_sequence(
            clip,
            flows,
            plan.frame_indices,
            modality,
            max_displacement=max_displacement,
        )
        video_emb = encode_video(
            seq, cfg, params, use_temporal_positions=use_temporal_positions
        )
        refined = align(class_embs, video_emb, cfg, params)
        scores.append(score(video_emb, refined, temperature))
    return scores


def aggregate(
    scores: Sequence[np.ndarray], threshold: float = 0.5
) -> tuple[np.ndarray, list[int]]:
    """Elementwise mean of the score vectors plus the thresholded label set."""
    if len(scores) == 0:
        raise ValueError("cannot aggregate zero score vectors")
    lengths = {len(s) for s in scores}
    if len(lengths) != 1:
        raise ValueError(f"score vectors disagree in length: {sorted(lengths)}")
    mean = np.mean(np.stack([np.asarray(s, dtype=np.float64) for s in scores]), axis=0)
    predicted = [int(i) for i in np.flatnonzero(mean >= threshold)]
    return mean, predicted
