"""Motion-aware multi-label video behavior recognition at desk scale."""

from .config import PipelineConfig, load_config
from .corpus import (
    ClipRecord,
    FlowField,
    LabelVocabulary,
    VideoClip,
    load_clip,
    load_manifest,
    read_flow_cache,
    write_flow_cache,
    write_manifest,
)
from .ensemble import aggregate, run_classifiers
from .flow import (
    InterleavedSequence,
    Token,
    compute_flow,
    flow_to_image,
    frames_only,
    flows_only,
    interleave,
)
from .head import TrainConfig, bce_loss, knn_infer, score, train_step
from .metrics import average_precision, evaluate, mean_ap, pr_curve
from .model import EncoderConfig, init_params, load_checkpoint, save_checkpoint
from .sampling import (
    SamplingPlan,
    Window,
    build_plans,
    partition_main_windows,
    sample_dense,
    sample_semidense,
    sample_sparse,
)
from .synthetic import generate_moving_shapes
from .text_encoder import WordVocabulary, align, encode_text, tokenize
from .video_encoder import encode_frame, encode_video, patch_embed

__version__ = "0.1.0"
