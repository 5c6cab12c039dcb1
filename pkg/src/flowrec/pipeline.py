"""End-to-end orchestration shared by the CLI subcommands.

Everything here is deterministic under the config seed: parameter init,
batch order, sampling plans, and therefore checkpoints, predictions, and
reports. Flow preparation can fan out over a process pool; per-clip cache
files make the result independent of worker scheduling.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus, flow, head, metrics, model, sampling, text_encoder
from .config import PipelineConfig
from .corpus import ClipRecord, FlowField, LabelVocabulary, VideoClip
from .ensemble import aggregate, run_classifiers
from .errors import DataError, NumericError


def manifest_root(cfg: PipelineConfig) -> Path:
    return cfg.paths.require("manifest").parent


def load_records(cfg: PipelineConfig, *, require_labels: bool) -> list[ClipRecord]:
    return corpus.load_manifest(cfg.paths.require("manifest"), require_labels=require_labels)


def ensure_flows(
    record: ClipRecord, clip: VideoClip, cache_dir: Path
) -> list[FlowField]:
    """Read cached fields for a clip, computing and caching them if absent."""
    expect = (len(clip) - 1, clip.frame_shape)
    if corpus.has_flow_cache(record.clip_id, cache_dir):
        return corpus.read_flow_cache(
            record.clip_id, cache_dir, expect_shape=expect[1], expect_count=expect[0]
        )
    flows = flow.clip_flows(clip)
    corpus.write_flow_cache(record.clip_id, flows, cache_dir)
    return flows


def _prepare_one(args: tuple[ClipRecord, str, str]) -> str:
    record, root, cache_dir = args
    clip = corpus.load_clip(record, root)
    ensure_flows(record, clip, Path(cache_dir))
    return record.clip_id


def prepare_flow_cache(cfg: PipelineConfig, workers: int = 1) -> list[str]:
    """Populate the flow cache for every manifest clip."""
    records = load_records(cfg, require_labels=False)
    root = str(manifest_root(cfg))
    cache_dir = cfg.paths.require("flow_cache")
    cache_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(r, root, str(cache_dir)) for r in records]
    if workers <= 1:
        done = [_prepare_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_prepare_one, jobs))
    return sorted(done)


@dataclass
class LoadedDataset:
    records: list[ClipRecord]
    clips: dict[str, VideoClip]
    flows: dict[str, list[FlowField]]
    vocab: LabelVocabulary


def load_dataset(cfg: PipelineConfig, *, require_labels: bool) -> LoadedDataset:
    records = load_records(cfg, require_labels=require_labels)
    if not records:
        raise DataError(f"manifest {cfg.paths.manifest} has no records")
    root = manifest_root(cfg)
    clips = {r.clip_id: corpus.load_clip(r, root) for r in records}
    flows: dict[str, list[FlowField]] = {}
    if cfg.modality != "rgb":
        cache_dir = cfg.paths.require("flow_cache")
        cache_dir.mkdir(parents=True, exist_ok=True)
        for r in records:
            flows[r.clip_id] = ensure_flows(r, clips[r.clip_id], cache_dir)
    vocab = LabelVocabulary.from_records(records)
    return LoadedDataset(records, clips, flows, vocab)


def _plans_for_length(cfg: PipelineConfig, n_frames: int) -> list[sampling.SamplingPlan]:
    return sampling.build_plans(
        n_frames, cfg.classifiers, cfg.scheme, cfg.frame_budget, cfg.seed
    )


def _sequence(
    cfg: PipelineConfig,
    data: LoadedDataset,
    record: ClipRecord,
    plan: sampling.SamplingPlan,
) -> flow.InterleavedSequence:
    return flow.build_token_sequence(
        data.clips[record.clip_id],
        data.flows.get(record.clip_id),
        plan.frame_indices,
        cfg.modality,
        max_displacement=cfg.max_displacement,
    )


def run_training(cfg: PipelineConfig) -> tuple[Path, Path]:
    """Train from scratch; writes checkpoint (+ sidecar) and a loss CSV."""
    data = load_dataset(cfg, require_labels=True)
    enc_cfg = cfg.encoder_config()
    classes = list(data.vocab.classes)
    word_vocab = text_encoder.WordVocabulary.from_classes(classes)
    class_tokens = [
        text_encoder.tokenize(c, word_vocab, enc_cfg.max_text_len) for c in classes
    ]
    external = None
    if cfg.paths.text_embeddings:
        external = text_encoder.load_class_embeddings(
            cfg.paths.text_embeddings, classes, enc_cfg.embed_dim
        )
    params = model.init_params(enc_cfg, word_vocab.size, cfg.seed)
    train_cfg = head.TrainConfig(
        cfg.learning_rate, cfg.steps, cfg.batch_size, cfg.temperature, cfg.seed
    )
    labels = {
        r.clip_id: data.vocab.binary_vector(r.labels) for r in data.records
    }
    plan_cache: dict[int, list[sampling.SamplingPlan]] = {}
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
    adam = head.AdamState(params) if cfg.optimizer == "adam" else None
    timer = head.StepTimer()
    rows: list[head.TrainLogRow] = []
    for step in range(cfg.steps):
        picks = rng.integers(0, len(data.records), size=cfg.batch_size)
        batch = []
        for j, pick in enumerate(picks):
            record = data.records[int(pick)]
            n = record.frame_count
            if n not in plan_cache:
                plan_cache[n] = _plans_for_length(cfg, n)
            plan = plan_cache[n][(step * cfg.batch_size + j) % cfg.classifiers]
            batch.append((_sequence(cfg, data, record, plan), labels[record.clip_id]))
        try:
            if adam is None:
                params, loss = head.train_step(
                    batch,
                    params,
                    enc_cfg,
                    class_tokens,
                    train_cfg,
                    use_temporal_positions=cfg.use_temporal_positions,
                    external_class_embs=external,
                )
            else:
                loss, grads, _ = head.loss_and_grads(
                    batch,
                    params,
                    enc_cfg,
                    class_tokens,
                    cfg.temperature,
                    use_temporal_positions=cfg.use_temporal_positions,
                    external_class_embs=external,
                )
                params = adam.update(params, grads, cfg.learning_rate)
        except NumericError as exc:
            raise NumericError(f"step {step}: {exc}") from exc
        rows.append(head.TrainLogRow(step, loss, timer.lap_ms()))

    out_dir = cfg.paths.require("out_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = cfg.paths.checkpoint or str(out_dir / "model.ckpt")
    model.save_checkpoint(ckpt, params)
    model.save_sidecar(ckpt, classes, enc_cfg, extra={"seed": cfg.seed})
    log_path = out_dir / "train_log.csv"
    with log_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "wall_ms"])
        for row in rows:
            writer.writerow([row.step, f"{row.loss:.12f}", f"{row.wall_ms:.3f}"])
    return Path(ckpt), log_path


@dataclass
class ScoredClip:
    clip_id: str
    mean_scores: np.ndarray
    predicted: list[int]
    per_classifier: list[np.ndarray]


def load_model(cfg: PipelineConfig):
    """Checkpoint + sidecar -> (params, encoder config, classes, class embeddings)."""
    ckpt = cfg.paths.require("checkpoint")
    params = model.load_checkpoint(ckpt)
    meta = model.load_sidecar(ckpt)
    enc_cfg = model.EncoderConfig(**meta["encoder"])
    classes = list(meta["classes"])
    if cfg.paths.text_embeddings:
        text_embs = text_encoder.load_class_embeddings(
            cfg.paths.text_embeddings, classes, enc_cfg.embed_dim
        )
    else:
        word_vocab = text_encoder.WordVocabulary.from_classes(classes)
        class_tokens = [
            text_encoder.tokenize(c, word_vocab, enc_cfg.max_text_len) for c in classes
        ]
        text_embs = text_encoder.encode_classes(class_tokens, enc_cfg, params)
    return params, enc_cfg, classes, text_embs


def score_clips(cfg: PipelineConfig, data: LoadedDataset | None = None) -> tuple[list[ScoredClip], list[str]]:
    """Run the ensemble over every manifest clip; returns scores + class names."""
    if data is None:
        data = load_dataset(cfg, require_labels=False)
    params, enc_cfg, classes, text_embs = load_model(cfg)
    plan_cache: dict[int, list[sampling.SamplingPlan]] = {}
    scored = []
    for record in data.records:
        n = record.frame_count
        if n not in plan_cache:
            plan_cache[n] = _plans_for_length(cfg, n)
        per_classifier = run_classifiers(
            data.clips[record.clip_id],
            data.flows.get(record.clip_id),
            plan_cache[n],
            params,
            enc_cfg,
            text_embs,
            cfg.temperature,
            modality=cfg.modality,
            max_displacement=cfg.max_displacement,
            use_temporal_positions=cfg.use_temporal_positions,
        )
        mean, predicted = aggregate(per_classifier, cfg.threshold)
        scored.append(ScoredClip(record.clip_id, mean, predicted, per_classifier))
    return scored, classes


def write_predictions(
    scored: list[ScoredClip], classes: list[str], path: str | Path, *, top_k: int = 0
) -> Path:
    """JSON-lines: {clip_id, mean_scores, predicted, per_classifier}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in scored:
            row = {
                "clip_id": s.clip_id,
                "mean_scores": [float(x) for x in s.mean_scores],
                "predicted": [classes[i] for i in s.predicted],
                "per_classifier": [[float(x) for x in v] for v in s.per_classifier],
            }
            if top_k:
                order = np.lexsort((np.arange(len(classes)), -s.mean_scores))
                row["top_k"] = [
                    {"class": classes[int(i)], "score": float(s.mean_scores[int(i)])}
                    for i in order[:top_k]
                ]
            fh.write(json.dumps(row) + "\n")
    return path


def run_eval(cfg: PipelineConfig) -> tuple[metrics.MetricsReport, list[ScoredClip], list[str]]:
    """Score the manifest and compute the mAP report against its labels."""
    data = load_dataset(cfg, require_labels=True)
    scored, classes = score_clips(cfg, data)
    vocab = LabelVocabulary(tuple(classes))
    for record in data.records:
        for name in record.labels:
            if name not in vocab.index:
                raise DataError(
                    f"clip {record.clip_id!r} labeled {name!r}, unknown to the model"
                )
    label_matrix = np.stack([vocab.binary_vector(r.labels) for r in data.records])
    score_matrix = np.stack([s.mean_scores for s in scored])
    report = metrics.evaluate(score_matrix, label_matrix, classes)
    return report, scored, classes
