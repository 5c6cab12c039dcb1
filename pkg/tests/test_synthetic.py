import hashlib
from pathlib import Path

import numpy as np

from flowrec.corpus import load_clip, load_manifest
from flowrec.flow import compute_flow
from flowrec.synthetic import generate_moving_shapes


def dataset_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def load_all(manifest):
    records = load_manifest(manifest, require_labels=True)
    root = Path(manifest).parent
    return records, {r.clip_id: load_clip(r, root) for r in records}


class TestGeneration:
    def test_labels_and_counts(self, tmp_path):
        manifest = generate_moving_shapes(8, 16, seed=0, out_dir=tmp_path / "d")
        records, clips = load_all(manifest)
        assert len(records) == 8
        kinds = [r.labels for r in records]
        assert ("move-right",) in kinds and ("move-left",) in kinds
        assert ("blinking", "keeping-still") in kinds  # multi-label clip
        for clip in clips.values():
            assert clip.frames.shape == (16, 32, 32, 3)

    def test_move_left_ground_truth_flow(self, tmp_path):
        manifest = generate_moving_shapes(8, 16, seed=1, out_dir=tmp_path / "d")
        records, clips = load_all(manifest)
        left = next(r for r in records if r.labels == ("move-left",))
        clip = clips[left.clip_id]
        field = compute_flow(clip.frames[0], clip.frames[1]).vectors
        moving = np.abs(field[..., 0]) > 0  # blocks that saw the square move
        assert moving.any()
        assert np.all(field[moving, 0] == -1.0)
        assert np.all(field[..., 1] == 0.0)

    def test_keeping_still_zero_flow(self, tmp_path):
        manifest = generate_moving_shapes(8, 16, seed=2, out_dir=tmp_path / "d")
        records, clips = load_all(manifest)
        still = next(r for r in records if r.labels == ("keeping-still",))
        clip = clips[still.clip_id]
        assert np.array_equal(clip.frames[0], clip.frames[5])
        field = compute_flow(clip.frames[0], clip.frames[1]).vectors
        assert np.all(field == 0.0)

    def test_same_seed_byte_identical(self, tmp_path):
        generate_moving_shapes(8, 16, seed=3, out_dir=tmp_path / "a")
        generate_moving_shapes(8, 16, seed=3, out_dir=tmp_path / "b")
        assert dataset_digest(tmp_path / "a") == dataset_digest(tmp_path / "b")

    def test_different_seed_differs(self, tmp_path):
        generate_moving_shapes(8, 16, seed=4, out_dir=tmp_path / "a")
        generate_moving_shapes(8, 16, seed=5, out_dir=tmp_path / "b")
        assert dataset_digest(tmp_path / "a") != dataset_digest(tmp_path / "b")


class TestDirectionPairInvariant:
    def test_left_right_share_frame_multisets(self, tmp_path):
        manifest = generate_moving_shapes(16, 16, seed=6, out_dir=tmp_path / "d")
        records, clips = load_all(manifest)
        rights = [r for r in records if r.labels == ("move-right",)]
        lefts = [r for r in records if r.labels == ("move-left",)]
        assert len(rights) == len(lefts) == 4
        def frame_multiset(frames):
            return sorted(frames[i].tobytes() for i in range(frames.shape[0]))

        for right, left in zip(rights, lefts):
            a = clips[right.clip_id].frames
            b = clips[left.clip_id].frames
            # the left clip is the exact temporal reversal of its paired right clip
            assert np.array_equal(b, a[::-1])
            assert frame_multiset(a) == frame_multiset(b)

    def test_order_blind_summary_cannot_separate(self, tmp_path):
        manifest = generate_moving_shapes(8, 16, seed=7, out_dir=tmp_path / "d")
        records, clips = load_all(manifest)
        right = next(r for r in records if r.labels == ("move-right",))
        left = next(r for r in records if r.labels == ("move-left",))
        mean_r = clips[right.clip_id].frames.mean(axis=0)
        mean_l = clips[left.clip_id].frames.mean(axis=0)
        assert np.allclose(mean_r, mean_l, atol=1e-7)
