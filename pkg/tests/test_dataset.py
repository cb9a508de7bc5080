import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from emogesture import metrics
from emogesture.dataset import (
    CorpusConfig,
    CorpusManifest,
    assign_splits,
    emotion_counts,
    generate_synthetic_corpus,
    load_arrays,
    load_clip,
    slice_clips,
)
from emogesture.errors import LoadError, ValidationError


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_synthetic_corpus(root, CorpusConfig(n_takes=40), seed=3)
    return root, manifest


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.mark.parametrize("length,starts", [(150, [0, 30, 60, 90]), (60, [0]), (59, []), (0, []), (89, [0]), (90, [0, 30])])
def test_slice_clips(length, starts):
    windows = slice_clips(length)
    assert [s for s, _ in windows] == starts
    assert all(e - s == 60 for s, e in windows)


def test_emotion_counts():
    assert emotion_counts(100, ("neutral", "happy", "angry", "sad")) == [25, 25, 25, 25]
    skew = emotion_counts(100, ("neutral",) + tuple(f"e{k}" for k in range(7)), "paper")
    assert skew == [51] + [7] * 7
    with pytest.raises(ValidationError):
        emotion_counts(10, ("happy", "sad"), "paper")


def test_assign_splits_proportions_and_strata():
    labels = [k % 4 for k in range(100)]
    splits = assign_splits(labels, (0.7, 0.1, 0.2), np.random.default_rng(0))
    assert [splits.count(s) for s in ("train", "val", "test")] == [70, 10, 20]
    for k in range(4):
        per = [sum(1 for lab, s in zip(labels, splits) if lab == k and s == name) for name in ("train", "val", "test")]
        assert per[0] in (17, 18) and per[1] in (2, 3) and per[2] == 5


def test_manifest_proportions_validated():
    with pytest.raises(ValidationError):
        CorpusManifest(clips=[], split_proportions=(0.5, 0.2, 0.2))


def test_corpus_is_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_synthetic_corpus(a, CorpusConfig(n_takes=4), seed=11)
    generate_synthetic_corpus(b, CorpusConfig(n_takes=4), seed=11)
    assert tree_digest(a) == tree_digest(b)
    c = tmp_path / "c"
    generate_synthetic_corpus(c, CorpusConfig(n_takes=4), seed=12)
    assert tree_digest(a) != tree_digest(c)


def test_corpus_layout_and_balance(corpus):
    root, manifest = corpus
    for sub in ("poses", "audio", "transcripts"):
        assert (root / sub).is_dir()
    for rec in manifest.clips:
        for rel in (rec.pose_path, rec.audio_path, rec.transcript_path):
            assert (root / rel).exists()
        assert rec.emotion in manifest.emotions
    per_emotion = {e: sum(1 for t in manifest.takes if t["emotion"] == e) for e in manifest.emotions}
    assert set(per_emotion.values()) == {10}
    assert len(manifest.clips) == 40 * 4


def test_splits_disjoint_by_take(corpus):
    _, manifest = corpus
    split_of = {}
    for rec in manifest.clips:
        assert split_of.setdefault(rec.take_id, rec.split) == rec.split


def test_manifest_round_trip(corpus):
    root, manifest = corpus
    loaded = CorpusManifest.load(root)
    assert loaded.digest() == manifest.digest()
    assert loaded.clips == manifest.clips


def test_manifest_load_errors(tmp_path):
    with pytest.raises(LoadError):
        CorpusManifest.load(tmp_path / "missing.json")
    bad = tmp_path / "manifest.json"
    bad.write_text("{not json")
    with pytest.raises(LoadError):
        CorpusManifest.load(bad)
    bad.write_text(json.dumps({"format": "other"}))
    with pytest.raises(LoadError):
        CorpusManifest.load(bad)


def test_load_clip_shapes(corpus):
    _, manifest = corpus
    pose, clip_audio, transcript, label = load_clip(manifest.clips[1], manifest)
    assert pose.frames.shape == (60, 96)
    assert clip_audio.samples.shape == (64000,)
    assert transcript.tokens.shape == (60,)
    assert label.sum() == 1.0


def test_load_clip_joint_mismatch(corpus):
    _, manifest = corpus
    wrong = CorpusManifest.load(manifest.root)
    wrong.n_joints = 15
    with pytest.raises(LoadError, match="15.*16|16.*15"):
        load_clip(wrong.clips[0], wrong)


def test_full_corpus_loads_and_is_phase_locked(corpus):
    _, manifest = corpus
    arrays = load_arrays(manifest)
    assert len(arrays) == len(manifest.clips)
    assert np.isfinite(arrays.poses).all() and np.isfinite(arrays.mels).all()
    ba, _ = metrics.beat_align_set(arrays.audio_beats, arrays.poses, manifest.fps)
    perm = np.random.default_rng(0).permutation(len(arrays))
    shuffled, _ = metrics.beat_align_set([arrays.audio_beats[i] for i in perm], arrays.poses, manifest.fps)
    assert ba > shuffled


def test_mean_pose_is_linearly_separable(corpus):
    _, manifest = corpus
    arrays = load_arrays(manifest)
    feats = arrays.poses.mean(axis=1).astype(np.float64)
    feats = np.hstack([feats, np.ones((len(feats), 1))])
    train = np.array([c.split == "train" for c in manifest.clips])
    targets = np.eye(len(manifest.emotions))[arrays.labels]
    w = np.linalg.lstsq(feats[train], targets[train], rcond=None)[0]
    pred = np.argmax(feats[~train] @ w, axis=1)
    assert np.mean(pred == arrays.labels[~train]) >= 0.9
