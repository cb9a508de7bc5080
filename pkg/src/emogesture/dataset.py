"""Corpus pipeline: clip slicing, take-level splits, manifests and the
synthetic emotion-coded corpus used for desk-scale verification.

Layout on disk::

    <root>/manifest.json
    <root>/poses/<take>.f32 + <take>.json
    <root>/audio/<take>.wav
    <root>/transcripts/<take>.json
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import audio as au
from .errors import LoadError, ValidationError
from .motion import PoseSequence, axis_angle_to_matrix, load_pose, matrix_to_rot6d, save_pose

MANIFEST_FORMAT = "emogesture-corpus/1"
CLIP_LEN = 60
STRIDE = 30
FPS = 15
SPLITS = ("train", "val", "test")
DEFAULT_PROPORTIONS = (0.7, 0.1, 0.2)


def slice_clips(take_length: int, clip_len: int = CLIP_LEN, stride: int = STRIDE):
    """Windows ``[k*stride, k*stride + clip_len)`` that fit inside the take."""
    if take_length < clip_len:
        return []
    return [(s, s + clip_len) for s in range(0, take_length - clip_len + 1, stride)]


@dataclass
class ClipRecord:
    clip_id: str
    take_id: str
    pose_path: str
    audio_path: str
    transcript_path: str
    emotion: str
    split: str
    start_frame: int


@dataclass
class CorpusManifest:
    clips: list
    fps: int = FPS
    n_frames: int = CLIP_LEN
    stride: int = STRIDE
    n_joints: int = 16
    sample_rate: int = au.SAMPLE_RATE
    emotions: list = field(default_factory=list)
    split_proportions: tuple = DEFAULT_PROPORTIONS
    vocab: list = field(default_factory=list)
    takes: list = field(default_factory=list)
    seed: int = 0
    root: Path | None = None

    def __post_init__(self):
        if abs(sum(self.split_proportions) - 1.0) > 1e-9:
            raise ValidationError(f"split proportions {self.split_proportions} do not sum to 1")

    def split(self, name):
        return [c for c in self.clips if c.split == name]

    def label_index(self, emotion: str) -> int:
        try:
            return self.emotions.index(emotion)
        except ValueError:
            raise ValidationError(f"emotion {emotion!r} not in label set {self.emotions}") from None

    def vocabulary(self) -> au.Vocabulary:
        return au.Vocabulary(self.vocab[1:])

    def path(self, rel) -> Path:
        return (self.root or Path(".")) / rel

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("root")
        d["format"] = MANIFEST_FORMAT
        d["split_proportions"] = list(self.split_proportions)
        return d

    def save(self, root) -> Path:
        root = Path(root)
        path = root / "manifest.json"
        path.write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise LoadError(f"manifest {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise LoadError(f"manifest {path} is not valid JSON: {exc}") from None
        if data.pop("format", None) != MANIFEST_FORMAT:
            raise LoadError(f"{path}: not a {MANIFEST_FORMAT} manifest")
        data["clips"] = [ClipRecord(**c) for c in data["clips"]]
        data["split_proportions"] = tuple(data["split_proportions"])
        return cls(**data, root=path.parent)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# -- synthetic corpus --------------------------------------------------------

EMOTIONS = ("neutral", "happy", "angry", "sad")


@dataclass(frozen=True)
class EmotionStyle:
    beat_interval: float  # seconds between speech pulses / gesture extrema
    amplitude: float  # arm swing, radians
    pitch: float  # voice fundamental, Hz
    sharpness: float  # <1 squares off the swing profile
    bounce: float  # extra half-period torso/head bounce, radians
    posture: tuple  # (spine lean, head pitch, shoulder drop) radians
    rasp: float  # noise share in the voiced bursts


STYLES = {
    "neutral": EmotionStyle(0.60, 0.35, 170.0, 1.0, 0.00, (0.00, 0.00, 0.00), 0.05),
    "happy": EmotionStyle(0.45, 0.70, 260.0, 1.0, 0.12, (-0.08, -0.20, -0.15), 0.05),
    "angry": EmotionStyle(0.38, 0.55, 215.0, 0.35, 0.00, (0.18, 0.10, 0.20), 0.45),
    "sad": EmotionStyle(0.80, 0.18, 130.0, 1.0, 0.00, (0.35, 0.35, 0.30), 0.02),
}

PAPER_SKEW_NEUTRAL = 0.51
VOCAB_SIZE = 48


@dataclass
class CorpusConfig:
    n_takes: int = 100
    take_frames: int = 150
    emotions: tuple = EMOTIONS
    skew: str = "balanced"  # balanced | paper
    jitter: float = 0.02  # pose annotation noise, radians
    speak_prob: float = 0.85
    fps: int = FPS
    n_joints: int = 16
    proportions: tuple = DEFAULT_PROPORTIONS


def emotion_counts(n_takes, emotions, skew="balanced"):
    """Takes per emotion, largest-remainder rounding."""
    k = len(emotions)
    if skew == "paper":
        if emotions[0] != "neutral":
            raise ValidationError("paper skew expects 'neutral' as the first emotion")
        shares = np.array([PAPER_SKEW_NEUTRAL] + [(1 - PAPER_SKEW_NEUTRAL) / (k - 1)] * (k - 1))
    elif skew == "balanced":
        shares = np.full(k, 1.0 / k)
    else:
        raise ValidationError(f"unknown emotion skew {skew!r}")
    return _largest_remainder(shares * n_takes, n_takes)


def _largest_remainder(raw, total):
    base = np.floor(raw).astype(int)
    rest = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rest]] += 1
    return base.tolist()


def assign_splits(labels, proportions, rng):
    """Split takes (not clips) so overlapping windows never cross splits.

    Split sizes follow ``proportions`` exactly (largest remainder) and each
    emotion is spread over the splits as evenly as the totals allow.
    """
    n = len(labels)
    totals = _largest_remainder(np.asarray(proportions, dtype=np.float64) * n, n)
    keys = sorted(set(labels))
    sizes = np.array([labels.count(k) for k in keys])
    raw = np.outer(sizes, proportions)
    table = np.floor(raw).astype(int)
    row_left = sizes - table.sum(1)
    col_left = np.array(totals) - table.sum(0)
    frac = raw - table
    for flat in np.argsort(-frac, axis=None, kind="stable"):
        r, c = divmod(int(flat), len(proportions))
        if row_left[r] > 0 and col_left[c] > 0:
            table[r, c] += 1
            row_left[r] -= 1
            col_left[c] -= 1
    for r in range(len(keys)):  # leftovers the greedy pass could not place
        while row_left[r] > 0:
            c = int(np.argmax(col_left)) if col_left.max() > 0 else 0
            table[r, c] += 1
            row_left[r] -= 1
            col_left[c] -= 1
    out = [None] * n
    for r, k in enumerate(keys):
        members = [i for i, lab in enumerate(labels) if lab == k]
        rng.shuffle(members)
        tags = [SPLITS[c] for c in range(len(proportions)) for _ in range(table[r, c])]
        for i, tag in zip(members, tags):
            out[i] = tag
    return out


def _beat_grid(rng, style, duration, tempo_scale):
    interval = style.beat_interval * tempo_scale
    t = -rng.uniform(0.5, 1.5) * interval
    beats = []
    while t < duration + 2 * interval:
        beats.append(t)
        t += interval * (1.0 + rng.normal(0.0, 0.04))
    return np.asarray(beats), interval


def _swing(phase, sharpness):
    c = np.cos(np.pi * phase)
    return np.sign(c) * np.abs(c) ** sharpness


def synth_pose_track(rng, style, beats, n_frames, fps, jitter, amp_scale):
    """Axis-angle per joint -> 6D; swing extrema sit exactly on the beat grid."""
    t = np.arange(n_frames) / fps
    phase = np.interp(t, beats, np.arange(len(beats), dtype=np.float64))
    g = _swing(phase, style.sharpness)
    bounce = style.bounce * np.abs(np.sin(np.pi * phase))
    amp = style.amplitude * amp_scale
    lean, head, drop = style.posture
    aa = np.zeros((n_frames, 16, 3))
    aa[:, 0, 0] = lean + bounce * 0.5
    aa[:, 1, 0] = 0.5 * lean + 0.08 * amp * g
    aa[:, 2, 0] = 0.3 * head
    aa[:, 3, 0] = head + 0.25 * amp * g + bounce
    aa[:, 4, 2] = drop * 0.5
    aa[:, 8, 2] = -drop * 0.5
    # shoulders: abduction (z) + flexion (x); arms move in anti-phase
    aa[:, 5, 2] = -1.0 + drop + 0.6 * amp * g
    aa[:, 5, 0] = 0.3 + amp * g
    aa[:, 9, 2] = 1.0 - drop - 0.6 * amp * g
    aa[:, 9, 0] = 0.3 - amp * g
    aa[:, 6, 1] = 0.6 + 0.7 * amp * g
    aa[:, 10, 1] = -0.6 + 0.7 * amp * g
    aa[:, 7, 0] = 0.3 * amp * g
    aa[:, 11, 0] = -0.3 * amp * g
    aa[:, 12:, 1] = 0.2
    aa += rng.normal(0.0, jitter, size=aa.shape)
    return matrix_to_rot6d(axis_angle_to_matrix(aa)).reshape(n_frames, -1)


def synth_audio_and_words(rng, style, beats, interval, duration, vocab_words, speak_prob, sr):
    n = int(round(duration * sr))
    x = rng.normal(0.0, 0.003, size=n)
    words = []
    f0 = style.pitch * (1.0 + rng.normal(0.0, 0.03))
    for b in beats:
        if b < 0 or b >= duration or rng.random() > speak_prob:
            continue
        end = min(b + 0.55 * interval, duration)
        i0, i1 = int(round(b * sr)), int(round(end * sr))
        if i1 - i0 < 16:
            continue
        tt = np.arange(i1 - i0) / sr
        env = np.minimum(tt / 0.005, 1.0) * np.exp(-tt / 0.12)
        voiced = sum(np.sin(2 * np.pi * f0 * h * tt + rng.uniform(0, 2 * np.pi)) / h for h in (1, 2, 3))
        burst = (1 - style.rasp) * voiced + style.rasp * rng.normal(0.0, 1.0, size=tt.size)
        x[i0:i1] += 0.3 * env * burst
        words.append((str(rng.choice(vocab_words)), round(float(b), 6), round(float(end), 6)))
    return np.clip(x, -1.0, 1.0).astype(np.float32), words


def generate_synthetic_corpus(root, config: CorpusConfig | None = None, seed: int = 0) -> CorpusManifest:
    config = config or CorpusConfig()
    root = Path(root)
    for sub in ("poses", "audio", "transcripts"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for e in config.emotions:
        if e not in STYLES:
            raise ValidationError(f"no synthetic style for emotion {e!r}")
    master = np.random.SeedSequence(seed)
    plan_rng = np.random.default_rng(master.spawn(1)[0])
    counts = emotion_counts(config.n_takes, config.emotions, config.skew)
    labels = [e for e, c in zip(config.emotions, counts) for _ in range(c)]
    plan_rng.shuffle(labels)
    splits = assign_splits(labels, config.proportions, plan_rng)
    vocab_words = [f"w{k:02d}" for k in range(VOCAB_SIZE)]
    take_seeds = master.spawn(config.n_takes + 1)[1:]
    duration = config.take_frames / config.fps
    takes, clips = [], []
    for k, (emotion, split) in enumerate(zip(labels, splits)):
        take_id = f"take{k:04d}"
        rng = np.random.default_rng(take_seeds[k])
        style = STYLES[emotion]
        beats, interval = _beat_grid(rng, style, duration, 1.0 + rng.normal(0.0, 0.03))
        frames = synth_pose_track(rng, style, beats, config.take_frames, config.fps, config.jitter,
                                  1.0 + rng.normal(0.0, 0.08))
        samples, words = synth_audio_and_words(rng, style, beats, interval, duration, vocab_words,
                                               config.speak_prob, au.SAMPLE_RATE)
        save_pose(root / "poses" / take_id, PoseSequence(frames.astype(np.float32), config.fps))
        au.save_wav(root / "audio" / f"{take_id}.wav", au.AudioClip(samples))
        au.save_transcript(root / "transcripts" / f"{take_id}.json", words)
        takes.append({"take_id": take_id, "emotion": emotion, "split": split,
                      "n_frames": config.take_frames})
        for start, _ in slice_clips(config.take_frames):
            clips.append(ClipRecord(
                clip_id=f"{take_id}_{start:05d}", take_id=take_id,
                pose_path=f"poses/{take_id}.f32", audio_path=f"audio/{take_id}.wav",
                transcript_path=f"transcripts/{take_id}.json",
                emotion=emotion, split=split, start_frame=start,
            ))
    manifest = CorpusManifest(
        clips=clips, fps=config.fps, n_frames=CLIP_LEN, stride=STRIDE, n_joints=config.n_joints,
        emotions=list(config.emotions), split_proportions=tuple(config.proportions),
        vocab=[au.PAD_TOKEN] + vocab_words, takes=takes, seed=seed, root=root,
    )
    manifest.save(root)
    return manifest


# -- loading -----------------------------------------------------------------


def load_clip(record: ClipRecord, manifest: CorpusManifest):
    """Return ``(PoseSequence, AudioClip, Transcript, one-hot label)`` for one clip."""
    n, fps = manifest.n_frames, manifest.fps
    pose = load_pose(manifest.path(record.pose_path), expected_joints=manifest.n_joints)
    if pose.fps != fps:
        raise LoadError(f"{record.pose_path}: fps {pose.fps} but manifest says {fps}")
    s = record.start_frame
    if s + n > pose.n_frames:
        raise LoadError(f"{record.clip_id}: window {s}:{s + n} exceeds take length {pose.n_frames}")
    pose = PoseSequence(pose.frames[s:s + n], fps)
    sr = manifest.sample_rate
    a0 = int(round(s / fps * sr))
    clip_audio = au.load_wav(manifest.path(record.audio_path), a0, int(round(n / fps * sr)))
    if clip_audio.sample_rate != sr:
        raise LoadError(f"{record.audio_path}: {clip_audio.sample_rate} Hz, manifest says {sr}")
    words = au.window_words(au.load_transcript(manifest.path(record.transcript_path)), s / fps, (s + n) / fps)
    transcript = au.align_transcript(words, n, fps, manifest.vocabulary())
    label = np.zeros(len(manifest.emotions), dtype=np.float32)
    label[manifest.label_index(record.emotion)] = 1.0
    return pose, clip_audio, transcript, label


@dataclass
class ClipArrays:
    """Stacked, model-ready arrays for a set of clips."""

    clip_ids: list
    poses: np.ndarray  # K x N x J*6 float32
    mels: np.ndarray  # K x 128 x T float32
    tokens: np.ndarray  # K x N int64
    labels: np.ndarray  # K int64
    audio_beats: list  # per clip, seconds

    def __len__(self):
        return len(self.clip_ids)

    def subset(self, idx):
        idx = np.asarray(idx)
        return ClipArrays([self.clip_ids[i] for i in idx], self.poses[idx], self.mels[idx],
                          self.tokens[idx], self.labels[idx], [self.audio_beats[i] for i in idx])


def load_arrays(manifest: CorpusManifest, split: str | None = None) -> ClipArrays:
    records = manifest.clips if split is None else manifest.split(split)
    ids, poses, mels, tokens, labels, beats = [], [], [], [], [], []
    for rec in records:
        pose, clip_audio, transcript, label = load_clip(rec, manifest)
        mel = au.compute_mel(clip_audio)
        ids.append(rec.clip_id)
        poses.append(pose.frames)
        mels.append(mel.astype(np.float32))
        tokens.append(transcript.tokens)
        labels.append(int(np.argmax(label)))
        beats.append(au.detect_audio_beats(mel))
    return ClipArrays(ids, np.stack(poses).astype(np.float32), np.stack(mels), np.stack(tokens),
                      np.asarray(labels, dtype=np.int64), beats)
