"""Audio conditioning (log-mel spectrograms, onset beats) and frame-aligned
transcripts."""
from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LoadError, LookupFailure, ResampleRequiredError, ShapeError, ValidationError

SAMPLE_RATE = 16000
N_FFT = 1024
HOP = 512
N_MELS = 128
F_MIN = 0.0
F_MAX = 8000.0
LOG_FLOOR = 1e-6
PAD_ID = 0
PAD_TOKEN = "<pad>"


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def n_mel_frames(n_samples: int) -> int:
    return (n_samples - N_FFT) // HOP + 1


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, n_fft=N_FFT, sr=SAMPLE_RATE, fmin=F_MIN, fmax=F_MAX):
    """Triangular HTK-mel filters, shape ``(n_mels, n_fft // 2 + 1)``."""
    fft_freqs = np.linspace(0.0, sr / 2.0, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (fft_freqs - lower) / (centre - lower)
    falling = (upper - fft_freqs) / (upper - centre)
    return np.maximum(0.0, np.minimum(rising, falling))


_FILTERS = None


def compute_mel(audio: AudioClip) -> np.ndarray:
    """Log-mel spectrogram ``128 x T`` with ``T = (len - 1024) // 512 + 1``.

    Hann window, no centre padding, power spectrum, ``log(x + 1e-6)``.
    """
    global _FILTERS
    if audio.sample_rate != SAMPLE_RATE:
        raise ResampleRequiredError(
            f"audio is {audio.sample_rate} Hz; resample to {SAMPLE_RATE} Hz first"
        )
    x = np.asarray(audio.samples, dtype=np.float64)
    if x.ndim != 1 or x.size < N_FFT:
        raise ShapeError(f"need a mono signal of at least {N_FFT} samples, got {x.shape}")
    if _FILTERS is None:
        _FILTERS = mel_filterbank()
    frames = np.lib.stride_tricks.sliding_window_view(x, N_FFT)[::HOP]
    window = np.hanning(N_FFT + 1)[:-1]  # periodic Hann
    power = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2
    return np.log(_FILTERS @ power.T + LOG_FLOOR)


def mel_frame_times(n_frames: int) -> np.ndarray:
    """Centre time (s) of each mel frame."""
    return (np.arange(n_frames) * HOP + N_FFT / 2) / SAMPLE_RATE


def detect_audio_beats(mel: np.ndarray, threshold_std: float = 0.5, min_gap_s: float = 0.2):
    """Energy-flux onset picker on a log-mel spectrogram; returns beat times (s).

    Frame energy is the log of summed mel power; flux is its positive first
    difference. Peaks above ``mean + threshold_std * std`` are kept, greedily
    by height, at least ``min_gap_s`` apart.
    """
    energy = np.log(np.exp(mel).sum(axis=0))
    flux = np.maximum(np.diff(energy, prepend=energy[0]), 0.0)
    if flux.max() <= 0:
        return np.zeros(0)
    thresh = flux.mean() + threshold_std * flux.std()
    inner = flux[1:-1]
    peaks = np.flatnonzero((inner >= flux[:-2]) & (inner > flux[2:]) & (inner > thresh)) + 1
    times = mel_frame_times(len(flux))
    kept = []
    for p in peaks[np.argsort(-flux[peaks], kind="stable")]:
        if all(abs(times[p] - times[q]) >= min_gap_s for q in kept):
            kept.append(p)
    return np.sort(times[kept]) if kept else np.zeros(0)


# -- WAV io ------------------------------------------------------------------


def save_wav(path, audio: AudioClip) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(np.asarray(audio.samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(audio.sample_rate)
        fh.writeframes(pcm.tobytes())
    return path


def load_wav(path, start: int = 0, length: int | None = None) -> AudioClip:
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
                raise LoadError(f"{path}: expected mono 16-bit PCM")
            sr = fh.getframerate()
            total = fh.getnframes()
            if length is None:
                length = total - start
            if start + length > total:
                raise LoadError(f"{path}: requested samples {start}:{start + length} of {total}")
            fh.setpos(start)
            raw = fh.readframes(length)
    except FileNotFoundError:
        raise LoadError(f"missing audio file {path}") from None
    except wave.Error as exc:
        raise LoadError(f"{path}: corrupt WAV ({exc})") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32767.0
    return AudioClip(samples, sr)


# -- transcripts -------------------------------------------------------------


class Vocabulary:
    """Word to id map; id 0 is reserved for the pause/pad token."""

    def __init__(self, words=()):
        self.words = [PAD_TOKEN]
        self._ids = {PAD_TOKEN: PAD_ID}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        if word not in self._ids:
            self._ids[word] = len(self.words)
            self.words.append(word)
        return self._ids[word]

    def __getitem__(self, word: str) -> int:
        try:
            return self._ids[word]
        except KeyError:
            raise LookupFailure(f"word {word!r} is not in the vocabulary") from None

    def __contains__(self, word):
        return word in self._ids

    def __len__(self):
        return len(self.words)


@dataclass(frozen=True)
class Transcript:
    tokens: np.ndarray
    n_words: int
    pad_id: int = PAD_ID

    @property
    def uttered(self) -> np.ndarray:
        return self.tokens != self.pad_id


def _frame_bounds(start_s, end_s, fps):
    # half-open [start, end): frame f belongs iff start <= f/fps < end
    eps = 1e-9
    first = int(np.ceil(start_s * fps - eps))
    stop = int(np.ceil(end_s * fps - eps))
    return first, stop


def align_transcript(words, n_frames: int, fps: float, vocab: Vocabulary) -> Transcript:
    """Quantise timed words to one token per gesture frame (pad during pauses)."""
    words = sorted(((w, float(s), float(e)) for w, s, e in words), key=lambda x: x[1])
    limit = n_frames / fps + 1e-9
    tokens = np.full(n_frames, PAD_ID, dtype=np.int64)
    n_spans = 0
    prev_end = -np.inf
    for word, start, end in words:
        if not (0.0 <= start < end <= limit):
            raise ValidationError(
                f"word {word!r} interval [{start}, {end}) outside [0, {n_frames / fps}]"
            )
        if start < prev_end - 1e-9:
            raise ValidationError(f"word {word!r} at {start}s overlaps the previous word")
        prev_end = end
        first, stop = _frame_bounds(start, end, fps)
        stop = min(stop, n_frames)
        if stop > first:
            tokens[first:stop] = vocab[word]
            n_spans += 1
    return Transcript(tokens, n_spans)


def window_words(words, t0: float, t1: float):
    """Words overlapping ``[t0, t1)``, clipped and shifted to start at 0."""
    out = []
    for w, s, e in words:
        s, e = max(s, t0), min(e, t1)
        if e > s:
            out.append((w, s - t0, e - t0))
    return out


def embed_transcript(tokens, table):
    """Row-wise lookup ``table[tokens]`` (numpy array or torch tensor)."""
    ids = np.asarray(tokens.tokens if isinstance(tokens, Transcript) else tokens)
    vocab_size = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        bad = ids[(ids < 0) | (ids >= vocab_size)][0]
        raise LookupFailure(f"token id {int(bad)} outside embedding table of size {vocab_size}")
    return table[ids]


def save_transcript(path, words) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([{"word": w, "start_s": s, "end_s": e} for w, s, e in words]))
    return path


def load_transcript(path):
    try:
        items = json.loads(Path(path).read_text())
        return [(d["word"], float(d["start_s"]), float(d["end_s"])) for d in items]
    except FileNotFoundError:
        raise LoadError(f"missing transcript file {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise LoadError(f"{path}: corrupt transcript ({exc})") from None
