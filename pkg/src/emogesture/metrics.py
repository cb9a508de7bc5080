"""Evaluation metrics: L2, MPJRE, FGD, beat alignment, emotion accuracy and
diversity, plus the two learned evaluators (gesture autoencoder for FGD and
gesture emotion classifier for EA)."""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import kernels
from .errors import ShapeError, StateError

METRICS_VERSION = "emogesture-metrics/1"
BA_SIGMA = 0.1
FGD_EPS = 1e-6


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def l2_distance(real, fake) -> float:
    """Mean over frames of ``||real_t - fake_t|| / sqrt(J*6)``."""
    real, fake = _pair(real, fake)
    return float(np.linalg.norm(real - fake, axis=-1).mean() / np.sqrt(real.shape[-1]))


def mpjre(real, fake) -> float:
    """Mean per-joint geodesic rotation error in degrees."""
    real, fake = _pair(real, fake)
    if real.shape[-1] % 6:
        raise ShapeError("pose width must be a multiple of 6")
    ang = kernels.rot6d_geodesic(real.reshape(-1, 6), fake.reshape(-1, 6))
    return float(np.degrees(ang.mean()))


def frechet_distance(feats_a, feats_b, eps=FGD_EPS) -> float:
    """``||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))`` of Gaussian fits."""
    a = np.asarray(feats_a, dtype=np.float64)
    b = np.asarray(feats_b, dtype=np.float64)
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)
    if len(a) < 2 or len(b) < 2:
        raise ShapeError("need at least 2 samples per set")
    if a.shape[1] != b.shape[1]:
        raise ShapeError("feature widths differ")
    reg = eps * np.eye(a.shape[1])
    cov_a = np.atleast_2d(np.cov(a, rowvar=False)) + reg
    cov_b = np.atleast_2d(np.cov(b, rowvar=False)) + reg
    covmean = scipy.linalg.sqrtm(cov_a @ cov_b)
    covmean = np.real(covmean)
    diff = a.mean(0) - b.mean(0)
    return float(max(diff @ diff + np.trace(cov_a + cov_b - 2.0 * covmean), 0.0))


def gesture_speed(frames, fps):
    """Joint-averaged angular speed (rad/s) at frames ``1..N-2``."""
    s = kernels.angular_speed(np.asarray(frames, dtype=np.float64), float(fps))
    return 0.5 * (s[:-1] + s[1:])


def gesture_beats(frames, fps) -> np.ndarray:
    """Times (s) of local speed minima that sit below the clip's mean speed."""
    v = gesture_speed(frames, fps)
    if v.size < 3:
        return np.zeros(0)
    inner = v[1:-1]
    idx = np.flatnonzero((inner < v[:-2]) & (inner <= v[2:]) & (inner < v.mean())) + 1
    return (idx + 1) / fps


def beat_align_score(audio_beats, gesture_beat_times, sigma=BA_SIGMA) -> float:
    """Mean over audio beats of ``exp(-d^2 / (2 sigma^2))``, ``d`` = distance
    to the nearest gesture beat. 1.0 when there are no audio beats."""
    return float(kernels.beat_align_score(np.asarray(audio_beats, dtype=np.float64),
                                          np.asarray(gesture_beat_times, dtype=np.float64), sigma))


def beat_align(audio_beats, frames, fps, sigma=BA_SIGMA) -> float:
    return beat_align_score(audio_beats, gesture_beats(frames, fps), sigma)


def beat_align_set(audio_beats_list, pose_set, fps, sigma=BA_SIGMA):
    """Mean BA over clips and the number of clips that had no audio beat."""
    scores, empty = [], 0
    for beats, frames in zip(audio_beats_list, pose_set):
        if len(beats) == 0:
            empty += 1
        scores.append(beat_align(beats, frames, fps, sigma))
    return float(np.mean(scores)), empty


def pairwise_distances(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3 or samples.shape[0] < 2:
        raise ShapeError(f"diversity needs K >= 2 sequences of equal shape, got {samples.shape}")
    return kernels.pairwise_l2(samples)


def diversity(samples, n_boot=1000, seed=0):
    """Mean pairwise L2 over the K samples and a bootstrap 95% half-width."""
    d = pairwise_distances(samples)
    return math.fsum(d) / d.size, _bootstrap_ci(d, n_boot, seed)


def diversity_over_clips(sample_sets, n_boot=1000, seed=0):
    """Average diversity over clips; the CI resamples clips."""
    per_clip = np.array([pairwise_distances(s).mean() for s in sample_sets])
    return float(per_clip.mean()), _bootstrap_ci(per_clip, n_boot, seed)


def _bootstrap_ci(values, n_boot, seed):
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    means = values[rng.integers(0, values.size, size=(n_boot, values.size))].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return float((hi - lo) / 2.0)


# -- learned evaluators ------------------------------------------------------


class _TemporalConv(nn.Module):
    def __init__(self, c_in, width):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv1d(c_in, width, 5, padding=2), nn.ReLU(),
            nn.Conv1d(width, width, 5, padding=2, stride=2), nn.ReLU(),
            nn.Conv1d(width, width, 3, padding=1), nn.ReLU(),
        )

    def forward(self, x):  # B x T x C -> B x width
        return self.net(x.transpose(1, 2)).mean(dim=2)


class GestureEmotionClassifier(nn.Module):
    """Temporal convs on motion offsets, mean pooled, linear to emotion logits."""

    def __init__(self, pose_dim, n_emotions, width=64):
        super().__init__()
        self.body = _TemporalConv(pose_dim, width)
        self.head = nn.Linear(width, n_emotions)
        self.register_buffer("trained", torch.tensor(False))

    def forward(self, poses):
        return self.head(self.body(poses[:, 1:] - poses[:, :-1]))


class GestureAutoencoder(nn.Module):
    """Clip autoencoder; the 32-d latent is the FGD embedding."""

    def __init__(self, pose_dim, n_frames, latent=32, width=64):
        super().__init__()
        self.n_frames, self.pose_dim = n_frames, pose_dim
        self.body = _TemporalConv(pose_dim, width)
        self.to_latent = nn.Linear(width, latent)
        self.decoder = nn.Sequential(nn.Linear(latent, 256), nn.ReLU(), nn.Linear(256, n_frames * pose_dim))
        self.register_buffer("trained", torch.tensor(False))
        self.register_buffer("mean_pose", torch.zeros(pose_dim))

    def encode(self, poses):
        return self.to_latent(self.body(poses - self.mean_pose))

    def forward(self, poses):
        z = self.encode(poses)
        return self.decoder(z).view(-1, self.n_frames, self.pose_dim) + self.mean_pose


def _batches(n, batch_size, rng):
    idx = rng.permutation(n)
    for s in range(0, n, batch_size):
        yield idx[s:s + batch_size]


def train_emotion_classifier(train_poses, train_labels, val_poses, val_labels, n_emotions,
                             epochs=40, lr=2e-3, batch_size=32, seed=0):
    """Fit on the training split; keep the epoch with the best validation accuracy."""
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    x = torch.as_tensor(np.asarray(train_poses), dtype=torch.float32)
    y = torch.as_tensor(np.asarray(train_labels), dtype=torch.long)
    model = GestureEmotionClassifier(x.shape[-1], n_emotions)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    best, best_state = -1.0, None
    for _ in range(epochs):
        model.train()
        for idx in _batches(len(x), batch_size, rng):
            loss = F.cross_entropy(model(x[idx]), y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        model.trained.fill_(True)
        acc = emotion_accuracy(val_poses, val_labels, model)
        if acc > best:
            best, best_state = acc, copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    return model


def train_gesture_autoencoder(train_poses, epochs=60, lr=2e-3, batch_size=32, seed=0, latent=32):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    x = torch.as_tensor(np.asarray(train_poses), dtype=torch.float32)
    model = GestureAutoencoder(x.shape[-1], x.shape[1], latent)
    model.mean_pose.copy_(x.mean(dim=(0, 1)))
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    for _ in range(epochs):
        model.train()
        for idx in _batches(len(x), batch_size, rng):
            loss = F.mse_loss(model(x[idx]), x[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    model.trained.fill_(True)
    model.eval()
    return model


@torch.no_grad()
def predict_emotions(poses, classifier) -> np.ndarray:
    if classifier is None or not bool(classifier.trained):
        raise StateError("emotion classifier has not been trained")
    classifier.eval()
    x = torch.as_tensor(np.asarray(poses), dtype=torch.float32)
    return classifier(x).argmax(-1).numpy()


def emotion_accuracy(poses, labels, classifier) -> float:
    """Top-1 agreement with the conditioning labels, in percent."""
    pred = predict_emotions(poses, classifier)
    return float(100.0 * np.mean(pred == np.asarray(labels)))


@torch.no_grad()
def embed_gestures(poses, autoencoder) -> np.ndarray:
    if autoencoder is None or not bool(autoencoder.trained):
        raise StateError("FGD autoencoder has not been trained")
    autoencoder.eval()
    return autoencoder.encode(torch.as_tensor(np.asarray(poses), dtype=torch.float32)).double().numpy()


def fgd(real_set, fake_set, autoencoder) -> float:
    return frechet_distance(embed_gestures(real_set, autoencoder), embed_gestures(fake_set, autoencoder))


@dataclass
class MetricsReport:
    l2: float
    mpjre_deg: float
    fgd: float
    ba: float
    ea_percent: float
    diversity_mean: float
    diversity_ci95: float
    n_clips: int = 0
    n_samples: int = 1
    ba_empty_clips: int = 0
    definitions: dict = field(default_factory=lambda: {
        "version": METRICS_VERSION,
        "l2": "mean_t ||p_t - q_t|| / sqrt(J*6) on 6D coefficients",
        "ba": f"gaussian kernel sigma={BA_SIGMA}s; gesture beats = speed minima below clip mean",
        "audio_beats": "energy-flux onset picker on log-mel",
        "fgd_embedder": "temporal-conv autoencoder, 32-d latent",
        "diversity_ci95": "bootstrap half-width, 1000 resamples",
    })

    def to_json(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [
            ("L2", f"{self.l2:.4f}"), ("MPJRE [deg]", f"{self.mpjre_deg:.3f}"),
            ("FGD", f"{self.fgd:.4f}"), ("BA", f"{self.ba:.4f}"),
            ("EA [%]", f"{self.ea_percent:.2f}"),
            ("Diversity", f"{self.diversity_mean:.4f} +- {self.diversity_ci95:.4f}"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def evaluate_set(real, fake_samples, labels, audio_beats, fps, classifier, autoencoder) -> MetricsReport:
    """Metrics for generated clips ``fake_samples`` of shape ``(S, K, N, F)``.

    ``S`` independent generations per clip (``S = 1`` for deterministic
    generation). Reconstruction-style metrics use the first generation.
    """
    real = np.asarray(real, dtype=np.float64)
    fake_samples = np.asarray(fake_samples, dtype=np.float64)
    if fake_samples.ndim == 3:
        fake_samples = fake_samples[None]
    first = fake_samples[0]
    flat = fake_samples.reshape(-1, *first.shape[1:])
    ba, empty = beat_align_set(list(audio_beats) * len(fake_samples), flat, fps)
    if len(fake_samples) >= 2:
        div, ci = diversity_over_clips(np.swapaxes(fake_samples, 0, 1))
    else:
        div, ci = 0.0, 0.0
    return MetricsReport(
        l2=l2_distance(real, first),
        mpjre_deg=mpjre(real, first),
        fgd=fgd(real, flat, autoencoder),
        ba=ba,
        ea_percent=emotion_accuracy(flat, np.tile(labels, len(fake_samples)), classifier),
        diversity_mean=div,
        diversity_ci95=ci,
        n_clips=len(real),
        n_samples=len(fake_samples),
        ba_empty_clips=empty,
    )


def save_evaluators(path, classifier, autoencoder):
    """Cache the two trained evaluators in one checkpoint file."""
    from .checkpoint import save_checkpoint

    meta = {
        "kind": "evaluators",
        "pose_dim": autoencoder.pose_dim,
        "n_frames": autoencoder.n_frames,
        "n_emotions": classifier.head.out_features,
        "latent": autoencoder.to_latent.out_features,
    }
    return save_checkpoint(path, {"classifier": classifier, "autoencoder": autoencoder}, meta)


def load_evaluators(path):
    from .checkpoint import load_checkpoint

    meta, groups = load_checkpoint(path, kind="evaluators")
    classifier = GestureEmotionClassifier(meta["pose_dim"], meta["n_emotions"])
    classifier.load_state_dict(groups["classifier"])
    autoencoder = GestureAutoencoder(meta["pose_dim"], meta["n_frames"], meta["latent"])
    autoencoder.load_state_dict(groups["autoencoder"])
    return classifier.eval(), autoencoder.eval()
