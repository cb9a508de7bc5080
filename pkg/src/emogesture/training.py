"""Two-stage training: adversarial generator training, then the emotion VAE on
the frozen generator's emotion features."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses as L
from .checkpoint import load_checkpoint, save_checkpoint, state_checksum
from .config import ModelConfig, TrainConfig, from_dict, to_dict
from .dataset import ClipArrays
from .errors import FreezeViolationError, NonFiniteLossError, StateError
from .generator import EmotionGesture, MotionDiscriminator
from .motion import motion_offsets
from .vae import EmotionCVAE, cvae_loss

log = logging.getLogger(__name__)

HISTORY_KEYS = L.LOSS_NAMES + ("total", "d_loss")


def seed_everything(seed: int):
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def run_dir_name(seed: int) -> str:
    return time.strftime("%Y%m%d-%H%M%S") + f"-seed{seed}"


def to_tensors(arrays: ClipArrays, idx=None):
    sel = slice(None) if idx is None else idx
    return {
        "poses": torch.from_numpy(arrays.poses[sel]),
        "mels": torch.from_numpy(arrays.mels[sel]),
        "tokens": torch.from_numpy(arrays.tokens[sel]),
        "labels": torch.from_numpy(arrays.labels[sel]),
    }


def one_hot(labels, n):
    return torch.nn.functional.one_hot(labels, n).float()


@dataclass
class TrainResult:
    model: EmotionGesture
    discriminator: MotionDiscriminator
    config: TrainConfig
    history: list = field(default_factory=list)
    run_dir: Path | None = None

    def column(self, name):
        return np.array([h[name] for h in self.history])


def generator_losses(model, disc, batch, cfg: TrainConfig, n_emotions, with_adv=True):
    """All five generator loss parts for one batch (plus the forward outputs)."""
    w = cfg.weights
    label = one_hot(batch["labels"], n_emotions)
    out = model(batch["mels"], batch["poses"][:, : cfg.model.n_init], label=label)
    fake, real = out["poses"], batch["poses"]
    zero = fake.sum() * 0.0
    parts = {"rec": L.reconstruction_loss(real, fake)}
    if with_adv:
        parts["adv"] = L.adversarial_losses(torch.ones(1), disc(fake), cfg.adversarial)[1]
    ebm = cfg.model.emotion_input == "ebm"
    if w.beat > 0 and ebm:
        text = model.text_embedding(batch["tokens"])
        uttered = batch["tokens"] != 0
        parts["beat"] = L.beat_contrastive_loss(
            text, out["beat"], uttered, w.tau, include_positive=cfg.contrastive == "infonce"
        )
    else:
        parts["beat"] = zero
    parts["emo"] = L.emotion_ce_loss(out["logits"], label) if (w.emo > 0 and ebm) else zero
    if w.smooth > 0:
        parts["smooth"] = L.motion_smooth_loss(motion_offsets(real), motion_offsets(fake),
                                               w.smooth_temperature)
    else:
        parts["smooth"] = zero
    return parts, fake


def _check_finite(parts, step):
    for name, value in parts.items():
        v = value.item()
        if not math.isfinite(v):
            raise NonFiniteLossError(name, step, v)


def build_model(cfg: TrainConfig):
    seed_everything(cfg.seed)
    model = EmotionGesture(cfg.model)
    disc = MotionDiscriminator(cfg.model.pose_dim, cfg.model.disc_channels,
                               use_offsets=cfg.model.disc_input == "offsets")
    return model, disc


def train_main(train: ClipArrays, cfg: TrainConfig, run_dir=None, progress=None) -> TrainResult:
    """Alternate one discriminator update and one generator update per batch."""
    cfg.validate()
    model, disc = build_model(cfg)
    opt_g = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=tuple(cfg.betas))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=tuple(cfg.betas))
    data = to_tensors(train)
    n = len(train)
    order_gen = torch.Generator().manual_seed(cfg.seed)
    history = []
    run_dir = Path(run_dir) if run_dir else None
    if run_dir:
        run_dir.mkdir(parents=True, exist_ok=True)
    step = 0
    for epoch in range(cfg.epochs):
        model.train()
        disc.train()
        perm = torch.randperm(n, generator=order_gen)
        for s in range(0, n, cfg.batch_size):
            idx = perm[s:s + cfg.batch_size]
            batch = {k: v[idx] for k, v in data.items()}
            parts, fake = generator_losses(model, disc, batch, cfg, cfg.model.n_emotions,
                                           with_adv=False)
            # discriminator
            for _ in range(cfg.d_steps):
                d_loss, _ = L.adversarial_losses(disc(batch["poses"]), disc(fake.detach()))
                if not math.isfinite(d_loss.item()):
                    raise NonFiniteLossError("d_loss", step, d_loss.item())
                opt_d.zero_grad()
                d_loss.backward()
                opt_d.step()
            # generator, scored by the updated discriminator
            parts["adv"] = L.adversarial_losses(torch.ones(1), disc(fake), cfg.adversarial)[1]
            _check_finite(parts, step)
            total = L.total_objective(parts, cfg.weights)
            opt_g.zero_grad()
            total.backward()
            opt_g.step()
            row = {"step": step, "epoch": epoch, **{k: v.item() for k, v in parts.items()},
                   "total": total.item(), "d_loss": d_loss.item()}
            history.append(row)
            step += 1
        if progress:
            progress(epoch, history[-1])
        if run_dir:
            save_generator(run_dir / "checkpoint.npz", model, disc, cfg, epoch=epoch + 1)
    model.eval()
    result = TrainResult(model, disc, cfg, history, run_dir)
    if run_dir:
        write_history_csv(run_dir / "losses.csv", history)
    return result


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss_name", "value"])
        for row in history:
            for name in HISTORY_KEYS:
                w.writerow([row["step"], name, repr(row[name])])


def read_history_csv(path):
    rows = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(int(rec["step"]), {"step": int(rec["step"])})[rec["loss_name"]] = float(rec["value"])
    return [rows[k] for k in sorted(rows)]


def save_generator(path, model, disc, cfg: TrainConfig, epoch=None):
    meta = {"kind": "generator", "config": to_dict(cfg), "seed": cfg.seed, "epoch": epoch}
    modules = {"generator": model}
    if disc is not None:
        modules["discriminator"] = disc
    return save_checkpoint(path, modules, meta)


def load_generator(path):
    meta, groups = load_checkpoint(path, kind="generator")
    cfg = from_dict(meta["config"])
    model = EmotionGesture(cfg.model)
    model.load_state_dict(groups["generator"])
    model.eval()
    disc = None
    if "discriminator" in groups:
        disc = MotionDiscriminator(cfg.model.pose_dim, cfg.model.disc_channels,
                                   use_offsets=cfg.model.disc_input == "offsets")
        disc.load_state_dict(groups["discriminator"])
        disc.eval()
    return model, disc, cfg


# -- stage two: emotion VAE --------------------------------------------------


@torch.no_grad()
def encode_emotions(model, mels, batch_size=64):
    model.eval()
    feats = []
    for s in range(0, len(mels), batch_size):
        feats.append(model.encode_audio(mels[s:s + batch_size])[1])
    return torch.cat(feats)


def train_vae_stage(model, train: ClipArrays, cfg: TrainConfig, run_dir=None):
    """Fit the emotion VAE on encoded emotion features with the generator frozen.

    Returns ``(cvae, per-epoch mean losses)``. Raises
    :class:`FreezeViolationError` if any generator parameter or buffer changed.
    """
    if model is None:
        raise StateError("train the main model before the emotion VAE stage")
    if cfg.model.emotion_input != "ebm":
        raise StateError("the emotion VAE needs a model with emotion features (emotion_input='ebm')")
    before = state_checksum(model)
    model.eval()
    requires = [p.requires_grad for p in model.parameters()]
    for p in model.parameters():
        p.requires_grad_(False)
    try:
        feats = encode_emotions(model, torch.from_numpy(train.mels))
        codes = one_hot(torch.from_numpy(train.labels), cfg.model.n_emotions)
        vc = cfg.vae
        torch.manual_seed(cfg.seed + 1)
        cvae = EmotionCVAE(feats.shape[1], cfg.model.n_emotions, vc.latent, vc.hidden)
        cvae.fit_normalization(feats)
        opt = torch.optim.Adam(cvae.parameters(), lr=vc.lr)
        order_gen = torch.Generator().manual_seed(cfg.seed + 1)
        epoch_losses = []
        for _ in range(vc.epochs):
            cvae.train()
            perm = torch.randperm(len(feats), generator=order_gen)
            total, count = 0.0, 0
            for s in range(0, len(feats), vc.batch_size):
                idx = perm[s:s + vc.batch_size]
                recon, mu, logvar = cvae(feats[idx], codes[idx])
                loss = cvae_loss(recon, feats[idx], mu, logvar, vc.beta, cvae.feature_std)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
                count += len(idx)
            epoch_losses.append(total / count)
        cvae.trained.fill_(True)
        cvae.eval()
    finally:
        for p, r in zip(model.parameters(), requires):
            p.requires_grad_(r)
    after = state_checksum(model)
    if before != after:
        raise FreezeViolationError("generator parameters changed during the emotion VAE stage")
    if run_dir:
        save_vae(Path(run_dir) / "emotion_vae.npz", cvae, cfg, before)
    return cvae, epoch_losses


def save_vae(path, cvae, cfg: TrainConfig, backbone_checksum=None):
    meta = {"kind": "emotion-vae", "config": to_dict(cfg), "feature_dim": cvae.feature_dim,
            "backbone_checksum": backbone_checksum}
    return save_checkpoint(path, {"vae": cvae}, meta)


def load_vae(path):
    meta, groups = load_checkpoint(path, kind="emotion-vae")
    cfg = from_dict(meta["config"])
    cvae = EmotionCVAE(meta["feature_dim"], cfg.model.n_emotions, cfg.vae.latent, cfg.vae.hidden)
    cvae.load_state_dict(groups["vae"])
    cvae.eval()
    return cvae, meta


def model_config_for(manifest, **overrides) -> ModelConfig:
    cfg = ModelConfig(n_joints=manifest.n_joints, n_emotions=len(manifest.emotions),
                      vocab_size=len(manifest.vocab), n_frames=manifest.n_frames)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg
