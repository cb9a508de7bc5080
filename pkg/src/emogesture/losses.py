"""Training objectives for the generator and discriminator."""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from .config import LossWeights
from .ebm import beat_contrastive_loss, emotion_ce_loss  # noqa: F401  (re-exported)
from .errors import ShapeError

PROB_EPS = 1e-7
LOSS_NAMES = ("rec", "adv", "beat", "emo", "smooth")


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def motion_smooth_loss(offsets_real, offsets_fake, temperature=10.0):
    """KL between the temperature-flattened real offset distribution and the
    generated one.

    Inputs are ``(..., N-1, F)`` offset tracks. For each feature column the
    softmax is taken along time; the KL is averaged over columns (and batch).
    """
    _same_shape(offsets_real, offsets_fake)
    log_p = F.log_softmax(offsets_real / temperature, dim=-2)
    log_q = F.log_softmax(offsets_fake, dim=-2)
    kl = (log_p.exp() * (log_p - log_q)).sum(dim=-2)
    return kl.mean()


def reconstruction_loss(real, fake):
    _same_shape(real, fake)
    return (real - fake).abs().mean()


def adversarial_losses(d_real, d_fake, generator_form="nonsaturating"):
    """Return ``(d_loss, g_loss)`` from discriminator probabilities.

    ``d_loss = -(log D(real) + log(1 - D(fake)))``. The generator term is
    ``-log D(fake)`` (``nonsaturating``) or ``log(1 - D(fake))`` (``minimax``).
    """
    d_real = torch.as_tensor(d_real).clamp(PROB_EPS, 1 - PROB_EPS)
    d_fake = torch.as_tensor(d_fake).clamp(PROB_EPS, 1 - PROB_EPS)
    d_loss = -(torch.log(d_real).mean() + torch.log1p(-d_fake).mean())
    if generator_form == "minimax":
        g_loss = torch.log1p(-d_fake).mean()
    else:
        g_loss = -torch.log(d_fake).mean()
    return d_loss, g_loss


def total_objective(parts: dict, weights: LossWeights):
    """``rec*L_rec + L_adv + beat*L_beat + emo*L_emo + smooth*L_smooth``."""
    for name, value in parts.items():
        v = float(value.detach()) if hasattr(value, 'detach') else float(value)
        if not math.isfinite(v):
            raise FloatingPointError(f"loss part {name} is not finite")
    return (
        weights.rec * parts["rec"]
        + parts["adv"]
        + weights.beat * parts["beat"]
        + weights.emo * parts["emo"]
        + weights.smooth * parts["smooth"]
    )
