"""Emotion-beat mining: split audio into per-frame beat features and a pooled
emotion feature, plus the two losses that supervise them."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeError, ValidationError

ZERO_NORM = 1e-12


class SEConvBlock(nn.Module):
    """Residual 2-D conv block with squeeze-excitation channel gating."""

    def __init__(self, c_in, c_out, stride=(2, 1), reduction=4):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1)
        self.bn1 = nn.BatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(c_out)
        hidden = max(1, c_out // reduction)
        self.se = nn.Sequential(
            nn.Linear(c_out, hidden), nn.ReLU(), nn.Linear(hidden, c_out), nn.Sigmoid()
        )
        self.skip = nn.Conv2d(c_in, c_out, 1, stride=stride)

    def forward(self, x):
        h = F.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        gate = self.se(h.mean(dim=(2, 3)))[:, :, None, None]
        return F.relu(h * gate + self.skip(x))


def _mlp(d, hidden=None):
    hidden = hidden or d
    return nn.Sequential(nn.Linear(d, hidden), nn.GELU(), nn.Linear(hidden, d))


class AudioEncoder(nn.Module):
    """mel ``(B, 128, T)`` -> beat track ``(B, N, D)``, emotion ``(B, D)``, logits ``(B, C)``."""

    def __init__(self, d_model=64, n_emotions=4, channels=(8, 16, 32), n_mels=128):
        super().__init__()
        # first block: 4x frequency and 2x time reduction; later blocks halve frequency
        strides = [(4, 2)] + [(2, 1)] * (len(channels) - 1)
        blocks, c_in, freq = [], 1, n_mels
        for c, stride in zip(channels, strides):
            blocks.append(SEConvBlock(c_in, c, stride=stride))
            c_in = c
            freq = (freq - 1) // stride[0] + 1
        self.backbone = nn.Sequential(*blocks)
        # 2-D conv header collapsing the remaining frequency axis
        self.header = nn.Conv2d(c_in, d_model, kernel_size=(freq, 3), padding=(0, 1))
        self.beat_proj = _mlp(d_model)
        self.emotion_proj = _mlp(d_model)
        self.classifier = nn.Linear(d_model, n_emotions)

    def hidden(self, mel, n_frames):
        if mel.dim() != 3:
            raise ShapeError(f"mel batch must be (B, n_mels, T), got {tuple(mel.shape)}")
        if n_frames <= 0:
            raise ShapeError("n_frames must be positive")
        h = self.header(self.backbone(mel.unsqueeze(1))).squeeze(2)  # B x D x T
        h = F.interpolate(h, size=n_frames, mode="linear", align_corners=True)
        return h.transpose(1, 2)

    def forward(self, mel, n_frames):
        h = self.hidden(mel, n_frames)
        beat = self.beat_proj(h)
        emotion = self.emotion_proj(h).mean(dim=1)
        return beat, emotion, self.classifier(emotion)


def _check_norms(x, name):
    norms = x.detach().norm(dim=-1)
    if bool((norms <= ZERO_NORM).any()):
        raise ValidationError(f"{name} has a zero-norm row; cosine similarity is undefined")


def beat_contrastive_loss(text, beat, uttered, tau=0.1, include_positive=False):
    """Frame-wise transcript/beat contrastive loss, averaged over the batch.

    ``text`` and ``beat`` are ``(B, N, D)`` (or ``(N, D)``); ``uttered`` is a
    boolean ``(B, N)`` mask of frames carrying a word. Each uttered frame ``u``
    anchors ``text[u]`` against the positive ``beat[u]``; the negatives are the
    beat features of every other frame in the same sequence.

    With ``include_positive=False`` the loss per sequence is
    ``-log sum_u exp(s_uu) / sum_{i != u} exp(s_ui)`` with ``s = cos / tau``,
    and exactly 0 for sequences with no uttered frame. ``include_positive=True``
    gives the usual InfoNCE: the mean over anchors of
    ``-log exp(s_uu) / sum_i exp(s_ui)``.
    """
    if tau <= 0:
        raise ValidationError("temperature must be positive")
    if text.dim() == 2:
        text, beat, uttered = text[None], beat[None], torch.as_tensor(uttered)[None]
    if text.shape != beat.shape:
        raise ShapeError(f"text {tuple(text.shape)} and beat {tuple(beat.shape)} differ")
    uttered = torch.as_tensor(uttered, dtype=torch.bool, device=text.device)
    if not bool(uttered.any()):
        return text.sum() * 0.0
    _check_norms(beat, "beat features")
    _check_norms(text[uttered], "transcript features")
    t = text / text.norm(dim=-1, keepdim=True)
    b = beat / beat.norm(dim=-1, keepdim=True)
    sim = t @ b.transpose(1, 2) / tau  # B x N(anchor) x N(candidate)
    pos = torch.diagonal(sim, dim1=1, dim2=2)
    n = sim.shape[-1]
    if include_positive:
        log_ratio = pos - torch.logsumexp(sim, dim=-1)
        per_seq = -(log_ratio * uttered).sum(1) / uttered.sum(1).clamp(min=1)
    else:
        eye = torch.eye(n, dtype=torch.bool, device=sim.device)
        neg = sim.masked_fill(eye, float("-inf"))
        log_ratio = pos - torch.logsumexp(neg, dim=-1)
        has = uttered.any(1)
        masked = log_ratio[has].masked_fill(~uttered[has], float("-inf"))
        per_seq = torch.zeros(text.shape[0], dtype=sim.dtype, device=sim.device)
        per_seq = per_seq.index_put((has.nonzero(as_tuple=True)[0],), -torch.logsumexp(masked, -1))
    return per_seq.mean()


def emotion_ce_loss(logits, target):
    """Cross-entropy against one-hot (or probability) targets, batch mean."""
    target = target.to(logits.dtype)
    return -(target * F.log_softmax(logits, dim=-1)).sum(-1).mean()
