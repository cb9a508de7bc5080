"""Spatial-temporal prompter: turn ``M`` seed poses into an ``N``-frame query track.

All tensors are batched ``(B, T, D)``. The transition chunk is the last ``L``
rows of the initial-pose embedding and the first ``L`` rows of the predicted
future features; only those future rows are modified by the two prompt steps.
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError

PROMPT_MODES = ("stp", "duplicate", "zero")


class PoseEncoder(nn.Module):
    """Per-frame MLP ``(J*6) -> D``."""

    def __init__(self, pose_dim, d_model):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(pose_dim, d_model), nn.GELU(), nn.Linear(d_model, d_model))

    def forward(self, poses):
        if poses.shape[-1] != self.net[0].in_features:
            raise ShapeError(
                f"poses have width {poses.shape[-1]}, encoder expects {self.net[0].in_features}"
            )
        return self.net(poses)


class PosePredictor(nn.Module):
    """Nearest-neighbour stretch of ``M`` rows to ``N - M`` rows, then a 1-D conv stack."""

    def __init__(self, d_model, n_future, n_layers=2, kernel=3):
        super().__init__()
        self.n_future = n_future
        self.convs = nn.ModuleList(
            nn.Conv1d(d_model, d_model, kernel, padding=kernel // 2) for _ in range(n_layers)
        )

    def forward(self, f_ip):
        x = F.interpolate(f_ip.transpose(1, 2), size=self.n_future, mode="nearest")
        for k, conv in enumerate(self.convs):
            x = conv(x)
            if k < len(self.convs) - 1:
                x = F.relu(x)
        return x.transpose(1, 2)


def spatial_interpolation(f_s, f_op, chunk):
    """Pull each of the first ``chunk`` future rows toward ``f_s``.

    ``sigma_i = sigmoid(f_s . f_i)`` and ``f_i <- sigma_i f_i + (1 - sigma_i) f_s``.
    ``f_s`` is ``(B, D)``; rows past the chunk are returned untouched.
    """
    if chunk > f_op.shape[1]:
        raise ShapeError(f"chunk length {chunk} exceeds {f_op.shape[1]} future rows")
    head, tail = f_op[:, :chunk], f_op[:, chunk:]
    sigma = torch.sigmoid(torch.einsum("bd,bld->bl", f_s, head)).unsqueeze(-1)
    head = sigma * head + (1.0 - sigma) * f_s.unsqueeze(1)
    return torch.cat([head, tail], dim=1)


def correlation_score(f_s, f_te):
    """Softmax over the chunk of ``(F^Te F^S) F^S^T``; ``(B, L)``."""
    outer = f_te.unsqueeze(-1) * f_s.unsqueeze(1)  # B x L x D
    return torch.softmax(torch.einsum("bld,bd->bl", outer, f_s), dim=1)


def temporal_reinforcement(f_s, f_te, f_op, chunk):
    """``f_i <- f_i + omega_i * f_i`` for the first ``chunk`` future rows."""
    if f_te.shape[1] != chunk or chunk > f_op.shape[1]:
        raise ShapeError(
            f"temporal embedding has {f_te.shape[1]} rows, chunk is {chunk}, future has {f_op.shape[1]}"
        )
    if f_s.shape[-1] != f_op.shape[-1]:
        raise ShapeError("spatial representation and future features differ in width")
    omega = correlation_score(f_s, f_te).unsqueeze(-1)
    head, tail = f_op[:, :chunk], f_op[:, chunk:]
    return torch.cat([head + head * omega, tail], dim=1)


def build_prompt(f_ip, f_op):
    if f_ip.shape[-1] != f_op.shape[-1]:
        raise ShapeError(f"width mismatch {f_ip.shape[-1]} vs {f_op.shape[-1]}")
    return torch.cat([f_ip, f_op], dim=1)


class SpatialTemporalPrompter(nn.Module):
    def __init__(self, pose_dim, d_model, n_frames=60, n_init=10, chunk=10, mode="stp",
                 spatial=True, temporal=True):
        super().__init__()
        if mode not in PROMPT_MODES:
            raise ConfigError(f"prompt mode must be one of {PROMPT_MODES}, got {mode!r}")
        if not 0 < n_init < n_frames:
            raise ConfigError("need 0 < M < N")
        if mode == "stp" and not (chunk <= n_init and chunk <= n_frames - n_init):
            raise ConfigError(f"chunk L={chunk} must be <= M={n_init} and <= N-M={n_frames - n_init}")
        self.n_frames, self.n_init, self.chunk, self.mode = n_frames, n_init, chunk, mode
        self.spatial, self.temporal = spatial, temporal
        self.encoder = PoseEncoder(pose_dim, d_model)
        if mode == "stp":
            self.predictor = PosePredictor(d_model, n_frames - n_init)
            self.spatial_encoder = nn.Linear(d_model, d_model)
            self.motion_conv = nn.Conv1d(d_model, d_model, 3, padding=1)
            self.motion_head = nn.Linear(d_model, 1)

    def spatial_representation(self, f_ip):
        return self.spatial_encoder(f_ip[:, -self.chunk:].mean(dim=1))

    def temporal_embedding(self, f_ip, f_op):
        head = f_op[:, : self.chunk]
        prev = torch.cat([f_ip[:, -1:], head[:, :-1]], dim=1)
        h = F.relu(self.motion_conv((head - prev).transpose(1, 2))).transpose(1, 2)
        return self.motion_head(h).squeeze(-1)

    def forward(self, init_poses):
        if init_poses.shape[1] != self.n_init:
            raise ShapeError(f"expected {self.n_init} initial poses, got {init_poses.shape[1]}")
        f_ip = self.encoder(init_poses)
        n_future = self.n_frames - self.n_init
        if self.mode == "zero":
            pad = f_ip.new_zeros(f_ip.shape[0], n_future, f_ip.shape[-1])
            return build_prompt(f_ip, pad)
        if self.mode == "duplicate":
            reps = -(-n_future // self.n_init)
            return build_prompt(f_ip, f_ip.repeat(1, reps, 1)[:, :n_future])
        f_op = self.predictor(f_ip)
        f_s = self.spatial_representation(f_ip)
        if self.spatial:
            f_op = spatial_interpolation(f_s, f_op, self.chunk)
        if self.temporal:
            f_te = self.temporal_embedding(f_ip, f_op)
            f_op = temporal_reinforcement(f_s, f_te, f_op, self.chunk)
        return build_prompt(f_ip, f_op)
