"""Prompt-queried transformer decoder, motion discriminator and the full
gesture generator."""
from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import EMOTION_MODES, ModelConfig
from .ebm import AudioEncoder
from .errors import ConfigError, ShapeError, StateError
from .stp import SpatialTemporalPrompter

IDENTITY_6D = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)


def scaled_dot_product(q, k, v):
    """``softmax(q k^T / sqrt(d)) v`` over the last two axes; returns (out, weights)."""
    logits = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    weights = torch.softmax(logits, dim=-1)
    return weights @ v, weights


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model, heads, dropout=0.0):
        super().__init__()
        if d_model % heads:
            raise ConfigError(f"d_model={d_model} is not divisible by heads={heads}")
        self.heads, self.d_head = heads, d_model // heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x):
        b, n, _ = x.shape
        return x.view(b, n, self.heads, self.d_head).transpose(1, 2)

    def forward(self, query, key, value, return_weights=False):
        if query.shape[-1] != key.shape[-1] or key.shape[:-1] != value.shape[:-1]:
            raise ShapeError("query/key/value shapes do not agree")
        q, k, v = self._split(self.q_proj(query)), self._split(self.k_proj(key)), self._split(self.v_proj(value))
        out, weights = scaled_dot_product(q, k, v)
        out = out.transpose(1, 2).reshape(query.shape[0], query.shape[1], -1)
        out = self.out_proj(self.dropout(out))
        return (out, weights) if return_weights else out


class CrossAttentionBlock(nn.Module):
    """Pre-norm: ``x += MHA(LN(x), LN(c), LN(c)); x += FFN(LN(x))``."""

    def __init__(self, d_model, heads, ff_width, dropout=0.0):
        super().__init__()
        self.norm_q = nn.LayerNorm(d_model)
        self.norm_kv = nn.LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, heads, dropout)
        self.norm_ff = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(
            nn.Linear(d_model, ff_width), nn.GELU(), nn.Dropout(dropout), nn.Linear(ff_width, d_model)
        )

    def forward(self, x, cond):
        kv = self.norm_kv(cond)
        x = x + self.attn(self.norm_q(x), kv, kv)
        return x + self.ff(self.norm_ff(x))


class GestureDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.n_frames = cfg.n_frames
        self.pos_query = nn.Parameter(torch.randn(cfg.n_frames, d) * 0.02)
        self.pos_cond = nn.Parameter(torch.randn(cfg.n_frames, d) * 0.02)
        self.blocks = nn.ModuleList(
            CrossAttentionBlock(d, cfg.heads, cfg.ff_width, cfg.dropout) for _ in range(cfg.depth)
        )
        self.norm_out = nn.LayerNorm(d)
        self.head = nn.Linear(d, cfg.pose_dim)
        with torch.no_grad():
            self.head.weight.mul_(0.1)
            self.head.bias.copy_(torch.tensor(IDENTITY_6D).repeat(cfg.n_joints))

    def forward(self, prompt, cond):
        if prompt.shape != cond.shape:
            raise ShapeError(f"prompt {tuple(prompt.shape)} and condition {tuple(cond.shape)} differ")
        if prompt.shape[1] != self.n_frames:
            raise ShapeError(f"decoder built for N={self.n_frames}, got {prompt.shape[1]}")
        x = prompt + self.pos_query
        c = cond + self.pos_cond
        for block in self.blocks:
            x = block(x, c)
        return self.head(self.norm_out(x))


class MotionDiscriminator(nn.Module):
    """Temporal convs over motion offsets (or poses), mean-pooled, sigmoid output."""

    def __init__(self, pose_dim, channels=64, use_offsets=True):
        super().__init__()
        self.use_offsets = use_offsets
        self.net = nn.Sequential(
            nn.Conv1d(pose_dim, channels, 3, padding=1), nn.LeakyReLU(0.2),
            nn.Conv1d(channels, channels, 3, padding=1, stride=2), nn.LeakyReLU(0.2),
            nn.Conv1d(channels, channels, 3, padding=1), nn.LeakyReLU(0.2),
        )
        self.out = nn.Linear(channels, 1)

    def logits(self, poses):
        x = poses[:, 1:] - poses[:, :-1] if self.use_offsets else poses
        h = self.net(x.transpose(1, 2)).mean(dim=2)
        return self.out(h).squeeze(-1)

    def forward(self, poses):
        return torch.sigmoid(self.logits(poses))


class EmotionGesture(nn.Module):
    """Generator ``G(audio, seed poses)``: audio -> beat/emotion features,
    seed poses -> prompt, prompt queries the conditioning track."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        d = cfg.d_model
        self.text_embedding = nn.Embedding(cfg.vocab_size, d)
        self.audio = AudioEncoder(d, cfg.n_emotions, tuple(cfg.audio_channels))
        self.prompter = SpatialTemporalPrompter(
            cfg.pose_dim, d, cfg.n_frames, cfg.n_init, cfg.chunk, cfg.prompt_mode,
            cfg.spatial_prompt, cfg.temporal_prompt,
        )
        self.decoder = GestureDecoder(cfg)
        if cfg.emotion_input == "onehot":
            self.onehot_proj = nn.Linear(d + cfg.n_emotions, d)

    def encode_audio(self, mel):
        """Returns ``(beat (B,N,D), emotion (B,D), logits (B,C))``."""
        return self.audio(mel, self.cfg.n_frames)

    def conditioning(self, mel, emotion=None, label=None):
        if self.cfg.emotion_input == "onehot":
            if label is None:
                raise StateError("one-hot emotion input needs the emotion label")
            hidden = self.audio.hidden(mel, self.cfg.n_frames)
            onehot = label[:, None, :].expand(-1, hidden.shape[1], -1).to(hidden.dtype)
            cond = self.onehot_proj(torch.cat([hidden, onehot], dim=-1))
            return cond, {"beat": hidden, "emotion": None, "logits": None}
        beat, enc_emotion, logits = self.encode_audio(mel)
        if emotion is None:
            emotion = enc_emotion
        return beat + emotion[:, None, :], {"beat": beat, "emotion": enc_emotion, "logits": logits}

    def forward(self, mel, init_poses, emotion=None, label=None):
        cond, feats = self.conditioning(mel, emotion, label)
        prompt = self.prompter(init_poses)
        feats["poses"] = self.decoder(prompt, cond)
        return feats


@torch.no_grad()
def generate(model, mel, init_poses, emotion_mode="encoded", label=None, cvae=None, seed=None):
    """Full inference pipeline; returns ``(B, N, J*6)`` poses.

    ``emotion_mode``: ``encoded`` uses the audio's own emotion feature,
    ``sampled`` draws it from the conditional VAE with ``seed``, ``onehot``
    is the one-hot-label ablation model.
    """
    if model is None:
        raise StateError("no generator checkpoint is loaded")
    if emotion_mode not in EMOTION_MODES:
        raise ConfigError(f"emotion_mode must be one of {EMOTION_MODES}")
    model.eval()
    if emotion_mode == "sampled":
        if cvae is None:
            raise StateError("sampled mode requires a trained emotion VAE")
        if label is None:
            raise StateError("sampled mode requires an emotion code")
        emotion = cvae.sample(label, seed=seed)
        return model(mel, init_poses, emotion=emotion)["poses"]
    if emotion_mode == "onehot":
        if model.cfg.emotion_input != "onehot":
            raise ConfigError("checkpoint was not trained with one-hot emotion input")
        return model(mel, init_poses, label=label)["poses"]
    if model.cfg.emotion_input == "onehot":
        raise ConfigError("one-hot model must be run with emotion_mode='onehot'")
    return model(mel, init_poses)["poses"]
