"""Emotion-conditioned VAE over pooled emotion features."""
from __future__ import annotations

import torch
import torch.nn as nn

from .errors import StateError


class EmotionCVAE(nn.Module):
    def __init__(self, feature_dim, n_emotions, latent=32, hidden=256):
        super().__init__()
        self.feature_dim, self.n_emotions, self.latent = feature_dim, n_emotions, latent
        self.encoder = nn.Sequential(
            nn.Linear(feature_dim + n_emotions, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
        )
        self.to_mu = nn.Linear(hidden, latent)
        self.to_logvar = nn.Linear(hidden, latent)
        self.decoder = nn.Sequential(
            nn.Linear(latent + n_emotions, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, feature_dim),
        )
        self.register_buffer("trained", torch.tensor(False))
        self.register_buffer("feature_mean", torch.zeros(feature_dim))
        self.register_buffer("feature_std", torch.ones(feature_dim))

    def fit_normalization(self, features, floor=1e-6):
        """Store per-dimension statistics so the latent model works on standardized features."""
        self.feature_mean.copy_(features.mean(0))
        self.feature_std.copy_(features.std(0).clamp_min(floor))

    def encode(self, feature, code):
        x = (feature - self.feature_mean) / self.feature_std
        h = self.encoder(torch.cat([x, code.to(feature.dtype)], dim=-1))
        return self.to_mu(h), self.to_logvar(h)

    def decode(self, z, code):
        x = self.decoder(torch.cat([z, code.to(z.dtype)], dim=-1))
        return x * self.feature_std + self.feature_mean

    def forward(self, feature, code, eps=None):
        mu, logvar = self.encode(feature, code)
        if eps is None:
            eps = torch.randn_like(mu)
        z = mu + torch.exp(0.5 * logvar) * eps
        return self.decode(z, code), mu, logvar

    @torch.no_grad()
    def sample(self, code, seed=None):
        """Draw ``z ~ N(0, I)`` from a generator seeded with ``seed``; ``code`` is ``(B, C)``."""
        if not bool(self.trained):
            raise StateError("emotion VAE has not been trained")
        gen = torch.Generator().manual_seed(int(seed) if seed is not None else 0)
        z = torch.randn(code.shape[0], self.latent, generator=gen, dtype=self.to_mu.weight.dtype)
        return self.decode(z, code)


def kl_divergence(mu, logvar):
    """``KL(N(mu, sigma^2) || N(0, I))`` summed over latents, batch mean."""
    return 0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar).sum(-1).mean()


def cvae_loss(recon, target, mu, logvar, beta=1.0, scale=1.0):
    """Negative ELBO: squared error in units of ``scale``, summed over features,
    plus ``beta`` times the KL term; both averaged over the batch."""
    sq = ((recon - target) / scale).pow(2).sum(-1).mean()
    return sq + beta * kl_divergence(mu, logvar)
