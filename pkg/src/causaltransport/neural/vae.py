"""Variational autoencoder used as the representation model P^(r | x).

The encoder outputs the mean and log-variance of a diagonal Gaussian
q(r | x); the decoder outputs per-pixel Bernoulli logits.  Pixels in [0, 1] are
shifted by -0.5 before entering the encoder.  The training
objective is the evidence lower bound

    ELBO(x) = E_q[log p(x | r)] - KL(q(r | x) || N(0, I))

estimated with one reparameterized sample r = mu + exp(logvar / 2) * eps.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, TrainingError
from .mlp import Mlp, Sgd, TrainConfig, _sigmoid

LOGVAR_CLIP = 10.0


class Vae:
    def __init__(self, input_dim: int, latent_dim: int, hidden: int = 128, seed: int = 0):
        if latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        self.input_dim, self.latent_dim, self.hidden = input_dim, latent_dim, hidden
        self.encoder = Mlp([input_dim, hidden, 2 * latent_dim], "relu", seed=seed, head="linear")
        self.decoder = Mlp([latent_dim, hidden, input_dim], "relu", seed=seed + 1, head="linear")
        # start with small posterior variance
        self.encoder.biases[-1][latent_dim:] = -2.0

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()

    def encode(self, x):
        out = self.encoder.forward(np.asarray(x, dtype=np.float64).reshape(len(x), -1) - 0.5)
        mu, logvar = out[:, :self.latent_dim], out[:, self.latent_dim:]
        return mu, np.clip(logvar, -LOGVAR_CLIP, LOGVAR_CLIP)

    def decode(self, r):
        return _sigmoid(self.decoder.forward(np.atleast_2d(r)))

    def loss_and_grads(self, x, noise):
        """Negative ELBO averaged over the batch, with gradients for all parameters.

        ``noise`` holds the standard normal draws used for the reparameterized
        sample, so the loss is a deterministic function of the parameters.
        """
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        n = len(x)
        out = self.encoder.forward(x - 0.5, keep=True)
        mu, logvar = out[:, :self.latent_dim], out[:, self.latent_dim:]
        clipped = np.abs(logvar) < LOGVAR_CLIP
        logvar = np.clip(logvar, -LOGVAR_CLIP, LOGVAR_CLIP)
        std = np.exp(0.5 * logvar)
        r = mu + std * noise
        logits = self.decoder.forward(r, keep=True)
        # Bernoulli log-likelihood, written stably in terms of logits
        recon = np.sum(np.maximum(logits, 0) - logits * x + np.log1p(np.exp(-np.abs(logits))), axis=1)
        kl = 0.5 * np.sum(mu * mu + np.exp(logvar) - 1.0 - logvar, axis=1)
        loss = float(np.mean(recon + kl))
        if not np.isfinite(loss):
            raise NumericError("non-finite ELBO")

        dlogits = (_sigmoid(logits) - x) / n
        dec_grads, dr = self.decoder.backward(dlogits)
        dmu = dr + mu / n
        dlogvar = dr * noise * 0.5 * std + 0.5 * (np.exp(logvar) - 1.0) / n
        dlogvar = dlogvar * clipped
        enc_grads, _ = self.encoder.backward(np.concatenate([dmu, dlogvar], axis=1))
        return loss, enc_grads + dec_grads

    def elbo(self, x, rng: np.random.Generator) -> float:
        """Mean ELBO of ``x`` (one reparameterized sample per image)."""
        noise = rng.standard_normal((len(x), self.latent_dim))
        loss, _ = self.loss_and_grads(x, noise)
        return -loss


class VaeRepresentation:
    """Stochastic representation r ~ q(r | x) backed by a trained encoder."""

    def __init__(self, vae: Vae):
        self.vae = vae
        self.dim = vae.latent_dim
        self.history: list[dict] = []

    def stats(self, images):
        mu, logvar = self.vae.encode(np.asarray(images).reshape(len(images), -1))
        return np.concatenate([mu, np.exp(0.5 * logvar)], axis=1)

    def sample_stats(self, stats_row, rng):
        mu, std = stats_row[:self.dim], stats_row[self.dim:]
        return mu + std * rng.standard_normal(self.dim)

    def sample_batch(self, stats, rng):
        mu, std = stats[:, :self.dim], stats[:, self.dim:]
        return mu + std * rng.standard_normal(mu.shape)

    def sample(self, x, rng):
        return self.sample_stats(self.stats(np.asarray(x)[None])[0], rng)

    def support(self, x):
        raise NotImplementedError("a Gaussian representation has no finite support")


def train_vae(images, latent_dim: int, config: TrainConfig, hidden: int = 128, log=None) -> VaeRepresentation:
    """Fit a VAE by stochastic gradient ascent on the ELBO.

    ``history`` on the returned representation holds the mean training ELBO
    before training (epoch 0) and after each epoch.
    """
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    if len(x) == 0:
        raise ValueError("no training images")
    vae = Vae(x.shape[1], latent_dim, hidden, seed=config.seed)
    rep = VaeRepresentation(vae)
    rng = np.random.default_rng(config.seed)
    probe = x[: min(len(x), 2000)]
    probe_noise = np.random.default_rng([config.seed, 1]).standard_normal((len(probe), latent_dim))
    opt = Sgd(vae.parameters(), config.lr, config.momentum, config.weight_decay)
    rep.history.append({"epoch": 0, "elbo": -vae.loss_and_grads(probe, probe_noise)[0]})
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x))
        for start in range(0, len(x), config.batch_size):
            batch = x[order[start:start + config.batch_size]]
            noise = rng.standard_normal((len(batch), latent_dim))
            try:
                loss, grads = vae.loss_and_grads(batch, noise)
            except NumericError as exc:
                raise TrainingError(str(exc), epoch) from None
            opt.step(grads)
        try:
            elbo = -vae.loss_and_grads(probe, probe_noise)[0]
        except NumericError:
            elbo = float("nan")
        if not np.isfinite(elbo):
            raise TrainingError("ELBO diverged", epoch)
        rep.history.append({"epoch": epoch, "elbo": elbo})
        if log:
            log(f"vae epoch {epoch}: elbo {elbo:.3f}")
    return rep
