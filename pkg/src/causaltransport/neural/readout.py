"""Readout network P^(y | r, x') trained on top of a fixed representation, and the ERM baseline.

The readout sees two inputs: the representation r of the image being
classified and the bag-of-patches encoding of a second image x'.  During
training x' is drawn from the same class as the training image; at inference
x' is drawn from the whole pool and the predictions are averaged.
"""

from __future__ import annotations

import numpy as np

from ..errors import ClassCoverageError, ShapeError
from .mlp import ACTIVATIONS, Mlp, TrainConfig, accuracy, fit, softmax


class ZeroRepresentation:
    """r = 0 for every input; leaves the readout only its x' branch."""

    def __init__(self, dim: int):
        self.dim = dim

    def stats(self, images):
        return np.zeros((len(images), 2 * self.dim))

    def sample_stats(self, stats_row, rng):
        return np.zeros(self.dim)

    def sample_batch(self, stats, rng):
        return np.zeros((len(stats), self.dim))

    def sample(self, x, rng):
        return np.zeros(self.dim)


class NoiseRepresentation:
    """r ~ N(0, I) regardless of the input."""

    def __init__(self, dim: int):
        self.dim = dim

    def stats(self, images):
        return np.concatenate([np.zeros((len(images), self.dim)), np.ones((len(images), self.dim))], axis=1)

    def sample_stats(self, stats_row, rng):
        return rng.standard_normal(self.dim)

    def sample_batch(self, stats, rng):
        return rng.standard_normal((len(stats), self.dim))

    def sample(self, x, rng):
        return rng.standard_normal(self.dim)


class FeatureRepresentation:
    """Deterministic representation given by precomputed feature vectors.

    Stands in for an externally trained backbone: the harness loads one
    ``(N, d)`` array per split (``np.load`` of a ``.npy`` file) aligned with
    the split's images, and ``stats`` wraps such an array.
    """

    def __init__(self, dim: int):
        self.dim = dim

    def stats(self, features):
        f = np.asarray(features, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != self.dim:
            raise ShapeError(f"expected features of shape (n, {self.dim}), got {f.shape}")
        return np.concatenate([f, np.zeros_like(f)], axis=1)

    def sample_stats(self, stats_row, rng):
        return stats_row[:self.dim].copy()

    def sample_batch(self, stats, rng):
        return stats[:, :self.dim].copy()


class NeuralReadout:
    """Two-hidden-layer classifier on ``concat(bag_encoding(x'), r)``."""

    def __init__(self, feature_dim: int, rep_dim: int, n_labels: int, hidden=(64, 64), seed: int = 0):
        self.feature_dim, self.rep_dim, self.n_labels = feature_dim, rep_dim, n_labels
        self.net = Mlp([feature_dim + rep_dim, *hidden, n_labels], "relu", seed=seed)
        self.history: list[dict] = []

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def inputs(self, r, x_features):
        r = np.atleast_2d(np.asarray(r, dtype=np.float64))
        x_features = np.atleast_2d(np.asarray(x_features, dtype=np.float64))
        if len(r) == 1 and len(x_features) > 1:
            r = np.repeat(r, len(x_features), axis=0)
        return np.concatenate([x_features, r], axis=1)

    def predict_proba(self, r, x_features) -> np.ndarray:
        """Label probabilities for one ``r`` against each row of ``x_features`` (or row-paired batches)."""
        return softmax(self.net.forward(self.inputs(r, x_features)))

    def loss_and_grads(self, inputs, targets):
        return self.net.loss_and_grads(inputs, targets)

    def parameters(self):
        return self.net.parameters()

    def causal_proba(self, rep, stats, pool_features, n_i: int, n_j: int, seed,
                     pool_labels=None, query_labels=None, chunk: int = 32) -> np.ndarray:
        """Averaged readout over ``n_i`` representation draws and ``n_j`` pool draws per query.

        Query ``q`` uses the generator ``default_rng([seed, q])`` and consumes
        it in the same order as :func:`causaltransport.estimand.mc_do_estimate`
        (one representation draw, then ``n_j`` pool indices, repeated
        ``n_i`` times), so each row equals that estimator run with seed
        ``[seed, q]`` (sampling with replacement).

        Passing ``pool_labels`` and ``query_labels`` switches to drawing x'
        only from the query's own class.  That uses the true label at test
        time and exists only as a diagnostic ablation.
        """
        if n_i < 1 or n_j < 1:
            raise ValueError("n_i and n_j must be >= 1")
        same_class = pool_labels is not None and query_labels is not None
        if same_class:
            members, starts, counts = _class_blocks(np.asarray(pool_labels), self.n_labels)
        w0, b0 = self.net.weights[0], self.net.biases[0]
        px = pool_features @ w0[: self.feature_dim]  # x' contribution to the first layer
        wr = w0[self.feature_dim:]
        act, _ = ACTIVATIONS[self.net.activation]
        n = len(stats)
        out = np.empty((n, self.n_labels))
        for start in range(0, n, chunk):
            stop = min(n, start + chunk)
            rs = np.empty((stop - start, n_i, self.rep_dim))
            idx = np.empty((stop - start, n_i, n_j), dtype=np.int64)
            for q in range(start, stop):
                rng = np.random.default_rng([*np.atleast_1d(seed), q])
                for i in range(n_i):
                    rs[q - start, i] = rep.sample_stats(stats[q], rng)
                    if same_class:
                        y = query_labels[q]
                        idx[q - start, i] = members[starts[y] + rng.integers(0, counts[y], size=n_j)]
                    else:
                        idx[q - start, i] = rng.integers(0, len(pool_features), size=n_j)
            h = px[idx] + (rs @ wr)[:, :, None, :] + b0
            h = act(h)
            for k in range(1, len(self.net.weights)):
                h = h @ self.net.weights[k] + self.net.biases[k]
                if k < len(self.net.weights) - 1:
                    h = act(h)
            p = softmax(h).mean(axis=(1, 2))
            out[start:stop] = p / p.sum(axis=1, keepdims=True)
        return out


def _class_blocks(labels, n_classes):
    members = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=n_classes)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return members, starts, counts


def check_coverage(labels, n_classes):
    counts = np.bincount(np.asarray(labels), minlength=n_classes)
    missing = [k for k in range(n_classes) if counts[k] == 0]
    if missing:
        raise ClassCoverageError(f"classes {missing} have no samples in the pool")


def train_readout(pool_features, labels, rep_stats, rep, config: TrainConfig, n_labels: int,
                  hidden=(64, 64), val_fn=None, log=None, partner: str = "same-class") -> NeuralReadout:
    """Fit the readout on a labeled pool.

    Each step draws a minibatch of pool images, a fresh representation for
    each from ``rep`` (via its precomputed ``rep_stats``), and for each a
    partner x' drawn uniformly from the pool members of the same class.
    ``pool_features`` are the fixed bag-of-patches encodings of the pool.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if partner not in ("same-class", "same-instance"):
        raise ValueError(f"unknown partner mode {partner!r}")
    check_coverage(labels, n_labels)
    members, starts, counts = _class_blocks(labels, n_labels)
    readout = NeuralReadout(pool_features.shape[1], rep.dim, n_labels, hidden, seed=config.seed)

    def make_batch(batch, rng):
        y = labels[batch]
        r = rep.sample_batch(rep_stats[batch], rng)
        if partner == "same-instance":
            other = batch
        else:
            other = members[starts[y] + (rng.random(len(batch)) * counts[y]).astype(np.int64)]
        return np.concatenate([pool_features[other], r], axis=1), y

    wrapped = None if val_fn is None else (lambda net: val_fn(readout))
    readout.history = fit(readout.net, len(labels), make_batch, config, wrapped, log)
    return readout


class ErmClassifier:
    """Plain P^(y | x) network on flattened pixels shifted by -0.5."""

    def __init__(self, input_dim: int, n_labels: int, hidden=(64, 64), seed: int = 0):
        self.net = Mlp([input_dim, *hidden, n_labels], "relu", seed=seed)
        self.n_labels = n_labels
        self.history: list[dict] = []

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def predict_proba(self, images) -> np.ndarray:
        return softmax(self.net.forward(np.asarray(images).reshape(len(images), -1) - 0.5))

    def predict(self, images) -> np.ndarray:
        return np.argmax(self.predict_proba(images), axis=1)

    def loss_and_grads(self, inputs, targets):
        return self.net.loss_and_grads(inputs, targets)

    def parameters(self):
        return self.net.parameters()


def train_erm(images, labels, config: TrainConfig, n_labels: int, hidden=(64, 64),
              val=None, log=None) -> ErmClassifier:
    """Cross-entropy training on raw pixels; ``val = (images, labels)`` enables model selection."""
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1) - 0.5
    labels = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training pool")
    model = ErmClassifier(x.shape[1], n_labels, hidden, seed=config.seed)
    val_fn = None
    if val is not None:
        vx, vy = val
        val_fn = lambda net: accuracy(model.predict(vx), vy)  # noqa: E731
    model.history = fit(model.net, len(x), lambda b, rng: (x[b], labels[b]), config, val_fn, log)
    return model
