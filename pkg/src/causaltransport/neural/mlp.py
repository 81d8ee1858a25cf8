"""Dense networks with hand-written backpropagation.

Arrays are float64 numpy arrays, batch-first.  A network is a stack of affine
layers with one activation between consecutive layers and none after the
last; classifiers turn the final logits into probabilities with a softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, ShapeError


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x, y):
    return (x > 0).astype(x.dtype)


def _tanh_grad(x, y):
    return 1.0 - y * y


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _sigmoid_grad(x, y):
    return y * (1.0 - y)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
    "identity": (lambda x: x, lambda x, y: np.ones_like(x)),
}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy and its gradient with respect to the logits."""
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), targets].mean()
    grad = np.exp(logp)
    grad[np.arange(n), targets] -= 1.0
    return float(loss), grad / n


class Mlp:
    """Fully connected network.

    ``sizes`` lists layer widths from input to output, e.g. ``[784, 64, 64, 10]``.
    Weights are drawn uniformly from ``[-a, a]`` with ``a = sqrt(6 / fan_in)``
    (``sqrt(3 / fan_in)`` for non-ReLU activations); biases start at zero.
    """

    def __init__(self, sizes, activation: str = "relu", seed: int = 0, head: str = "softmax"):
        if len(sizes) < 2:
            raise ShapeError("an Mlp needs at least an input and an output size")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = [int(s) for s in sizes]
        self.activation = activation
        self.head = head
        rng = np.random.default_rng(seed)
        gain = 6.0 if activation == "relu" else 3.0
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(gain / fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._cache = None

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_parameters(self, params):
        for i in range(len(self.weights)):
            self.weights[i][...] = params[2 * i]
            self.biases[i][...] = params[2 * i + 1]

    def copy_parameters(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def forward(self, x: np.ndarray, keep: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ShapeError(f"expected input of shape (n, {self.sizes[0]}), got {x.shape}")
        act, _ = ACTIVATIONS[self.activation]
        cache = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = h @ w + b
            h = pre if i == last else act(pre)
            if keep:
                cache.append((pre, h))
        if not np.all(np.isfinite(h)):
            raise NumericError("non-finite activations in forward pass")
        if keep:
            self._cache = cache
        return h

    def backward(self, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients for all parameters and for the input, given d(loss)/d(output)."""
        if self._cache is None:
            raise RuntimeError("backward() needs a preceding forward(..., keep=True)")
        _, dact = ACTIVATIONS[self.activation]
        cache = self._cache
        grads = [None] * (2 * len(self.weights))
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                pre, post = cache[i + 1]
                g = g * dact(pre, post)
            inp = cache[i][1] if i > 0 else cache[0]
            grads[2 * i] = inp.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g

    def predict_proba(self, x) -> np.ndarray:
        return softmax(self.forward(x))

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.forward(x), axis=1)

    def loss_and_grads(self, x, targets):
        return forward_backward(self, x, targets)


def forward_backward(model: Mlp, batch: np.ndarray, targets: np.ndarray):
    """Cross-entropy loss of a classifier and exact gradients for every parameter."""
    targets = np.asarray(targets, dtype=np.int64)
    if len(targets) != len(batch):
        raise ShapeError(f"{len(batch)} inputs but {len(targets)} targets")
    if targets.size and (targets.min() < 0 or targets.max() >= model.sizes[-1]):
        raise ShapeError("target label outside the model's output range")
    logits = model.forward(batch, keep=True)
    loss, dlogits = softmax_cross_entropy(logits, targets)
    grads, _ = model.backward(dlogits)
    return loss, grads


def grad_check(model, *inputs, eps: float = 1e-5, floor: float = 1e-6, coords: int | None = None,
               seed: int = 0) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``model`` must provide ``parameters()`` (arrays perturbed in place) and
    ``loss_and_grads(*inputs) -> (loss, grads)``.  The relative error of a
    coordinate is ``|a - n| / max(|a| + |n|, floor)``, so coordinates where
    both gradients vanish count as zero error.  With ``coords`` set, only that
    many seeded random coordinates of each larger parameter array are checked.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    _, analytic = model.loss_and_grads(*inputs)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for param, grad in zip(model.parameters(), analytic):
        flat, gflat = param.reshape(-1), np.asarray(grad).reshape(-1)
        if coords is not None and flat.size > coords:
            picks = np.sort(rng.choice(flat.size, size=coords, replace=False))
        else:
            picks = np.arange(flat.size)
        numeric = np.zeros(len(picks))
        for j, k in enumerate(picks):
            orig = flat[k]
            flat[k] = orig + eps
            up, _ = model.loss_and_grads(*inputs)
            flat[k] = orig - eps
            down, _ = model.loss_and_grads(*inputs)
            flat[k] = orig
            numeric[j] = (up - down) / (2 * eps)
        a = gflat[picks]
        denom = np.maximum(np.abs(a) + np.abs(numeric), floor)
        worst = max(worst, float((np.abs(a - numeric) / denom).max(initial=0.0)))
    return worst


@dataclass
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    momentum: float = 0.9
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class Sgd:
    """Stochastic gradient descent with heavy-ball momentum and L2 weight decay."""

    def __init__(self, params, lr, momentum=0.0, weight_decay=0.0):
        self.params = params
        self.lr, self.momentum, self.weight_decay = lr, momentum, weight_decay
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads):
        for p, g, v in zip(self.params, grads, self.velocity):
            if self.weight_decay and p.ndim > 1:
                g = g + self.weight_decay * p
            v *= self.momentum
            v -= self.lr * g
            p += v


def accuracy(pred, labels) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


def fit(net: Mlp, n: int, make_batch, config: TrainConfig, val_fn=None, log=None) -> list[dict]:
    """Minibatch SGD on cross-entropy.

    ``make_batch(indices, rng)`` returns ``(inputs, targets)`` for the sample
    indices of one minibatch.  When ``val_fn`` is given it is called after
    every epoch and the parameters with the best validation accuracy are
    restored at the end (ties keep the earlier epoch).
    """
    rng = np.random.default_rng(config.seed)
    opt = Sgd(net.parameters(), config.lr, config.momentum, config.weight_decay)
    history = []
    best_acc, best_params = -1.0, None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses, hits = [], 0
        for start in range(0, n, config.batch_size):
            inputs, targets = make_batch(order[start:start + config.batch_size], rng)
            logits = net.forward(inputs, keep=True)
            loss, dlogits = softmax_cross_entropy(logits, targets)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss in epoch {epoch}")
            grads, _ = net.backward(dlogits)
            opt.step(grads)
            losses.append(loss * len(targets))
            hits += int(np.sum(np.argmax(logits, axis=1) == targets))
        row = {"epoch": epoch, "loss": float(np.sum(losses) / n), "train_acc": hits / n}
        if val_fn is not None:
            row["val_acc"] = float(val_fn(net))
            if row["val_acc"] > best_acc:
                best_acc, best_params = row["val_acc"], net.copy_parameters()
        history.append(row)
        if log:
            log(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    if best_params is not None:
        net.set_parameters(best_params)
    return history


def write_training_log(path, history: list[dict]) -> None:
    """CSV with one row per epoch."""
    import csv

    keys = ["epoch", "loss", "train_acc", "val_acc"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(row[k]) if isinstance(row.get(k), float) else row.get(k, "")) for k in keys})
