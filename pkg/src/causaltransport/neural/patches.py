"""Bag-of-patches input branch.

Patches are cut at random offsets, which throws away global shape while
keeping local color and texture.  Each patch goes through a frozen random
projection and a nonlinearity; the bag is summarized by the mean over
patches, so the encoding does not depend on patch order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .mlp import ACTIVATIONS


def sample_offsets(rng: np.random.Generator, n_images: int, side: int, patch_size: int, n_patches: int):
    hi = side - patch_size + 1
    return rng.integers(0, hi, size=(n_images, n_patches, 2))


def extract_patches(images: np.ndarray, offsets: np.ndarray, patch_size: int) -> np.ndarray:
    """Patches of shape ``(n_images, n_patches, p, p, C)`` at the given top-left offsets."""
    windows = sliding_window_view(images, (patch_size, patch_size), axis=(1, 2))
    rows = np.arange(len(images))[:, None]
    patches = windows[rows, offsets[..., 0], offsets[..., 1]]  # (n, k, C, p, p)
    return np.moveaxis(patches, 2, -1)


def patch_bag(image: np.ndarray, patch_size: int, n_patches: int, seed: int):
    """Sample ``n_patches`` square patches from one ``(H, W, C)`` image.

    Returns ``(patches, offsets)`` with shapes ``(n_patches, p, p, C)`` and
    ``(n_patches, 2)``.
    """
    image = np.asarray(image)
    side = min(image.shape[0], image.shape[1])
    if patch_size > side:
        raise ShapeError(f"patch size {patch_size} larger than image side {side}")
    if n_patches < 1:
        raise ShapeError("n_patches must be >= 1")
    rng = np.random.default_rng(seed)
    offsets = rng.integers(0, np.array(image.shape[:2]) - patch_size + 1, size=(n_patches, 2))
    return extract_patches(image[None], offsets[None], patch_size)[0], offsets


class PatchBagEncoder:
    """Frozen random per-patch projection followed by mean pooling."""

    def __init__(self, patch_size: int, n_patches: int, channels: int = 3, features: int = 32,
                 activation: str = "relu", seed: int = 0):
        self.patch_size, self.n_patches, self.channels = patch_size, n_patches, channels
        self.features, self.activation = features, activation
        rng = np.random.default_rng(seed)
        fan_in = patch_size * patch_size * channels
        weight = rng.uniform(-1.0, 1.0, size=(fan_in, features)) * np.sqrt(3.0 / fan_in)
        bias = rng.uniform(-0.5, 0.5, size=features)
        weight.setflags(write=False)
        bias.setflags(write=False)
        self.weight, self.bias = weight, bias

    def encode_bag(self, patches: np.ndarray) -> np.ndarray:
        """Encoding of one bag ``(n_patches, p, p, C)`` -> ``(features,)``."""
        act, _ = ACTIVATIONS[self.activation]
        flat = np.asarray(patches).reshape(len(patches), -1)
        return act(flat @ self.weight + self.bias).mean(axis=0)

    def encode(self, images: np.ndarray, seed: int, chunk: int = 2048) -> np.ndarray:
        """One freshly sampled bag per image, encoded: ``(N, H, W, C)`` -> ``(N, features)``."""
        images = np.asarray(images, dtype=np.float64)
        side = min(images.shape[1], images.shape[2])
        if self.patch_size > side:
            raise ShapeError(f"patch size {self.patch_size} larger than image side {side}")
        rng = np.random.default_rng(seed)
        offsets = sample_offsets(rng, len(images), side, self.patch_size, self.n_patches)
        act, _ = ACTIVATIONS[self.activation]
        out = np.empty((len(images), self.features))
        for start in range(0, len(images), chunk):
            sl = slice(start, start + chunk)
            patches = extract_patches(images[sl], offsets[sl], self.patch_size)
            flat = patches.reshape(patches.shape[0], self.n_patches, -1)
            out[sl] = act(flat @ self.weight + self.bias).mean(axis=1)
        return out
