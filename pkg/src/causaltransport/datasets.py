"""Procedural image benchmarks with a controlled spurious attribute.

``gen_cmnist_like`` draws 8x8 bitmap digits on a colored canvas; the color is
tied to the digit class with probability ``rho_train`` in the training and
validation splits and follows a derangement of that pairing in the OOD split.
``gen_waterbird_like`` draws one of two bird silhouettes on a land or water
texture, again correlated with the class during training and balanced across
the four (class, background) groups in the OOD split.

Images are ``float64`` arrays of shape ``(N, side, side, 3)`` in [0, 1].
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptFileError, SpecError, VersionError

FONT = {
    0: ["..####..", ".##..##.", ".##.###.", ".###.##.", ".##..##.", ".##..##.", "..####..", "........"],
    1: ["...##...", "..###...", ".####...", "...##...", "...##...", "...##...", ".######.", "........"],
    2: ["..####..", ".##..##.", ".....##.", "....##..", "...##...", "..##....", ".######.", "........"],
    3: [".#####..", ".....##.", ".....##.", "..####..", ".....##.", ".....##.", ".#####..", "........"],
    4: ["....##..", "...###..", "..####..", ".##.##..", ".######.", "....##..", "....##..", "........"],
    5: [".######.", ".##.....", ".#####..", ".....##.", ".....##.", ".##..##.", "..####..", "........"],
    6: ["..####..", ".##.....", ".##.....", ".#####..", ".##..##.", ".##..##.", "..####..", "........"],
    7: [".######.", ".....##.", "....##..", "...##...", "..##....", "..##....", "..##....", "........"],
    8: ["..####..", ".##..##.", ".##..##.", "..####..", ".##..##.", ".##..##.", "..####..", "........"],
    9: ["..####..", ".##..##.", ".##..##.", "..#####.", ".....##.", "....##..", "..###...", "........"],
}
GLYPHS = np.array([[[c == "#" for c in row] for row in FONT[d]] for d in range(10)], dtype=np.float64)

PALETTE = np.array([
    [0.90, 0.10, 0.10],  # red
    [0.10, 0.70, 0.10],  # green
    [0.15, 0.25, 0.95],  # blue
    [0.95, 0.85, 0.10],  # yellow
    [0.85, 0.15, 0.85],  # magenta
    [0.10, 0.85, 0.85],  # cyan
    [0.95, 0.55, 0.10],  # orange
    [0.55, 0.20, 0.75],  # purple
    [0.50, 0.30, 0.10],  # brown
    [0.55, 0.85, 0.45],  # lime
])

SPLITS = ("train", "val", "ood")


@dataclass
class DatasetSpec:
    """Benchmark parameters.

    ``rho_ood`` is either ``"flipped"`` (the OOD split uses a derangement of
    the training pairing for every sample) or a probability, in which case the
    OOD split uses the training pairing with that probability.
    """

    kind: str = "cmnist"
    n_classes: int = 10
    side: int = 16
    rho_train: float = 0.95
    rho_ood: float | str = "flipped"
    n_train: int = 10000
    n_val: int = 2000
    n_ood: int = 2000
    color_mode: str = "background"
    jitter: int = 2
    noise: float = 0.1
    foreground_only: bool = False

    def validate(self):
        if self.kind not in ("cmnist", "waterbird"):
            raise SpecError(f"unknown dataset kind {self.kind!r}")
        if self.n_classes < 2:
            raise SpecError("n_classes must be >= 2")
        if self.kind == "cmnist" and self.n_classes > 10:
            raise SpecError("cmnist supports at most 10 classes")
        if self.kind == "waterbird" and self.n_classes != 2:
            raise SpecError("waterbird needs exactly 2 classes")
        if not 0.0 <= self.rho_train <= 1.0:
            raise SpecError("rho_train must lie in [0, 1]")
        if self.rho_ood != "flipped" and not 0.0 <= float(self.rho_ood) <= 1.0:
            raise SpecError("rho_ood must be 'flipped' or lie in [0, 1]")
        if min(self.n_train, self.n_val, self.n_ood) < 1:
            raise SpecError("split sizes must be positive")
        if self.color_mode not in ("background", "foreground", "both"):
            raise SpecError(f"unknown color_mode {self.color_mode!r}")
        if self.side < 8 + 2 * self.jitter and self.kind == "cmnist":
            raise SpecError("side too small for the glyph plus jitter")
        if self.noise < 0:
            raise SpecError("noise must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Split:
    name: str
    images: np.ndarray
    labels: np.ndarray
    attrs: np.ndarray
    indices: np.ndarray
    spec: DatasetSpec = field(default_factory=DatasetSpec)
    seed: int = 0

    def __len__(self):
        return len(self.labels)

    @property
    def groups(self) -> np.ndarray:
        """(class, spurious attribute) per sample."""
        return np.stack([self.labels, self.attrs], axis=1)

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)

    def pairing_rate(self, pairing=None) -> float:
        """Fraction of samples whose attribute equals ``pairing[label]`` (identity by default)."""
        pairing = np.arange(self.spec.n_classes) if pairing is None else np.asarray(pairing)
        return float(np.mean(self.attrs == pairing[self.labels]))


def derangement(k: int) -> np.ndarray:
    """Cyclic shift: class c is shown with the color of class c + 1."""
    return (np.arange(k) + 1) % k


def _spurious_attrs(rng, labels, k, rho):
    """Attribute = label with probability rho, otherwise uniform over the other values."""
    keep = rng.random(len(labels)) < rho
    other = (labels + rng.integers(1, k, size=len(labels))) % k
    return np.where(keep, labels, other)


def _ood_attrs(rng, labels, k, rho_ood):
    if rho_ood == "flipped":
        return derangement(k)[labels]
    return _spurious_attrs(rng, labels, k, float(rho_ood))


def _render_digits(rng, labels, colors, spec):
    n, side = len(labels), spec.side
    center = (side - 8) // 2
    img = np.zeros((n, side, side, 3))
    rgb = PALETTE[colors]
    fg_white = np.ones(3)
    for i in range(n):
        oy, ox = center + rng.integers(-spec.jitter, spec.jitter + 1, size=2)
        mask = np.zeros((side, side))
        mask[oy:oy + 8, ox:ox + 8] = GLYPHS[labels[i]]
        mask = mask[..., None]
        if spec.color_mode == "background":
            img[i] = mask * fg_white + (1 - mask) * rgb[i]
        elif spec.color_mode == "foreground":
            img[i] = mask * rgb[i]
        else:
            img[i] = mask * rgb[i] + (1 - mask) * 0.35 * rgb[i]
    img += spec.noise * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


def _split_sizes(spec):
    return dict(train=spec.n_train, val=spec.n_val, ood=spec.n_ood)


def _index_offsets(spec):
    sizes = _split_sizes(spec)
    return dict(train=0, val=sizes["train"], ood=sizes["train"] + sizes["val"])


def gen_cmnist_like(spec: DatasetSpec | None = None, seed: int = 0) -> tuple[Split, Split, Split]:
    """Colored-digit benchmark: (train, val, ood)."""
    spec = spec or DatasetSpec()
    spec.validate()
    k = spec.n_classes
    out = []
    offsets = _index_offsets(spec)
    for sid, (name, n) in enumerate(_split_sizes(spec).items()):
        rng = np.random.default_rng([seed, sid])
        labels = rng.integers(0, k, size=n)
        if name == "ood":
            attrs = _ood_attrs(rng, labels, k, spec.rho_ood)
        else:
            attrs = _spurious_attrs(rng, labels, k, spec.rho_train)
        images = _render_digits(rng, labels, attrs, spec)
        idx = offsets[name] + np.arange(n)
        out.append(Split(name, images, labels, attrs, idx, spec, seed))
    return tuple(out)


# --- waterbird-like -----------------------------------------------------------

BIRD_COLORS = np.array([[0.95, 0.95, 0.90], [0.25, 0.25, 0.25], [0.90, 0.75, 0.20], [0.60, 0.40, 0.25]])


def _bird_mask(rng, label, side):
    """Silhouette: class 0 is an upright land bird, class 1 a long-necked water bird."""
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    s = side / 16.0
    cy = side / 2 + rng.uniform(-2, 2) * s
    cx = side / 2 + rng.uniform(-2, 2) * s
    scale = rng.uniform(0.85, 1.15)
    if label == 0:
        body = ((yy - cy) / (3.6 * s * scale)) ** 2 + ((xx - cx) / (2.2 * s * scale)) ** 2 <= 1
        head = ((yy - (cy - 4.2 * s * scale)) ** 2 + (xx - cx) ** 2) <= (1.6 * s * scale) ** 2
        legs = (np.abs(xx - cx) <= 0.6 * s) & (yy > cy + 3 * s * scale) & (yy <= cy + 5.5 * s * scale)
        return body | head | legs
    body = ((yy - cy) / (1.8 * s * scale)) ** 2 + ((xx - cx) / (4.0 * s * scale)) ** 2 <= 1
    neck = (np.abs(xx - (cx + 3.0 * s * scale)) <= 0.7 * s) & (yy < cy) & (yy >= cy - 4.5 * s * scale)
    head = ((yy - (cy - 4.8 * s * scale)) ** 2 + (xx - (cx + 3.8 * s * scale)) ** 2) <= (1.2 * s * scale) ** 2
    return body | neck | head


def _background(rng, attr, side, constant):
    if constant:
        return np.full((side, side, 3), 0.5)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    if attr == 1:  # water: blue with horizontal waves
        phase = rng.uniform(0, 2 * np.pi)
        wave = 0.5 + 0.5 * np.sin(yy * 1.3 + 0.4 * np.sin(xx * 0.7) + phase)
        base = np.array([0.10, 0.30, 0.75])
        return base + wave[..., None] * np.array([0.05, 0.15, 0.20])
    # land: green-brown patches with vertical grass strokes
    patches = rng.random((side // 4 + 1, side // 4 + 1)).repeat(4, 0).repeat(4, 1)[:side, :side]
    grass = (rng.random(side) < 0.4)[None, :] * (yy > side * 0.4)
    base = np.array([0.35, 0.50, 0.15])
    return base + patches[..., None] * np.array([0.20, 0.05, 0.0]) + grass[..., None] * np.array([0.0, 0.2, 0.0])


def _render_birds(rng, labels, attrs, spec):
    n, side = len(labels), spec.side
    img = np.zeros((n, side, side, 3))
    for i in range(n):
        mask = _bird_mask(rng, labels[i], side)[..., None]
        color = BIRD_COLORS[rng.integers(len(BIRD_COLORS))]
        img[i] = mask * color + (1 - mask) * _background(rng, attrs[i], side, spec.foreground_only)
    img += spec.noise * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


def waterbird_spec(**overrides) -> DatasetSpec:
    base = dict(kind="waterbird", n_classes=2, side=16, rho_train=0.95, rho_ood=0.5,
                n_train=4000, n_val=1000, n_ood=2000, noise=0.05)
    base.update(overrides)
    return DatasetSpec(**base)


def gen_waterbird_like(spec: DatasetSpec | None = None, seed: int = 0) -> tuple[Split, Split, Split]:
    """Bird/background benchmark: (train, val, ood); the OOD split has equal group counts."""
    spec = spec or waterbird_spec()
    spec.validate()
    out = []
    offsets = _index_offsets(spec)
    for sid, (name, n) in enumerate(_split_sizes(spec).items()):
        rng = np.random.default_rng([seed, sid])
        if name == "ood":
            groups = np.arange(n) % 4
            rng.shuffle(groups)
            labels, attrs = groups // 2, groups % 2
        else:
            labels = rng.integers(0, 2, size=n)
            attrs = _spurious_attrs(rng, labels, 2, spec.rho_train)
        images = _render_birds(rng, labels, attrs, spec)
        out.append(Split(name, images, labels, attrs, offsets[name] + np.arange(n), spec, seed))
    return tuple(out)


def generate(spec: DatasetSpec, seed: int) -> tuple[Split, Split, Split]:
    return gen_cmnist_like(spec, seed) if spec.kind == "cmnist" else gen_waterbird_like(spec, seed)


# --- file format --------------------------------------------------------------
#
#   bytes 0-7    magic b"CTDSET\x00\x01"
#   bytes 8-9    format version, uint16 little endian
#   bytes 10-13  header length H, uint32 little endian
#   next H       UTF-8 JSON header: split name, spec, seed, n, image shape,
#                sha256 of the payload
#   payload      images float64 LE (n*side*side*3), labels int64 LE (n),
#                attrs int64 LE (n), indices int64 LE (n)

MAGIC = b"CTDSET\x00\x01"
FORMAT_VERSION = 1


def save_split(split: Split, path) -> None:
    arrays = [
        np.ascontiguousarray(split.images, dtype="<f8"),
        np.ascontiguousarray(split.labels, dtype="<i8"),
        np.ascontiguousarray(split.attrs, dtype="<i8"),
        np.ascontiguousarray(split.indices, dtype="<i8"),
    ]
    payload = b"".join(a.tobytes() for a in arrays)
    header = json.dumps({
        "split": split.name, "spec": split.spec.to_dict(), "seed": split.seed, "n": len(split),
        "image_shape": list(split.images.shape[1:]), "sha256": hashlib.sha256(payload).hexdigest(),
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<HI", FORMAT_VERSION, len(header)) + header + payload)
    with open(str(path) + ".csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label", "group"])
        for idx, y, a in zip(split.indices, split.labels, split.attrs):
            writer.writerow([int(idx), int(y), f"{int(y)}-{int(a)}"])


def load_split(path) -> Split:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 14 or blob[:8] != MAGIC:
        raise CorruptFileError(f"{path}: not a dataset file")
    version, hlen = struct.unpack("<HI", blob[8:14])
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(blob[14:14 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CorruptFileError(f"{path}: unreadable header") from None
    payload = blob[14 + hlen:]
    n, shape = header["n"], tuple(header["image_shape"])
    n_pix = n * int(np.prod(shape))
    if len(payload) != 8 * (n_pix + 3 * n):
        raise CorruptFileError(f"{path}: payload truncated ({len(payload)} bytes)")
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CorruptFileError(f"{path}: checksum mismatch")
    images = np.frombuffer(payload, dtype="<f8", count=n_pix).reshape((n,) + shape).astype(np.float64)
    ints = np.frombuffer(payload, dtype="<i8", offset=8 * n_pix).reshape(3, n).astype(np.int64)
    return Split(header["split"], images, ints[0], ints[1], ints[2], DatasetSpec(**header["spec"]), header["seed"])
