"""Experiment configuration files.

One ``key = value`` pair per line; ``#`` starts a comment.  Keys:

    kind                verify-props | verify-theorem | cmnist | waterbird | sweep-nj
    seeds               comma-separated integers
    ni, nj              Monte-Carlo sample counts of the full method
    nj_values           comma-separated n_j grid for sweep-nj
    methods             comma-separated subset of erm, ablation, ours
    out                 output directory
    dataset.<field>     any DatasetSpec field (dataset.kind is implied by kind,
                        except for sweep-nj where it defaults to cmnist)
    train.<field>       lr, batch_size, epochs, momentum, weight_decay
                        (shared by the ERM baseline and the readout)
    vae.<field>         latent_dim, hidden, lr, epochs, batch_size, momentum
    readout.<field>     hidden (comma list), patch_size, n_patches, features,
                        partner (same-class | same-instance),
                        inference (random | same-class), param_budget,
                        select_ni, select_nj, train_eval_size
    representation      vae | features
    features.<split>    .npy feature file for train, val and ood when
                        representation = features
    props.<field>       random_pairs, random_seed, witness_budget, witness_seed
    theorem.<field>     n_scms, seed
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .datasets import DatasetSpec, waterbird_spec
from .errors import ConfigError, SpecError

KINDS = ("verify-props", "verify-theorem", "cmnist", "waterbird", "sweep-nj")
METHODS = ("erm", "ablation", "ours")


@dataclass
class VaeSettings:
    latent_dim: int = 16
    hidden: int = 256
    lr: float = 0.0005
    epochs: int = 40
    batch_size: int = 64
    momentum: float = 0.9


@dataclass
class ReadoutSettings:
    hidden: tuple = (64, 64)
    patch_size: int = 4
    n_patches: int = 16
    features: int = 32
    partner: str = "same-class"
    inference: str = "random"
    param_budget: int = 60000
    select_ni: int = 1
    select_nj: int = 1
    train_eval_size: int = 2000


@dataclass
class TrainSettings:
    lr: float = 0.05
    batch_size: int = 64
    epochs: int = 10
    momentum: float = 0.9
    weight_decay: float = 0.0


@dataclass
class PropsSettings:
    random_pairs: int = 200
    random_seed: int = 0
    witness_budget: int = 100000
    witness_seed: int = 1


@dataclass
class TheoremSettings:
    n_scms: int = 200
    seed: int = 0


@dataclass
class ExperimentConfig:
    kind: str = "cmnist"
    seeds: tuple = (0,)
    ni: int = 10
    nj: int = 256
    nj_values: tuple = (1, 4, 16, 64)
    methods: tuple = METHODS
    out: str = "out"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainSettings = field(default_factory=TrainSettings)
    vae: VaeSettings = field(default_factory=VaeSettings)
    readout: ReadoutSettings = field(default_factory=ReadoutSettings)
    representation: str = "vae"
    features: dict = field(default_factory=dict)
    props: PropsSettings = field(default_factory=PropsSettings)
    theorem: TheoremSettings = field(default_factory=TheoremSettings)

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.ni < 1 or self.nj < 1:
            raise ConfigError("ni and nj must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.nj_values or any(v < 1 for v in self.nj_values):
            raise ConfigError("nj_values must be a nonempty list of positive integers")
        if list(self.nj_values) != sorted(self.nj_values):
            raise ConfigError("nj_values must be ascending")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {bad}" if bad else "no methods selected")
        if self.representation not in ("vae", "features"):
            raise ConfigError(f"unknown representation {self.representation!r}")
        if self.representation == "features":
            missing = [s for s in ("train", "val", "ood") if s not in self.features]
            if missing:
                raise ConfigError(f"features.{missing[0]} is required when representation = features")
        if self.readout.partner not in ("same-class", "same-instance"):
            raise ConfigError(f"unknown readout.partner {self.readout.partner!r}")
        if self.readout.inference not in ("random", "same-class"):
            raise ConfigError(f"unknown readout.inference {self.readout.inference!r}")
        if self.train.lr <= 0 or self.train.batch_size < 1 or self.train.epochs < 0:
            raise ConfigError("train.lr must be positive, train.batch_size >= 1, train.epochs >= 0")
        if self.kind in ("cmnist", "waterbird", "sweep-nj"):
            try:
                self.dataset.validate()
            except SpecError as exc:
                raise ConfigError(f"dataset: {exc}") from None
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        return d

    def hash(self) -> str:
        """Digest of everything except the output directory."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def dumps(self) -> str:
        """Config file text that loads back to an equal config."""
        lines = [f"kind = {self.kind}", f"seeds = {_join(self.seeds)}", f"ni = {self.ni}", f"nj = {self.nj}",
                 f"nj_values = {_join(self.nj_values)}", f"methods = {_join(self.methods)}",
                 f"out = {self.out}", f"representation = {self.representation}"]
        for section in ("dataset", "train", "vae", "readout", "props", "theorem"):
            for key, value in dataclasses.asdict(getattr(self, section)).items():
                lines.append(f"{section}.{key} = {_join(value) if isinstance(value, (list, tuple)) else value}")
        for split, path in sorted(self.features.items()):
            lines.append(f"features.{split} = {path}")
        return "\n".join(lines) + "\n"


def _join(values) -> str:
    return ",".join(str(v) for v in values)


def _coerce(text: str, current):
    if isinstance(current, bool):
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if current and isinstance(current[0], int):
            return tuple(int(t) for t in items)
        return tuple(items)
    return text


def _set(obj, key: str, text: str, where: str):
    if not hasattr(obj, key) or key.startswith("_"):
        raise ConfigError(f"{where}: unknown key {key!r}")
    current = getattr(obj, key)
    try:
        if key == "rho_ood":
            value = text if text == "flipped" else float(text)
        else:
            value = _coerce(text, current)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
    setattr(obj, key, value)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        entries.append((lineno, key, value))
    kind = next((v for _, k, v in entries if k == "kind"), "cmnist")
    dataset_kind = next((v for _, k, v in entries if k == "dataset.kind"), None)
    if dataset_kind is None:
        dataset_kind = "waterbird" if kind == "waterbird" else "cmnist"
    cfg = ExperimentConfig(kind=kind, dataset=waterbird_spec() if dataset_kind == "waterbird" else DatasetSpec())
    for lineno, key, value in entries:
        where = f"{source}:{lineno}"
        if "." in key:
            section, name = key.split(".", 1)
            if section == "features":
                cfg.features[name] = value
            elif section in ("dataset", "train", "vae", "readout", "props", "theorem"):
                _set(getattr(cfg, section), name, value, where)
            else:
                raise ConfigError(f"{where}: unknown section {section!r}")
        else:
            _set(cfg, key, value, where)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
