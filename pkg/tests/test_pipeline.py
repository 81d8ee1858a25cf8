"""Desk-scale pipeline checks on one CMNIST-like seed with the default config."""

import numpy as np
import pytest

from causaltransport.config import parse_config
from causaltransport.harness import _train_config, evaluate_method, train_seed
from causaltransport.neural import train_readout
from causaltransport.neural.mlp import accuracy
from causaltransport.neural.readout import NoiseRepresentation, ZeroRepresentation


@pytest.fixture(scope="module")
def trained():
    cfg = parse_config("kind = cmnist\nseeds = 0")
    return cfg, train_seed(cfg, 0)


def ood_with(cfg, t, rep, n_i=None, n_j=None):
    """Train a readout on the same pool with ``rep`` in place of the VAE; return its OOD accuracy."""
    stats = rep.stats(t.splits["train"].images)
    ro = train_readout(t.pool_features, t.splits["train"].labels, stats, rep, _train_config(cfg, t.seed),
                       cfg.dataset.n_classes, tuple(cfg.readout.hidden), partner=cfg.readout.partner)
    ood = t.splits["ood"]
    proba = ro.causal_proba(rep, rep.stats(ood.images), t.pool_features, n_i or cfg.ni, n_j or cfg.nj, seed=(t.seed, 3))
    return accuracy(np.argmax(proba, axis=1), ood.labels)


def test_composed_predictor_beats_chance(trained):
    cfg, t = trained
    row = evaluate_method(t, cfg, "ablation", splits=("train_eval",))
    assert row["train_acc"] >= 0.10 + 0.40


def test_erm_in_distribution_and_collapse(trained):
    cfg, t = trained
    row = evaluate_method(t, cfg, "erm", splits=("id", "ood"))
    assert row["id_acc"] >= 0.95
    assert row["ood_acc"] <= 0.30


def test_noise_representation_collapses(trained):
    cfg, t = trained
    erm_ood = evaluate_method(t, cfg, "erm", splits=("ood",))["ood_acc"]
    assert ood_with(cfg, t, NoiseRepresentation(cfg.vae.latent_dim)) <= erm_ood + 0.05


def test_parameter_budget(trained):
    cfg, t = trained
    assert t.readout.n_params <= cfg.readout.param_budget
    assert t.erm.n_params <= cfg.readout.param_budget


def test_xprime_branch_alone_is_worse(trained):
    cfg, t = trained
    full = evaluate_method(t, cfg, "ours", splits=("ood",))["ood_acc"]
    assert ood_with(cfg, t, ZeroRepresentation(cfg.vae.latent_dim)) < full
