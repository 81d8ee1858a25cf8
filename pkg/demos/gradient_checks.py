"""
Finite-difference checks of the hand-written backward passes
============================================================

Compares analytic gradients with central differences for the classifier,
the readout and the VAE at the sizes used in experiments.
"""

import numpy as np

from causaltransport.neural import ErmClassifier, NeuralReadout, Vae, grad_check

rng = np.random.default_rng(0)


def shift_biases(model):
    # keep ReLU inputs away from exactly zero
    for p in model.parameters():
        if p.ndim == 1:
            p += rng.normal(scale=0.1, size=p.shape)
    return model


erm = shift_biases(ErmClassifier(768, 10, (64, 64)))
print("erm    ", grad_check(erm, rng.random((6, 768)), rng.integers(0, 10, 6), coords=40))
ro = shift_biases(NeuralReadout(32, 16, 10, (64, 64)))
print("readout", grad_check(ro, ro.inputs(rng.normal(size=(6, 16)), rng.normal(size=(6, 32))), rng.integers(0, 10, 6)))
vae = shift_biases(Vae(768, 16, 256))
x = (rng.random((4, 768)) > 0.5).astype(float)
print("vae    ", grad_check(vae, x, rng.normal(size=(4, 16)), coords=40))
