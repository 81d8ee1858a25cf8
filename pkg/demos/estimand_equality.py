"""
Intervening through a representation
====================================

On a decomposed model (spurious factor W drives the causal factor Z, and a
hidden U_XY drives both W and the label Y) the label distribution under
do(Z, W) can be computed two ways: by cutting the graph, or by averaging a
readout P(y | r, x') over images x' from the observational prior.  They agree
exactly.  The Monte-Carlo version approaches the same number as n_j grows.
"""

import numpy as np

from causaltransport.estimand import exact_do_estimate, image_prior, mc_do_estimate, oracle_models_from_scm, pool_prior
from causaltransport.models import decomposed_scm
from causaltransport.scm import interventional_distribution, mechanism_table, joint_distribution, total_variation

# the label copies z shifted by U_XY, which also sets W: a confounded instance
scm = decomposed_scm(
    np.array([0.5, 0.3, 0.2]), np.array([0.7, 0.3]), np.array([0.8, 0.2]),
    mechanism_table(lambda u, v: (u + v) % 3, (3, 2)),
    mechanism_table(lambda w, uz: (w + uz) % 3, (3, 2)),
    mechanism_table(lambda z, u: (z + u) % 3, (3, 3)),
    (3, 3, 3),
)
rng = np.random.default_rng(0)
rep, readout = oracle_models_from_scm(scm)
prior = image_prior(scm)
x = (1, 0)

via_readout = exact_do_estimate(rep, readout, x, prior).dist
via_surgery = interventional_distribution(scm, {"Z": x[0], "W": x[1]}, "Y").vector()
print("readout average:", via_readout.round(4))
print("graph surgery:  ", via_surgery.round(4))
print("TV:", total_variation(via_readout, via_surgery))

# Monte-Carlo estimate against a finite pool of observed images
joint = joint_distribution(scm, ["Z", "W"]).probs
cells = rng.choice(joint.size, size=200, p=joint.ravel())
pool = np.stack(np.unravel_index(cells, joint.shape), axis=1)
exact = exact_do_estimate(rep, readout, x, pool_prior(pool, joint.shape)).dist
for n_j in (1, 4, 16, 64, 256):
    err = np.mean([total_variation(mc_do_estimate(rep, readout, x, pool, 1, n_j, s).dist, exact) for s in range(50)])
    print(f"n_j={n_j:4d}  mean TV to exact {err:.4f}")
