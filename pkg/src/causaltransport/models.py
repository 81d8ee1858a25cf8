"""Ready-made and randomly generated models used by the verifiers.

Two graph families appear throughout:

* the bow graph: ``X <- (U_XY, U_X)``, ``Y <- (X, U_XY)``;
* the decomposed graph: ``W <- (U_XY, U_X)``, ``Z <- (W, U_Z)``,
  ``Y <- (Z, U_XY)`` where the image is ``X = (Z, W)``.
"""

from __future__ import annotations

import numpy as np

from .scm import DiscreteScm, Exogenous, TransportPair, Variable, mechanism_table


def bernoulli(p: float) -> np.ndarray:
    return np.array([1.0 - p, p])


def bow_scm(p_uxy, p_ux, f_x, f_y, sizes=None, name="bow") -> DiscreteScm:
    """Bow-graph model from exogenous tables and mechanism tables.

    ``f_x`` is indexed ``[u_xy, u_x]`` and ``f_y`` is indexed ``[x, u_xy]``.
    """
    p_uxy, p_ux = np.asarray(p_uxy, float), np.asarray(p_ux, float)
    f_x, f_y = np.asarray(f_x, np.int64), np.asarray(f_y, np.int64)
    n_x, n_y = sizes if sizes is not None else (int(f_x.max()) + 1, int(f_y.max()) + 1)
    return DiscreteScm(
        [
            Variable("X", n_x, (), ("U_XY", "U_X"), f_x),
            Variable("Y", n_y, ("X",), ("U_XY",), f_y),
        ],
        [Exogenous("U_XY", p_uxy), Exogenous("U_X", p_ux)],
        name,
    )


def bow_demo(p_ux: float = 0.1) -> DiscreteScm:
    """U_XY ~ Bern(0.5), U_X ~ Bern(p_ux), X = U_XY xor U_X, Y = U_XY."""
    f_x = mechanism_table(lambda uxy, ux: uxy ^ ux, (2, 2))
    f_y = mechanism_table(lambda x, uxy: uxy, (2, 2))
    return bow_scm(bernoulli(0.5), bernoulli(p_ux), f_x, f_y, (2, 2), name=f"BowDemo(p_ux={p_ux})")


def bow_pair(p_source: float = 0.1, p_target: float = 0.9) -> TransportPair:
    """Source and target differ only in the nuisance distribution P(U_X)."""
    return TransportPair(bow_demo(p_source), bow_demo(p_target))


def unconfounded_bow_pair(p_source: float = 0.1, p_target: float = 0.9) -> TransportPair:
    """Like :func:`bow_pair` but the label ignores U_XY: Y = X."""
    f_x = mechanism_table(lambda uxy, ux: uxy ^ ux, (2, 2))
    f_y = mechanism_table(lambda x, uxy: x, (2, 2))
    src = bow_scm(bernoulli(0.5), bernoulli(p_source), f_x, f_y, (2, 2), "unconfounded-source")
    tgt = bow_scm(bernoulli(0.5), bernoulli(p_target), f_x, f_y, (2, 2), "unconfounded-target")
    return TransportPair(src, tgt)


def _dirichlet(rng, k):
    return rng.dirichlet(np.ones(k))


def random_bow_scm(rng: np.random.Generator, sizes=(2, 2, 2, 2), name="random-bow") -> DiscreteScm:
    """Random bow-graph model; ``sizes`` is ``(|X|, |Y|, |U_XY|, |U_X|)``."""
    n_x, n_y, n_uxy, n_ux = sizes
    f_x = rng.integers(0, n_x, size=(n_uxy, n_ux))
    f_y = rng.integers(0, n_y, size=(n_x, n_uxy))
    return bow_scm(_dirichlet(rng, n_uxy), _dirichlet(rng, n_ux), f_x, f_y, (n_x, n_y), name)


def random_transport_pair(rng: np.random.Generator, max_size: int = 3) -> TransportPair:
    """Random valid pair: the target redraws f_X and P(U_X), keeps f_Y and P(U_XY)."""
    sizes = tuple(int(s) for s in rng.integers(2, max_size + 1, size=4))
    source = random_bow_scm(rng, sizes, "random-source")
    target = source.copy()
    target.name = "random-target"
    x = target.variable("X")
    x.table = rng.integers(0, sizes[0], size=x.table.shape)
    target.exogenous_var("U_X").probs = _dirichlet(rng, sizes[3])
    return TransportPair(source, target)


def decomposed_scm(p_uxy, p_ux, p_uz, f_w, f_z, f_y, sizes, name="decomposed") -> DiscreteScm:
    """Decomposed-image model.

    Tables are indexed ``f_w[u_xy, u_x]``, ``f_z[w, u_z]``, ``f_y[z, u_xy]``;
    ``sizes`` is ``(|Z|, |W|, |Y|)``.
    """
    n_z, n_w, n_y = sizes
    return DiscreteScm(
        [
            Variable("W", n_w, (), ("U_XY", "U_X"), np.asarray(f_w, np.int64)),
            Variable("Z", n_z, ("W",), ("U_Z",), np.asarray(f_z, np.int64)),
            Variable("Y", n_y, ("Z",), ("U_XY",), np.asarray(f_y, np.int64)),
        ],
        [Exogenous("U_XY", p_uxy), Exogenous("U_X", p_ux), Exogenous("U_Z", p_uz)],
        name,
    )


def random_decomposed_scm(rng: np.random.Generator, max_size: int = 4, name="random-decomposed") -> DiscreteScm:
    n_z = int(rng.integers(2, max_size + 1))
    n_w = int(rng.integers(1, max_size + 1))
    n_y = int(rng.integers(2, max_size + 1))
    n_uxy, n_ux, n_uz = (int(k) for k in rng.integers(1, 4, size=3))
    return decomposed_scm(
        _dirichlet(rng, n_uxy), _dirichlet(rng, n_ux), _dirichlet(rng, n_uz),
        rng.integers(0, n_w, size=(n_uxy, n_ux)),
        rng.integers(0, n_z, size=(n_w, n_uz)),
        rng.integers(0, n_y, size=(n_z, n_uxy)),
        (n_z, n_w, n_y), name,
    )
