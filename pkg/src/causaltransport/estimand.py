"""Causal effect of an image on its label through a learned representation.

With an image decomposed as ``x = (z, w)`` the interventional label
distribution is

    P(y | do(x)) = sum_r P^(r | x) sum_x' P^(y | r, x') P(x')

where ``P^(r | x)`` is a representation model and ``P^(y | r, x')`` a readout
that takes the causal content from ``r`` and the spurious content from a
second image ``x'``.  This module evaluates that sum exactly for finite
oracle models, cross-checks it against backdoor adjustment and graph
mutilation, and provides the Monte-Carlo evaluator used with neural models.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import DomainError, EnumerationError, PoolError, StructureError
from .scm import (
    DiscreteScm,
    DistTable,
    conditional,
    interventional_distribution,
    joint_distribution,
    validate_scm,
)


@dataclass(frozen=True)
class FactoredSample:
    """An image value split into causal part ``z`` and spurious part ``w``."""

    z: object
    w: object

    @property
    def x(self) -> tuple:
        return (self.z, self.w)

    @classmethod
    def from_x(cls, x) -> "FactoredSample":
        z, w = x
        return cls(z, w)


class RepresentationModel(Protocol):
    def sample(self, x, rng: np.random.Generator): ...

    def support(self, x) -> list[tuple[object, float]]: ...


class ReadoutModel(Protocol):
    n_labels: int

    def predict_proba(self, r, x_primes) -> np.ndarray: ...


@dataclass
class DoEstimate:
    dist: np.ndarray
    mode: str
    n_i: int | None = None
    n_j: int | None = None
    seed: int | None = None

    @property
    def label(self) -> int:
        return predict_class(self)

    def csv_row(self, query_id) -> list:
        return [query_id, self.mode, self.n_i, self.n_j, self.seed, *map(repr, map(float, self.dist)), self.label]


def write_estimates(path, estimates: Sequence[tuple[object, DoEstimate]]):
    """One CSV row per estimate: query id, mode, n_i, n_j, seed, P(y) per label, argmax."""
    n_labels = max(len(e.dist) for _, e in estimates)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "mode", "n_i", "n_j", "seed"] + [f"p{k}" for k in range(n_labels)] + ["predicted"])
        for qid, est in estimates:
            writer.writerow(est.csv_row(qid))


def predict_class(est: DoEstimate) -> int:
    """Most probable label; ties go to the lowest index."""
    return int(np.argmax(np.asarray(est.dist)))


# --- oracle models ---------------------------------------------------------------


class OracleRepresentation:
    """Deterministic representation r = z, which loses no causal information."""

    def sample(self, x, rng=None):
        return x[0]

    def support(self, x):
        return [(x[0], 1.0)]


class OracleReadout:
    """Readout returning the true labeling probability P(y | z = r, w of x')."""

    def __init__(self, table: np.ndarray):
        self.table = np.asarray(table, dtype=np.float64)  # [z, w, y]
        self.n_labels = self.table.shape[2]

    def predict_proba(self, r, x_primes) -> np.ndarray:
        x_primes = np.asarray(x_primes, dtype=np.int64).reshape(-1, 2)
        return self.table[int(r), x_primes[:, 1]]


def check_decomposed(scm: DiscreteScm, z="Z", w="W", y="Y"):
    """Raise :class:`StructureError` unless the model has the decomposed-image shape.

    Required: endogenous variables exactly {Z, W, Y}; W has no endogenous
    parents; Z's only possible parent is W; Y's only possible parent is Z;
    Z's exogenous inputs are shared with neither W nor Y.
    """
    report = validate_scm(scm)
    if not report.ok:
        raise StructureError(f"invalid SCM: {report}")
    names = set(scm.endogenous_names)
    if names != {z, w, y}:
        raise StructureError(f"expected endogenous variables {{{z}, {w}, {y}}}, found {sorted(names)}")
    vz, vw, vy = scm.variable(z), scm.variable(w), scm.variable(y)
    if vw.parents:
        raise StructureError(f"{w} must not have endogenous parents, has {vw.parents}")
    if not set(vz.parents) <= {w}:
        raise StructureError(f"{z} may only depend on {w}, has {vz.parents}")
    if not set(vy.parents) <= {z}:
        raise StructureError(f"{y} may only depend on {z}, has {vy.parents}")
    shared = set(vz.exo) & (set(vw.exo) | set(vy.exo))
    if shared:
        raise StructureError(f"{z} shares exogenous inputs {sorted(shared)}; its noise must be private")


def label_table(scm: DiscreteScm, z="Z", w="W", y="Y") -> np.ndarray:
    """P(y | z, w) for every (z, w), shape ``[|Z|, |W|, |Y|]``.

    Cells with positive observational mass use the observational conditional.
    Unvisited cells are filled from the mechanism itself: P(y | do(z), w),
    which agrees with the observational value wherever both exist because Z's
    noise is private.  If w itself has no mass, P(y | do(z)) is used.
    """
    check_decomposed(scm, z, w, y)
    joint = joint_distribution(scm, [z, w, y])
    n_z, n_w, n_y = joint.sizes
    out = np.empty((n_z, n_w, n_y))
    for zi in range(n_z):
        mutilated = None
        for wi in range(n_w):
            if joint.probs[zi, wi].sum() > 0.0:
                out[zi, wi] = conditional(joint, y, {z: zi, w: wi}).vector()
                continue
            if mutilated is None:
                mutilated = interventional_distribution(scm, {z: zi}, [w, y])
            if mutilated.probs[wi].sum() > 0.0:
                out[zi, wi] = conditional(mutilated, y, {w: wi}).vector()
            else:
                out[zi, wi] = mutilated.marginal([y]).vector()
    return out


def oracle_models_from_scm(scm: DiscreteScm, z="Z", w="W", y="Y"):
    """Representation and readout that satisfy the sufficiency and selectivity assumptions exactly."""
    return OracleRepresentation(), OracleReadout(label_table(scm, z, w, y))


def image_prior(scm: DiscreteScm, z="Z", w="W") -> DistTable:
    """True marginal P(x) = P(z, w)."""
    return joint_distribution(scm, [z, w])


def pool_prior(pool, sizes: tuple[int, int], scope=("Z", "W")) -> DistTable:
    """Empirical distribution of a pool of (z, w) pairs."""
    pool = np.asarray(pool, dtype=np.int64).reshape(-1, 2)
    if len(pool) == 0:
        raise PoolError("pool is empty")
    counts = np.zeros(sizes)
    np.add.at(counts, (pool[:, 0], pool[:, 1]), 1.0)
    return DistTable(scope, counts / len(pool))


# --- exact evaluation ------------------------------------------------------------


def exact_do_estimate(rep, readout, x, x_prior: DistTable) -> DoEstimate:
    """Evaluate the representation estimand by full double enumeration."""
    support = getattr(rep, "support", None)
    if support is None:
        raise EnumerationError("representation model has no enumerable support")
    try:
        r_support = support(x)
    except NotImplementedError:
        raise EnumerationError("representation model has no enumerable support") from None
    probs = x_prior.probs
    cells = np.argwhere(probs > 0.0)
    weights = probs[tuple(cells.T)]
    dist = np.zeros(readout.n_labels)
    for r, p_r in r_support:
        if p_r == 0.0:
            continue
        dist += p_r * (weights @ readout.predict_proba(r, cells))
    return DoEstimate(dist, "exact")


def backdoor_adjustment(scm: DiscreteScm, z: int, zname="Z", wname="W", yname="Y") -> DistTable:
    """sum_w' P(y | z, w') P(w')."""
    n_z = scm.variable(zname).size if zname in scm.endogenous_names else 0
    if not 0 <= int(z) < n_z:
        raise DomainError(f"z={z} outside domain of {zname} (size {n_z})")
    table = label_table(scm, zname, wname, yname)
    p_w = joint_distribution(scm, [wname]).vector()
    return DistTable((yname,), p_w @ table[int(z)])


def marginalized_adjustment(scm: DiscreteScm, z: int, zname="Z", wname="W", yname="Y") -> DistTable:
    """sum_{z', w'} P(y | z, w') P(z', w'), the expanded form of the adjustment."""
    table = label_table(scm, zname, wname, yname)
    p_zw = joint_distribution(scm, [zname, wname]).probs
    dist = np.einsum("ab,by->y", p_zw, table[int(z)])
    return DistTable((yname,), dist)


# --- Monte-Carlo evaluation ------------------------------------------------------


def _pool_draws(rng, pool_size, n_j, sampling):
    if sampling == "replacement":
        return rng.integers(0, pool_size, size=n_j)
    if sampling == "stratified":
        reps = -(-n_j // pool_size)
        return np.concatenate([rng.permutation(pool_size) for _ in range(reps)])[:n_j]
    raise ValueError(f"unknown sampling mode {sampling!r}")


def mc_do_estimate(rep, readout, x, pool, n_i: int, n_j: int, seed: int,
                   sampling: str = "replacement") -> DoEstimate:
    """Monte-Carlo version of the estimand.

    Draws ``n_i`` representations of ``x``; for each, draws ``n_j`` images
    from ``pool`` uniformly and averages the readout's label probabilities
    with weight ``1 / (n_i * n_j)``.

    ``sampling="replacement"`` draws pool members i.i.d.  ``"stratified"``
    walks through fresh random permutations of the pool, so when ``n_j`` is a
    multiple of the pool size every member is used equally often and the
    result equals the exact sum under the pool's empirical prior.
    """
    if n_i < 1 or n_j < 1:
        raise ValueError("n_i and n_j must be >= 1")
    pool = np.asarray(pool)
    if len(pool) == 0:
        raise PoolError("pool is empty")
    rng = np.random.default_rng(seed)
    acc = np.zeros(readout.n_labels)
    for _ in range(n_i):
        r = rep.sample(x, rng)
        idx = _pool_draws(rng, len(pool), n_j, sampling)
        acc += readout.predict_proba(r, pool[idx]).sum(axis=0)
    acc /= n_i * n_j
    return DoEstimate(acc / acc.sum(), "monte-carlo", n_i, n_j, seed)
