"""Checks comparing associational and interventional quantities across domains.

Gaps are total-variation distances between distributions over the outcome,
computed per treatment value by exact enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.special import softmax

from .errors import BudgetExhaustedError, QueryError, StructurallyIdentifiableError
from .models import bow_scm
from .scm import (
    DiscreteScm,
    TransportPair,
    conditional,
    interventional_distribution,
    joint_distribution,
    total_variation,
)


@dataclass
class GapReport:
    per_x: dict[int, float]
    skipped: list[int] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def max_gap(self) -> float:
        return max(self.per_x.values()) if self.per_x else 0.0

    @property
    def argmax_x(self) -> int | None:
        # ties resolve to the lowest x
        if not self.per_x:
            return None
        best = self.max_gap
        return min(x for x, g in self.per_x.items() if g == best)


def association_gap(pair: TransportPair) -> GapReport:
    """Per-x TV between P(Y | X=x) in the source and in the target domain.

    x values with zero probability in either domain are skipped and listed.
    """
    x, y = pair.treatment, pair.outcome
    joints = [joint_distribution(pair.domain(s), [x, y]) for s in (0, 1)]
    n_x = joints[0].sizes[0]
    per_x, skipped = {}, []
    for value in range(n_x):
        if any(j.probs[value].sum() <= 0.0 for j in joints):
            skipped.append(value)
            continue
        src, tgt = (conditional(j, y, {x: value}).vector() for j in joints)
        per_x[value] = total_variation(src, tgt)
    return GapReport(per_x, skipped, pair.violations() if not pair.check else [])


def causal_invariance_gap(pair: TransportPair) -> GapReport:
    """Per-x TV between P(Y | do(X=x)) in the source and in the target domain."""
    x, y = pair.treatment, pair.outcome
    n_x = pair.source.variable(x).size
    per_x = {}
    for value in range(n_x):
        src, tgt = (interventional_distribution(pair.domain(s), {x: value}, y).vector() for s in (0, 1))
        per_x[value] = total_variation(src, tgt)
    return GapReport(per_x, [], pair.violations() if not pair.check else [])


@dataclass
class NonIdWitness:
    """Two bow-graph models that agree on P(X, Y) but not on P(Y | do(X))."""

    scm_a: DiscreteScm
    scm_b: DiscreteScm
    joint_tv: float
    do_gap: float
    iterations: int = 0
    seed: int | None = None


def witness_gaps(scm_a: DiscreteScm, scm_b: DiscreteScm) -> tuple[float, float]:
    """(joint TV, max-over-x interventional TV) recomputed with the enumeration engine."""
    joint_tv = joint_distribution(scm_a, ["X", "Y"]).tv(joint_distribution(scm_b, ["X", "Y"]))
    n_x = scm_a.variable("X").size
    do_gap = max(
        interventional_distribution(scm_a, {"X": v}, "Y").tv(interventional_distribution(scm_b, {"X": v}, "Y"))
        for v in range(n_x)
    )
    return joint_tv, do_gap


def _onehot(table, k):
    return np.eye(k)[table]


class _BowFamily:
    """Closed-form joint and interventional tables for fixed mechanism tables."""

    def __init__(self, f_x, f_y, n_x, n_y):
        self.fx = _onehot(f_x, n_x)  # [u_xy, u_x, x]
        self.fy = _onehot(f_y, n_y)  # [x, u_xy, y]

    def joint(self, p_uxy, p_ux):
        # P(x, y) = sum_{u, v} P(u) P(v) [f_x(u, v) = x] [f_y(x, u) = y]
        px_given_u = np.einsum("v,uvx->ux", p_ux, self.fx)
        return np.einsum("u,ux,xuy->xy", p_uxy, px_given_u, self.fy)

    def do(self, p_uxy):
        return np.einsum("u,xuy->xy", p_uxy, self.fy)


def nonidentifiability_witness(domain_sizes=(2, 2, 2, 2), budget: int = 100_000, seed: int = 1,
                               min_gap: float = 0.1, tol: float = 1e-9, min_prob: float = 0.01) -> NonIdWitness:
    """Search for two bow-graph models with equal P(X, Y) and different P(Y | do(X)).

    Each iteration draws random mechanism tables for both models and random
    starting exogenous parameters, projects the parameters onto the
    joint-matching set with a bounded least-squares solve, and keeps the pair
    if the joint TV is within ``tol`` and the interventional gap reaches
    ``min_gap``.  Degenerate pairs are rejected: every exogenous state and
    every treatment value must keep probability at least ``min_prob``, so the
    disagreement is never confined to an unobservable x.  The winning pair is
    re-checked through full enumeration.
    """
    n_x, n_y, n_uxy, n_ux = (int(s) for s in domain_sizes)
    if n_x < 2 or n_y < 2:
        raise QueryError("X and Y must both have at least two values")
    if budget < 1:
        raise QueryError("budget must be >= 1")
    if n_uxy < 2:
        raise StructurallyIdentifiableError(
            "with no shared exogenous variable between X and Y, P(Y|do(X)) = P(Y|X) in every model"
        )
    rng = np.random.default_rng(seed)
    sizes = [n_uxy, n_ux, n_uxy, n_ux]
    splits = np.cumsum(sizes)[:-1]

    for it in range(1, budget + 1):
        tables = [
            rng.integers(0, n_x, size=(n_uxy, n_ux)), rng.integers(0, n_y, size=(n_x, n_uxy)),
            rng.integers(0, n_x, size=(n_uxy, n_ux)), rng.integers(0, n_y, size=(n_x, n_uxy)),
        ]
        fam_a = _BowFamily(tables[0], tables[1], n_x, n_y)
        fam_b = _BowFamily(tables[2], tables[3], n_x, n_y)

        def unpack(theta):
            return [softmax(t) for t in np.split(theta, splits)]

        def residual(theta):
            pa_uxy, pa_ux, pb_uxy, pb_ux = unpack(theta)
            return (fam_a.joint(pa_uxy, pa_ux) - fam_b.joint(pb_uxy, pb_ux)).ravel()

        theta0 = rng.normal(scale=1.5, size=int(sum(sizes)))
        sol = least_squares(residual, theta0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
        pa_uxy, pa_ux, pb_uxy, pb_ux = unpack(sol.x)
        joint_tv = 0.5 * np.abs(residual(sol.x)).sum()
        if joint_tv > tol:
            continue
        p_x = fam_a.joint(pa_uxy, pa_ux).sum(axis=1)
        if min(p.min() for p in (pa_uxy, pa_ux, pb_uxy, pb_ux, p_x)) < min_prob:
            continue
        do_gap = 0.5 * np.abs(fam_a.do(pa_uxy) - fam_b.do(pb_uxy)).sum(axis=1).max()
        if do_gap < min_gap:
            continue
        scm_a = bow_scm(pa_uxy, pa_ux, tables[0], tables[1], (n_x, n_y), "witness-A")
        scm_b = bow_scm(pb_uxy, pb_ux, tables[2], tables[3], (n_x, n_y), "witness-B")
        joint_tv, do_gap = witness_gaps(scm_a, scm_b)
        if joint_tv <= tol and do_gap >= min_gap:
            return NonIdWitness(scm_a, scm_b, joint_tv, do_gap, it, seed)
    raise BudgetExhaustedError(f"no witness found within {budget} iterations (seed {seed})")
