"""Finite-domain structural causal models with exact enumeration.

A model is a set of endogenous variables, each computed by a deterministic
lookup table over (parent values, exogenous values), plus independent
exogenous variables with explicit probability tables.  Every query is answered
by enumerating the full exogenous product space, so results are exact up to
floating point accumulation.
"""

from __future__ import annotations

import csv
import graphlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EnumerationTooLargeError,
    InvalidInterventionError,
    QueryError,
    ScmError,
    TransportPairError,
    UndefinedConditionalError,
)

NORM_TOL = 1e-12
MAX_EXOGENOUS_STATES = 2**24


@dataclass
class Exogenous:
    name: str
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)

    @property
    def size(self) -> int:
        return int(self.probs.shape[0])


@dataclass
class Variable:
    """Endogenous variable with a deterministic mechanism table.

    ``table`` has shape ``parent sizes + exogenous sizes`` and holds the
    variable's value for every input combination.
    """

    name: str
    size: int
    parents: tuple[str, ...] = ()
    exo: tuple[str, ...] = ()
    table: np.ndarray = field(default_factory=lambda: np.zeros((), dtype=np.int64))

    def __post_init__(self):
        self.parents = tuple(self.parents)
        self.exo = tuple(self.exo)
        self.table = np.asarray(self.table)


def mechanism_table(fn: Callable[..., int], input_sizes: Sequence[int]) -> np.ndarray:
    """Tabulate ``fn(*inputs)`` over the full input product space."""
    table = np.empty(tuple(input_sizes), dtype=np.int64)
    for idx in itertools.product(*(range(s) for s in input_sizes)):
        table[idx] = fn(*idx)
    return table


class DiscreteScm:
    """Finite-domain SCM.  Construction does not validate; see :func:`validate_scm`."""

    def __init__(self, variables: Iterable[Variable], exogenous: Iterable[Exogenous], name: str = ""):
        self.variables = list(variables)
        self.exogenous = list(exogenous)
        self.name = name

    def __repr__(self):
        names = ", ".join(v.name for v in self.variables)
        return f"DiscreteScm({self.name!r}: {names})"

    @property
    def endogenous_names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def exogenous_names(self) -> list[str]:
        return [u.name for u in self.exogenous]

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise QueryError(f"unknown endogenous variable {name!r}")

    def exogenous_var(self, name: str) -> Exogenous:
        for u in self.exogenous:
            if u.name == name:
                return u
        raise QueryError(f"unknown exogenous variable {name!r}")

    def sizes(self, names: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.variable(n).size for n in names)

    def topological_order(self) -> list[Variable]:
        graph = {v.name: set(v.parents) for v in self.variables}
        order = list(graphlib.TopologicalSorter(graph).static_order())
        by_name = {v.name: v for v in self.variables}
        return [by_name[n] for n in order]

    def copy(self) -> "DiscreteScm":
        variables = [Variable(v.name, v.size, v.parents, v.exo, v.table.copy()) for v in self.variables]
        exogenous = [Exogenous(u.name, u.probs.copy()) for u in self.exogenous]
        return DiscreteScm(variables, exogenous, self.name)

    def do(self, assignment: Mapping[str, int]) -> "DiscreteScm":
        """Mutilated model: each intervened variable becomes a constant."""
        exo_names = set(self.exogenous_names)
        for name, value in assignment.items():
            if name in exo_names:
                raise InvalidInterventionError(f"cannot intervene on exogenous variable {name!r}")
            var = self.variable(name)
            if not 0 <= int(value) < var.size:
                raise InvalidInterventionError(f"value {value} outside domain of {name!r} (size {var.size})")
        variables = []
        for v in self.variables:
            if v.name in assignment:
                const = np.array(int(assignment[v.name]), dtype=np.int64)
                variables.append(Variable(v.name, v.size, (), (), const))
            else:
                variables.append(v)
        label = ",".join(f"{k}={int(val)}" for k, val in assignment.items())
        return DiscreteScm(variables, self.exogenous, f"{self.name}|do({label})")


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(self.violations)


def validate_scm(scm: DiscreteScm) -> ValidationReport:
    """List every invariant violation; an empty report means the model is valid."""
    out: list[str] = []
    endo = scm.endogenous_names
    exo = scm.exogenous_names
    for kind, names in (("endogenous", endo), ("exogenous", exo)):
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            out.append(f"duplicate {kind} names: {dupes}")
    clash = sorted(set(endo) & set(exo))
    if clash:
        out.append(f"names used as both endogenous and exogenous: {clash}")

    exo_sizes = {}
    for u in scm.exogenous:
        if u.probs.ndim != 1 or u.size < 1:
            out.append(f"exogenous {u.name}: probability table must be a nonempty vector")
            continue
        exo_sizes[u.name] = u.size
        if np.any(u.probs < 0) or not np.all(np.isfinite(u.probs)):
            out.append(f"exogenous {u.name}: negative or non-finite probability")
        total = float(u.probs.sum())
        if abs(total - 1.0) > NORM_TOL:
            out.append(f"exogenous {u.name}: normalization violated, probabilities sum to {total!r}")

    endo_sizes = {}
    for v in scm.variables:
        if v.size < 1:
            out.append(f"variable {v.name}: domain size must be >= 1, got {v.size}")
        endo_sizes[v.name] = v.size
    for v in scm.variables:
        missing = [p for p in v.parents if p not in endo_sizes]
        missing += [u for u in v.exo if u not in exo_sizes]
        if missing:
            out.append(f"variable {v.name}: unknown inputs {missing}")
            continue
        expected = tuple(endo_sizes[p] for p in v.parents) + tuple(exo_sizes[u] for u in v.exo)
        if v.table.shape != expected:
            out.append(f"variable {v.name}: mechanism table not total, shape {v.table.shape} != {expected}")
            continue
        if v.table.size and not np.issubdtype(v.table.dtype, np.integer):
            out.append(f"variable {v.name}: mechanism table must hold integers")
        elif v.table.size and (v.table.min() < 0 or v.table.max() >= v.size):
            out.append(f"variable {v.name}: mechanism value outside domain [0, {v.size})")

    try:
        scm.topological_order()
    except graphlib.CycleError as exc:
        out.append(f"acyclicity violated: cycle {exc.args[1]}")
    return ValidationReport(out)


def _require_valid(scm: DiscreteScm):
    report = validate_scm(scm)
    if not report.ok:
        raise ScmError(f"invalid SCM {scm.name!r}: {report}")


@dataclass
class DistTable:
    """Exact probability table over named finite variables."""

    scope: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        self.scope = tuple(self.scope)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != len(self.scope):
            raise QueryError(f"table rank {self.probs.ndim} does not match scope {self.scope}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.probs.shape

    def total(self) -> float:
        return float(self.probs.sum())

    def prob(self, assignment: Mapping[str, int] | None = None, **kwargs) -> float:
        assignment = dict(assignment or {}, **kwargs)
        return float(self.marginal(list(assignment)).probs[tuple(assignment[n] for n in assignment)])

    def marginal(self, names: Sequence[str]) -> "DistTable":
        names = list(names)
        unknown = [n for n in names if n not in self.scope]
        if unknown:
            raise QueryError(f"variables {unknown} not in table scope {self.scope}")
        drop = tuple(i for i, n in enumerate(self.scope) if n not in names)
        p = self.probs.sum(axis=drop)
        kept = [n for n in self.scope if n in names]
        p = np.transpose(p, [kept.index(n) for n in names])
        return DistTable(tuple(names), p)

    def vector(self) -> np.ndarray:
        """Probabilities of a single-variable table as a flat vector."""
        if len(self.scope) != 1:
            raise QueryError("vector() needs a single-variable table")
        return self.probs

    def tv(self, other: "DistTable") -> float:
        if set(self.scope) != set(other.scope):
            raise QueryError(f"scopes differ: {self.scope} vs {other.scope}")
        q = other.marginal(self.scope).probs
        if q.shape != self.probs.shape:
            raise QueryError("domain sizes differ")
        return 0.5 * float(np.abs(self.probs - q).sum())

    def rows(self):
        for idx in itertools.product(*(range(s) for s in self.sizes)):
            yield idx, float(self.probs[idx])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(self.scope) + ["probability"])
            for idx, p in self.rows():
                writer.writerow(list(idx) + [repr(p)])

    @classmethod
    def from_csv(cls, path) -> "DistTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        scope = tuple(rows[0][:-1])
        body = [([int(c) for c in r[:-1]], float(r[-1])) for r in rows[1:]]
        sizes = [max(idx[k] for idx, _ in body) + 1 for k in range(len(scope))]
        probs = np.zeros(sizes)
        for idx, p in body:
            probs[tuple(idx)] = p
        return cls(scope, probs)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def enumerate_states(scm: DiscreteScm) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """All exogenous joint states: their weights and the induced endogenous values."""
    _require_valid(scm)
    sizes = [u.size for u in scm.exogenous]
    n_states = int(np.prod(sizes, dtype=np.int64)) if sizes else 1
    if n_states > MAX_EXOGENOUS_STATES:
        raise EnumerationTooLargeError(
            f"{n_states} exogenous joint states exceeds the cap of {MAX_EXOGENOUS_STATES}"
        )
    if sizes:
        states = np.unravel_index(np.arange(n_states), sizes)
    else:
        states = ()
    weights = np.ones(n_states)
    exo_values = {}
    for u, s in zip(scm.exogenous, states):
        weights = weights * u.probs[s]
        exo_values[u.name] = s
    values: dict[str, np.ndarray] = {}
    for v in scm.topological_order():
        index = tuple(values[p] for p in v.parents) + tuple(exo_values[u] for u in v.exo)
        out = v.table[index] if index else v.table[()]
        values[v.name] = np.broadcast_to(np.asarray(out, dtype=np.int64), (n_states,))
    return weights, values


def _tabulate(weights, columns, sizes) -> np.ndarray:
    if not columns:
        return np.asarray(weights.sum())
    flat = np.ravel_multi_index(tuple(columns), sizes)
    counts = np.bincount(flat, weights=weights, minlength=int(np.prod(sizes)))
    return counts.reshape(sizes)


def joint_distribution(scm: DiscreteScm, query_vars: Sequence[str]) -> DistTable:
    """Exact marginal over ``query_vars`` by full exogenous enumeration."""
    query_vars = list(query_vars)
    for name in query_vars:
        scm.variable(name)
    weights, values = enumerate_states(scm)
    sizes = scm.sizes(query_vars)
    return DistTable(tuple(query_vars), _tabulate(weights, [values[n] for n in query_vars], sizes))


def conditional(table: DistTable, target: str | Sequence[str], given: Mapping[str, int]) -> DistTable:
    """Exact conditional distribution of ``target`` given an assignment."""
    targets = [target] if isinstance(target, str) else list(target)
    sub = table.marginal(targets + list(given))
    idx = (slice(None),) * len(targets) + tuple(int(given[n]) for n in given)
    slab = sub.probs[idx]
    mass = float(slab.sum())
    if not mass > 0.0:
        desc = ", ".join(f"{k}={v}" for k, v in given.items())
        raise UndefinedConditionalError(f"conditioning event ({desc}) has probability zero")
    return DistTable(tuple(targets), slab / mass)


def interventional_distribution(
    scm: DiscreteScm, do_assignment: Mapping[str, int], target: str | Sequence[str]
) -> DistTable:
    """P(target | do(assignment)) by graph mutilation and exact enumeration."""
    targets = [target] if isinstance(target, str) else list(target)
    return joint_distribution(scm.do(do_assignment), targets)


def sample_dataset(scm: DiscreteScm, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. ancestral samples.

    Returns an ``(n, len(scm.variables))`` integer array whose columns follow
    ``scm.endogenous_names``.
    """
    _require_valid(scm)
    if n < 1:
        raise QueryError("n must be >= 1")
    rng = np.random.default_rng(seed)
    exo_values = {u.name: rng.choice(u.size, size=n, p=u.probs) for u in scm.exogenous}
    values = {}
    for v in scm.topological_order():
        index = tuple(values[p] for p in v.parents) + tuple(exo_values[u] for u in v.exo)
        out = v.table[index] if index else v.table[()]
        values[v.name] = np.broadcast_to(np.asarray(out, dtype=np.int64), (n,))
    return np.stack([values[name] for name in scm.endogenous_names], axis=1)


def empirical_distribution(samples: np.ndarray, scm: DiscreteScm, query_vars: Sequence[str]) -> DistTable:
    names = scm.endogenous_names
    cols = [samples[:, names.index(q)] for q in query_vars]
    sizes = scm.sizes(query_vars)
    counts = _tabulate(np.ones(len(samples)), cols, sizes)
    return DistTable(tuple(query_vars), counts / len(samples))


def same_mechanism(a: Variable, b: Variable) -> bool:
    return (
        a.name == b.name
        and a.size == b.size
        and a.parents == b.parents
        and a.exo == b.exo
        and a.table.shape == b.table.shape
        and bool(np.array_equal(a.table, b.table))
    )


def pair_violations(source: DiscreteScm, target: DiscreteScm, treatment: str = "X") -> list[str]:
    """Check that only the treatment's mechanism and its private noise differ."""
    out = [f"source: {m}" for m in validate_scm(source).violations]
    out += [f"target: {m}" for m in validate_scm(target).violations]
    if source.endogenous_names != target.endogenous_names:
        return out + ["source and target have different endogenous variables"]
    if treatment not in source.endogenous_names:
        return out + [f"treatment {treatment!r} is not an endogenous variable"]
    shared_exo = set()
    for name in source.endogenous_names:
        if name == treatment:
            continue
        a, b = source.variable(name), target.variable(name)
        if not same_mechanism(a, b):
            out.append(f"mechanism of {name} differs between domains")
        shared_exo.update(a.exo)
    for u in sorted(shared_exo):
        try:
            pa, pb = source.exogenous_var(u).probs, target.exogenous_var(u).probs
        except QueryError:
            out.append(f"shared exogenous {u} missing in one domain")
            continue
        if pa.shape != pb.shape or not np.array_equal(pa, pb):
            out.append(f"distribution of shared exogenous {u} differs between domains")
    return out


@dataclass
class TransportPair:
    """Source and target models indexed by the selection switch S.

    Only the treatment mechanism and the exogenous variables private to it may
    differ.  Construction raises on any other difference unless
    ``unchecked`` is used.
    """

    source: DiscreteScm
    target: DiscreteScm
    treatment: str = "X"
    outcome: str = "Y"
    check: bool = True

    def __post_init__(self):
        if self.check:
            problems = self.violations()
            if problems:
                raise TransportPairError("; ".join(problems))

    @classmethod
    def unchecked(cls, source, target, treatment="X", outcome="Y") -> "TransportPair":
        return cls(source, target, treatment, outcome, check=False)

    def violations(self) -> list[str]:
        return pair_violations(self.source, self.target, self.treatment)

    def domain(self, s_index: int) -> DiscreteScm:
        if s_index not in (0, 1):
            raise QueryError("s_index must be 0 (source) or 1 (target)")
        return self.source if s_index == 0 else self.target
