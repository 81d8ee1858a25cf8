"""Line-oriented text format for SCM definitions.

One file holds one model::

    # causaltransport-scm 1
    scm BowDemo
    exogenous U_XY = 0.5 0.5
    exogenous U_X = 0.9 0.1
    variable X size=2 parents= exo=U_XY,U_X
    variable Y size=2 parents=X exo=U_XY
    mechanism X
    parents=; exo=0,0; value=0
    parents=; exo=0,1; value=1
    ...

Mechanism blocks must list every input combination exactly once.  Blank lines
and lines starting with ``#`` (other than the header) are ignored.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ScmError, VersionError
from .scm import DiscreteScm, Exogenous, Variable

MAGIC = "# causaltransport-scm"
FORMAT_VERSION = 1


def _csv_ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    return tuple(int(t) for t in text.split(",")) if text else ()


def _csv_names(text: str) -> tuple[str, ...]:
    text = text.strip()
    return tuple(t.strip() for t in text.split(",")) if text else ()


def dumps_scm(scm: DiscreteScm) -> str:
    lines = [f"{MAGIC} {FORMAT_VERSION}", f"scm {scm.name or 'unnamed'}"]
    for u in scm.exogenous:
        lines.append(f"exogenous {u.name} = " + " ".join(repr(float(p)) for p in u.probs))
    for v in scm.variables:
        lines.append(f"variable {v.name} size={v.size} parents={','.join(v.parents)} exo={','.join(v.exo)}")
    sizes = {v.name: v.size for v in scm.variables}
    sizes.update({u.name: u.size for u in scm.exogenous})
    for v in scm.variables:
        lines.append(f"mechanism {v.name}")
        n_par = len(v.parents)
        dims = [sizes[p] for p in v.parents] + [sizes[u] for u in v.exo]
        for idx in itertools.product(*(range(d) for d in dims)):
            par = ",".join(map(str, idx[:n_par]))
            exo = ",".join(map(str, idx[n_par:]))
            lines.append(f"parents={par}; exo={exo}; value={int(v.table[idx])}")
    return "\n".join(lines) + "\n"


def loads_scm(text: str) -> DiscreteScm:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise ScmError("missing SCM header line")
    version = lines[0][len(MAGIC):].strip()
    if version != str(FORMAT_VERSION):
        raise VersionError(f"unsupported SCM format version {version!r}")

    name = ""
    exogenous: list[Exogenous] = []
    decls: list[tuple[str, int, tuple[str, ...], tuple[str, ...]]] = []
    rows: dict[str, list[tuple[tuple[int, ...], tuple[int, ...], int]]] = {}
    current = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if line.startswith("scm "):
                name = line[4:].strip()
            elif line.startswith("exogenous "):
                head, probs = line[len("exogenous "):].split("=", 1)
                exogenous.append(Exogenous(head.strip(), np.array([float(p) for p in probs.split()])))
            elif line.startswith("variable "):
                fields = line.split()
                kv = dict(f.split("=", 1) for f in fields[2:])
                decls.append((fields[1], int(kv["size"]), _csv_names(kv.get("parents", "")),
                              _csv_names(kv.get("exo", ""))))
            elif line.startswith("mechanism "):
                current = line.split()[1]
                rows.setdefault(current, [])
            elif line.startswith("parents="):
                if current is None:
                    raise ScmError("mechanism row outside a mechanism block")
                parts = dict(p.strip().split("=", 1) for p in line.split(";"))
                rows[current].append((_csv_ints(parts["parents"]), _csv_ints(parts["exo"]), int(parts["value"])))
            else:
                raise ScmError(f"unrecognized line: {line!r}")
        except (ValueError, KeyError) as exc:
            raise ScmError(f"line {lineno}: cannot parse {line!r} ({exc})") from None

    sizes = {u.name: u.size for u in exogenous}
    sizes.update({d[0]: d[1] for d in decls})
    variables = []
    for vname, size, parents, exo in decls:
        try:
            dims = tuple(sizes[p] for p in parents) + tuple(sizes[u] for u in exo)
        except KeyError as exc:
            raise ScmError(f"variable {vname}: unknown input {exc.args[0]}") from None
        table = np.full(dims, -1, dtype=np.int64)
        for par, ex, value in rows.get(vname, []):
            idx = par + ex
            if len(par) != len(parents) or len(ex) != len(exo):
                raise ScmError(f"mechanism {vname}: row arity mismatch {idx}")
            if any(not 0 <= i < d for i, d in zip(idx, dims)):
                raise ScmError(f"mechanism {vname}: row index {idx} out of range")
            if table[idx] != -1:
                raise ScmError(f"mechanism {vname}: duplicate row {idx}")
            table[idx] = value
        if (table == -1).any():
            missing = tuple(int(i) for i in np.argwhere(table == -1)[0])
            raise ScmError(f"mechanism {vname} is not total: no row for inputs {missing}")
        variables.append(Variable(vname, size, parents, exo, table))
    return DiscreteScm(variables, exogenous, name)


def save_scm(scm: DiscreteScm, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_scm(scm))


def load_scm(path) -> DiscreteScm:
    with open(path) as fh:
        return loads_scm(fh.read())
