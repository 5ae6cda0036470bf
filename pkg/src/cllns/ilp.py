"""Binary ILP data model: ``min c.x  s.t.  A x <= b,  x in {0,1}^n``.

Constraints are stored sparse (one ``(indices, coefficients)`` pair per row)
and always in ``<=`` form; ``>=`` rows are negated when they are built or
loaded. Instances are immutable, and every transformation returns a new
:class:`Ilp` that keeps variable indices stable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FEAS_TOL = 1e-9


class IlpFormatError(ValueError):
    """Instance or solution file could not be parsed."""


class IlpValidationError(ValueError):
    """Instance data violates a structural invariant."""


@dataclass(frozen=True, eq=False)
class Ilp:
    objective: np.ndarray
    row_indices: tuple
    row_coefs: tuple
    rhs: np.ndarray
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        obj = np.array(self.objective, dtype=np.float64)
        obj.setflags(write=False)
        object.__setattr__(self, "objective", obj)
        rhs = np.array(self.rhs, dtype=np.float64).reshape(-1)
        rhs.setflags(write=False)
        object.__setattr__(self, "rhs", rhs)
        idx_rows, coef_rows = [], []
        for idx, coef in zip(self.row_indices, self.row_coefs):
            idx = np.array(idx, dtype=np.int64).reshape(-1)
            coef = np.array(coef, dtype=np.float64).reshape(-1)
            idx.setflags(write=False)
            coef.setflags(write=False)
            idx_rows.append(idx)
            coef_rows.append(coef)
        object.__setattr__(self, "row_indices", tuple(idx_rows))
        object.__setattr__(self, "row_coefs", tuple(coef_rows))
        object.__setattr__(self, "metadata", {str(k): str(v) for k, v in self.metadata.items()})
        self.validate()

    @property
    def n(self) -> int:
        return int(self.objective.shape[0])

    @property
    def m(self) -> int:
        return len(self.row_indices)

    def validate(self) -> None:
        n = self.n
        if self.objective.ndim != 1 or n < 1:
            raise IlpValidationError("objective: need a non-empty vector (n >= 1)")
        if not np.all(np.isfinite(self.objective)):
            raise IlpValidationError("objective: non-finite coefficient")
        if len(self.row_coefs) != len(self.row_indices) or self.rhs.shape[0] != len(self.row_indices):
            raise IlpValidationError("constraints: row count mismatch between terms and rhs")
        if not np.all(np.isfinite(self.rhs)):
            raise IlpValidationError("constraints: non-finite rhs")
        for i, (idx, coef) in enumerate(zip(self.row_indices, self.row_coefs)):
            if idx.shape != coef.shape:
                raise IlpValidationError(f"constraints[{i}].terms: index/coefficient length mismatch")
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise IlpValidationError(f"constraints[{i}].terms: var_index out of range [0, {n})")
            if np.unique(idx).size != idx.size:
                raise IlpValidationError(f"constraints[{i}].terms: duplicate var_index")
            if not np.all(np.isfinite(coef)):
                raise IlpValidationError(f"constraints[{i}].terms: non-finite coefficient")

    @classmethod
    def from_rows(
        cls,
        objective: Sequence[float],
        rows: Iterable[tuple],
        name: str = "",
        metadata: dict | None = None,
    ) -> "Ilp":
        """Build from ``(terms, rhs)`` or ``(terms, rhs, sense)`` rows.

        ``terms`` is a sequence of ``(var_index, coefficient)`` pairs and
        ``sense`` is ``"le"`` (default) or ``"ge"``.
        """
        idx_rows, coef_rows, rhs = [], [], []
        for row in rows:
            terms, b = row[0], row[1]
            sense = row[2] if len(row) > 2 else "le"
            idx = [int(j) for j, _ in terms]
            coef = [float(a) for _, a in terms]
            b = float(b)
            if sense == "ge":
                coef = [-a for a in coef]
                b = -b
            elif sense != "le":
                raise IlpValidationError(f"unsupported constraint sense {sense!r}")
            idx_rows.append(idx)
            coef_rows.append(coef)
            rhs.append(b)
        return cls(np.asarray(objective, dtype=np.float64), tuple(idx_rows), tuple(coef_rows),
                   np.asarray(rhs, dtype=np.float64), name, dict(metadata or {}))

    @cached_property
    def dense_a(self) -> np.ndarray:
        a = np.zeros((self.m, self.n))
        for i, (idx, coef) in enumerate(zip(self.row_indices, self.row_coefs)):
            a[i, idx] = coef
        a.setflags(write=False)
        return a

    @cached_property
    def var_rows(self) -> tuple:
        """For each variable, the sorted list of rows it appears in."""
        out = [[] for _ in range(self.n)]
        for i, idx in enumerate(self.row_indices):
            for j in idx:
                out[j].append(i)
        return tuple(tuple(r) for r in out)

    def with_rows(self, extra_idx: list, extra_coef: list, extra_rhs: list) -> "Ilp":
        return Ilp(self.objective, self.row_indices + tuple(extra_idx),
                   self.row_coefs + tuple(extra_coef),
                   np.concatenate([self.rhs, np.asarray(extra_rhs, dtype=np.float64)]),
                   self.name, dict(self.metadata))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ilp):
            return NotImplemented
        return (
            self.name == other.name
            and self.metadata == other.metadata
            and np.array_equal(self.objective, other.objective)
            and np.array_equal(self.rhs, other.rhs)
            and self.m == other.m
            and all(np.array_equal(a, b) for a, b in zip(self.row_indices, other.row_indices))
            and all(np.array_equal(a, b) for a, b in zip(self.row_coefs, other.row_coefs))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"Ilp(name={self.name!r}, n={self.n}, m={self.m})"


@dataclass(frozen=True, eq=False)
class Solution:
    assignment: np.ndarray
    objective: float
    feasible: bool
    found_at_s: float | None = None
    found_at_iter: int | None = None

    def __post_init__(self):
        x = np.array(self.assignment, dtype=np.int8)
        x.setflags(write=False)
        object.__setattr__(self, "assignment", x)

    @property
    def bits(self) -> str:
        return "".join("1" if v else "0" for v in self.assignment)

    def stamped(self, found_at_s: float | None, found_at_iter: int | None) -> "Solution":
        return Solution(self.assignment, self.objective, self.feasible, found_at_s, found_at_iter)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Solution):
            return NotImplemented
        return (np.array_equal(self.assignment, other.assignment)
                and self.objective == other.objective and self.feasible == other.feasible)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Action:
    """Destroy mask: ``mask[i]`` is True when variable i is re-optimized."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def from_indices(cls, n: int, indices: Iterable[int]) -> "Action":
        mask = np.zeros(n, dtype=bool)
        mask[list(indices)] = True
        return cls(mask)

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def bits(self) -> str:
        return "".join("1" if v else "0" for v in self.mask)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Action):
            return NotImplemented
        return np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash(self.mask.tobytes())


def evaluate(ilp: Ilp, assignment) -> Solution:
    x = np.asarray(assignment)
    if x.shape != (ilp.n,):
        raise ValueError(f"assignment has length {x.size}, expected {ilp.n}")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("assignment must be binary")
    xf = x.astype(np.float64)
    objective = float(ilp.objective @ xf)
    feasible = True
    if ilp.m:
        feasible = bool(np.all(ilp.dense_a @ xf <= ilp.rhs + FEAS_TOL))
    return Solution(x, objective, feasible)


def build_sub_ilp(ilp: Ilp, incumbent: Solution, action: Action) -> Ilp:
    """Fix every variable outside ``action`` to its incumbent value.

    Fixings are appended as pairs of rows ``x_j <= v`` and ``-x_j <= -v`` so
    that the variable set and indices are unchanged.
    """
    if not incumbent.feasible:
        raise ValueError("incumbent must be feasible")
    if action.mask.shape != (ilp.n,):
        raise ValueError("action length does not match the ILP")
    if action.size < 1:
        raise ValueError("destroy set is empty")
    extra_idx, extra_coef, extra_rhs = [], [], []
    for j in np.flatnonzero(~action.mask):
        v = float(incumbent.assignment[j])
        extra_idx += [[int(j)], [int(j)]]
        extra_coef += [[1.0], [-1.0]]
        extra_rhs += [v, -v]
    if not extra_idx:
        return ilp
    return ilp.with_rows(extra_idx, extra_coef, extra_rhs)


def local_branching_row(incumbent: Solution, k: int) -> tuple[np.ndarray, np.ndarray, float]:
    x = incumbent.assignment
    n = x.shape[0]
    coef = np.where(x == 1, -1.0, 1.0)
    return np.arange(n), coef, float(k - int(np.count_nonzero(x)))


def add_local_branching_constraint(ilp: Ilp, incumbent: Solution, k: int) -> Ilp:
    """Append the Hamming-ball row ``sum_{x_i=0} x_i - sum_{x_i=1} x_i <= k - |x|_1``."""
    if k < 1:
        raise ValueError(f"local branching radius must be >= 1, got {k}")
    if not incumbent.feasible:
        raise ValueError("incumbent must be feasible")
    idx, coef, b = local_branching_row(incumbent, k)
    return ilp.with_rows([idx], [coef], [b])


def hamming(x, y) -> int:
    return int(np.count_nonzero(np.asarray(x) != np.asarray(y)))


# -- file formats -----------------------------------------------------------

def ilp_to_dict(ilp: Ilp) -> dict:
    return {
        "name": ilp.name,
        "n": ilp.n,
        "m": ilp.m,
        "objective": [float(c) for c in ilp.objective],
        "constraints": [
            {"terms": [[int(j), float(a)] for j, a in zip(idx, coef)], "rhs": float(b)}
            for idx, coef, b in zip(ilp.row_indices, ilp.row_coefs, ilp.rhs)
        ],
        "metadata": dict(ilp.metadata),
    }


def dumps_ilp(ilp: Ilp) -> str:
    d = ilp_to_dict(ilp)
    lines = ["{"]
    for key in ("name", "n", "m", "objective"):
        lines.append(f"  {json.dumps(key)}: {json.dumps(d[key])},")
    lines.append('  "constraints": [')
    rows = [f"    {json.dumps(row)}" for row in d["constraints"]]
    if rows:
        lines.append(",\n".join(rows))
    lines.append("  ],")
    lines.append(f'  "metadata": {json.dumps(d["metadata"], sort_keys=True)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _field(cond: bool, where: str, what: str) -> None:
    if not cond:
        raise IlpFormatError(f"{where}: {what}")


def _number(v, where: str) -> float:
    _field(isinstance(v, (int, float)) and not isinstance(v, bool), where, "expected a number")
    return float(v)


def ilp_from_dict(d, source: str = "<dict>") -> Ilp:
    _field(isinstance(d, dict), source, "top level must be a JSON object")
    for key in ("n", "m", "objective", "constraints"):
        _field(key in d, source, f"missing field {key!r}")
    n, m = d["n"], d["m"]
    _field(isinstance(n, int) and n >= 1, f"{source}: n", "must be a positive integer")
    _field(isinstance(m, int) and m >= 0, f"{source}: m", "must be a non-negative integer")
    obj = d["objective"]
    _field(isinstance(obj, list) and len(obj) == n, f"{source}: objective", f"must be a list of {n} numbers")
    objective = [_number(v, f"{source}: objective[{j}]") for j, v in enumerate(obj)]
    cons = d["constraints"]
    _field(isinstance(cons, list) and len(cons) == m, f"{source}: constraints", f"must be a list of {m} rows")
    rows = []
    for i, row in enumerate(cons):
        where = f"{source}: constraints[{i}]"
        _field(isinstance(row, dict) and "terms" in row and "rhs" in row, where, "needs 'terms' and 'rhs'")
        sense = row.get("sense", "le")
        _field(sense in ("le", "ge"), f"{where}.sense", f"unsupported sense {sense!r}")
        terms = []
        _field(isinstance(row["terms"], list), f"{where}.terms", "must be a list")
        for t, term in enumerate(row["terms"]):
            _field(isinstance(term, list) and len(term) == 2, f"{where}.terms[{t}]", "must be [var_index, coefficient]")
            j = term[0]
            _field(isinstance(j, int) and not isinstance(j, bool), f"{where}.terms[{t}]", "var_index must be an integer")
            terms.append((j, _number(term[1], f"{where}.terms[{t}]")))
        rows.append((terms, _number(row["rhs"], f"{where}.rhs"), sense))
    meta = d.get("metadata", {})
    _field(isinstance(meta, dict), f"{source}: metadata", "must be an object")
    try:
        return Ilp.from_rows(objective, rows, str(d.get("name", "")), meta)
    except IlpValidationError as e:
        raise IlpValidationError(f"{source}: {e}") from None


def read_ilp(path) -> Ilp:
    path = Path(path)
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise IlpFormatError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    return ilp_from_dict(d, str(path))


def write_ilp(ilp: Ilp, path) -> None:
    Path(path).write_text(dumps_ilp(ilp))


def write_solution(sol: Solution, path) -> None:
    Path(path).write_text(json.dumps({"assignment": sol.bits, "objective": sol.objective}) + "\n")


def read_solution(path, ilp: Ilp | None = None) -> Solution:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise IlpFormatError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    bits = d.get("assignment") if isinstance(d, dict) else None
    _field(isinstance(bits, str) and set(bits) <= {"0", "1"} and bits, f"{path}: assignment", "must be a 0/1 string")
    x = np.array([int(ch) for ch in bits], dtype=np.int8)
    if ilp is not None:
        return evaluate(ilp, x)
    obj = _number(d.get("objective"), f"{path}: objective")
    return Solution(x, obj, True)
