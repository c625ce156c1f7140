"""Partial exclusion restrictions and the chi mapping.

An exclusion spec says, for every alternative ``d`` and semi-IV value ``z``,
which *unique* potential outcome ``(d, k)`` the cell ``(d, z)`` reads from.
All labels (``d``, ``z``, ``k``) are 1-based, matching the data files.
Unique outcomes are ordered alternative-major: ``(1, 1), ..., (1, N_1),
(2, 1), ...``; that order is the column order of chi and of every solved
path.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .exceptions import SpecificationError

__all__ = [
    "ExclusionSpec",
    "ExclusionMap",
    "Check",
    "ValidityReport",
    "build_exclusion_map",
    "check_exclusion_necessary",
    "structural_rank",
    "rational_rank",
    "full_exclusion",
    "conditional_semi_iv",
    "binary_semi_iv",
    "alternative_specific",
    "no_exclusion",
]


@dataclass(frozen=True)
class ExclusionSpec:
    """Assignment of every ``(d, z)`` cell to a unique outcome label.

    Parameters
    ----------
    num_alternatives : int
        Number of alternatives ``J``.
    support_size : int
        Number of semi-IV values ``N_Z``.
    assignment : sequence of sequences of int
        ``assignment[d - 1][z - 1]`` is the label ``k`` of cell ``(d, z)``.
        Labels are relabelled by first appearance in z-order so that
        equivalent specs compare equal.
    """

    num_alternatives: int
    support_size: int
    assignment: tuple

    def __post_init__(self):
        J, nz = int(self.num_alternatives), int(self.support_size)
        if J < 1 or nz < 1:
            raise SpecificationError("num_alternatives and support_size must be positive")
        rows = tuple(tuple(int(k) for k in row) for row in self.assignment)
        if len(rows) != J or any(len(r) != nz for r in rows):
            raise SpecificationError(
                f"assignment must be {J} rows (alternatives) of {nz} labels (semi-IV values)"
            )
        canon = []
        for d, row in enumerate(rows, start=1):
            labels = set(row)
            if labels != set(range(1, len(labels) + 1)):
                raise SpecificationError(
                    f"labels of alternative {d} must be contiguous 1..N_d, got {sorted(labels)}"
                )
            order = {}
            for k in row:
                order.setdefault(k, len(order) + 1)
            canon.append(tuple(order[k] for k in row))
        object.__setattr__(self, "num_alternatives", J)
        object.__setattr__(self, "support_size", nz)
        object.__setattr__(self, "assignment", tuple(canon))

    @property
    def counts(self) -> tuple:
        """``N_d`` for each alternative."""
        return tuple(max(row) for row in self.assignment)

    @property
    def n_q(self) -> int:
        return sum(self.counts)

    def label(self, d: int, z: int) -> int:
        return self.assignment[d - 1][z - 1]

    def to_dict(self) -> dict:
        return {
            "num_alternatives": self.num_alternatives,
            "support_size": self.support_size,
            "assignment": [list(r) for r in self.assignment],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExclusionSpec":
        try:
            return cls(doc["num_alternatives"], doc["support_size"], doc["assignment"])
        except KeyError as exc:
            raise SpecificationError(f"exclusion spec is missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, SpecificationError):
                raise
            raise SpecificationError(f"malformed exclusion spec: {exc}") from None

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps({"exclusion": self.to_dict()}, indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "ExclusionSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SpecificationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc.get("exclusion", doc))


@dataclass(frozen=True)
class ExclusionMap:
    """Binary ``N_Z x N_Q`` chi matrix plus column bookkeeping."""

    spec: ExclusionSpec
    chi: np.ndarray
    column_index: dict
    column_alternative: np.ndarray = field(repr=False)
    column_label: np.ndarray = field(repr=False)
    cell_column: np.ndarray = field(repr=False)

    @property
    def n_z(self) -> int:
        return self.chi.shape[0]

    @property
    def n_q(self) -> int:
        return self.chi.shape[1]

    @property
    def num_alternatives(self) -> int:
        return self.spec.num_alternatives

    def column(self, d: int, z: int) -> int:
        """0-based column read by cell ``(d, z)``."""
        return int(self.cell_column[z - 1, d - 1])

    def labels(self) -> list:
        """Unique-outcome labels ``(d, k)`` in column order."""
        return [(int(d), int(k)) for d, k in zip(self.column_alternative, self.column_label)]

    def column_names(self) -> list:
        return [f"q_{d}_{k}" for d, k in self.labels()]

    def assignment(self) -> tuple:
        """Read the ``(d, z) -> k`` table back out of chi."""
        J, nz = self.num_alternatives, self.n_z
        out = [[0] * nz for _ in range(J)]
        for z in range(nz):
            for col in np.flatnonzero(self.chi[z]):
                out[self.column_alternative[col] - 1][z] = int(self.column_label[col])
        return tuple(tuple(r) for r in out)

    def nonzero(self):
        """Row, column and alternative (all 0-based) of the nonzero entries."""
        z_idx, col_idx = np.nonzero(self.chi)
        return z_idx, col_idx, self.column_alternative[col_idx] - 1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("#schema=semiiv.chi/1\n")
            writer = csv.writer(fh)
            writer.writerow(["z"] + self.column_names())
            for z in range(self.n_z):
                writer.writerow([z + 1] + [int(v) for v in self.chi[z]])


def build_exclusion_map(spec: ExclusionSpec) -> ExclusionMap:
    """Build the chi matrix of ``spec``."""
    counts = spec.counts
    column_index = {}
    alt, lab = [], []
    for d, n_d in enumerate(counts, start=1):
        for k in range(1, n_d + 1):
            column_index[(d, k)] = len(alt)
            alt.append(d)
            lab.append(k)
    nz, J = spec.support_size, spec.num_alternatives
    chi = np.zeros((nz, len(alt)), dtype=np.int64)
    cell_column = np.zeros((nz, J), dtype=np.int64)
    for d, z in product(range(1, J + 1), range(1, nz + 1)):
        col = column_index[(d, spec.label(d, z))]
        chi[z - 1, col] = 1
        cell_column[z - 1, d - 1] = col
    for arr in (chi, cell_column):
        arr.setflags(write=False)
    return ExclusionMap(
        spec=spec,
        chi=chi,
        column_index=column_index,
        column_alternative=np.array(alt),
        column_label=np.array(lab),
        cell_column=cell_column,
    )


def structural_rank(pattern) -> int:
    """Generic rank of a 0/1 pattern: the size of a maximum row-column matching.

    This is the rank of ``pattern * P`` for almost every ``P``, so it is the
    rank that a Hadamard product with selection probabilities can reach.
    """
    a = np.asarray(pattern)
    if a.size == 0:
        return 0
    match = maximum_bipartite_matching(csr_matrix(a != 0), perm_type="column")
    return int(np.count_nonzero(match >= 0))


def rational_rank(matrix) -> int:
    """Exact rank of an integer matrix by fraction-free (Bareiss) elimination."""
    a = [[int(v) for v in row] for row in np.asarray(matrix)]
    n_rows = len(a)
    n_cols = len(a[0]) if a else 0
    rank, prev = 0, 1
    for col in range(n_cols):
        pivot = next((r for r in range(rank, n_rows) if a[r][col] != 0), None)
        if pivot is None:
            continue
        a[rank], a[pivot] = a[pivot], a[rank]
        for r in range(rank + 1, n_rows):
            for c in range(col + 1, n_cols):
                a[r][c] = (a[r][c] * a[rank][col] - a[rank][c] * a[r][col]) // prev
            a[r][col] = 0
        prev = a[rank][col]
        rank += 1
        if rank == n_rows:
            break
    return rank


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    message: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "message": self.message}


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of the necessary rank condition on chi."""

    valid: bool
    rank_chi: int
    rational_rank: int
    n_q: int
    n_z: int
    checks: tuple

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "rank_chi": self.rank_chi,
            "rational_rank": self.rational_rank,
            "n_q": self.n_q,
            "n_z": self.n_z,
            "checks": [c.to_dict() for c in self.checks],
        }

    def render(self) -> str:
        lines = [f"exclusion restrictions: {'VALID' if self.valid else 'INVALID'}"]
        lines += [f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {c.message}" for c in self.checks]
        return "\n".join(lines)


def check_exclusion_necessary(emap: ExclusionMap) -> ValidityReport:
    """Check the necessary condition for identification on chi.

    The rank used is the structural rank, i.e. the largest rank that
    ``chi * P`` can have for positive ``P``. The plain rational rank of the
    0/1 matrix is reported alongside but does not drive the verdict (the
    2x2 full-exclusion chi has rational rank 1 yet is a valid IV design).
    """
    n_q, n_z = emap.n_q, emap.n_z
    rank = structural_rank(emap.chi)
    checks = [
        Check(
            "support_size",
            n_q <= n_z,
            f"N_Q = {n_q} unique outcomes vs N_Z = {n_z} semi-IV values",
        ),
        Check("rank_chi", rank == n_q, f"structural rank of chi is {rank}, need N_Q = {n_q}"),
    ]
    short = [d for d, n_d in enumerate(emap.spec.counts, start=1) if n_d >= n_z]
    checks.append(
        Check(
            "exclusion_per_alternative",
            not short,
            "every alternative has at least one exclusion restriction"
            if not short
            else f"no exclusion restriction for alternative(s) {short}",
        )
    )
    return ValidityReport(
        valid=all(c.passed for c in checks),
        rank_chi=rank,
        rational_rank=rational_rank(emap.chi),
        n_q=n_q,
        n_z=n_z,
        checks=tuple(checks),
    )


# Standard layouts ------------------------------------------------------------


def full_exclusion(num_alternatives: int, support_size: int) -> ExclusionSpec:
    """Standard IV: every alternative has a single outcome function."""
    return ExclusionSpec(num_alternatives, support_size, [[1] * support_size] * num_alternatives)


def no_exclusion(num_alternatives: int, support_size: int) -> ExclusionSpec:
    row = list(range(1, support_size + 1))
    return ExclusionSpec(num_alternatives, support_size, [row] * num_alternatives)


def conditional_semi_iv() -> ExclusionSpec:
    """J = 2, N_Z = 3: alternative 1 fully excluded, alternative 2 pools z = 2, 3."""
    return ExclusionSpec(2, 3, [[1, 1, 1], [1, 2, 2]])


def alternative_specific(num_alternatives: int) -> ExclusionSpec:
    """One binary semi-IV ``W_d`` per alternative, excluded from all other outcomes.

    ``z - 1`` is the binary number with ``w_1`` as least significant bit,
    which reproduces z = 1 <-> (0, 0), 2 <-> (1, 0), 3 <-> (0, 1), 4 <-> (1, 1)
    for two alternatives.
    """
    J = num_alternatives
    nz = 2**J
    return ExclusionSpec(J, nz, [[((z >> d) & 1) + 1 for z in range(nz)] for d in range(J)])


def binary_semi_iv() -> ExclusionSpec:
    """Two binary alternative-specific semi-IVs (J = 2, N_Z = 4)."""
    return alternative_specific(2)
