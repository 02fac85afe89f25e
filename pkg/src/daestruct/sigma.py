"""Signature matrix, highest-value transversal, and canonical offsets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NonConvergence, NonSquareSystem, StructurallySingular
from .expr import variable_orders
from .language import Model

#: Marks a variable that does not occur in an equation (the -inf entry).
ABSENT = None

Entry = Optional[int]


@dataclass(frozen=True)
class SigmaMatrix:
    entries: tuple[tuple[Entry, ...], ...]

    def __post_init__(self):
        n = len(self.entries)
        if any(len(row) != n for row in self.entries):
            raise ValueError("signature matrix must be square")
        for row in self.entries:
            for value in row:
                if value is not ABSENT and (not isinstance(value, int) or value < 0):
                    raise ValueError(f"invalid signature entry {value!r}")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Entry]]) -> "SigmaMatrix":
        return cls(tuple(tuple(row) for row in rows))

    @property
    def n(self) -> int:
        return len(self.entries)

    def __getitem__(self, ij: tuple[int, int]) -> Entry:
        i, j = ij
        return self.entries[i][j]

    def finite(self):
        """Yield ``(i, j, sigma_ij)`` for every entry that is not ABSENT."""
        for i, row in enumerate(self.entries):
            for j, value in enumerate(row):
                if value is not ABSENT:
                    yield i, j, value

    def max_entry(self) -> int:
        return max((v for _, _, v in self.finite()), default=0)

    def to_json(self) -> list:
        return [list(row) for row in self.entries]


@dataclass(frozen=True)
class Transversal:
    assignment: tuple[int, ...]  # equation i -> variable assignment[i]
    value: int

    def to_json(self) -> dict:
        return {"assignment": list(self.assignment), "value": self.value}


@dataclass(frozen=True)
class Offsets:
    c: tuple[int, ...]
    d: tuple[int, ...]
    hvt: Transversal

    @property
    def k_c(self) -> int:
        return max(self.c, default=0)

    @property
    def k_d(self) -> int:
        return max(self.d, default=0)


def signature_matrix(model: Model) -> SigmaMatrix:
    if not model.is_square:
        raise NonSquareSystem(
            f"{len(model.equations)} equations in {len(model.variables)} variables"
        )
    rows = []
    for eq in model.equations:
        orders = variable_orders(eq)
        rows.append(tuple(orders.get(name, ABSENT) for name in model.variables))
    return SigmaMatrix(tuple(rows))


def solve_hvt(sigma: SigmaMatrix) -> Transversal:
    """Maximum-weight perfect matching over the finite entries.

    Shortest augmenting path Hungarian method on cost ``-sigma``, adding rows
    in ascending order; ABSENT entries are forbidden edges.  O(n^3).
    """
    n = sigma.n
    if n == 0:
        return Transversal((), 0)
    cost = np.full((n, n), np.inf)
    for i, j, value in sigma.finite():
        cost[i, j] = -value

    # 1-based potentials and matching, column 0 is the virtual start column.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.zeros(n + 1, dtype=int)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            if not np.isfinite(delta):
                raise StructurallySingular(
                    f"no finite transversal: equation {i} cannot be matched"
                )
            u[row_of[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1

    assignment = [0] * n
    for j in range(1, n + 1):
        assignment[row_of[j] - 1] = j - 1
    value = sum(sigma[i, assignment[i]] for i in range(n))
    return Transversal(tuple(assignment), value)


def compute_offsets(sigma: SigmaMatrix, hvt: Transversal) -> Offsets:
    """Smallest offsets ``c >= 0``, ``d`` with ``d_j - c_i >= sigma_ij`` and
    equality on ``hvt``, by the fixed-point iteration::

        c := 0
        repeat
            d_j := max_i (sigma_ij + c_i)
            c_i := d_{hvt(i)} - sigma_{i, hvt(i)}
        until c unchanged

    which terminates exactly when ``hvt`` is optimal.
    """
    n = sigma.n
    on_hvt = []
    for i, j in enumerate(hvt.assignment):
        if sigma[i, j] is ABSENT:
            raise StructurallySingular(f"transversal uses absent entry ({i}, {j})")
        on_hvt.append(sigma[i, j])
    columns: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for i, j, value in sigma.finite():
        columns[j].append((i, value))
    if any(not col for col in columns):
        raise StructurallySingular("a variable occurs in no equation")

    max_rounds = n * (1 + sigma.max_entry()) * n + 1
    c = [0] * n
    for _ in range(max_rounds):
        d = [max(value + c[i] for i, value in col) for col in columns]
        new_c = [d[j] - on_hvt[i] for i, j in enumerate(hvt.assignment)]
        if new_c == c:
            return Offsets(tuple(c), tuple(d), hvt)
        c = new_c
    raise NonConvergence(
        f"offsets did not converge in {max_rounds} rounds; the transversal is not optimal"
    )


def structural_index(offsets: Offsets) -> int:
    return offsets.k_c + (1 if any(dj == 0 for dj in offsets.d) else 0)


def degrees_of_freedom(offsets: Offsets) -> int:
    return sum(offsets.d) - sum(offsets.c)


@dataclass(frozen=True)
class Analysis:
    """Result of the structural analysis of a model."""

    model: Model
    sigma: SigmaMatrix
    offsets: Offsets

    @property
    def hvt(self) -> Transversal:
        return self.offsets.hvt

    @property
    def structural_index(self) -> int:
        return structural_index(self.offsets)

    @property
    def degrees_of_freedom(self) -> int:
        return degrees_of_freedom(self.offsets)

    def to_json(self) -> dict:
        return {
            "model": self.model.name,
            "n": self.sigma.n,
            "variables": list(self.model.variables),
            "sigma": self.sigma.to_json(),
            "hvt": self.hvt.to_json(),
            "c": list(self.offsets.c),
            "d": list(self.offsets.d),
            "structural_index": self.structural_index,
            "degrees_of_freedom": self.degrees_of_freedom,
        }


def analyze(model: Model) -> Analysis:
    sigma = signature_matrix(model)
    hvt = solve_hvt(sigma)
    return Analysis(model, sigma, compute_offsets(sigma, hvt))
