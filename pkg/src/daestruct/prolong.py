"""Fast prolongation: differentiate equation i exactly c_i times and arrange
the enlarged system in block-triangular stages."""

from __future__ import annotations

import gc
from contextlib import contextmanager
from dataclasses import dataclass

from .expr import Expr, Var, symbols, to_text, total_derivative
from .language import Model
from .sigma import Offsets, degrees_of_freedom


@dataclass(frozen=True)
class ProlongedEquation:
    source: int  # equation index i
    level: int  # derivative order l, 0 <= l <= c_i
    expr: Expr


@dataclass(frozen=True)
class ProlongedSystem:
    model: Model
    offsets: Offsets
    equations: tuple[ProlongedEquation, ...]
    variables: tuple[tuple[int, int], ...]  # (j, m) for 0 <= m <= d_j

    @property
    def M(self) -> int:
        return len(self.equations)

    @property
    def N(self) -> int:
        return len(self.variables)

    @property
    def degrees_of_freedom(self) -> int:
        return degrees_of_freedom(self.offsets)

    def symbol(self, j: int, m: int) -> Var:
        return Var(self.model.variables[j], m)

    def variable_symbols(self) -> tuple[Var, ...]:
        return tuple(self.symbol(j, m) for j, m in self.variables)

    def equation(self, i: int, level: int) -> ProlongedEquation:
        for eq in self.equations:
            if eq.source == i and eq.level == level:
                return eq
        raise KeyError((i, level))

    def referenced_variables(self) -> set[Var]:
        found = set()
        for eq in self.equations:
            found |= {s for s in symbols(eq.expr) if isinstance(s, Var)}
        return found

    def to_json(self, with_text: bool = True) -> dict:
        schedule = block_schedule(self)
        equations = []
        for eq in self.equations:
            item = {"eq": eq.source, "level": eq.level}
            if with_text:
                item["text"] = to_text(eq.expr)
            equations.append(item)
        return {
            "M": self.M,
            "N": self.N,
            "equations": equations,
            "variables": [to_text(self.symbol(j, m)) for j, m in self.variables],
            "blocks": [[list(e) for e in block] for block in schedule.blocks],
        }


@contextmanager
def _gc_paused():
    # Expression graphs are acyclic, so the cycle collector only rescans
    # the many fresh nodes built while differentiating.
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def prolong(model: Model, offsets: Offsets) -> ProlongedSystem:
    equations = []
    with _gc_paused():
        for i, f in enumerate(model.equations):
            memo: dict = {}
            e = f
            for level in range(offsets.c[i] + 1):
                if level:
                    e = total_derivative(e, memo)
                equations.append(ProlongedEquation(i, level, e))
    variables = tuple((j, m) for j, dj in enumerate(offsets.d) for m in range(dj + 1))
    return ProlongedSystem(model, offsets, tuple(equations), variables)


@dataclass(frozen=True)
class BlockSchedule:
    """Equation blocks ``B_0..B_kc`` and the variable stages that first
    become available with them.

    Equation ``(i, l)`` sits in block ``kc - c_i + l``.  Variable ``(j, m)``
    sits in stage ``max(0, kc - d_j + m)``, so block ``p`` only references
    stages ``<= p``.
    """

    blocks: tuple[tuple[tuple[int, int], ...], ...]
    stages: tuple[tuple[tuple[int, int], ...], ...]

    def block_of(self, i: int, level: int) -> int:
        for p, block in enumerate(self.blocks):
            if (i, level) in block:
                return p
        raise KeyError((i, level))


def block_schedule(system: ProlongedSystem) -> BlockSchedule:
    o = system.offsets
    kc = o.k_c
    blocks: list[list[tuple[int, int]]] = [[] for _ in range(kc + 1)]
    for eq in sorted(system.equations, key=lambda e: e.source):
        blocks[kc - o.c[eq.source] + eq.level].append((eq.source, eq.level))
    stages: list[list[tuple[int, int]]] = [[] for _ in range(kc + 1)]
    for j, m in system.variables:
        stages[max(0, kc - o.d[j] + m)].append((j, m))
    return BlockSchedule(
        tuple(tuple(b) for b in blocks),
        tuple(tuple(s) for s in stages),
    )
