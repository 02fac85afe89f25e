"""System Jacobian, nonsingularity checks, and consistent initial points."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.linalg

from .errors import DomainError, EvaluationError, MissingAssignment, NoConvergence, SingularStage
from .expr import ZERO, Driver, Expr, Point, Var, evaluate, partial_derivative, symbols, to_text
from .language import Model
from .prolong import ProlongedSystem, block_schedule
from .sigma import Offsets

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
RESIDUAL_TOL = 1e-8
MAX_HALVINGS = 30


@dataclass(frozen=True)
class JacobianMatrix:
    model: Model
    offsets: Offsets
    entries: tuple[tuple[Expr, ...], ...]

    @property
    def n(self) -> int:
        return len(self.entries)

    def nonzero_pattern(self) -> list[tuple[int, int]]:
        return [
            (i, j)
            for i, row in enumerate(self.entries)
            for j, e in enumerate(row)
            if e is not ZERO
        ]

    def symbols(self) -> set:
        found = set()
        for row in self.entries:
            for e in row:
                found |= symbols(e)
        return found

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "variables": list(self.model.variables),
            "entries": [[to_text(e) for e in row] for row in self.entries],
            "nonzeros": len(self.nonzero_pattern()),
        }


def system_jacobian(model: Model, offsets: Offsets) -> JacobianMatrix:
    """``J[i][j] = d f_i / d x_j^(d_j - c_i)`` where that derivative occurs
    in ``f_i``, else the literal zero."""
    rows = []
    for i, f in enumerate(model.equations):
        present = symbols(f)
        row = []
        for j, name in enumerate(model.variables):
            order = offsets.d[j] - offsets.c[i]
            target = Var(name, order) if order >= 0 else None
            if target is not None and target in present:
                row.append(partial_derivative(f, target))
            else:
                row.append(ZERO)
        rows.append(tuple(row))
    return JacobianMatrix(model, offsets, tuple(rows))


def evaluate_jacobian(jac: JacobianMatrix, point: Point) -> np.ndarray:
    out = np.zeros((jac.n, jac.n))
    for i, row in enumerate(jac.entries):
        for j, e in enumerate(row):
            if e is ZERO:
                continue
            try:
                out[i, j] = evaluate(e, point)
            except EvaluationError as err:
                wrapped = type(err)(f"J[{i}][{j}]: {err}")
                wrapped.entry = (i, j)
                raise wrapped from err
    return out


@dataclass(frozen=True)
class NonsingularityResult:
    nonsingular: bool
    min_pivot: float
    condition: Optional[float]

    def to_json(self) -> dict:
        return {
            "nonsingular": self.nonsingular,
            "min_pivot": self.min_pivot,
            "condition": self.condition,
        }


def lu_pivots(a: np.ndarray) -> np.ndarray:
    """Diagonal of U from LU with partial pivoting."""
    if a.size == 0:
        return np.ones(0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, _ = scipy.linalg.lu_factor(a, check_finite=True)
    return np.diag(lu)


def check_matrix(a: np.ndarray, tol: float = PIVOT_TOL) -> NonsingularityResult:
    """Singular iff some LU pivot is below ``tol`` times the max-norm of ``a``."""
    pivots = np.abs(lu_pivots(a))
    scale = np.abs(a).max() if a.size else 1.0
    min_pivot = float(pivots.min()) if pivots.size else 1.0
    if scale == 0.0 or min_pivot < tol * scale:
        return NonsingularityResult(False, min_pivot, None)
    return NonsingularityResult(True, min_pivot, float(np.linalg.cond(a, 1)))


def nonsingularity_check(jac: JacobianMatrix, point: Point, tol: float = PIVOT_TOL) -> NonsingularityResult:
    return check_matrix(evaluate_jacobian(jac, point), tol)


# -- consistent points ----------------------------------------------------------------


@dataclass(frozen=True)
class StageLog:
    stage: int
    equations: tuple[tuple[int, int], ...]
    unknowns: tuple[Var, ...]
    frozen: tuple[Var, ...]
    iterations: int
    residual: float
    fallback: bool = False

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "equations": [list(e) for e in self.equations],
            "unknowns": [to_text(s) for s in self.unknowns],
            "frozen": [to_text(s) for s in self.frozen],
            "iterations": self.iterations,
            "residual": self.residual,
            "fallback": self.fallback,
        }


@dataclass(frozen=True)
class ConsistentPointResult:
    point: Point
    residual_norm: float
    free: tuple[tuple[Var, float], ...]
    stages: tuple[StageLog, ...] = field(default=())

    def to_json(self) -> dict:
        return {
            "t": self.point.t,
            "point": {to_text(s): v for s, v in self.point.values.items()},
            "residual": self.residual_norm,
            "free": [{"symbol": to_text(s), "value": v} for s, v in self.free],
            "stages": [s.to_json() for s in self.stages],
        }


class _Stage:
    """Equations of one block, solved for some of their not yet fixed
    variables by damped Newton."""

    def __init__(self, index: int, exprs: list[Expr], t: float, values: dict):
        self.index = index
        self.exprs = exprs
        self.t = t
        self.values = values
        self._partials: dict = {}

    def residual(self) -> np.ndarray:
        memo: dict = {}
        point = Point(self.t, self.values)
        return np.array([evaluate(e, point, memo) for e in self.exprs])

    def jacobian(self, unknowns) -> np.ndarray:
        point = Point(self.t, self.values)
        out = np.zeros((len(self.exprs), len(unknowns)))
        for r, e in enumerate(self.exprs):
            for col, s in enumerate(unknowns):
                key = (r, s)
                if key not in self._partials:
                    self._partials[key] = partial_derivative(e, s)
                if self._partials[key] is not ZERO:
                    out[r, col] = evaluate(self._partials[key], point)
        return out

    def _set(self, unknowns, x):
        self.values.update(zip(unknowns, (float(v) for v in x)))

    def _try_norm(self, unknowns, x) -> float:
        self._set(unknowns, x)
        try:
            return float(np.linalg.norm(self.residual()))
        except DomainError:
            return np.inf

    def newton(self, unknowns, tol: float, max_iter: int, pivot_tol: float, least_squares: bool = False) -> tuple[int, float]:
        """Damped Newton on ``unknowns``; with ``least_squares`` the step is
        the minimum-norm Gauss-Newton step, for a non-square stage."""
        x = np.array([self.values[s] for s in unknowns], dtype=float)
        norm = self._try_norm(unknowns, x)
        if not np.isfinite(norm):
            raise DomainError(f"stage {self.index}: residual undefined at the initial guess")
        for iteration in range(max_iter + 1):
            if norm <= tol:
                return iteration, norm
            if iteration == max_iter:
                break
            F = self.residual()
            J = self.jacobian(unknowns)
            if least_squares:
                step = np.linalg.lstsq(J, -F, rcond=None)[0]
            else:
                if not check_matrix(J, pivot_tol).nonsingular:
                    raise SingularStage("stage Jacobian became singular during Newton", self.index)
                step = np.linalg.solve(J, -F)
            lam = 1.0
            for _ in range(MAX_HALVINGS + 1):
                trial = self._try_norm(unknowns, x + lam * step)
                if trial < norm:
                    break
                lam /= 2
            else:
                self._set(unknowns, x)
                raise NoConvergence(f"no decrease after {MAX_HALVINGS} step halvings, residual {norm:.3e}", self.index)
            x = x + lam * step
            norm = trial
        self._set(unknowns, x)
        raise NoConvergence(f"residual {norm:.3e} after {max_iter} iterations", self.index)


def _select_unknowns(J: np.ndarray, candidates: list, m: int, pivot_tol: float, stage: int) -> list:
    """The first ``m`` pivot columns of a column-pivoted QR of ``J``."""
    if len(candidates) < m:
        raise SingularStage(
            f"{m} equations but only {len(candidates)} undetermined variables", stage
        )
    scale = np.abs(J).max() if J.size else 0.0
    if scale == 0.0:
        raise SingularStage("stage Jacobian is zero", stage)
    _, R, perm = scipy.linalg.qr(J, pivoting=True, mode="economic")
    if abs(R[m - 1, m - 1]) < pivot_tol * scale:
        raise SingularStage(f"stage Jacobian has rank below {m}", stage)
    chosen = sorted(perm[:m])
    return [candidates[k] for k in chosen]


def solve_consistent_point(
    system: ProlongedSystem,
    guesses: Point,
    free_values: Optional[Mapping[Var, float]] = None,
    tol: float = RESIDUAL_TOL,
    max_iter: int = 50,
    pivot_tol: float = PIVOT_TOL,
) -> ConsistentPointResult:
    """Solve the prolonged system block by block.

    Each block is solved by damped Newton for the variables it references
    first, holding earlier blocks fixed.  When a block has more such
    variables than equations, the surplus stays frozen at its guess (or at
    the value in ``free_values``): these are the non-pivot columns of a
    column-pivoted QR of the block Jacobian at the guess.  Should Newton
    fail for that choice, the block is first solved in the least-squares
    sense over all its variables and the split is re-chosen there.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    free_values = dict(free_values or {})
    schedule = block_schedule(system)
    order = {s: k for k, s in enumerate(system.variable_symbols())}
    values = dict(guesses.values)
    values.update(free_values)

    needed = set(order)
    for eq in system.equations:
        needed |= {s for s in symbols(eq.expr) if isinstance(s, Driver)}
    missing = sorted(to_text(s) for s in needed if s not in values)
    if missing:
        raise MissingAssignment(f"no guess for {', '.join(missing)}")

    by_key = {(eq.source, eq.level): eq.expr for eq in system.equations}
    # Stage residuals add in quadrature; this keeps the full norm within tol.
    stage_tol = tol / np.sqrt(max(1, sum(1 for b in schedule.blocks if b)))
    fixed: set = set()
    frozen: list[Var] = []
    logs = []
    for p, block in enumerate(schedule.blocks):
        exprs = [by_key[key] for key in block]
        referenced = set()
        for e in exprs:
            referenced |= {s for s in symbols(e) if isinstance(s, Var) and s not in fixed}
        referenced = sorted(referenced, key=order.__getitem__)
        # Highest derivatives first: pivoting ties then solve for them and
        # leave lower orders (the states) at their guesses.
        candidates = sorted(
            (s for s in referenced if s not in free_values), key=lambda s: (-s.order, order[s])
        )
        overridden = [s for s in referenced if s in free_values]
        stage = _Stage(p, exprs, guesses.t, values)
        m = len(exprs)
        fallback = False
        if m == 0:
            unknowns, iterations, residual = [], 0, 0.0
        else:
            start = dict(values)
            unknowns = _select_unknowns(stage.jacobian(candidates), candidates, m, pivot_tol, p)
            try:
                iterations, residual = stage.newton(unknowns, stage_tol, max_iter, pivot_tol)
            except (NoConvergence, SingularStage) as err:
                if len(candidates) == m:
                    raise
                log.info("stage %d: %s; retrying with least-squares split", p, err)
                values.clear()
                values.update(start)
                stage.newton(candidates, stage_tol, max_iter, pivot_tol, least_squares=True)
                unknowns = _select_unknowns(stage.jacobian(candidates), candidates, m, pivot_tol, p)
                iterations, residual = stage.newton(unknowns, stage_tol, max_iter, pivot_tol)
                fallback = True
        chosen = set(unknowns)
        frozen_here = [s for s in candidates if s not in chosen] + overridden
        frozen += frozen_here
        fixed |= set(referenced)
        logs.append(StageLog(p, tuple(block), tuple(unknowns), tuple(frozen_here), iterations, residual, fallback))

    # Variables no equation mentions are free as well.
    for s in order:
        if s not in fixed:
            frozen.append(s)

    point = Point(guesses.t, values)
    memo: dict = {}
    full = np.array([evaluate(eq.expr, point, memo) for eq in system.equations])
    residual_norm = float(np.linalg.norm(full)) if full.size else 0.0
    if residual_norm > tol:
        raise NoConvergence(f"full residual {residual_norm:.3e} exceeds tolerance", len(schedule.blocks) - 1)
    frozen.sort(key=order.__getitem__)
    return ConsistentPointResult(
        point,
        residual_norm,
        tuple((s, values[s]) for s in frozen),
        tuple(logs),
    )


def constant_drivers(system: ProlongedSystem, values: Mapping[str, float]) -> dict:
    """Assignments for inputs held constant: the value itself and zero for
    every derivative the prolonged system references."""
    out = {}
    for eq in system.equations:
        for s in symbols(eq.expr):
            if isinstance(s, Driver):
                out[s] = float(values[s.name]) if s.order == 0 else 0.0
    for name, value in values.items():
        out.setdefault(Driver(name, 0), float(value))
    return out
