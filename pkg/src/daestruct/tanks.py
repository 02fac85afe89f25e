"""Cascade of k stirred tanks with a shared flow rate.

Each tank i has concentration ``Ci`` and volume ``Vi``; the flow ``q`` is
prescribed by the input ``Q``.  Case ``a`` fixes the feed concentration
``C0`` and gives an index-1 system; case ``b`` fixes the product
concentration ``Ck`` and the index grows with k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import NotQuasiTriangular
from .expr import (
    ZERO,
    Add,
    Div,
    Driver,
    Expr,
    Neg,
    Var,
    add,
    expand,
    neg,
    postorder,
    sub,
    substitute,
    symbols,
    to_text,
)
from .language import Model, parse_model
from .sigma import Analysis, analyze


@dataclass(frozen=True)
class TankSpec:
    k: int
    case: str = "b"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"need at least one tank, got k={self.k}")
        if self.case not in ("a", "b"):
            raise ValueError(f"case must be 'a' or 'b', got {self.case!r}")

    @property
    def specified(self) -> str:
        """Name of the concentration fixed by the specification."""
        return "C0" if self.case == "a" else f"C{self.k}"


def tank_model_text(spec: TankSpec) -> str:
    k = spec.k
    concentrations = [f"C{i}" for i in range(k + 1)]
    volumes = [f"V{i}" for i in range(1, k + 1)]
    lines = [
        f"model tanks_k{k}_{spec.case}",
        "var " + ", ".join(concentrations + volumes + ["q"]),
        f"input Q, {spec.specified}spec",
    ]
    for i in range(1, k + 1):
        lines.append(f"eq der(C{i}, 1) = q * (C{i - 1} - C{i}) / V{i}")
    for i in range(1, k + 1):
        lines.append(f"eq der(V{i}, 1) = 0")
    lines.append("eq q = Q")
    lines.append(f"eq {spec.specified} = {spec.specified}spec")
    return "\n".join(lines) + "\n"


def generate_tank_model(spec: TankSpec) -> Model:
    """Equations: k concentration balances, k constant-volume equations,
    ``q = Q``, then the case constraint.  Variables ``C0..Ck, V1..Vk, q``."""
    return parse_model(tank_model_text(spec))


def expected_offsets(spec: TankSpec) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Closed-form ``(c, d)`` for case b in the generator's ordering."""
    if spec.case != "b":
        raise ValueError("closed-form offsets are only known for case b")
    k = spec.k
    c = list(range(k)) + [max(0, i - 2) for i in range(1, k + 1)] + [k - 1, k]
    d = list(range(k + 1)) + [max(1, i - 1) for i in range(1, k + 1)] + [k - 1]
    return tuple(c), tuple(d)


def expected_counts(k: int) -> tuple[int, int]:
    """Prolonged equation and variable counts (M, N) for case b."""
    return k * k + 2 * k + 2, k * k + 3 * k + 2


@dataclass(frozen=True)
class DofIndexResult:
    k: int
    dof: int
    index: int
    matches: bool

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "case": "b",
            "expected": {"dof": self.k, "index": self.k + 1},
            "actual": {"dof": self.dof, "index": self.index},
            "matches": self.matches,
        }


def theorem1_check(spec: TankSpec, analysis: Analysis | None = None) -> DofIndexResult:
    """Run the pipeline and compare against D = k, index = k + 1."""
    if spec.case != "b":
        raise ValueError("the degrees-of-freedom law is stated for case b")
    if analysis is None:
        analysis = analyze(generate_tank_model(spec))
    dof = analysis.degrees_of_freedom
    index = analysis.structural_index
    return DofIndexResult(spec.k, dof, index, dof == spec.k and index == spec.k + 1)


@dataclass(frozen=True)
class Reduction:
    """Explicit form of a quasi-triangular system.

    ``odes`` maps each state to its substituted right-hand side,
    ``constraints`` the algebraically fixed variables to their inputs, and
    ``side_conditions`` lists denominators that must not vanish.
    """

    model: Model
    odes: tuple[tuple[str, Expr], ...]
    constraints: tuple[tuple[str, str], ...]
    side_conditions: tuple[str, ...] = field(default=())

    def to_text(self) -> str:
        lines = [f"der({name}, 1) = {to_text(rhs)}" for name, rhs in self.odes]
        lines += [f"{name} = {source}" for name, source in self.constraints]
        lines += list(self.side_conditions)
        return "\n".join(lines)


def _explicit_constraint(eq: Expr):
    # Matches ``x - g`` for a variable x and an input g, both undifferentiated.
    if isinstance(eq, Add) and len(eq.args) == 2:
        a, b = eq.args
        if isinstance(a, Var) and a.order == 0 and isinstance(b, Neg):
            g = b.args[0]
            if isinstance(g, Driver) and g.order == 0:
                return a, g
    return None


def _explicit_ode(eq: Expr):
    # Matches ``der(x, 1) - rhs`` and returns (x, rhs).
    if isinstance(eq, Var) and eq.order == 1:
        return eq.name, ZERO
    if isinstance(eq, Add) and isinstance(eq.args[0], Var) and eq.args[0].order == 1:
        return eq.args[0].name, neg(add(*eq.args[1:]))
    return None


def reduce_quasitriangular(model: Model) -> Reduction:
    """Substitute the explicit input constraints ``x = g(t)`` into the
    remaining first-order equations.

    Every non-constraint equation must have the form ``der(x, 1) = rhs``
    with ``x`` not itself constrained and ``rhs`` free of derivatives; this
    holds for the case-a tank cascade and fails for case b, whose product
    constraint fixes a differentiated state.
    """
    constraints = {}
    others = []
    for eq in model.equations:
        hit = _explicit_constraint(eq)
        if hit is not None:
            constraints[hit[0]] = hit[1]
        else:
            others.append(eq)
    if not constraints:
        raise NotQuasiTriangular("no explicit input constraints x = g(t)")

    odes = []
    states = set()
    for eq in others:
        hit = _explicit_ode(eq)
        if hit is None:
            raise NotQuasiTriangular(f"not an explicit first-order equation: {to_text(eq)} = 0")
        name, rhs = hit
        if Var(name) in constraints:
            raise NotQuasiTriangular(f"{name} is both constrained and differentiated")
        if name in states:
            raise NotQuasiTriangular(f"two equations for der({name}, 1)")
        states.add(name)
        rhs = expand(substitute(rhs, constraints))
        if any(isinstance(s, Var) and s.order > 0 for s in symbols(rhs)):
            raise NotQuasiTriangular(f"right-hand side of der({name}, 1) contains derivatives")
        odes.append((name, rhs))

    side = []
    for _, rhs in odes:
        for node in postorder(rhs):
            if isinstance(node, Div):
                condition = f"{to_text(node.den)} != 0"
                if condition not in side:
                    side.append(condition)

    equations = [sub(Var(name, 1), rhs) for name, rhs in odes]
    equations += [sub(v, g) for v, g in constraints.items()]
    reduced = Model(f"{model.name}_reduced", model.variables, model.drivers, tuple(equations))
    return Reduction(
        reduced,
        tuple(odes),
        tuple((v.name, g.name) for v, g in constraints.items()),
        tuple(side),
    )


def determinant_law(k: int, values: dict) -> float:
    """Closed-form ``det J = -q**k / (V1 * ... * Vk)`` for case b."""
    out = -values["q"] ** k
    for i in range(1, k + 1):
        out /= values[f"V{i}"]
    return out


@dataclass(frozen=True)
class Check:
    name: str
    k: int
    passed: bool
    detail: str = ""

    def to_json(self) -> dict:
        return {"check": self.name, "k": self.k, "passed": self.passed, "detail": self.detail}


def verify_closed_forms(k_max: int, seed: int = 0, det_points: int = 5, det_k_max: int = 8) -> list[Check]:
    """Run every closed-form tank check for k = 1..k_max.

    Case b: offsets, D = k and index k + 1, duality with the transversal
    value, prolonged counts, and the determinant law at ``det_points`` random
    points (k <= det_k_max).  Case a: index 1 with all c zero.
    """
    import numpy as np

    from .expr import Point
    from .jacobian import evaluate_jacobian, system_jacobian
    from .prolong import prolong

    rng = np.random.default_rng(seed)
    checks = []
    for k in range(1, k_max + 1):
        spec = TankSpec(k, "b")
        model = generate_tank_model(spec)
        analysis = analyze(model)
        o = analysis.offsets
        c, d = expected_offsets(spec)
        checks.append(Check("offsets", k, (o.c, o.d) == (c, d), f"c={list(o.c)} d={list(o.d)}"))
        t1 = theorem1_check(spec, analysis)
        checks.append(Check("dof_and_index", k, t1.matches, f"dof={t1.dof} index={t1.index}"))
        checks.append(
            Check("duality", k, analysis.degrees_of_freedom == analysis.hvt.value, f"hvt={analysis.hvt.value}")
        )
        system = prolong(model, o)
        checks.append(
            Check("counts", k, (system.M, system.N) == expected_counts(k), f"M={system.M} N={system.N}")
        )
        if k <= det_k_max:
            jac = system_jacobian(model, o)
            syms = sorted(jac.symbols(), key=to_text)
            worst = 0.0
            for _ in range(det_points):
                values = {s: float(v) for s, v in zip(syms, rng.uniform(0.5, 2.0, len(syms)))}
                det = float(np.linalg.det(evaluate_jacobian(jac, Point(0.0, values))))
                expected = determinant_law(k, {s.name: v for s, v in values.items() if s.order == 0})
                worst = max(worst, abs(det - expected) / abs(expected))
            checks.append(Check("determinant", k, worst <= 1e-9, f"max relative error {worst:.2e}"))
        a = analyze(generate_tank_model(TankSpec(k, "a")))
        checks.append(
            Check(
                "case_a_index_1",
                k,
                a.structural_index == 1 and not any(a.offsets.c),
                f"index={a.structural_index}",
            )
        )
    return checks
