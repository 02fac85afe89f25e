import numpy as np
import pytest

from daestruct.errors import NotQuasiTriangular
from daestruct.expr import Driver, Point, Var, evaluate, to_text
from daestruct.language import parse_model
from daestruct.prolong import block_schedule, prolong
from daestruct.sigma import analyze
from daestruct.tanks import (
    TankSpec,
    expected_counts,
    expected_offsets,
    generate_tank_model,
    reduce_quasitriangular,
    theorem1_check,
    verify_closed_forms,
)

from oracles import minimal_offsets


def test_spec_validation():
    with pytest.raises(ValueError):
        TankSpec(0)
    with pytest.raises(ValueError):
        TankSpec(2, "c")
    assert TankSpec(3, "a").specified == "C0"
    assert TankSpec(3, "b").specified == "C3"


def test_generator_shapes():
    m = generate_tank_model(TankSpec(3, "a"))
    assert len(m.equations) == m.n == 8
    assert m.variables == ("C0", "C1", "C2", "C3", "V1", "V2", "V3", "q")
    m = generate_tank_model(TankSpec(4, "b"))
    assert len(m.equations) == 10
    assert m.drivers == ("Q", "C4spec")
    assert generate_tank_model(TankSpec(1)).n == 4


def test_generated_equations_evaluate_as_written():
    m = generate_tank_model(TankSpec(2))
    vals = {Var("C0"): 1.0, Var("C1"): 0.5, Var("C2"): 0.25, Var("V1"): 2.0, Var("V2"): 4.0,
            Var("q"): 3.0, Var("C1", 1): 0.0, Var("C2", 1): 0.0, Var("V1", 1): 0.0,
            Var("V2", 1): 0.0, Driver("Q"): 3.0, Driver("C2spec"): 0.25}
    p = Point(0.0, vals)
    assert evaluate(m.equations[0], p) == pytest.approx(-3.0 * 0.5 / 2.0)
    assert evaluate(m.equations[1], p) == pytest.approx(-3.0 * 0.25 / 4.0)
    assert [evaluate(e, p) for e in m.equations[2:]] == [0.0, 0.0, 0.0, 0.0]


def test_expected_offsets_small():
    assert expected_offsets(TankSpec(1)) == ((0, 0, 0, 1), (0, 1, 1, 0))
    assert expected_offsets(TankSpec(2)) == ((0, 1, 0, 0, 1, 2), (0, 1, 2, 1, 1, 1))
    assert expected_offsets(TankSpec(4)) == (
        (0, 1, 2, 3, 0, 0, 1, 2, 3, 4),
        (0, 1, 2, 3, 4, 1, 1, 2, 3, 3),
    )
    with pytest.raises(ValueError):
        expected_offsets(TankSpec(2, "a"))


@pytest.mark.parametrize("k, bound", [(1, None), (2, None), (3, 4)])
def test_expected_offsets_match_brute_force(k, bound):
    sigma = analyze(generate_tank_model(TankSpec(k))).sigma
    assert minimal_offsets(sigma.to_json(), bound) == expected_offsets(TankSpec(k))


@pytest.mark.parametrize("k", range(1, 21))
def test_pipeline_matches_closed_form(k):
    a = analyze(generate_tank_model(TankSpec(k)))
    assert (a.offsets.c, a.offsets.d) == expected_offsets(TankSpec(k))
    result = theorem1_check(TankSpec(k), a)
    assert result.matches and result.dof == k and result.index == k + 1


@pytest.mark.parametrize("k", range(1, 11))
def test_case_a_is_index_one(k):
    a = analyze(generate_tank_model(TankSpec(k, "a")))
    assert a.structural_index == 1
    assert set(a.offsets.c) == {0}


def test_counts():
    assert expected_counts(4) == (26, 30)


def test_final_stage_holds_top_derivatives():
    for k in (2, 4, 7):
        model = generate_tank_model(TankSpec(k))
        s = prolong(model, analyze(model).offsets)
        last = block_schedule(s).stages[-1]
        assert sorted(last) == [(j, d) for j, d in enumerate(s.offsets.d)]


def test_theorem1_json():
    report = theorem1_check(TankSpec(3)).to_json()
    assert report["expected"] == report["actual"] == {"dof": 3, "index": 4}


def test_reduction_k3_case_a():
    r = reduce_quasitriangular(generate_tank_model(TankSpec(3, "a")))
    rhs = {name: text.replace(" ", "") for name, text in
           (line.split(" = ", 1) for line in r.to_text().splitlines() if " = " in line)}
    assert rhs["der(C1, 1)"] == "(Q*C0spec-Q*C1)/V1"
    assert rhs["der(C2, 1)"] == "(Q*C1-Q*C2)/V2"
    assert rhs["der(C3, 1)"] == "(Q*C2-Q*C3)/V3"
    assert rhs["der(V1, 1)"] == "0"
    assert rhs["C0"] == "C0spec" and rhs["q"] == "Q"
    assert r.side_conditions == ("V1 != 0", "V2 != 0", "V3 != 0")


def test_reduction_agrees_numerically():
    model = generate_tank_model(TankSpec(2, "a"))
    r = reduce_quasitriangular(model)
    rng = np.random.default_rng(3)
    vals = {Var(n): float(rng.uniform(0.5, 2)) for n in model.variables}
    vals.update({Driver("Q"): vals[Var("q")], Driver("C0spec"): vals[Var("C0")]})
    p = Point(0.0, vals)
    odes = dict(r.odes)
    for i in (1, 2):
        expected = vals[Var("q")] * (vals[Var(f"C{i-1}")] - vals[Var(f"C{i}")]) / vals[Var(f"V{i}")]
        assert evaluate(odes[f"C{i}"], p) == pytest.approx(expected)


def test_reduction_single_tank():
    r = reduce_quasitriangular(generate_tank_model(TankSpec(1, "a")))
    assert [name for name, _ in r.odes] == ["C1", "V1"]
    assert to_text(dict(r.odes)["C1"]) == "(Q * C0spec - Q * C1) / V1"
    assert r.side_conditions == ("V1 != 0",)


def test_reduction_rejects_case_b():
    with pytest.raises(NotQuasiTriangular):
        reduce_quasitriangular(generate_tank_model(TankSpec(3, "b")))
    with pytest.raises(NotQuasiTriangular):
        reduce_quasitriangular(parse_model("model m\nvar x\neq der(x, 1) = x\n"))


def test_verify_closed_forms():
    checks = verify_closed_forms(6, seed=1)
    assert checks and all(c.passed for c in checks)
    assert {c.name for c in checks} == {
        "offsets", "dof_and_index", "duality", "counts", "determinant", "case_a_index_1"
    }
