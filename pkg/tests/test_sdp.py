import numpy as np
import pytest
from plants import random_plant

from lftrobust.lft import PartitionedSystem
from lftrobust.lmi import (AffineMatrixExpr, LmiProblem, VariableGroup, VariableSpace, affine,
                           build_performance_lmis, build_stabilization_lmis,
                           build_unconstrained_lmis)
from lftrobust.sdp import (BELOW_THRESHOLD, SolverOptions, SolverTimeout, constraint_margins,
                           evaluate_margin, solve_feasibility)
from lftrobust.structures import CommutantElement, make_block_structure

S1 = make_block_structure([(1, 1)])


def scalar_space():
    return VariableSpace((VariableGroup("Y", "commutant", S1, positive=True),))


def scalar_problem(coef):
    space = scalar_space()
    return LmiProblem(space, (affine(space, np.zeros((1, 1)), {"Y": lambda E: coef * E}),))


def test_infeasible_scalar_family():
    res = solve_feasibility(scalar_problem(3.0))
    assert res.status == BELOW_THRESHOLD
    assert res.margin < 1e-7


def test_feasible_scalar_family():
    res = solve_feasibility(scalar_problem(0.25 - 1.0))
    assert res.feasible
    assert evaluate_margin(scalar_problem(-0.75), res.vector) >= 1e-7


def test_unconstrained_scalar_solution_below_one_third():
    P = PartitionedSystem.build([[2.0]], S1, B2=[[1.0]], C2=[[1.0]])
    res = solve_feasibility(build_unconstrained_lmis(P))
    assert res.feasible
    x, y = res.assignment["X"].cores[0][0, 0], res.assignment["Y"].cores[0][0, 0]
    assert 0 < x < 1 / 3 and 0 < y < 1 / 3


@pytest.mark.parametrize("A,B2,C2", [(2.0, 0.0, 1.0), (2.0, 1.0, 0.0), (1.5, 0.0, 0.0)])
def test_unstabilizable_scalar_families(A, B2, C2):
    P = PartitionedSystem.build([[A]], S1, B2=[[B2]], C2=[[C2]])
    assert not solve_feasibility(build_unconstrained_lmis(P)).feasible


def test_zero_and_identity_constraints():
    space = scalar_space()
    zero = LmiProblem(space, (AffineMatrixExpr(np.zeros((2, 2)), np.zeros((1, 2, 2))),))
    y = {"Y": CommutantElement(S1, (np.array([[5.0]]),))}
    assert evaluate_margin(zero, y) == 0.0
    neg = LmiProblem(space, (AffineMatrixExpr(-np.eye(2), np.zeros((1, 2, 2))),))
    assert evaluate_margin(neg, y) == 1.0


def test_positive_variable_margin_counts():
    prob = scalar_problem(-1.0)
    m = constraint_margins(prob, {"Y": np.array([[0.2]])})
    assert m["Y>0:1"] == pytest.approx(0.2)
    assert evaluate_margin(prob, {"Y": np.array([[0.2]])}) == pytest.approx(0.2)


def test_missing_variable_rejected():
    P = PartitionedSystem.build([[0.5]], S1, B2=[[1.0]], C2=[[1.0]])
    with pytest.raises((KeyError, ValueError)):
        evaluate_margin(build_unconstrained_lmis(P), {"X": np.eye(1)})


def test_solver_beats_random_assignments():
    rng = np.random.default_rng(0)
    s = make_block_structure([(1, 2)])
    checked = 0
    while checked < 50:
        P = random_plant(rng, s, scale=rng.uniform(0.3, 1.2))
        lmis = build_performance_lmis(P)
        res = solve_feasibility(lmis)
        if not res.feasible:
            continue
        for _ in range(3):
            v = rng.standard_normal(lmis.space.size)
            # keep the random point inside the same trace cap
            v *= rng.uniform(0.01, 1.0) * np.linalg.norm(res.vector) / np.linalg.norm(v)
            assert res.margin >= evaluate_margin(lmis, v) - 1e-9
        checked += 1


def test_reported_margin_matches_recomputation():
    rng = np.random.default_rng(1)
    for _ in range(10):
        P = random_plant(rng, make_block_structure([(2, 1), (1, 1)]))
        lmis = build_unconstrained_lmis(P)
        res = solve_feasibility(lmis)
        assert evaluate_margin(lmis, res.assignment) == pytest.approx(res.margin, abs=1e-9)
        if res.feasible:
            assert res.margin >= 1e-7


@pytest.mark.parametrize("alpha", [1e-3, 0.5, 7.0, 1e3])
def test_homogeneous_verdict_scale_invariant(alpha):
    rng = np.random.default_rng(2)
    for _ in range(8):
        P = random_plant(rng, make_block_structure([(1, 2)]), scale=rng.uniform(0.5, 2.5))
        base = build_stabilization_lmis(P)
        if not base.constraints:
            continue
        scaled = base.with_constraints(
            [AffineMatrixExpr(alpha * c.const, alpha * c.coeffs, c.label) for c in base.constraints])
        assert solve_feasibility(base).status == solve_feasibility(scaled).status


def test_deterministic():
    rng = np.random.default_rng(3)
    lmis = build_performance_lmis(random_plant(rng, make_block_structure([(1, 2), (1, 1)])))
    a, b = solve_feasibility(lmis), solve_feasibility(lmis)
    assert np.array_equal(a.vector, b.vector)
    assert a.margin == b.margin and a.status == b.status


def test_iteration_cap_raises_with_best_margin():
    rng = np.random.default_rng(4)
    lmis = build_performance_lmis(random_plant(rng, make_block_structure([(1, 2)])))
    with pytest.raises(SolverTimeout) as exc:
        solve_feasibility(lmis, SolverOptions(max_iter=1))
    assert np.isfinite(exc.value.best_margin)


def test_empty_problem_rejected():
    with pytest.raises(ValueError):
        solve_feasibility(LmiProblem(VariableSpace(()), ()))


def test_trace_cap_respected():
    res = solve_feasibility(scalar_problem(-1.0), SolverOptions(trace_cap=10.0))
    assert res.assignment["Y"].cores[0][0, 0] <= 10.0 + 1e-9
