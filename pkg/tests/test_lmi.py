import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from plants import random_plant, random_spd

from lftrobust.lft import PartitionedSystem
from lftrobust.lmi import (LmiProblem, VariableGroup, VariableSpace, affine,
                           build_adjusted_lmis, build_performance_lmis,
                           build_stabilization_lmis, build_unconstrained_lmis,
                           coupling_constraints, coupling_rank, is_negative_definite,
                           kernel_basis, schur_complement)
from lftrobust.sdp import evaluate_margin, solve_feasibility
from lftrobust.structures import CommutantElement, StructureError, make_block_structure

S1 = make_block_structure([(1, 1)])


def scalar_plant(A, B2=0.0, C2=0.0, **kw):
    return PartitionedSystem.build([[A]], S1, B2=[[B2]], C2=[[C2]], **kw)


def scalar_pair(x, y, s=S1):
    return {"X": CommutantElement(s, (np.array([[x]]),)),
            "Y": CommutantElement(s, (np.array([[y]]),))}


# -- kernels and Schur complements ------------------------------------------

def test_kernel_of_row():
    N = kernel_basis(np.array([[1.0, 0.0]])).N
    assert N.shape == (2, 1)
    assert np.allclose(np.abs(N[:, 0]), [0.0, 1.0])


def test_kernel_of_identity_is_empty():
    assert kernel_basis(np.eye(2)).rank == 0


def test_kernel_random_rank_two():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((2, 4))
    N = kernel_basis(M).N
    assert N.shape == (4, 2)
    assert np.abs(M @ N).max() <= 1e-10
    assert np.allclose(N.T @ N, np.eye(2))


def test_kernel_of_empty_rows():
    assert np.array_equal(kernel_basis(np.zeros((0, 3))).N, np.eye(3))


def test_schur_examples():
    assert schur_complement(np.array([[2.0, 1.0], [1.0, 1.0]]), 1)[0, 0] == pytest.approx(1.0)
    P = np.diag([1.0, 2.0])
    S = np.block([[P, np.zeros((2, 1))], [np.zeros((1, 2)), np.eye(1)]])
    assert np.array_equal(schur_complement(S, 2), P)
    with pytest.raises(np.linalg.LinAlgError):
        schur_complement(np.array([[1.0, 1.0], [1.0, 0.0]]), 1)


def test_definiteness_predicate_agrees_with_eigenvalues():
    rng = np.random.default_rng(1)
    agree = 0
    for _ in range(50):
        G = rng.standard_normal((6, 6))
        S = G + G.T - rng.uniform(0, 8) * np.eye(6)
        direct = np.linalg.eigvalsh(S)[-1] < 0
        agree += is_negative_definite(S, 3) == direct
    assert agree == 50


# -- coupling -----------------------------------------------------------------

def test_coupling_inverse_pair_needs_no_controller_state():
    rng = np.random.default_rng(2)
    s = make_block_structure([(1, 2), (2, 1)])
    X = CommutantElement(s, (random_spd(rng, 2), np.array([[3.0]])))
    rep = coupling_rank(X, X.inverse(), [0, 0])
    assert all(r.passed for r in rep)
    assert [r.rank for r in rep] == [2, 1]
    assert [r.minimal_ctrl_dim for r in rep] == [0, 0]


def test_coupling_scalar_two_two():
    rep = coupling_rank(*scalar_pair(2.0, 2.0).values(), [0])[0]
    assert rep.psd and rep.rank == 2 and not rep.rank_ok
    assert rep.min_eigenvalue == pytest.approx(1.0)
    assert rep.minimal_ctrl_dim == 1
    assert coupling_rank(*scalar_pair(2.0, 2.0).values(), [1])[0].passed


def test_coupling_violation():
    rep = coupling_rank(*scalar_pair(1.0, 0.5).values(), [None])[0]
    assert not rep.psd and not rep.passed


def test_coupling_rejects_indefinite_input():
    with pytest.raises(ValueError):
        coupling_rank(*scalar_pair(-1.0, 1.0).values(), [0])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 4))
def test_coupling_psd_iff_schur(seed, n):
    rng = np.random.default_rng(seed)
    X, Y = random_spd(rng, n, 20), random_spd(rng, n, 20)
    C = np.block([[X, np.eye(n)], [np.eye(n), Y]])
    w = np.linalg.eigvalsh(C)[0]
    s = np.linalg.eigvalsh(X - np.linalg.inv(Y))[0]
    if min(abs(w), abs(s)) > 1e-9:
        assert (w > 0) == (s > 0)


def test_scalar_coupling_rank_forces_reciprocal():
    for mu in np.logspace(-2, 2, 9):
        for mut in (0.5 / mu, 1.0 / mu, 2.0 / mu):
            rep = coupling_rank(*scalar_pair(mut, mu).values(), [0])[0]
            assert rep.passed == bool(np.isclose(mut * mu, 1.0))


# -- LMI families ---------------------------------------------------------------

def test_unconstrained_scalar_examples():
    assert evaluate_margin(build_unconstrained_lmis(scalar_plant(0.5)), scalar_pair(1, 1)) > 0
    lmis = build_unconstrained_lmis(scalar_plant(2.0, 1.0, 1.0))
    assert evaluate_margin(lmis, scalar_pair(0.3, 0.3)) > 0
    assert evaluate_margin(lmis, scalar_pair(0.34, 0.3)) < 0
    assert evaluate_margin(lmis, scalar_pair(0.3, 0.34)) < 0
    margins = build_unconstrained_lmis(scalar_plant(2.0, 1.0, 0.0))
    # X-LMI reads 3X < 0
    assert margins.constraints[1].value(np.array([1.0, 1.0]))[0, 0] == pytest.approx(3.0)


def test_stabilization_scalar_examples():
    lmis = build_stabilization_lmis(scalar_plant(2.0, 0.0, 1.0))
    assert [c.label for c in lmis.constraints] == ["Y-stabilization"]
    assert lmis.constraints[0].value(np.array([1.0, 1.0]))[0, 0] == pytest.approx(3.0)
    assert build_stabilization_lmis(scalar_plant(2.0, 1.0, 1.0)).constraints == ()


def test_stabilization_zero_a_holds_everywhere():
    s = make_block_structure([(1, 2)])
    P = PartitionedSystem.build(np.zeros((2, 2)), s, B2=np.array([[1.0], [0.0]]),
                                C2=np.array([[0.0, 1.0]]))
    lmis = build_stabilization_lmis(P)
    for c in lmis.constraints:
        assert np.linalg.eigvalsh(c.value(lmis.space.pack({"X": np.eye(2), "Y": np.eye(2)})))[-1] < 0


def test_performance_zero_plant_identity_feasible():
    s = make_block_structure([(1, 2)])
    P = PartitionedSystem.build(np.zeros((2, 2)), s, B1=np.zeros((2, 1)), C1=np.zeros((1, 2)),
                                B2=np.zeros((2, 1)), C2=np.zeros((1, 2)), D11=[[0.0]])
    lmis = build_performance_lmis(P)
    assert evaluate_margin(lmis, {"X": np.eye(2), "Y": np.eye(2)}) == pytest.approx(1.0)


def test_performance_scalar_example_grid():
    P = PartitionedSystem.build([[0.9]], S1, B1=[[0.1]], C1=[[0.1]], D11=[[0.0]],
                                B2=[[1.0]], C2=[[1.0]])
    lmis = build_performance_lmis(P)
    grid = np.linspace(0.05, 10, 60)
    best = max(evaluate_margin(lmis, scalar_pair(x, y)) for x in grid for y in grid)
    assert best > 0
    assert solve_feasibility(lmis).feasible


def test_performance_full_control_authority_reduces_to_disturbance_block():
    s = make_block_structure([(1, 2)])
    rng = np.random.default_rng(3)
    C1 = rng.standard_normal((1, 2))
    P = PartitionedSystem.build(rng.standard_normal((2, 2)), s, B1=rng.standard_normal((2, 1)),
                                C1=C1, D11=[[0.3]], B2=np.eye(2),
                                D12=np.zeros((1, 2)), C2=np.eye(2), D21=np.zeros((2, 1)))
    lmis = build_performance_lmis(P)
    y = next(c for c in lmis.constraints if c.label == "Y-performance")
    # the kernel keeps only the performance output and the disturbance
    v = lmis.space.pack({"X": np.eye(2), "Y": np.eye(2)})
    expected = [[(C1 @ C1.T)[0, 0] - 1.0, 0.3], [0.3, -1.0]]
    assert np.allclose(y.value(v), expected)


def test_performance_requires_square_channel():
    rng = np.random.default_rng(4)
    with pytest.raises(StructureError):
        build_performance_lmis(random_plant(rng, S1, p1=1, q1=2))


def test_adjusted_fixed_scaling_matches_performance_values():
    rng = np.random.default_rng(5)
    s = make_block_structure([(1, 2), (2, 1)])
    for _ in range(20):
        P = random_plant(rng, s, scale=rng.uniform(0.5, 1.5))
        a = solve_feasibility(build_performance_lmis(P)).feasible
        b = solve_feasibility(build_adjusted_lmis(P)).feasible
        assert a == b


def test_adjusted_free_scaling_rescales_to_unit():
    rng = np.random.default_rng(6)
    s = make_block_structure([(1, 2)])
    P = random_plant(rng, s, scale=0.8)
    free = build_adjusted_lmis(P, "free-scaling")
    res = solve_feasibility(free)
    assert res.feasible
    X, Y = res.assignment["X"], res.assignment["Y"]
    mu, mut = res.assignment["mu"], res.assignment["mu~"]
    # both inequalities are homogeneous in (Y, mu) and in (X, mu~)
    assert evaluate_margin(build_adjusted_lmis(P), {"X": X.scaled(1 / mut), "Y": Y.scaled(1 / mu)}) > 0


def test_adjusted_zero_plant():
    s = make_block_structure([(1, 1)])
    P = PartitionedSystem.build(np.zeros((1, 1)), s, B1=np.zeros((1, 1)), C1=np.zeros((1, 1)),
                                D11=[[0.0]], B2=np.zeros((1, 1)), C2=np.zeros((1, 1)))
    lmis = build_adjusted_lmis(P, "free-scaling")
    v = {"X": np.eye(1), "Y": np.eye(1), "mu": 1.0, "mu~": 1.0}
    assert evaluate_margin(lmis, v) > 0
    with pytest.raises(ValueError):
        build_adjusted_lmis(P, "sideways")


def test_homogeneous_margin_scales():
    rng = np.random.default_rng(7)
    P = random_plant(rng, make_block_structure([(1, 2)]), scale=0.5)
    lmis = build_unconstrained_lmis(P)
    hom = LmiProblem(lmis.space, build_stabilization_lmis(P).constraints)
    res = solve_feasibility(hom)
    m = evaluate_margin(hom, res.vector)
    assert evaluate_margin(hom, 0.5 * res.vector) == pytest.approx(0.5 * m)


def test_affine_expression_symmetric():
    s = make_block_structure([(2, 2)])
    space = VariableSpace((VariableGroup("X", "commutant", s, positive=True),))
    A = np.arange(16.0).reshape(4, 4)
    expr = affine(space, np.eye(4), {"X": lambda E: A @ E @ A.T - E})
    v = np.random.default_rng(8).standard_normal(space.size)
    F = expr.value(v)
    assert np.allclose(F, F.T)
    assert expr.coeffs.shape == (3, 4, 4)


def test_problem_json_has_labels():
    lmis = build_unconstrained_lmis(scalar_plant(2.0, 1.0, 1.0))
    data = json.loads(json.dumps(lmis.to_json()))
    assert data["schema"] == "lft-robust/1"
    labels = [lbl for g in data["variables"] for lbl in g["labels"]]
    assert labels == ["X:k=1[0,0]", "Y:k=1[0,0]"]


def test_coupling_constraints_cover_nonempty_blocks():
    s = make_block_structure([(1, 2), (1, 0), (2, 1)])
    space = VariableSpace((VariableGroup("X", "commutant", s, positive=True),
                           VariableGroup("Y", "commutant", s, positive=True)))
    cons = coupling_constraints(space, s)
    assert [c.label for c in cons] == ["coupling:k=1", "coupling:k=3"]
