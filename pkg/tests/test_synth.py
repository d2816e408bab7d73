import json

import numpy as np
import pytest
from plants import feasible_plant, random_plant

from lftrobust.lft import Controller, PartitionedSystem, close_loop
from lftrobust.sdp import evaluate_margin
from lftrobust.structures import CommutantElement, StructureError, make_block_structure
from lftrobust.synth import (HEURISTIC_FAILURE, LMI_INFEASIBLE, SUCCESS, Certificate,
                             application_preset, check_q_performance, check_q_stability,
                             closed_loop_lyapunov, q_stability_problem, reconstruct_controller,
                             scaled_norm, static_synthesis_heuristic, synthesize,
                             verify_certificate, verify_closed_loop)

S1 = make_block_structure([(1, 1)])


def scalar_plant(A, B2, C2):
    return PartitionedSystem.build([[A]], S1, B2=[[B2]], C2=[[C2]])


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


# -- analysis -----------------------------------------------------------------

def test_q_stability_scalar_contraction():
    cert = check_q_stability(np.array([[0.5]]), S1)
    assert cert.feasible and cert.margin >= 1e-7
    assert cert.X.cores[0][0, 0] > 0
    assert cert.extra["scaled_norm"] < 1


def test_q_stability_fails_at_unit_radius():
    assert not check_q_stability(np.array([[1.0]]), S1).feasible


def test_q_stability_nilpotent_with_full_core():
    A = np.array([[0.0, 2.0], [0.0, 0.0]])
    cert = check_q_stability(A, make_block_structure([(1, 2)]))
    assert cert.feasible
    # the hand candidate diag(4 + e, 1) also works
    X = np.diag([4.1, 1.0])
    assert np.linalg.eigvalsh(A @ X @ A.T - X)[-1] < 0


def test_q_stability_needs_scaling_beyond_identity():
    A = np.array([[0.0, 3.0], [0.1, 0.0]])
    s = make_block_structure([(1, 1), (1, 1)])
    assert np.linalg.norm(A, 2) > 1
    cert = check_q_stability(A, s)
    assert cert.feasible and scaled_norm(A, cert.X) < 1


def test_q_stability_repeated_scalar_fails_when_unstable():
    A = np.array([[0.0, 3.0], [0.1, 0.0]])
    # single repeated scalar: certificate exists iff spectral radius < 1
    assert check_q_stability(A, make_block_structure([(1, 2)])).feasible
    assert not check_q_stability(2 * np.eye(2), make_block_structure([(1, 2)])).feasible


def test_q_performance_small_feedthrough():
    M = np.zeros((2, 2))
    M[1, 1] = 0.5
    cert = check_q_performance(M, S1)
    assert cert.feasible


def test_q_performance_large_feedthrough_fails():
    M = np.zeros((3, 3))
    M[1:, 1:] = [[1.0, 0.0], [0.0, 0.2]]
    assert not check_q_performance(M, S1).feasible


def test_q_performance_implies_q_stability_with_same_x():
    rng = np.random.default_rng(0)
    s = make_block_structure([(1, 2), (2, 1)])
    hits = 0
    for _ in range(10):
        M = rng.standard_normal((5, 5))
        M *= 0.8 / np.linalg.norm(M[:4, :4], 2) / max(1.0, np.linalg.norm(M, 2) / 1.2)
        cert = check_q_performance(M, s)
        if cert.feasible:
            hits += 1
            assert evaluate_margin(q_stability_problem(M[:4, :4], s), cert.variables) > 0
    assert hits


def test_certificate_json_roundtrip_reverifies():
    rng = np.random.default_rng(1)
    s = make_block_structure([(2, 1), (1, 2)])
    A = rng.standard_normal((4, 4))
    A *= 0.7 / np.linalg.norm(A, 2)
    cert = check_q_stability(A, s)
    again = Certificate.from_json(json.loads(json.dumps(cert.to_json())))
    P = PartitionedSystem.build(A, s)
    assert verify_certificate(again, P) == verify_certificate(cert, P)
    assert abs(verify_certificate(again, P) - cert.margin) < 1e-9


def test_certificate_structure_mismatch():
    cert = check_q_stability(np.array([[0.5]]), S1)
    P = PartitionedSystem.build(np.eye(2) * 0.5, make_block_structure([(1, 2)]))
    with pytest.raises(StructureError):
        verify_certificate(cert, P)


# -- synthesis ----------------------------------------------------------------

def test_scalar_unconstrained_stabilization():
    out = synthesize(scalar_plant(2.0, 1.0, 1.0), "stabilization", "unconstrained")
    assert out.status == SUCCESS
    assert out.minimal_dims is not None and len(out.minimal_dims) == 1
    assert spectral_radius(close_loop(scalar_plant(2.0, 1.0, 1.0), out.controller).A) < 1
    assert out.closed_loop_certificate.margin > 0


def test_scalar_unstabilizable_names_y_inequality():
    out = synthesize(scalar_plant(2.0, 0.0, 1.0), "stabilization", "unconstrained")
    assert out.status == LMI_INFEASIBLE
    assert out.diagnostics["constraint"].startswith("Y-")
    assert out.controller is None


def test_open_loop_stable_plant_stabilized():
    rng = np.random.default_rng(2)
    s = make_block_structure([(1, 2), (2, 1)])
    P = random_plant(rng, s, scale=0.3)
    assert check_q_stability(P.A, s).feasible
    for dims in ("unconstrained", [1, 0], "static"):
        out = synthesize(P, "stabilization", dims)
        assert out.status == SUCCESS, (dims, out.message)
        assert verify_closed_loop(close_loop(P, out.controller), "stabilization").feasible


def test_static_scalar_example():
    P = scalar_plant(2.0, 1.0, 1.0)
    out = static_synthesis_heuristic(P)
    assert out.status == SUCCESS
    assert out.controller.nK == 0
    DK = out.controller.DK[0, 0]
    assert abs(2.0 + DK) < 1


def test_static_unstabilizable_reports_failure():
    out = synthesize(scalar_plant(2.0, 0.0, 0.0), "stabilization", "static")
    assert out.status in (LMI_INFEASIBLE, HEURISTIC_FAILURE)
    assert not out.ok


def test_static_contraction_verifies_at_identity():
    rng = np.random.default_rng(3)
    s = make_block_structure([(2, 1), (1, 1)])
    A = rng.standard_normal((3, 3))
    A *= 0.5 / np.linalg.norm(A, 2)
    P = PartitionedSystem.build(A, s, B2=rng.standard_normal((3, 1)), C2=rng.standard_normal((1, 3)))
    out = static_synthesis_heuristic(P)
    assert out.ok
    assert np.allclose(out.certificate.X.assembled, np.eye(3))


def test_performance_prescribed_dims_on_feasible_plants():
    rng = np.random.default_rng(4)
    s = make_block_structure([(1, 2), (2, 1)])
    for _ in range(3):
        P, _ = feasible_plant(rng, s)
        out = synthesize(P, "performance", [1, 0])
        assert out.ok, out.message
        assert [c.passed for c in out.coupling] == [True, True]
        cl = close_loop(P, out.controller)
        assert check_q_performance(cl.shuffled, cl.merged_structure).feasible


def test_synthesis_certificate_reverifies():
    rng = np.random.default_rng(5)
    P, _ = feasible_plant(rng, make_block_structure([(1, 2)]))
    out = synthesize(P, "performance", "unconstrained")
    assert out.ok
    assert verify_certificate(out.certificate, P) >= 1e-7
    again = Certificate.from_json(json.loads(json.dumps(out.closed_loop_certificate.to_json())))
    assert verify_certificate(again, P, out.controller) > 0


def test_specialization_performance_matches_stabilization():
    rng = np.random.default_rng(6)
    s = make_block_structure([(1, 2), (1, 1)])
    for i in range(8):
        P = random_plant(rng, s, p1=0, q1=0, scale=rng.uniform(0.6, 2.5))
        for dims in ("unconstrained", [1, 0]):
            a = synthesize(P, "performance", dims, reconstruct=False).status
            b = synthesize(P, "stabilization", dims, reconstruct=False).status
            assert (a == SUCCESS) == (b == SUCCESS), (i, dims, a, b)


def test_goal_validation():
    P = scalar_plant(0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        synthesize(P, "tracking")
    with pytest.raises(StructureError):
        synthesize(P, "stabilization", [0, 0])
    with pytest.raises(NotImplementedError):
        synthesize(PartitionedSystem.build([[0.5]], S1, B2=[[1.0]], C2=[[1.0]], D22=[[1.0]]))


# -- reconstruction -------------------------------------------------------------

def test_lyapunov_completion_inverse_pair():
    rng = np.random.default_rng(7)
    s = make_block_structure([(1, 2)])
    Q = rng.standard_normal((2, 2))
    X = CommutantElement(s, (Q @ Q.T + np.eye(2),))
    Xcl = closed_loop_lyapunov(X, X.inverse(), [0])
    assert np.allclose(Xcl.assembled, X.inverse().assembled)


def test_lyapunov_completion_inverse_has_x_corner():
    s = make_block_structure([(1, 1), (1, 2)])
    X = CommutantElement(s, (np.array([[2.0]]), np.diag([3.0, 1.5])))
    Y = CommutantElement(s, (np.array([[1.0]]), np.diag([1.0, 2.0])))
    Xcl = closed_loop_lyapunov(X, Y, [1, 2])
    for k, (Xk, core) in enumerate(zip(X.cores, Xcl.cores)):
        n = Xk.shape[0]
        assert np.allclose(core[:n, :n], Y.cores[k])
        assert np.allclose(np.linalg.inv(core)[:n, :n], Xk)


def test_reconstruct_static_on_stable_plant():
    P = scalar_plant(0.5, 1.0, 1.0)
    one = CommutantElement.identity(S1)
    K, cl, Xcl, margin = reconstruct_controller(P, one, one, [0], "stabilization")
    assert K.nK == 0 and margin > 0
    assert abs(0.5 + K.DK[0, 0]) < 1


# -- presets --------------------------------------------------------------------

def test_presets():
    s = make_block_structure([(1, 3), (1, 2)])
    assert application_preset("structured-uncertainty", s, frequency_block=1) == [0, None]
    assert application_preset("lpv", s, frequency_block=1) == [None, None]
    single = make_block_structure([(1, 2)])
    assert application_preset("lpv", single, 0) == application_preset(
        "structured-uncertainty", single, 0) == [None]
    with pytest.raises(StructureError):
        application_preset("lpv", s)
    with pytest.raises(StructureError):
        application_preset("lpv", s, 5)
    with pytest.raises(ValueError):
        application_preset("adaptive", s, 0)


def test_zero_controller_certificate_for_stable_plant():
    rng = np.random.default_rng(8)
    s = make_block_structure([(1, 2)])
    P = random_plant(rng, s, scale=0.3)
    K = Controller.for_plant(P, [0])
    assert verify_closed_loop(close_loop(P, K), "stabilization").feasible
