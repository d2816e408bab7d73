"""Analysis and synthesis pipelines: certificates, controller reconstruction
and the rank-reduction heuristics for restricted controller dimensions."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .lft import ClosedLoop, Controller, PartitionedSystem, close_loop
from .lmi import (RANK_TOL, BlockCoupling, LmiProblem, VariableGroup, VariableSpace, affine,
                  build_performance_lmis, build_stabilization_lmis, build_unconstrained_lmis,
                  coupling_constraints, coupling_rank)
from .sdp import (SolverOptions, SolverTimeout, constraint_margins, evaluate_margin,
                  minimize_linear, solve_feasibility)
from .structures import BlockStructure, CommutantElement, StructureError, shuffle_permutation

log = logging.getLogger(__name__)

SCHEMA = "lft-robust/1"

SUCCESS = "success"
LMI_INFEASIBLE = "lmi-infeasible"
COUPLING_FAILURE = "coupling-failure"
RANK_FAILURE = "rank-failure"
HEURISTIC_FAILURE = "heuristic-failure"
RECONSTRUCTION_GAP = "reconstruction-gap"


class CouplingError(ValueError):
    def __init__(self, message, k):
        super().__init__(message)
        self.k = k


class ReconstructionGap(RuntimeError):
    """The controller LMI failed although the existence conditions held."""


# ---------------------------------------------------------------------------
# certificates

@dataclass
class Certificate:
    kind: str                   # "q-stability" | "q-performance" | "synthesis"
    structure: BlockStructure
    variables: dict             # name -> CommutantElement
    margin: float
    source: str
    feasible: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def X(self) -> CommutantElement:
        return self.variables["X"]

    @property
    def Y(self) -> CommutantElement | None:
        return self.variables.get("Y")

    def to_json(self) -> dict:
        out = {"schema": SCHEMA, "kind": self.kind, "theorem": self.source,
               "structure": self.structure.to_json(), "margin": self.margin,
               "feasible": self.feasible}
        for name, val in self.variables.items():
            out[name] = val.to_json()
        out.update(self.extra)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Certificate":
        structure = BlockStructure.from_json(data["structure"])
        variables = {name: CommutantElement.from_json(structure, data[name])
                     for name in ("X", "Y") if name in data}
        return cls(data["kind"], structure, variables, float(data["margin"]),
                   data.get("theorem", ""), bool(data.get("feasible", True)))


def q_stability_problem(A: np.ndarray, structure: BlockStructure) -> LmiProblem:
    A = np.asarray(A, dtype=float)
    space = VariableSpace((VariableGroup("X", "commutant", structure, positive=True),))
    c = affine(space, np.zeros_like(A), {"X": lambda E: A @ E @ A.T - E}, "lyapunov")
    return LmiProblem(space, (c,) if c.dim else (), "q-stability")


def q_performance_problem(M: np.ndarray, structure: BlockStructure) -> LmiProblem:
    M = np.asarray(M, dtype=float)
    n = structure.total_dim
    p = M.shape[0] - n
    if M.shape[0] != M.shape[1]:
        raise StructureError("Q-performance needs a square input/output channel")
    space = VariableSpace((VariableGroup("X", "commutant", structure, positive=True),))

    def f(E):
        W = block_diag(E, np.zeros((p, p)))
        return M @ W @ M.T - W

    const = block_diag(np.zeros((n, n)), np.eye(p))
    const = M @ const @ M.T - const
    return LmiProblem(space, (affine(space, const, {"X": f}, "scaled-small-gain"),),
                      "q-performance")


def _sqrt_commutant(X: CommutantElement) -> CommutantElement:
    cores = []
    for c in X.cores:
        if c.size == 0:
            cores.append(c)
            continue
        w, V = np.linalg.eigh(0.5 * (c + c.T))
        cores.append(V @ np.diag(np.sqrt(np.clip(w, 0, None))) @ V.T)
    return CommutantElement(X.structure, tuple(cores))


def scaled_norm(M: np.ndarray, X: CommutantElement) -> float:
    """``|| diag(Q^-1, I) M diag(Q, I) ||`` with ``Q = X^(1/2)``."""
    Q = _sqrt_commutant(X).assembled
    n = Q.shape[0]
    p = M.shape[0] - n
    L = block_diag(np.linalg.inv(Q), np.eye(p)) if p else np.linalg.inv(Q)
    R = block_diag(Q, np.eye(M.shape[1] - n)) if M.shape[1] > n else Q
    S = L @ M @ R
    return float(np.linalg.norm(S, 2)) if S.size else 0.0


def check_q_stability(A: np.ndarray, structure: BlockStructure,
                      opts: SolverOptions | None = None) -> Certificate:
    problem = q_stability_problem(A, structure)
    res = solve_feasibility(problem, opts)
    X = res.assignment["X"]
    extra = {}
    if res.feasible:
        extra["scaled_norm"] = scaled_norm(np.asarray(A, dtype=float), X)
    return Certificate("q-stability", structure, {"X": X}, res.margin, "q-stability",
                       res.feasible and extra.get("scaled_norm", 1.0) < 1.0, extra)


def check_q_performance(M: np.ndarray, structure: BlockStructure,
                        opts: SolverOptions | None = None) -> Certificate:
    problem = q_performance_problem(M, structure)
    res = solve_feasibility(problem, opts)
    X = res.assignment["X"]
    extra = {}
    if res.feasible:
        extra["scaled_norm"] = scaled_norm(np.asarray(M, dtype=float), X)
    return Certificate("q-performance", structure, {"X": X}, res.margin, "q-performance",
                       res.feasible and extra.get("scaled_norm", 1.0) < 1.0, extra)


SYNTHESIS_SOURCES = {
    "stabilization": build_stabilization_lmis,
    "unconstrained": build_unconstrained_lmis,
    "performance": build_performance_lmis,
}


def certificate_problem(cert: Certificate, plant: PartitionedSystem,
                        controller: Controller | None = None) -> LmiProblem:
    """Rebuild the LMI problem a certificate claims to satisfy."""
    if cert.kind == "synthesis":
        return SYNTHESIS_SOURCES[cert.source](plant)
    if controller is not None:
        cl = close_loop(plant, controller)
        if cert.structure != cl.merged_structure:
            raise StructureError("certificate structure does not match the closed loop")
        if cert.kind == "q-stability":
            return q_stability_problem(cl.permutation.conjugate(cl.A), cl.merged_structure)
        return q_performance_problem(cl.shuffled, cl.merged_structure)
    if cert.structure != plant.structure:
        raise StructureError("certificate structure does not match the plant")
    if cert.kind == "q-stability":
        return q_stability_problem(plant.A, plant.structure)
    return q_performance_problem(plant.performance_matrix, plant.structure)


def verify_certificate(cert: Certificate, plant: PartitionedSystem,
                       controller: Controller | None = None) -> float:
    problem = certificate_problem(cert, plant, controller)
    return evaluate_margin(problem, cert.variables)


# ---------------------------------------------------------------------------
# controller reconstruction

def closed_loop_lyapunov(X: CommutantElement, Y: CommutantElement, ctrl_dims: Sequence[int],
                         tol: float = RANK_TOL) -> CommutantElement:
    """Closed-loop certificate in the merged structure whose leading block is
    ``Y`` and whose inverse has leading block ``X``.

    Per block: ``[[Y_k, F], [F^T, I]]`` with ``F F^T = Y_k - X_k^{-1}``; ``F``
    has ``ctrl_dims[k]`` columns (zero-padded beyond the rank).
    """
    structure = X.structure
    merged = structure.with_counts([b.n + c for b, c in zip(structure.blocks, ctrl_dims)])
    cores = []
    for k, (b, Xk, Yk, nK) in enumerate(zip(structure.blocks, X.cores, Y.cores, ctrl_dims)):
        if b.n == 0:
            cores.append(np.eye(nK))
            continue
        W = Yk - np.linalg.inv(Xk)
        w, V = np.linalg.eigh(0.5 * (W + W.T))
        # same reference scale as the coupling rank report
        scale = np.abs(np.linalg.eigvalsh(np.block([[Xk, np.eye(b.n)], [np.eye(b.n), Yk]]))).max()
        if w[0] < -tol * scale:
            raise CouplingError(f"coupling matrix of block {k + 1} is not PSD "
                                f"(Y - X^-1 has eigenvalue {w[0]:.3e})", k)
        keep = w > tol * scale
        r = int(keep.sum())
        if r > nK:
            raise CouplingError(f"block {k + 1} needs controller dimension {r} > {nK}", k)
        F = np.zeros((b.n, nK))
        F[:, :r] = V[:, keep] * np.sqrt(w[keep])
        cores.append(np.block([[Yk, F], [F.T, np.eye(nK)]]))
    return CommutantElement(merged, tuple(cores))


def _sqrtm_psd(S, inverse=False):
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    w = 1.0 / np.sqrt(w) if inverse else np.sqrt(w)
    return (V * w) @ V.T


def _controller_lmi(plant: PartitionedSystem, S: np.ndarray, nK: int, goal: str) -> LmiProblem:
    """Closed-loop inequality as a single LMI in ``K = [AK BK; CK DK]``.

    With ``M(K) = M0 + L K R`` the requirement ``M S_in M^T < S_out`` is
    applied after the congruence by ``S_out^{-1/2}`` and ``S_in^{1/2}``:
    ``[[-I, N(K)], [N(K)^T, -I]] < 0`` with
    ``N(K) = S_out^{-1/2} M(K) S_in^{1/2}``, which keeps the margin
    independent of the scale of ``S``.
    """
    n, p1, p2, q1, q2 = plant.n, plant.p1, plant.p2, plant.q1, plant.q2
    Z = np.zeros
    M0 = np.block([[plant.A, Z((n, nK)), plant.B1],
                   [Z((nK, n)), Z((nK, nK)), Z((nK, p1))],
                   [plant.C1, Z((q1, nK)), plant.D11]])
    L = np.block([[Z((n, nK)), plant.B2], [np.eye(nK), Z((nK, p2))], [Z((q1, nK)), plant.D12]])
    R = np.block([[Z((nK, n)), np.eye(nK), Z((nK, p1))], [plant.C2, Z((q2, nK)), plant.D21]])
    N = n + nK
    if goal == "stabilization":
        M0, L, R = M0[:N, :N], L[:N], R[:, :N]
        S_out, S_in = S, S
    else:
        S_out, S_in = block_diag(S, np.eye(q1)), block_diag(S, np.eye(p1))
    Lo = _sqrtm_psd(S_out, inverse=True)
    Ri = _sqrtm_psd(S_in)
    M0, L, R = Lo @ M0 @ Ri, Lo @ L, R @ Ri
    r, c = M0.shape
    space = VariableSpace((VariableGroup("K", "matrix", shape=(nK + p2, nK + q2)),))
    const = np.block([[-np.eye(r), M0], [M0.T, -np.eye(c)]])

    def f(E):
        T = L @ E @ R
        return np.block([[Z((r, r)), T], [T.T, Z((c, c))]])

    return LmiProblem(space, (affine(space, const, {"K": f}, "controller"),), "controller")


def reconstruct_controller(plant: PartitionedSystem, X: CommutantElement, Y: CommutantElement,
                           ctrl_dims: Sequence[int], goal: str,
                           opts: SolverOptions | None = None):
    """Build a controller with the given partial-state dimensions from a
    certified ``(X, Y)`` pair.

    Returns ``(controller, closed_loop, closed_loop_lyapunov, margin)`` where
    ``margin`` is the closed-loop LMI margin at the constructed certificate.
    """
    opts = opts or SolverOptions()
    ctrl_dims = [int(c) for c in ctrl_dims]
    Xcl = closed_loop_lyapunov(X, Y, ctrl_dims)
    nK = sum(b.m * c for b, c in zip(plant.structure.blocks, ctrl_dims))
    perm = shuffle_permutation(plant.structure, ctrl_dims)
    S = perm.unconjugate(Xcl.assembled)
    problem = _controller_lmi(plant, S, nK, goal)
    res = solve_feasibility(problem, opts)
    if not res.feasible:
        raise ReconstructionGap(f"controller LMI margin {res.margin:.3e} below threshold")
    K = res.assignment["K"]
    controller = Controller.for_plant(plant, ctrl_dims, K[:nK, :nK], K[:nK, nK:], K[nK:, :nK],
                                      K[nK:, nK:])
    cl = close_loop(plant, controller)
    if goal == "stabilization":
        cl_problem = q_stability_problem(cl.permutation.conjugate(cl.A), cl.merged_structure)
    else:
        cl_problem = q_performance_problem(cl.shuffled, cl.merged_structure)
    margin = evaluate_margin(cl_problem, {"X": Xcl})
    return controller, cl, Xcl, margin


def verify_closed_loop(cl: ClosedLoop, goal: str, opts: SolverOptions | None = None) -> Certificate:
    if goal == "stabilization":
        return check_q_stability(cl.permutation.conjugate(cl.A), cl.merged_structure, opts)
    return check_q_performance(cl.shuffled, cl.merged_structure, opts)


# ---------------------------------------------------------------------------
# synthesis

@dataclass
class SynthesisOutcome:
    status: str
    goal: str
    requested_dims: list
    certificate: Certificate | None = None
    coupling: list[BlockCoupling] = field(default_factory=list)
    minimal_dims: list[int] | None = None
    controller: Controller | None = None
    closed_loop_certificate: Certificate | None = None
    reconstruction_margin: float | None = None
    failing_block: int | None = None
    message: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == SUCCESS

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "status": self.status,
            "goal": self.goal,
            "requested_dims": self.requested_dims,
            "certificate": self.certificate.to_json() if self.certificate else None,
            "coupling": [c.to_json() for c in self.coupling],
            "minimal_dims": self.minimal_dims,
            "controller": self.controller.to_json() if self.controller else None,
            "closed_loop_certificate": (self.closed_loop_certificate.to_json()
                                        if self.closed_loop_certificate else None),
            "reconstruction_margin": self.reconstruction_margin,
            "failing_block": None if self.failing_block is None else self.failing_block + 1,
            "message": self.message,
            "diagnostics": self.diagnostics,
        }


def _resolve_dims(plant, ctrl_dims):
    d = plant.structure.d
    if isinstance(ctrl_dims, str):
        if ctrl_dims == "static":
            return [0] * d
        if ctrl_dims == "unconstrained":
            return [None] * d
        raise ValueError(f"unknown controller dimensions {ctrl_dims!r}")
    dims = [None if c is None else int(c) for c in ctrl_dims]
    if len(dims) != d:
        raise StructureError(f"expected {d} controller dimensions, got {len(dims)}")
    if any(c is not None and c < 0 for c in dims):
        raise StructureError("controller dimensions must be nonnegative")
    return dims


def _lmis_for(plant, goal):
    return build_performance_lmis(plant) if goal == "performance" else build_stabilization_lmis(plant)


def _failing_constraint(problem, assignment, opts):
    """Label of the first constraint that is infeasible on its own (with the
    positivity bounds); ``"joint"`` when each one is feasible separately."""
    margins = constraint_margins(problem, assignment)
    for c in problem.constraints:
        alone = solve_feasibility(LmiProblem(problem.space, (c,), problem.source), opts)
        if not alone.feasible:
            margins[c.label] = alone.margin
            return c.label, margins
    margins["joint"] = min(margins.values())
    return "joint", margins


def _first_coupling_failure(lmis, structure, opts):
    """Smallest ``k`` such that coupling on blocks ``0..k`` is infeasible with the LMIs."""
    for k in range(structure.d):
        if structure.blocks[k].n == 0:
            continue
        trial = lmis.with_constraints(coupling_constraints(lmis.space, structure,
                                                           blocks=set(range(k + 1))))
        if not solve_feasibility(trial, opts).feasible:
            return k
    return None


def _minimal_dims(X, Y, tol=RANK_TOL):
    return [rep.minimal_ctrl_dim for rep in coupling_rank(X, Y, [None] * X.structure.d, tol)]


def coupling_scale(X: CommutantElement, Y: CommutantElement, factor: float = 2.0) -> float:
    """``mu`` with ``mu X - (mu Y)^{-1} > 0`` blockwise: ``mu^2 = factor *
    max_k lambda_max(Y_k^{-1} X_k^{-1})``."""
    lam = 0.0
    for Xk, Yk in zip(X.cores, Y.cores):
        if Xk.size:
            lam = max(lam, float(np.max(np.real(np.linalg.eigvals(np.linalg.inv(Yk) @ np.linalg.inv(Xk))))))
    return float(np.sqrt(factor * lam))


def synthesize(plant: PartitionedSystem, goal: str = "stabilization", ctrl_dims="unconstrained",
               opts: SolverOptions | None = None, reconstruct: bool = True) -> SynthesisOutcome:
    """Decide existence of a Q-stabilizing (or Q-performance) controller with
    the requested partial-state dimensions and, if it exists, build one.

    ``ctrl_dims`` is ``"static"``, ``"unconstrained"`` or a per-block list
    whose ``None`` entries leave that block unbounded.
    """
    if goal not in ("stabilization", "performance"):
        raise ValueError(f"unknown goal {goal!r}")
    opts = opts or SolverOptions()
    plant.require_synthesis_form(performance=goal == "performance")
    dims = _resolve_dims(plant, ctrl_dims)
    blocks = plant.structure.blocks
    if all(c == 0 for c in dims) and any(b.n for b in blocks):
        return static_synthesis_heuristic(plant, goal, opts, reconstruct=reconstruct,
                                          requested=dims)

    outcome = SynthesisOutcome("", goal, dims)
    unconstrained = all(c is None for c in dims)
    if goal == "stabilization" and unconstrained:
        problem = build_unconstrained_lmis(plant)
        res = solve_feasibility(problem, opts)
        if not res.feasible:
            label, margins = _failing_constraint(problem, res.assignment, opts)
            return _fail(outcome, LMI_INFEASIBLE, f"{label} has best margin {margins[label]:.3e}",
                         margin=res.margin, constraint=label)
        X, Y = res.assignment["X"], res.assignment["Y"]
        mu = coupling_scale(X, Y)
        for _ in range(60):
            if all(r.psd for r in coupling_rank(X.scaled(mu), Y.scaled(mu), dims)):
                break
            mu *= 2.0
        X, Y = X.scaled(mu), Y.scaled(mu)
        lmis = build_stabilization_lmis(plant)
        margin = evaluate_margin(lmis, {"X": X, "Y": Y})
        outcome.diagnostics.update(unconstrained_margin=res.margin, coupling_scale=mu)
        source = "stabilization"
    else:
        lmis = _lmis_for(plant, goal)
        joint = lmis.with_constraints(coupling_constraints(lmis.space, plant.structure))
        res = solve_feasibility(joint, opts)
        if not res.feasible:
            alone = solve_feasibility(lmis, opts)
            if not alone.feasible:
                label, margins = _failing_constraint(lmis, alone.assignment, opts)
                return _fail(outcome, LMI_INFEASIBLE,
                             f"{label} has best margin {margins[label]:.3e}",
                             margin=alone.margin, constraint=label)
            k = _first_coupling_failure(lmis, plant.structure, opts)
            where = f"block {k + 1}" if k is not None else "the joint coupling constraints"
            return _fail(outcome, COUPLING_FAILURE,
                         f"LMIs feasible but coupling fails at {where} (best margin {res.margin:.3e})",
                         k=k, margin=res.margin)
        X, Y = res.assignment["X"], res.assignment["Y"]
        minimal = _minimal_dims(X, Y)
        short = [k for k, (c, r) in enumerate(zip(dims, minimal)) if c is not None and r > c]
        if short:
            red = reduce_rank(plant, goal, lmis, res.vector, res.margin, dims, opts)
            if red is None:
                return _fail(outcome, RANK_FAILURE,
                             f"rank reduction did not reach the prescribed dimension of block {short[0] + 1}",
                             k=short[0])
            X, Y = red
        margin = evaluate_margin(lmis, {"X": X, "Y": Y})
        source = goal
    outcome.certificate = Certificate("synthesis", plant.structure, {"X": X, "Y": Y}, margin, source)
    outcome.coupling = coupling_rank(X, Y, dims)
    outcome.minimal_dims = _minimal_dims(X, Y)
    for rep in outcome.coupling:
        if not rep.passed:
            return _fail(outcome, COUPLING_FAILURE if not rep.psd else RANK_FAILURE,
                         f"coupling check failed on block {rep.k + 1}", k=rep.k)
    outcome.status = SUCCESS
    if reconstruct:
        use = [m if c is None else c for c, m in zip(dims, outcome.minimal_dims)]
        _attach_controller(outcome, plant, X, Y, use, goal, opts)
    return outcome


def _fail(outcome, status, message, k=None, **diag):
    outcome.status = status
    outcome.message = message
    outcome.failing_block = k
    outcome.diagnostics.update(diag)
    return outcome


def _attach_controller(outcome, plant, X, Y, dims, goal, opts):
    try:
        K, cl, Xcl, margin = reconstruct_controller(plant, X, Y, dims, goal, opts)
    except (ReconstructionGap, CouplingError, SolverTimeout) as exc:
        _fail(outcome, RECONSTRUCTION_GAP, str(exc), k=getattr(exc, "k", None))
        return
    outcome.controller = K
    outcome.reconstruction_margin = margin
    cert = verify_closed_loop(cl, goal, opts)
    outcome.closed_loop_certificate = cert
    if not (cert.feasible and margin > 0):
        _fail(outcome, RECONSTRUCTION_GAP,
              f"closed loop re-check failed (solver margin {cert.margin:.3e}, "
              f"constructed certificate margin {margin:.3e})")


# ---------------------------------------------------------------------------
# rank reduction

def _core_objective(space: VariableSpace, name: str, weights: dict) -> np.ndarray:
    """Coefficient vector of ``sum_k tr(W_k core_k(name))``."""
    g = space.group(name)
    vec = np.zeros(space.size)
    pos = space.offsets[name]
    for k, b in enumerate(g.structure.blocks):
        W = weights.get(k)
        for i in range(b.n):
            for j in range(i, b.n):
                if W is not None:
                    vec[pos] = W[i, i] if i == j else W[i, j] + W[j, i]
                pos += 1
    return vec


def _truncate(X: CommutantElement, Y: CommutantElement, dims) -> CommutantElement:
    """Replace ``Y_k`` by ``X_k^{-1} + W_r`` where ``W_r`` keeps the
    ``dims[k]`` largest eigencomponents of ``Y_k - X_k^{-1}``."""
    cores = []
    for b, Xk, Yk, c in zip(X.structure.blocks, X.cores, Y.cores, dims):
        if b.n == 0 or c is None or c >= b.n:
            cores.append(Yk)
            continue
        Xi = np.linalg.inv(Xk)
        Xi = 0.5 * (Xi + Xi.T)
        w, V = np.linalg.eigh(0.5 * (Yk - Xi + (Yk - Xi).T))
        w = np.clip(w, 0, None)
        keep = np.zeros_like(w, dtype=bool)
        if c:
            keep[-c:] = True
        cores.append(Xi + (V[:, keep] * w[keep]) @ V[:, keep].T)
    return CommutantElement(X.structure, tuple(cores))


def reduce_rank(plant, goal, lmis: LmiProblem, v0: np.ndarray, margin0: float, dims,
                opts: SolverOptions, max_iter: int = 100, method: str | None = None):
    """Drive ``rank [X_k I; I Y_k]`` down to ``n_k + dims[k]``.

    ``method="ccl"`` minimizes the linearized ``tr(X_k Y_k)`` (all targeted
    blocks static); ``"tail"`` minimizes the sum of the trailing eigenvalues
    of the coupling matrices.  Every iterate is tested by truncating ``Y``
    to the required rank and re-evaluating the LMIs directly.  Returns
    ``(X, Y)`` or ``None``.
    """
    space = lmis.space
    structure = plant.structure
    targets = [k for k, (b, c) in enumerate(zip(structure.blocks, dims))
               if b.n and c is not None and c < b.n]
    if method is None:
        method = "ccl" if all(dims[k] == 0 for k in targets) else "tail"
    coupling = coupling_constraints(space, structure)
    # homogeneous problems have no intrinsic scale (their relaxation margin
    # sits at the trace cap), so they only keep a token margin
    if lmis.is_homogeneous:
        eps = min(10 * opts.margin_tol, margin0 / 2)
    else:
        eps = min(max(10 * opts.margin_tol, 1e-3 * margin0), margin0 / 2)
    v = np.array(v0, dtype=float)
    prev = np.inf
    for it in range(max_iter):
        vals = space.unpack(v)
        X, Y = vals["X"], vals["Y"]
        Yt = _truncate(X, Y, dims)
        if Yt.is_positive_definite():
            m = evaluate_margin(lmis, {"X": X, "Y": Yt})
            if m >= opts.margin_tol:
                log.info("rank reduction succeeded after %d iterations (margin %.3e)", it, m)
                return X, Yt
        wx, wy = {}, {}
        if method == "ccl":
            for k in targets:
                wx[k] = Y.cores[k]
                wy[k] = X.cores[k]
        else:
            for k in targets:
                b = structure.blocks[k]
                C = np.block([[X.cores[k], np.eye(b.n)], [np.eye(b.n), Y.cores[k]]])
                w, V = np.linalg.eigh(C)
                T = V[:, :b.n - dims[k]]
                wx[k] = T[:b.n] @ T[:b.n].T
                wy[k] = T[b.n:] @ T[b.n:].T
        obj = _core_objective(space, "X", wx) + _core_objective(space, "Y", wy)
        try:
            v = minimize_linear(lmis, obj, v, eps, opts, extra=coupling, positivity_margin=0.0)
        except SolverTimeout:
            return None
        cur = float(obj @ v)
        if method == "tail":
            cur = sum(np.linalg.eigvalsh(np.block([
                [space.unpack(v)["X"].cores[k], np.eye(structure.blocks[k].n)],
                [np.eye(structure.blocks[k].n), space.unpack(v)["Y"].cores[k]]]))[
                :structure.blocks[k].n - dims[k]].sum() for k in targets)
        if abs(prev - cur) <= 1e-10 * max(1.0, abs(cur)):
            break
        prev = cur
    vals = space.unpack(v)
    X, Y = vals["X"], _truncate(vals["X"], vals["Y"], dims)
    if Y.is_positive_definite() and evaluate_margin(lmis, {"X": X, "Y": Y}) >= opts.margin_tol:
        return X, Y
    return None


def static_synthesis_heuristic(plant: PartitionedSystem, goal: str = "stabilization",
                               opts: SolverOptions | None = None, reconstruct: bool = True,
                               max_iter: int = 100, requested=None) -> SynthesisOutcome:
    """Search for ``X > 0`` with the inequalities holding at ``Y = X^{-1}``
    (a static controller).  Failure is not a proof of infeasibility."""
    opts = opts or SolverOptions()
    plant.require_synthesis_form(performance=goal == "performance")
    dims = [0] * plant.structure.d
    outcome = SynthesisOutcome("", goal, requested if requested is not None else dims)
    lmis = _lmis_for(plant, goal)
    found = None
    identity = CommutantElement.identity(plant.structure)
    if evaluate_margin(lmis, {"X": identity, "Y": identity}) >= opts.margin_tol:
        found = (identity, identity)
    else:
        joint = lmis.with_constraints(coupling_constraints(lmis.space, plant.structure))
        res = solve_feasibility(joint, opts)
        if not res.feasible:
            alone = solve_feasibility(lmis, opts)
            if not alone.feasible:
                label, margins = _failing_constraint(lmis, alone.assignment, opts)
                return _fail(outcome, LMI_INFEASIBLE,
                             f"{label} has best margin {margins[label]:.3e}",
                             margin=alone.margin, constraint=label)
            return _fail(outcome, HEURISTIC_FAILURE, "coupling relaxation infeasible",
                         margin=res.margin)
        found = reduce_rank(plant, goal, lmis, res.vector, res.margin, dims, opts,
                            max_iter=max_iter, method="ccl")
        if found is None:
            return _fail(outcome, HEURISTIC_FAILURE,
                         "cone-complementarity iteration stalled without Y = X^-1")
    X, Y = found
    Y = X.inverse()
    margin = evaluate_margin(lmis, {"X": X, "Y": Y})
    outcome.certificate = Certificate("synthesis", plant.structure, {"X": X, "Y": Y}, margin, goal)
    outcome.coupling = coupling_rank(X, Y, dims)
    outcome.minimal_dims = dims
    outcome.status = SUCCESS
    if reconstruct:
        _attach_controller(outcome, plant, X, Y, dims, goal, opts)
    return outcome


# ---------------------------------------------------------------------------
# application presets

def application_preset(kind: str, structure: BlockStructure,
                       frequency_block: int | None = None) -> list:
    """Controller dimension prescription for the two standard applications.

    ``structured-uncertainty``: the controller has no access to the
    uncertainty blocks (dimension 0) but unrestricted dynamics in the
    frequency block.  ``lpv``: unrestricted in every block.  ``None`` means
    unconstrained.
    """
    fb = structure.frequency_block if frequency_block is None else frequency_block
    if fb is None:
        raise StructureError("the structure has no designated frequency block")
    if not 0 <= fb < structure.d:
        raise StructureError(f"frequency block index {fb} out of range")
    if kind == "structured-uncertainty":
        return [None if k == fb else 0 for k in range(structure.d)]
    if kind == "lpv":
        return [None] * structure.d
    raise ValueError(f"unknown preset {kind!r}")
