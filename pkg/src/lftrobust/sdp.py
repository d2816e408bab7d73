"""Strict LMI feasibility by margin maximization.

The engine maximizes ``t`` subject to ``F_j(v) + t I <= 0`` for every
constraint and ``P(v) >= t I`` for every block of every positive group, with
``v`` confined to a compact set (trace cap on positive groups, norm cap on
free groups).  It is a primal log-barrier method with damped Newton steps;
the starting point is always strictly feasible because ``t`` is free.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .lmi import LmiProblem

log = logging.getLogger(__name__)

FEASIBLE = "feasible"
BELOW_THRESHOLD = "margin-below-threshold"


class SolverTimeout(RuntimeError):
    def __init__(self, message, best_margin):
        super().__init__(message)
        self.best_margin = best_margin


@dataclass
class SolverOptions:
    max_iter: int = 500          # centering (outer) steps
    margin_tol: float = 1e-7
    trace_cap: float = 1e4
    free_cap: float = 1e4
    gap_tol: float = 1e-9
    rel_gap_tol: float = 1e-7
    newton_tol: float = 1e-10
    max_newton: int = 200        # per centering step
    verbose: bool = False


@dataclass
class FeasibilityResult:
    status: str
    assignment: dict
    margin: float
    iterations: int
    runtime: float
    vector: np.ndarray = field(repr=False)
    upper_bound: float = np.inf

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


# ---------------------------------------------------------------------------
# margin evaluation

def _as_vector(problem: LmiProblem, assignment) -> np.ndarray:
    if isinstance(assignment, np.ndarray) and assignment.ndim == 1:
        if assignment.shape[0] != problem.space.size:
            raise ValueError("assignment vector has the wrong length")
        return assignment
    return problem.space.pack(assignment)


def constraint_margins(problem: LmiProblem, assignment) -> dict[str, float]:
    """Margin of every constraint and every positive block, by label."""
    v = _as_vector(problem, assignment)
    out = {}
    for i, c in enumerate(problem.constraints):
        F = c.value(v)
        out[c.label or f"c{i}"] = float(-np.linalg.eigvalsh(0.5 * (F + F.T))[-1])
    for name in problem.positive:
        g = problem.space.group(name)
        for j, P in enumerate(g.positive_blocks(v[problem.space.slice(name)])):
            out[f"{name}>0:{j + 1}"] = float(np.linalg.eigvalsh(P)[0])
    return out


def evaluate_margin(problem: LmiProblem, assignment) -> float:
    """``min_j -lambda_max(F_j(v))`` together with ``lambda_min`` of every
    positive block; negative means some constraint is violated."""
    margins = constraint_margins(problem, assignment)
    return min(margins.values()) if margins else np.inf


# ---------------------------------------------------------------------------
# barrier machinery: every block is G0 + sum_i z_i G[i] > 0

@dataclass
class _Block:
    G0: np.ndarray
    G: np.ndarray  # (nz, s, s)

    def value(self, z):
        return self.G0 + np.tensordot(z, self.G, axes=1)


def _chol(S):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None


def _barrier(blocks, z):
    """Barrier value, or ``None`` outside the domain."""
    val = 0.0
    for b in blocks:
        L = _chol(b.value(z))
        if L is None:
            return None
        val -= 2.0 * np.sum(np.log(np.diag(L)))
    return val


def _barrier_derivatives(blocks, z):
    nz = z.shape[0]
    g = np.zeros(nz)
    H = np.zeros((nz, nz))
    for b in blocks:
        L = np.linalg.cholesky(b.value(z))
        s = L.shape[0]
        Li = solve_triangular(L, np.eye(s), lower=True)
        Gh = Li @ b.G @ Li.T
        Gf = Gh.reshape(nz, s * s)
        g -= np.trace(Gh, axis1=1, axis2=2)
        H += Gf @ Gf.T
    return g, H


def _newton_direction(H, rhs):
    try:
        cf = cho_factor(H)
        return cho_solve(cf, rhs)
    except np.linalg.LinAlgError:
        reg = 1e-12 * max(1.0, np.trace(H) / H.shape[0])
        return np.linalg.lstsq(H + reg * np.eye(H.shape[0]), rhs, rcond=None)[0]


def barrier_minimize(blocks, c, z0, opts: SolverOptions, degree=None, stop=None, tau0=1.0):
    """Minimize ``c.z`` over ``{z : every block > 0}`` from a strictly
    feasible ``z0``.  ``stop(z, gap)`` may end the path early.  Returns
    ``(z, gap_bound, outer_iterations)``."""
    z = np.array(z0, dtype=float)
    m = degree if degree is not None else sum(b.G0.shape[0] for b in blocks)
    tau = tau0
    outer = 0
    while True:
        outer += 1
        if outer > opts.max_iter:
            raise SolverTimeout("barrier method did not converge", float(-c @ z))
        for _ in range(opts.max_newton):
            g, H = _barrier_derivatives(blocks, z)
            grad = tau * c + g
            dz = _newton_direction(H, -grad)
            dec = float(-grad @ dz)
            if dec / 2 <= opts.newton_tol:
                break
            # damped step of a self-concordant barrier; full steps once close
            lam = np.sqrt(max(dec, 0.0))
            alpha = 1.0 if lam < 0.25 else 1.0 / (1.0 + lam)
            while alpha > 1e-14 and _barrier(blocks, z + alpha * dz) is None:
                alpha *= 0.5
            if alpha <= 1e-14:
                break
            z = z + alpha * dz
        gap = m / tau
        if opts.verbose:
            log.info("outer %d: tau=%.3e objective=%.6e gap=%.3e", outer, tau, c @ z, gap)
        if stop is not None and stop(z, gap):
            return z, gap, outer
        if gap <= max(opts.gap_tol, opts.rel_gap_tol * abs(c @ z)):
            return z, gap, outer
        tau *= 10.0


def _cap_blocks(problem: LmiProblem, nz: int, opts: SolverOptions) -> list[_Block]:
    """Compactifying constraints (no margin attached)."""
    space = problem.space
    out = []
    for g in space.groups:
        sl = space.slice(g.name)
        if g.size == 0:
            continue
        if g.positive:
            G = np.zeros((nz, 1, 1))
            G[sl, 0, 0] = [-np.trace(E) for _, E in g.basis]
            out.append(_Block(np.array([[opts.trace_cap]]), G))
        else:
            k = g.size
            G0 = opts.free_cap * np.eye(k + 1)
            G = np.zeros((nz, k + 1, k + 1))
            for i, idx in enumerate(range(sl.start, sl.stop)):
                G[idx, 0, i + 1] = G[idx, i + 1, 0] = 1.0
            out.append(_Block(G0, G))
    return out


def _positivity_exprs(problem: LmiProblem):
    """Positivity of every block of every positive group as ``(G0, G)`` pairs
    over the variable vector: ``P(v) = sum v_i E_i`` restricted to a core."""
    space = problem.space
    N = space.size
    out = []
    for name in problem.positive:
        g = space.group(name)
        sl = space.slice(name)
        if g.kind == "scalar":
            G = np.zeros((N, 1, 1))
            G[sl.start, 0, 0] = 1.0
            out.append((np.zeros((1, 1)), G))
            continue
        if g.kind == "matrix":
            raise ValueError("positive matrix groups are not supported")
        s = g.structure
        pos = sl.start
        for b, off in zip(s.blocks, s.offsets):
            if b.n == 0:
                continue
            G = np.zeros((N, b.n, b.n))
            for i in range(b.n):
                for j in range(i, b.n):
                    G[pos, i, j] = G[pos, j, i] = 1.0
                    pos += 1
            out.append((np.zeros((b.n, b.n)), G))
    return out


def margin_blocks(problem: LmiProblem, with_t: bool, fixed_margin: float = 0.0,
                  positivity_margin: float | None = None):
    """Barrier blocks for ``-F_j(v) - t I > 0`` and ``P(v) - t I > 0``.
    Without ``t`` the margin is the constant ``fixed_margin`` (positivity
    blocks use ``positivity_margin`` when given)."""
    N = problem.space.size
    nz = N + 1 if with_t else N
    blocks = []

    def add(G0, Gv, margin):
        s = G0.shape[0]
        G = np.zeros((nz, s, s))
        G[:N] = Gv
        if with_t:
            G[N] = -np.eye(s)
            blocks.append(_Block(G0, G))
        else:
            blocks.append(_Block(G0 - margin * np.eye(s), G))

    pos_margin = fixed_margin if positivity_margin is None else positivity_margin
    for c in problem.constraints:
        add(-c.const, -c.coeffs, fixed_margin)
    for G0, Gv in _positivity_exprs(problem):
        add(G0, Gv, pos_margin)
    return blocks


def initial_point(problem: LmiProblem, opts: SolverOptions) -> np.ndarray:
    """Positive groups at a scaled identity inside the trace cap, free groups at 0."""
    space = problem.space
    v = np.zeros(space.size)
    for g in space.groups:
        if not g.positive:
            continue
        if g.kind == "scalar":
            v[space.slice(g.name)] = 1.0
            continue
        s = g.structure
        dim = max(s.total_dim, 1)
        alpha = min(1.0, 0.5 * opts.trace_cap / dim)
        v[space.slice(g.name)] = g.coords(np.eye(s.total_dim) * alpha)
    return v


def solve_feasibility(problem: LmiProblem, options: SolverOptions | None = None,
                      **kw) -> FeasibilityResult:
    """Maximize the common margin of all strict constraints of ``problem``.

    Status is ``feasible`` when the re-evaluated margin is at least
    ``margin_tol``; otherwise ``margin-below-threshold`` (infeasibility is
    not certified).
    """
    opts = options or SolverOptions(**kw)
    if problem.space.size == 0:
        raise ValueError("problem has no variables")
    start = time.perf_counter()
    N = problem.space.size
    v0 = initial_point(problem, opts)
    blocks = margin_blocks(problem, with_t=True)
    caps = _cap_blocks(problem, N + 1, opts)
    if not blocks:
        raise ValueError("problem has no constraints")
    t0 = min(np.linalg.eigvalsh(b.value(np.append(v0, 0.0)))[0] for b in blocks) - 1.0
    z0 = np.append(v0, t0)
    c = np.zeros(N + 1)
    c[N] = -1.0

    def stop(z, gap):
        # margin-below-threshold is already decided
        return z[N] + gap < opts.margin_tol * 0.5

    z, gap, outer = barrier_minimize(blocks + caps, c, z0, opts, stop=stop)
    v = z[:N]
    margin = evaluate_margin(problem, v)
    status = FEASIBLE if margin >= opts.margin_tol else BELOW_THRESHOLD
    return FeasibilityResult(status, problem.space.unpack(v), margin, outer,
                             time.perf_counter() - start, v, float(z[N] + gap))


def minimize_linear(problem: LmiProblem, objective: np.ndarray, v0: np.ndarray, margin: float,
                    opts: SolverOptions | None = None, extra=(), rel_gap: float = 1e-6,
                    positivity_margin: float | None = None):
    """Minimize ``objective . v`` keeping every constraint of ``problem`` at
    margin ``margin``; ``extra`` are additional LMIs ``F(v) < 0`` carried
    without margin.  ``v0`` must satisfy all of them strictly."""
    opts = opts or SolverOptions()
    N = problem.space.size
    blocks = margin_blocks(problem, with_t=False, fixed_margin=margin,
                           positivity_margin=positivity_margin)
    blocks += [_Block(-e.const, -e.coeffs) for e in extra]
    blocks += _cap_blocks(problem, N, opts)
    local = SolverOptions(**{**opts.__dict__, "rel_gap_tol": rel_gap, "gap_tol": 1e-9})
    z, gap, _ = barrier_minimize(blocks, np.asarray(objective, dtype=float), v0, local)
    return z
