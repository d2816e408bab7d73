"""Affine matrix expressions over structured variables and the LMI families
for Q-stabilization and Q-performance synthesis."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import block_diag, null_space

from .lft import PartitionedSystem
from .structures import BlockStructure, CommutantElement, StructureError

RANK_TOL = 1e-8


# ---------------------------------------------------------------------------
# variables and expressions

@dataclass(frozen=True)
class VariableGroup:
    """A named block of decision variables.

    ``kind`` is ``"commutant"`` (symmetric element of the commutant of
    ``structure``), ``"scalar"`` or ``"matrix"`` (unstructured, of ``shape``).
    """

    name: str
    kind: str
    structure: BlockStructure | None = None
    shape: tuple[int, int] | None = None
    positive: bool = False

    @cached_property
    def basis(self) -> list[tuple[str, np.ndarray]]:
        if self.kind == "scalar":
            return [(self.name, np.ones((1, 1)))]
        if self.kind == "matrix":
            r, c = self.shape
            out = []
            for i in range(r):
                for j in range(c):
                    E = np.zeros((r, c))
                    E[i, j] = 1.0
                    out.append((f"{self.name}[{i},{j}]", E))
            return out
        if self.kind == "commutant":
            s = self.structure
            out = []
            for k, (b, off) in enumerate(zip(s.blocks, s.offsets)):
                for i in range(b.n):
                    for j in range(i, b.n):
                        E = np.zeros((s.total_dim, s.total_dim))
                        for c in range(b.m):
                            base = off + c * b.n
                            E[base + i, base + j] = 1.0
                            E[base + j, base + i] = 1.0
                        out.append((f"{self.name}:k={k + 1}[{i},{j}]", E))
            return out
        raise ValueError(f"unknown variable kind {self.kind!r}")

    @property
    def size(self) -> int:
        return len(self.basis)

    def value(self, coords: np.ndarray):
        if self.kind == "scalar":
            return float(coords[0])
        if self.kind == "matrix":
            return np.asarray(coords, dtype=float).reshape(self.shape).copy()
        cores, pos = [], 0
        for b in self.structure.blocks:
            core = np.zeros((b.n, b.n))
            for i in range(b.n):
                for j in range(i, b.n):
                    core[i, j] = core[j, i] = coords[pos]
                    pos += 1
            cores.append(core)
        return CommutantElement(self.structure, tuple(cores))

    def coords(self, value) -> np.ndarray:
        if self.kind == "scalar":
            return np.array([float(value)])
        if self.kind == "matrix":
            return np.asarray(value, dtype=float).reshape(-1)
        if isinstance(value, CommutantElement):
            cores = value.cores
        else:
            cores = CommutantElement.from_matrix(self.structure, np.asarray(value, dtype=float)).cores
        out = []
        for c in cores:
            c = 0.5 * (c + c.T)
            for i in range(c.shape[0]):
                for j in range(i, c.shape[0]):
                    out.append(c[i, j])
        return np.asarray(out, dtype=float)

    def positive_blocks(self, coords: np.ndarray) -> list[np.ndarray]:
        """Matrices that must be positive definite when the group is ``positive``."""
        v = self.value(coords)
        if self.kind == "scalar":
            return [np.array([[v]])]
        if self.kind == "matrix":
            return [0.5 * (v + v.T)]
        return [c for c in v.cores if c.size]


@dataclass(frozen=True)
class VariableSpace:
    groups: tuple[VariableGroup, ...]

    def __post_init__(self):
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")

    @cached_property
    def offsets(self) -> dict[str, int]:
        out, pos = {}, 0
        for g in self.groups:
            out[g.name] = pos
            pos += g.size
        return out

    @property
    def size(self) -> int:
        return sum(g.size for g in self.groups)

    def group(self, name: str) -> VariableGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def slice(self, name: str) -> slice:
        off = self.offsets[name]
        return slice(off, off + self.group(name).size)

    @property
    def labels(self) -> list[str]:
        return [lbl for g in self.groups for lbl, _ in g.basis]

    def unpack(self, v: np.ndarray) -> dict:
        return {g.name: g.value(v[self.slice(g.name)]) for g in self.groups}

    def pack(self, values: Mapping) -> np.ndarray:
        v = np.zeros(self.size)
        for g in self.groups:
            if g.name not in values:
                raise KeyError(f"assignment is missing variable {g.name!r}")
            v[self.slice(g.name)] = g.coords(values[g.name])
        return v


@dataclass(frozen=True)
class AffineMatrixExpr:
    """``const + sum_i v_i coeffs[i]``; every matrix symmetric."""

    const: np.ndarray
    coeffs: np.ndarray  # (n_vars, s, s)
    label: str = ""

    @property
    def dim(self) -> int:
        return self.const.shape[0]

    def value(self, v: np.ndarray) -> np.ndarray:
        return self.const + np.tensordot(v, self.coeffs, axes=1)

    def scaled_const(self, alpha: float) -> "AffineMatrixExpr":
        return AffineMatrixExpr(alpha * self.const, self.coeffs, self.label)


def _sym(M):
    return 0.5 * (M + M.T)


def affine(space: VariableSpace, const: np.ndarray,
           terms: Mapping[str, Callable[[np.ndarray], np.ndarray]], label: str = "") -> AffineMatrixExpr:
    """Build an expression from linear maps applied to each variable group.

    ``terms[name](E)`` must be linear in ``E`` and return an ``s x s`` matrix.
    """
    const = _sym(np.asarray(const, dtype=float))
    s = const.shape[0]
    coeffs = np.zeros((space.size, s, s))
    for name, f in terms.items():
        off = space.offsets[name]
        for i, (_, E) in enumerate(space.group(name).basis):
            coeffs[off + i] = _sym(np.asarray(f(E), dtype=float).reshape(s, s))
    return AffineMatrixExpr(const, coeffs, label)


@dataclass(frozen=True)
class LmiProblem:
    """Strict LMIs ``F_j(v) < 0`` plus positivity of the ``positive`` groups."""

    space: VariableSpace
    constraints: tuple[AffineMatrixExpr, ...]
    source: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for c in self.constraints:
            if c.coeffs.shape != (self.space.size, c.dim, c.dim):
                raise ValueError(f"constraint {c.label!r} does not match the variable space")

    @property
    def positive(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.space.groups if g.positive)

    @property
    def is_homogeneous(self) -> bool:
        return all(not np.any(c.const) for c in self.constraints)

    def with_constraints(self, extra: Sequence[AffineMatrixExpr], source=None) -> "LmiProblem":
        return LmiProblem(self.space, self.constraints + tuple(extra),
                          source or self.source, dict(self.meta))

    def scaled_constants(self, alpha: float) -> "LmiProblem":
        return LmiProblem(self.space, tuple(c.scaled_const(alpha) for c in self.constraints),
                          self.source, dict(self.meta))

    def to_json(self) -> dict:
        labels = self.space.labels
        return {
            "schema": "lft-robust/1",
            "source": self.source,
            "variables": [{"name": g.name, "kind": g.kind, "positive": g.positive,
                           "labels": [lbl for lbl, _ in g.basis]} for g in self.space.groups],
            "constraints": [{
                "label": c.label,
                "relation": "<0",
                "constant": c.const.tolist(),
                "coefficients": {labels[i]: c.coeffs[i].tolist()
                                 for i in range(len(labels)) if np.any(c.coeffs[i])},
            } for c in self.constraints],
        }


def _keep(exprs):
    return tuple(e for e in exprs if e.dim > 0)


# ---------------------------------------------------------------------------
# linear algebra helpers

@dataclass(frozen=True)
class KernelBasis:
    N: np.ndarray

    @property
    def rank(self) -> int:
        return self.N.shape[1]


def kernel_basis(M: np.ndarray) -> KernelBasis:
    """Orthonormal basis of ``Ker M`` (columns)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] == 0:
        return KernelBasis(np.zeros((0, 0)))
    if M.shape[0] == 0:
        return KernelBasis(np.eye(M.shape[1]))
    return KernelBasis(null_space(M))


def schur_complement(S: np.ndarray, split: int, which: str = "lower-right") -> np.ndarray:
    """Schur complement of ``S = [P Q; Q^T R]`` (``P`` is ``split x split``)
    with respect to ``R`` (``which="lower-right"``) or ``P``."""
    S = np.asarray(S, dtype=float)
    P, Q, R = S[:split, :split], S[:split, split:], S[split:, split:]
    pivot = R if which == "lower-right" else P
    if pivot.size:
        s = np.linalg.svd(pivot, compute_uv=False)
        if s[-1] <= 1e-14 * max(1.0, s[0]):
            raise np.linalg.LinAlgError("singular pivot block in Schur complement")
    if which == "lower-right":
        return P - Q @ np.linalg.solve(R, Q.T)
    if which == "upper-left":
        return R - Q.T @ np.linalg.solve(P, Q)
    raise ValueError(f"unknown pivot {which!r}")


def is_negative_definite(S: np.ndarray, split: int | None = None) -> bool:
    """``S < 0``; with ``split`` given, decided through ``R < 0`` and the
    Schur complement of ``R``."""
    S = _sym(np.asarray(S, dtype=float))
    if split is None:
        return bool(S.size == 0 or np.linalg.eigvalsh(S)[-1] < 0)
    R = S[split:, split:]
    if R.size and np.linalg.eigvalsh(R)[-1] >= 0:
        return False
    C = schur_complement(S, split) if R.size else S[:split, :split]
    return bool(C.size == 0 or np.linalg.eigvalsh(_sym(C))[-1] < 0)


# ---------------------------------------------------------------------------
# LMI families

def _xy_space(structure: BlockStructure, names=("X", "Y"), extra=()) -> VariableSpace:
    groups = [VariableGroup(nm, "commutant", structure, positive=True) for nm in names]
    return VariableSpace(tuple(groups) + tuple(extra))


def _congruence(T, M):
    return T.T @ M @ T


def performance_y_lmi(plant, space, Y="Y", scale=1.0):
    """Compressed Y-side LMI for Q-performance; ``scale`` is the weight on
    the performance channel (1 in the normalized problem)."""
    A, B1, C1, D11 = plant.A, plant.B1, plant.C1, plant.D11
    n, p1, q1 = plant.n, plant.p1, plant.q1
    Nc = kernel_basis(np.hstack([plant.B2.T, plant.D12.T])).N
    T = block_diag(Nc, np.eye(p1)) if Nc.size or p1 else np.zeros((n + q1 + p1, 0))
    T = T.reshape(n + q1 + p1, -1)

    def f(E):
        top = np.vstack([A, C1])
        mid = top @ E @ top.T
        mid[:n, :n] -= E
        M = np.zeros((n + q1 + p1, n + q1 + p1))
        M[:n + q1, :n + q1] = mid
        return _congruence(T, M)

    const = np.zeros((n + q1 + p1, n + q1 + p1))
    const[n:n + q1, n:n + q1] = -scale * np.eye(q1)
    const[:n, n + q1:] = B1
    const[n + q1:, :n] = B1.T
    const[n:n + q1, n + q1:] = D11
    const[n + q1:, n:n + q1] = D11.T
    const[n + q1:, n + q1:] = -np.eye(p1) / scale
    return affine(space, _congruence(T, const), {Y: f}, "Y-performance")


def performance_x_lmi(plant, space, X="X", scale=1.0):
    A, B1, C1, D11 = plant.A, plant.B1, plant.C1, plant.D11
    n, p1, q1 = plant.n, plant.p1, plant.q1
    No = kernel_basis(np.hstack([plant.C2, plant.D21])).N
    T = block_diag(No, np.eye(q1)) if No.size or q1 else np.zeros((n + p1 + q1, 0))
    T = T.reshape(n + p1 + q1, -1)

    def f(E):
        left = np.hstack([A, B1])
        mid = left.T @ E @ left
        mid[:n, :n] -= E
        M = np.zeros((n + p1 + q1, n + p1 + q1))
        M[:n + p1, :n + p1] = mid
        return _congruence(T, M)

    const = np.zeros((n + p1 + q1, n + p1 + q1))
    const[n:n + p1, n:n + p1] = -scale * np.eye(p1)
    const[:n, n + p1:] = C1.T
    const[n + p1:, :n] = C1
    const[n:n + p1, n + p1:] = D11.T
    const[n + p1:, n:n + p1] = D11
    const[n + p1:, n + p1:] = -np.eye(q1) / scale
    return affine(space, _congruence(T, const), {X: f}, "X-performance")


def build_performance_lmis(plant: PartitionedSystem) -> LmiProblem:
    """Compressed Y/X inequalities for Q-performance with prescribed controller
    dimensions (the coupling/rank conditions are evaluated separately)."""
    plant.require_synthesis_form(performance=True)
    space = _xy_space(plant.structure)
    cons = _keep([performance_y_lmi(plant, space), performance_x_lmi(plant, space)])
    return LmiProblem(space, cons, "performance", {"structure": plant.structure})


def stabilization_y_lmi(plant, space, Y="Y"):
    A = plant.A
    Bp = kernel_basis(plant.B2.T).N.reshape(plant.n, -1)
    return affine(space, np.zeros((Bp.shape[1],) * 2),
                  {Y: lambda E: Bp.T @ (A @ E @ A.T - E) @ Bp}, "Y-stabilization")


def stabilization_x_lmi(plant, space, X="X"):
    A = plant.A
    Cp = kernel_basis(plant.C2).N.reshape(plant.n, -1)  # columns span Ker C2, i.e. C_perp^T
    return affine(space, np.zeros((Cp.shape[1],) * 2),
                  {X: lambda E: Cp.T @ (A.T @ E @ A - E) @ Cp}, "X-stabilization")


def build_stabilization_lmis(plant: PartitionedSystem) -> LmiProblem:
    """Kernel-compressed Lyapunov inequalities for Q-stabilization with
    prescribed controller dimensions (homogeneous in ``X`` and ``Y``)."""
    space = _xy_space(plant.structure)
    cons = _keep([stabilization_y_lmi(plant, space), stabilization_x_lmi(plant, space)])
    return LmiProblem(space, cons, "stabilization", {"structure": plant.structure})


def build_unconstrained_lmis(plant: PartitionedSystem) -> LmiProblem:
    """``A Y A^T - Y - B2 B2^T < 0`` and ``A^T X A - X - C2^T C2 < 0``."""
    A, B2, C2 = plant.A, plant.B2, plant.C2
    space = _xy_space(plant.structure)
    y = affine(space, -B2 @ B2.T, {"Y": lambda E: A @ E @ A.T - E}, "Y-unconstrained")
    x = affine(space, -C2.T @ C2, {"X": lambda E: A.T @ E @ A - E}, "X-unconstrained")
    return LmiProblem(space, _keep([y, x]), "unconstrained", {"structure": plant.structure})


def build_adjusted_lmis(plant: PartitionedSystem, mode: str = "fixed-scaling",
                        scale: float = 1.0) -> LmiProblem:
    """Stabilization inequalities of the adjusted model, i.e. over
    ``diag(Y, mu I)`` and ``diag(X, mu~ I)``.

    ``fixed-scaling`` pins ``mu = scale`` and ``mu~ = 1/scale`` (the
    normalized problem is ``scale = 1``); ``free-scaling`` makes ``mu`` and
    ``mu~`` positive scalar variables.
    """
    plant.require_synthesis_form(performance=True)
    n, p1 = plant.n, plant.p1
    M = plant.performance_matrix
    Nc = kernel_basis(np.hstack([plant.B2.T, plant.D12.T])).N.reshape(n + p1, -1)
    No = kernel_basis(np.hstack([plant.C2, plant.D21])).N.reshape(n + p1, -1)

    def lift(E):
        out = np.zeros((n + p1, n + p1))
        out[:n, :n] = E
        return out

    def lift_scalar(E):
        out = np.zeros((n + p1, n + p1))
        out[n:, n:] = E[0, 0] * np.eye(p1)
        return out

    def y_part(W):
        return Nc.T @ (M @ W @ M.T - W) @ Nc

    def x_part(W):
        return No.T @ (M.T @ W @ M - W) @ No

    if mode == "free-scaling":
        extra = (VariableGroup("mu", "scalar", positive=True),
                 VariableGroup("mu~", "scalar", positive=True))
        space = _xy_space(plant.structure, extra=extra)
        y = affine(space, np.zeros((Nc.shape[1],) * 2),
                   {"Y": lambda E: y_part(lift(E)), "mu": lambda E: y_part(lift_scalar(E))},
                   "Y-adjusted")
        x = affine(space, np.zeros((No.shape[1],) * 2),
                   {"X": lambda E: x_part(lift(E)), "mu~": lambda E: x_part(lift_scalar(E))},
                   "X-adjusted")
    elif mode == "fixed-scaling":
        space = _xy_space(plant.structure)
        mu, mut = scale, 1.0 / scale
        y = affine(space, y_part(lift_scalar(np.array([[mu]]))), {"Y": lambda E: y_part(lift(E))},
                   "Y-adjusted")
        x = affine(space, x_part(lift_scalar(np.array([[mut]]))), {"X": lambda E: x_part(lift(E))},
                   "X-adjusted")
    else:
        raise ValueError(f"unknown scaling mode {mode!r}")
    return LmiProblem(space, _keep([y, x]), f"adjusted/{mode}", {"structure": plant.structure})


def coupling_constraints(space: VariableSpace, structure: BlockStructure, blocks=None,
                         X="X", Y="Y") -> list[AffineMatrixExpr]:
    """``-[X_k I; I Y_k] < 0`` for the selected blocks (all by default)."""
    out = []
    for k, b in enumerate(structure.blocks):
        if b.n == 0 or (blocks is not None and k not in blocks):
            continue
        off = structure.offsets[k]
        sl = slice(off, off + b.n)

        def core_x(E, sl=sl, nk=b.n):
            M = np.zeros((2 * nk, 2 * nk))
            M[:nk, :nk] = -E[sl, sl]
            return M

        def core_y(E, sl=sl, nk=b.n):
            M = np.zeros((2 * nk, 2 * nk))
            M[nk:, nk:] = -E[sl, sl]
            return M

        const = np.zeros((2 * b.n, 2 * b.n))
        const[:b.n, b.n:] = -np.eye(b.n)
        const[b.n:, :b.n] = -np.eye(b.n)
        out.append(affine(space, const, {X: core_x, Y: core_y}, f"coupling:k={k + 1}"))
    return out


# ---------------------------------------------------------------------------
# coupling / rank evaluation

@dataclass(frozen=True)
class BlockCoupling:
    k: int
    min_eigenvalue: float
    rank: int
    bound: int | None
    psd: bool
    rank_ok: bool
    minimal_ctrl_dim: int

    @property
    def passed(self) -> bool:
        return self.psd and self.rank_ok

    def to_json(self) -> dict:
        return {"k": self.k + 1, "min_eigenvalue": self.min_eigenvalue, "rank": self.rank,
                "bound": self.bound, "psd": self.psd, "rank_ok": self.rank_ok,
                "minimal_ctrl_dim": self.minimal_ctrl_dim}


def numerical_rank(S: np.ndarray, tol: float = RANK_TOL, scale: float | None = None) -> int:
    if S.size == 0:
        return 0
    w = np.abs(np.linalg.eigvalsh(_sym(S)))
    ref = w.max() if scale is None else scale
    if ref == 0:
        return 0
    return int(np.sum(w > tol * ref))


def coupling_rank(X: CommutantElement, Y: CommutantElement, ctrl_dims: Sequence[int | None],
                  tol: float = RANK_TOL) -> list[BlockCoupling]:
    """Per-block PSD / rank report for ``[X_k I; I Y_k]``.

    ``ctrl_dims[k] is None`` means no bound on that block's controller
    dimension.  ``minimal_ctrl_dim`` is ``rank(X_k - Y_k^{-1})``.
    """
    if X.structure != Y.structure:
        raise StructureError("X and Y must share a structure")
    if len(ctrl_dims) != X.structure.d:
        raise StructureError(f"expected {X.structure.d} controller dimensions")
    if not (X.is_positive_definite() and Y.is_positive_definite()):
        raise ValueError("coupling_rank needs positive-definite X and Y")
    out = []
    for k, (b, Xk, Yk, nK) in enumerate(zip(X.structure.blocks, X.cores, Y.cores, ctrl_dims)):
        if b.n == 0:
            out.append(BlockCoupling(k, np.inf, 0, nK, True, True, 0))
            continue
        C = np.block([[Xk, np.eye(b.n)], [np.eye(b.n), Yk]])
        w = np.linalg.eigvalsh(_sym(C))
        scale = np.abs(w).max()
        rank = int(np.sum(np.abs(w) > tol * scale))
        psd = bool(w[0] >= -tol * scale)
        W = Xk - np.linalg.inv(Yk)
        minimal = numerical_rank(W, tol, scale)
        rank_ok = True if nK is None else rank <= b.n + nK
        out.append(BlockCoupling(k, float(w[0]), rank, nK, psd, bool(rank_ok), minimal))
    return out
