"""Linear fractional transformations, feedback interconnection and the
augmented / adjusted model constructions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .structures import (BlockStructure, ShufflePermutation, StructureError,
                         shuffle_permutation)

ILL_POSED_COND = 1e12


class IllPosedError(np.linalg.LinAlgError):
    """``I - Delta A`` (or ``I - Delta' D``) is singular or nearly so."""

    def __init__(self, message, sigma_min):
        super().__init__(message)
        self.sigma_min = sigma_min


def _solve_well_posed(Mat, rhs, what):
    if Mat.shape[0] == 0:
        return rhs
    s = np.linalg.svd(Mat, compute_uv=False)
    if s[-1] == 0 or s[0] / s[-1] > ILL_POSED_COND:
        raise IllPosedError(f"{what} is ill-posed (sigma_min = {s[-1]:.3e})", float(s[-1]))
    return np.linalg.solve(Mat, rhs)


def upper_lft(M: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``D + C (I - Delta A)^{-1} Delta B`` where ``A`` is the leading
    ``dim(Delta)`` square block of ``M``."""
    M = np.asarray(M, dtype=float)
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    n = delta.shape[0]
    if delta.shape != (n, n) or M.shape[0] < n or M.shape[1] < n:
        raise ValueError(f"load of shape {delta.shape} does not fit system of shape {M.shape}")
    A, B = M[:n, :n], M[:n, n:]
    C, D = M[n:, :n], M[n:, n:]
    X = _solve_well_posed(np.eye(n) - delta @ A, delta @ B, "I - Delta A")
    return D + C @ X


def lower_lft(M: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``A + B (I - Delta' D)^{-1} Delta' C`` where ``D`` is the trailing block
    of ``M`` whose shape is that of ``Delta'`` transposed."""
    M = np.asarray(M, dtype=float)
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    p, q = delta.shape
    r, c = M.shape[0] - q, M.shape[1] - p
    if r < 0 or c < 0:
        raise ValueError(f"load of shape {delta.shape} does not fit system of shape {M.shape}")
    A, B = M[:r, :c], M[:r, c:]
    C, D = M[r:, :c], M[r:, c:]
    X = _solve_well_posed(np.eye(p) - delta @ D, delta @ C, "I - Delta' D")
    return A + B @ X


def _as2d(x, shape):
    a = np.asarray(x, dtype=float)
    if a.size == 0:
        return np.zeros(shape)
    return a.reshape(shape) if a.ndim < 2 else a


@dataclass(frozen=True)
class PartitionedSystem:
    """Plant ``[A B1 B2; C1 D11 D12; C2 D21 D22]`` over ``structure``."""

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    D22: np.ndarray
    structure: BlockStructure

    def __post_init__(self):
        n = self.A.shape[0]
        p1, p2 = self.B1.shape[1], self.B2.shape[1]
        q1, q2 = self.C1.shape[0], self.C2.shape[0]
        expected = {"A": (n, n), "B1": (n, p1), "B2": (n, p2), "C1": (q1, n), "C2": (q2, n),
                    "D11": (q1, p1), "D12": (q1, p2), "D21": (q2, p1), "D22": (q2, p2)}
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise StructureError(f"{name} has shape {got}, expected {shape}")
        if n != self.structure.total_dim:
            raise StructureError(f"state dimension {n} != structure dimension {self.structure.total_dim}")

    @classmethod
    def build(cls, A, structure, B1=None, B2=None, C1=None, C2=None, D11=None,
              D12=None, D21=None, D22=None, *, p1=None, p2=None, q1=None, q2=None):
        """Convenience constructor; missing blocks are zero and channel sizes
        are inferred from whatever is given."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = A.shape[0]

        def cols(x):
            return None if x is None else np.atleast_2d(np.asarray(x, dtype=float)).shape[1]

        def rows(x):
            return None if x is None else np.atleast_2d(np.asarray(x, dtype=float)).shape[0]

        def pick(*c):
            for v in c:
                if v is not None:
                    return v
            return 0

        p1 = pick(p1, cols(B1), cols(D11), cols(D21))
        p2 = pick(p2, cols(B2), cols(D12), cols(D22))
        q1 = pick(q1, rows(C1), rows(D11), rows(D12))
        q2 = pick(q2, rows(C2), rows(D21), rows(D22))

        def mat(x, shape):
            if x is None:
                return np.zeros(shape)
            return _as2d(np.atleast_2d(np.asarray(x, dtype=float)), shape)

        return cls(A, mat(B1, (n, p1)), mat(B2, (n, p2)), mat(C1, (q1, n)), mat(C2, (q2, n)),
                   mat(D11, (q1, p1)), mat(D12, (q1, p2)), mat(D21, (q2, p1)),
                   mat(D22, (q2, p2)), structure)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p1(self):
        return self.B1.shape[1]

    @property
    def p2(self):
        return self.B2.shape[1]

    @property
    def q1(self):
        return self.C1.shape[0]

    @property
    def q2(self):
        return self.C2.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.A, self.B1, self.B2],
                         [self.C1, self.D11, self.D12],
                         [self.C2, self.D21, self.D22]])

    @property
    def performance_matrix(self) -> np.ndarray:
        """``[A B1; C1 D11]``: the model seen by the disturbance/error channel."""
        return np.block([[self.A, self.B1], [self.C1, self.D11]])

    def require_synthesis_form(self, performance: bool = False):
        if np.any(self.D22 != 0):
            raise NotImplementedError("synthesis requires D22 = 0")
        if performance and self.p1 != self.q1:
            raise StructureError("performance problems need dim u1 == dim y1")

    def to_json(self) -> dict:
        out = {k: getattr(self, k).tolist() for k in
               ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22")}
        out["dims"] = {"n": self.n, "p1": self.p1, "p2": self.p2, "q1": self.q1, "q2": self.q2}
        out["structure"] = self.structure.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "PartitionedSystem":
        structure = BlockStructure.from_json(data["structure"])
        dims = data.get("dims", {})
        kw = {k: data.get(k) for k in ("B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22")}
        # empty lists carry no shape information
        kw = {k: (None if v is not None and np.asarray(v, dtype=float).size == 0 else v)
              for k, v in kw.items()}
        return cls.build(data["A"], structure, **kw, p1=dims.get("p1"), p2=dims.get("p2"),
                         q1=dims.get("q1"), q2=dims.get("q2"))


@dataclass(frozen=True)
class Controller:
    AK: np.ndarray
    BK: np.ndarray
    CK: np.ndarray
    DK: np.ndarray
    ctrl_dims: tuple[int, ...]
    structure: BlockStructure  # controller structure: (m_k, n_Kk)

    def __post_init__(self):
        nK = self.AK.shape[0]
        if nK != self.structure.total_dim:
            raise StructureError(f"controller state dimension {nK} != {self.structure.total_dim}")
        p2, q2 = self.DK.shape
        for name, shape in {"AK": (nK, nK), "BK": (nK, q2), "CK": (p2, nK)}.items():
            if getattr(self, name).shape != shape:
                raise StructureError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def for_plant(cls, plant: PartitionedSystem, ctrl_dims: Sequence[int], AK=None, BK=None,
                  CK=None, DK=None) -> "Controller":
        ctrl_dims = tuple(int(c) for c in ctrl_dims)
        structure = plant.structure.with_counts(ctrl_dims)
        nK = structure.total_dim

        def mat(x, shape):
            return np.zeros(shape) if x is None else _as2d(x, shape)

        return cls(mat(AK, (nK, nK)), mat(BK, (nK, plant.q2)), mat(CK, (plant.p2, nK)),
                   mat(DK, (plant.p2, plant.q2)), ctrl_dims, structure)

    @classmethod
    def static(cls, plant: PartitionedSystem, DK) -> "Controller":
        return cls.for_plant(plant, [0] * plant.structure.d, DK=DK)

    @property
    def nK(self):
        return self.AK.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.AK, self.BK], [self.CK, self.DK]])

    def to_json(self) -> dict:
        return {"AK": self.AK.tolist(), "BK": self.BK.tolist(), "CK": self.CK.tolist(),
                "DK": self.DK.tolist(), "ctrl_dims": list(self.ctrl_dims),
                "dims": {"nK": self.nK, "p2": self.DK.shape[0], "q2": self.DK.shape[1]},
                "structure": self.structure.to_json()}

    @classmethod
    def from_json(cls, plant: PartitionedSystem, data: dict) -> "Controller":
        return cls.for_plant(plant, data["ctrl_dims"],
                             **{k: (None if np.asarray(data[k], dtype=float).size == 0 else data[k])
                                for k in ("AK", "BK", "CK", "DK")})


@dataclass(frozen=True)
class ClosedLoop:
    """Closed-loop realization in the original coordinates ``[x; xK]``.

    ``matrix`` is ``[A_cl B_cl; C_cl D_cl]``; the load on its state is
    ``diag(Delta, Delta_K)``.  ``shuffled`` gives the same model in the
    merged coordinates, where the load is a member of ``merged_structure``.
    """

    matrix: np.ndarray
    n_state: int
    permutation: ShufflePermutation

    @property
    def merged_structure(self) -> BlockStructure:
        return self.permutation.merged

    @property
    def A(self):
        return self.matrix[:self.n_state, :self.n_state]

    @property
    def B(self):
        return self.matrix[:self.n_state, self.n_state:]

    @property
    def C(self):
        return self.matrix[self.n_state:, :self.n_state]

    @property
    def D(self):
        return self.matrix[self.n_state:, self.n_state:]

    @property
    def shuffled(self) -> np.ndarray:
        N = self.n_state
        idx = np.concatenate([self.permutation.index, np.arange(N, self.matrix.shape[0])])
        jdx = np.concatenate([self.permutation.index, np.arange(N, self.matrix.shape[1])])
        return self.matrix[np.ix_(idx, jdx)]


def _interconnection_matrix(plant: PartitionedSystem, nK: int) -> np.ndarray:
    """The open interconnection whose lower LFT with the controller matrix is
    the closed-loop realization."""
    n, p1, p2, q1, q2 = plant.n, plant.p1, plant.p2, plant.q1, plant.q2
    Z = np.zeros
    I = np.eye(nK)
    return np.block([
        [plant.A, Z((n, nK)), plant.B1, Z((n, nK)), plant.B2],
        [Z((nK, n)), Z((nK, nK)), Z((nK, p1)), I, Z((nK, p2))],
        [plant.C1, Z((q1, nK)), plant.D11, Z((q1, nK)), plant.D12],
        [Z((nK, n)), I, Z((nK, p1)), Z((nK, nK)), Z((nK, p2))],
        [plant.C2, Z((q2, nK)), plant.D21, Z((q2, nK)), plant.D22],
    ])


def closed_loop_explicit(plant: PartitionedSystem, K: Controller) -> np.ndarray:
    """Closed-loop matrix for ``D22 = 0`` written out blockwise."""
    A, B1, B2, C1, C2 = plant.A, plant.B1, plant.B2, plant.C1, plant.C2
    D11, D12, D21 = plant.D11, plant.D12, plant.D21
    AK, BK, CK, DK = K.AK, K.BK, K.CK, K.DK
    return np.block([
        [A + B2 @ DK @ C2, B2 @ CK, B1 + B2 @ DK @ D21],
        [BK @ C2, AK, BK @ D21],
        [C1 + D12 @ DK @ C2, D12 @ CK, D11 + D12 @ DK @ D21],
    ])


def close_loop(plant: PartitionedSystem, K: Controller) -> ClosedLoop:
    if K.DK.shape != (plant.p2, plant.q2):
        raise StructureError(f"controller maps {K.DK.shape[1]} -> {K.DK.shape[0]} signals, "
                             f"plant needs {plant.q2} -> {plant.p2}")
    if len(K.ctrl_dims) != plant.structure.d:
        raise StructureError("controller block count does not match the plant")
    perm = shuffle_permutation(plant.structure, K.ctrl_dims)
    if not np.any(plant.D22):
        M = closed_loop_explicit(plant, K)
    else:
        s = np.linalg.svd(np.eye(plant.q2) - plant.D22 @ K.DK, compute_uv=False)
        if s.size and (s[-1] == 0 or s[0] / s[-1] > ILL_POSED_COND):
            raise IllPosedError("feedback loop is not well-posed: I - D22 DK is singular",
                                float(s[-1]))
        M = lower_lft(_interconnection_matrix(plant, K.nK), K.matrix)
    return ClosedLoop(M, plant.n + K.nK, perm)


def augment(M: np.ndarray, structure: BlockStructure) -> PartitionedSystem:
    """``Sigma_aug``: the whole system matrix becomes the state matrix over
    ``structure (+) Delta_full``; the external channels are zero-width."""
    M = np.asarray(M, dtype=float)
    n = structure.total_dim
    if M.shape[0] != M.shape[1] or M.shape[0] < n:
        raise StructureError("augmentation needs a square input/output channel")
    p = M.shape[0] - n
    return PartitionedSystem.build(M, structure.with_full_block(p))


def adjust(plant: PartitionedSystem) -> PartitionedSystem:
    """``Sigma_adj``: ``[A B1; C1 D11]`` becomes the state matrix over
    ``Delta (+) Delta_full``, channel 1 is zero-width and channel 2 keeps
    ``[B2; D12]`` and ``[C2 D21]``."""
    if plant.p1 != plant.q1:
        raise StructureError("adjusted model needs dim u1 == dim y1")
    if np.any(plant.D22):
        raise NotImplementedError("adjusted model requires D22 = 0")
    return PartitionedSystem.build(
        plant.performance_matrix, plant.structure.with_full_block(plant.p1),
        B2=np.vstack([plant.B2, plant.D12]), C2=np.hstack([plant.C2, plant.D21]),
        p1=0, q1=0, p2=plant.p2, q2=plant.q2)


def adjusted_controller(plant: PartitionedSystem, K: Controller, full_dim: int = 0) -> Controller:
    """Lift a controller for ``plant`` to one for ``adjust(plant)``; the extra
    full-block controller state is empty unless ``full_dim`` says otherwise
    (in which case it is appended as zero dynamics)."""
    adj = adjust(plant)
    if plant.p1 == 0:
        return Controller.for_plant(adj, K.ctrl_dims, K.AK, K.BK, K.CK, K.DK)
    dims = list(K.ctrl_dims) + [full_dim]
    extra = plant.p1 * full_dim
    nK = K.nK + extra
    AK = np.zeros((nK, nK))
    AK[:K.nK, :K.nK] = K.AK
    BK = np.vstack([K.BK, np.zeros((extra, plant.q2))])
    CK = np.hstack([K.CK, np.zeros((plant.p2, extra))])
    return Controller.for_plant(adj, dims, AK, BK, CK, K.DK)
