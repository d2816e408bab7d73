"""Uncertainty block structures, their commutants, sampling and the
closed-loop shuffle permutation.

A structure is an ordered list of blocks ``(m_k, n_k)``.  Block ``k`` acts on
a coordinate slice of length ``m_k * n_k`` as ``Delta0_k (x) I_{n_k}`` where
``Delta0_k`` is an arbitrary real ``m_k x m_k`` matrix.  The commutant of such
a block is ``I_{m_k} (x) Q_k`` with ``Q_k`` an arbitrary ``n_k x n_k`` core.

A *full* block (unstructured ``p x p`` uncertainty whose commutant is the
scalar multiples of the identity) is exactly the case ``m = p, n = 1``; the
``full`` flag only marks such blocks so that controller dimension presets and
reports can recognise them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import block_diag

DEFAULT_PATTERN_TOL = 1e-9


class StructureError(ValueError):
    """Invalid block structure or a matrix that does not fit one."""


@dataclass(frozen=True)
class Block:
    m: int
    n: int
    full: bool = False

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise StructureError(f"block multiplicity m must be >= 1, got {self.m}")
        if int(self.n) != self.n or self.n < 0:
            raise StructureError(f"block repetition n must be >= 0, got {self.n}")
        if self.full and self.n != 1:
            raise StructureError("a full block is encoded as m = p, n = 1")

    @property
    def dim(self) -> int:
        return self.m * self.n


@dataclass(frozen=True)
class BlockStructure:
    """Ordered uncertainty structure; ``frequency_block`` optionally marks the
    block that carries the frequency (shift) variable."""

    blocks: tuple[Block, ...]
    frequency_block: int | None = None

    def __post_init__(self):
        if len(self.blocks) == 0:
            raise StructureError("a block structure needs at least one block")
        if self.frequency_block is not None and not 0 <= self.frequency_block < len(self.blocks):
            raise StructureError(f"frequency block index {self.frequency_block} out of range")

    @property
    def d(self) -> int:
        return len(self.blocks)

    @property
    def total_dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    @property
    def offsets(self) -> list[int]:
        out, pos = [], 0
        for b in self.blocks:
            out.append(pos)
            pos += b.dim
        return out

    @property
    def commutant_dim(self) -> int:
        return sum(b.n * b.n for b in self.blocks)

    @property
    def symmetric_commutant_dim(self) -> int:
        return sum(b.n * (b.n + 1) // 2 for b in self.blocks)

    def with_counts(self, counts: Sequence[int]) -> "BlockStructure":
        """Same multiplicities, new repetition counts (e.g. a controller structure)."""
        if len(counts) != self.d:
            raise StructureError(f"expected {self.d} counts, got {len(counts)}")
        blocks = []
        for b, c in zip(self.blocks, counts):
            if b.full and c not in (0, 1):
                # a full block with c copies is no longer "full"
                blocks.append(Block(b.m, int(c)))
            else:
                blocks.append(Block(b.m, int(c), full=b.full and c == 1))
        return BlockStructure(tuple(blocks), self.frequency_block)

    def extended(self, other: "BlockStructure") -> "BlockStructure":
        return BlockStructure(self.blocks + other.blocks, self.frequency_block)

    def with_full_block(self, p: int) -> "BlockStructure":
        """``self (+) Delta_full`` on a ``p``-dimensional channel."""
        if p == 0:
            return self
        return BlockStructure(self.blocks + (Block(p, 1, full=True),), self.frequency_block)

    def to_json(self) -> dict:
        out = {"blocks": [dict({"m": b.m, "n": b.n}, **({"full": True} if b.full else {}))
                          for b in self.blocks]}
        if self.frequency_block is not None:
            out["frequency_block"] = self.frequency_block
        return out

    @classmethod
    def from_json(cls, data: dict) -> "BlockStructure":
        try:
            blocks = [Block(int(b["m"]), int(b["n"]), bool(b.get("full", False)))
                      for b in data["blocks"]]
        except (KeyError, TypeError) as exc:
            raise StructureError(f"malformed structure JSON: {exc}") from exc
        if not blocks:
            raise StructureError("a block structure needs at least one block")
        return cls(tuple(blocks), data.get("frequency_block"))


def make_block_structure(blocks: Iterable, frequency_block: int | None = None) -> BlockStructure:
    """Build a structure from ``(m, n)`` pairs or :class:`Block` instances.

    >>> make_block_structure([(2, 1), (1, 3)]).total_dim
    5
    """
    out = []
    for b in blocks:
        if isinstance(b, Block):
            out.append(b)
        else:
            m, n = b
            out.append(Block(m, n))
    return BlockStructure(tuple(out), frequency_block)


def full_block(p: int) -> Block:
    return Block(p, 1, full=True)


# ---------------------------------------------------------------------------
# commutant

@dataclass(frozen=True)
class CommutantElement:
    """Element of the commutant, stored by its per-block cores."""

    structure: BlockStructure
    cores: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.cores) != self.structure.d:
            raise StructureError("one core per block required")
        for b, c in zip(self.structure.blocks, self.cores):
            if c.shape != (b.n, b.n):
                raise StructureError(f"core of shape {c.shape} does not fit block {b}")

    @property
    def assembled(self) -> np.ndarray:
        return assemble_commutant(self.structure, self.cores)

    def is_positive_definite(self) -> bool:
        return all(c.size == 0 or np.linalg.eigvalsh(_sym(c))[0] > 0 for c in self.cores)

    def min_eigenvalue(self) -> float:
        vals = [np.linalg.eigvalsh(_sym(c))[0] for c in self.cores if c.size]
        return float(min(vals)) if vals else np.inf

    def inverse(self) -> "CommutantElement":
        return CommutantElement(self.structure, tuple(np.linalg.inv(c) if c.size else c
                                                      for c in self.cores))

    def scaled(self, alpha: float) -> "CommutantElement":
        return CommutantElement(self.structure, tuple(alpha * c for c in self.cores))

    def to_json(self) -> dict:
        return {"blocks": [c.tolist() for c in self.cores]}

    @classmethod
    def from_json(cls, structure: BlockStructure, data: dict) -> "CommutantElement":
        cores = []
        for b, c in zip(structure.blocks, data["blocks"]):
            cores.append(np.asarray(c, dtype=float).reshape(b.n, b.n))
        if len(cores) != structure.d:
            raise StructureError("certificate block count does not match structure")
        return cls(structure, tuple(cores))

    @classmethod
    def from_matrix(cls, structure: BlockStructure, M: np.ndarray,
                    tol: float = DEFAULT_PATTERN_TOL) -> "CommutantElement":
        if not is_in_commutant(M, structure, tol):
            raise StructureError("matrix is not in the commutant of the structure")
        return cls(structure, tuple(_extract_cores(M, structure)))

    @classmethod
    def identity(cls, structure: BlockStructure) -> "CommutantElement":
        return cls(structure, tuple(np.eye(b.n) for b in structure.blocks))


def _sym(M):
    return 0.5 * (M + M.T)


def assemble_commutant(structure: BlockStructure, cores: Sequence[np.ndarray]) -> np.ndarray:
    parts = [np.kron(np.eye(b.m), np.asarray(c, dtype=float).reshape(b.n, b.n))
             for b, c in zip(structure.blocks, cores)]
    return _block_diag(parts, structure.total_dim)


def _block_diag(parts, dim):
    parts = [p for p in parts if p.size]
    if not parts:
        return np.zeros((dim, dim))
    return block_diag(*parts)


def _extract_cores(M, structure):
    cores = []
    for b, off in zip(structure.blocks, structure.offsets):
        cores.append(np.array(M[off:off + b.n, off:off + b.n], dtype=float))
    return cores


def commutant_basis(structure: BlockStructure, symmetric: bool = False) -> list[CommutantElement]:
    """Basis of the commutant (dimension ``sum n_k**2``), or of its symmetric
    part (dimension ``sum n_k (n_k + 1) / 2``) when ``symmetric`` is set."""
    zeros = [np.zeros((b.n, b.n)) for b in structure.blocks]
    basis = []
    for k, b in enumerate(structure.blocks):
        for i in range(b.n):
            for j in range(b.n):
                if symmetric and j < i:
                    continue
                core = np.zeros((b.n, b.n))
                core[i, j] = 1.0
                if symmetric:
                    core[j, i] = 1.0
                cores = list(zeros)
                cores[k] = core
                basis.append(CommutantElement(structure, tuple(cores)))
    return basis


def is_in_commutant(M: np.ndarray, structure: BlockStructure,
                    tol: float = DEFAULT_PATTERN_TOL) -> bool:
    M = np.asarray(M, dtype=float)
    N = structure.total_dim
    if M.shape != (N, N):
        raise StructureError(f"matrix of shape {M.shape} does not match structure dimension {N}")
    R = assemble_commutant(structure, _extract_cores(M, structure))
    return bool(np.all(np.abs(M - R) <= tol))


def assemble_uncertainty(structure: BlockStructure, cores: Sequence[np.ndarray]) -> np.ndarray:
    """``diag(Delta0_k (x) I_{n_k})``."""
    parts = [np.kron(np.asarray(c, dtype=float).reshape(b.m, b.m), np.eye(b.n))
             for b, c in zip(structure.blocks, cores)]
    return _block_diag(parts, structure.total_dim)


def is_in_structure(M: np.ndarray, structure: BlockStructure,
                    tol: float = DEFAULT_PATTERN_TOL) -> bool:
    """True iff ``M = diag(Delta0_k (x) I_{n_k})`` for some cores."""
    M = np.asarray(M, dtype=float)
    N = structure.total_dim
    if M.shape != (N, N):
        raise StructureError(f"matrix of shape {M.shape} does not match structure dimension {N}")
    cores = []
    for b, off in zip(structure.blocks, structure.offsets):
        if b.n == 0:
            cores.append(np.zeros((b.m, b.m)))
            continue
        blk = M[off:off + b.dim, off:off + b.dim]
        cores.append(blk[::b.n, ::b.n])
    R = assemble_uncertainty(structure, cores)
    return bool(np.all(np.abs(M - R) <= tol))


# ---------------------------------------------------------------------------
# sampling

@dataclass(frozen=True)
class UncertaintySample:
    structure: BlockStructure
    cores: tuple[np.ndarray, ...]
    radius: float

    @property
    def assembled(self) -> np.ndarray:
        return assemble_uncertainty(self.structure, self.cores)

    def assembled_for(self, structure: BlockStructure) -> np.ndarray:
        """The same cores laid out on another structure with equal multiplicities."""
        if [b.m for b in structure.blocks] != [b.m for b in self.structure.blocks]:
            raise StructureError("structures have different block multiplicities")
        return assemble_uncertainty(structure, self.cores)


def draw_cores(structure: BlockStructure, radius: float, rng: np.random.Generator) -> list[np.ndarray]:
    """One core per block: a Gaussian matrix rescaled to spectral norm
    ``radius * u`` with ``u = 1`` half of the time and ``u ~ U(0, 1)`` otherwise.
    Cores are drawn for every block, including ``n_k = 0`` ones, so a fixed
    seed gives the same cores whatever the repetition counts are."""
    cores = []
    for b in structure.blocks:
        G = rng.standard_normal((b.m, b.m))
        boundary = rng.random() < 0.5
        u = 1.0 if boundary else rng.random()
        s = np.linalg.norm(G, 2)
        if radius == 0 or s == 0:
            cores.append(np.zeros((b.m, b.m)))
        else:
            cores.append(G * (radius * u / s))
    return cores


def sample_uncertainty(structure: BlockStructure, radius: float, seed) -> UncertaintySample:
    if radius < 0:
        raise StructureError("radius must be nonnegative")
    rng = np.random.default_rng(seed)
    return UncertaintySample(structure, tuple(draw_cores(structure, radius, rng)), float(radius))


# ---------------------------------------------------------------------------
# shuffle

@dataclass(frozen=True)
class ShufflePermutation:
    """Maps closed-loop coordinates ``[x_1..x_d, xK_1..xK_d]`` to the merged
    ordering where, for every block and every one of its ``m_k`` copies, the
    plant chunk is followed by the controller chunk.

    ``index[r]`` is the original coordinate placed at merged position ``r``,
    so ``P @ v == v[index]``.
    """

    plant: BlockStructure
    ctrl_dims: tuple[int, ...]
    merged: BlockStructure
    index: np.ndarray = field(compare=False)

    @property
    def matrix(self) -> np.ndarray:
        N = len(self.index)
        P = np.zeros((N, N))
        P[np.arange(N), self.index] = 1.0
        return P

    def conjugate(self, M: np.ndarray) -> np.ndarray:
        """``P M P^T``."""
        return M[np.ix_(self.index, self.index)]

    def unconjugate(self, M: np.ndarray) -> np.ndarray:
        """``P^T M P``."""
        out = np.empty_like(M)
        out[np.ix_(self.index, self.index)] = M
        return out


def shuffle_permutation(plant: BlockStructure, ctrl_dims: Sequence[int]) -> ShufflePermutation:
    ctrl_dims = tuple(int(c) for c in ctrl_dims)
    if len(ctrl_dims) != plant.d:
        raise StructureError(f"expected {plant.d} controller dimensions, got {len(ctrl_dims)}")
    if any(c < 0 for c in ctrl_dims):
        raise StructureError("controller dimensions must be nonnegative")
    ctrl = plant.with_counts(ctrl_dims)
    n = plant.total_dim
    index = []
    for b, bk, po, co in zip(plant.blocks, ctrl.blocks, plant.offsets, ctrl.offsets):
        for i in range(b.m):
            index.extend(range(po + i * b.n, po + (i + 1) * b.n))
            index.extend(range(n + co + i * bk.n, n + co + (i + 1) * bk.n))
    merged = plant.with_counts([b.n + c for b, c in zip(plant.blocks, ctrl_dims)])
    return ShufflePermutation(plant, ctrl_dims, merged, np.asarray(index, dtype=int))
