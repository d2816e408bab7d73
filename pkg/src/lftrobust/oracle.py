"""Sampling-based falsification of robust stability and robust performance.

Sampling never proves robustness: a clean report only says that no
violation was found among the drawn loads.  Every sample ``i`` uses its own
generator seeded with ``(seed, i)``, so reports are reproducible and a
larger radius reuses the same directions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lft import ILL_POSED_COND, Controller, PartitionedSystem, close_loop
from .structures import BlockStructure, StructureError, draw_cores

SCHEMA = "lft-robust/1"
MAX_STORED_VIOLATIONS = 10
# a sampled gain this close to 1 counts as reaching the strict bound
BOUND_TOL = 1e-12
REAL_EIG_TOL = 1e-10


@dataclass
class SampleReport:
    kind: str
    samples: int
    radius: float
    seed: int
    worst_sigma_min: float
    max_spectral_radius: float
    worst_norm: float | None = None
    n_violations: int = 0
    violations: list = field(default_factory=list)
    bound_attained: bool = False
    path_discrepancy: float | None = None

    @property
    def violation_found(self) -> bool:
        return self.n_violations > 0

    @property
    def verdict(self) -> str:
        if self.violation_found:
            return f"violation found ({self.n_violations} of {self.samples} samples)"
        return f"no violation found in {self.samples} samples"

    def to_json(self) -> dict:
        out = {"schema": SCHEMA, "kind": self.kind, "samples": self.samples,
               "radius": self.radius, "seed": self.seed,
               "worst_sigma_min": self.worst_sigma_min,
               "max_spectral_radius": self.max_spectral_radius,
               "worst_norm": self.worst_norm, "n_violations": self.n_violations,
               "violations": self.violations, "bound_attained": self.bound_attained,
               "verdict": self.verdict}
        if self.path_discrepancy is not None:
            out["path_discrepancy"] = self.path_discrepancy
        return out


def draw_batch(structure: BlockStructure, n_samples: int, seed: int = 0,
               radius: float = 1.0) -> list[np.ndarray]:
    """Cores for ``n_samples`` loads; entry ``k`` has shape ``(n_samples, m_k, m_k)``."""
    if radius < 0:
        raise StructureError("radius must be nonnegative")
    per = [draw_cores(structure, radius, np.random.default_rng([seed, i])) for i in range(n_samples)]
    return [np.array([p[k] for p in per]).reshape(n_samples, b.m, b.m)
            for k, b in enumerate(structure.blocks)]


def assemble_batch(structure: BlockStructure, cores: list[np.ndarray]) -> np.ndarray:
    """Stack of ``diag(Delta0_k (x) I_{n_k})``, shape ``(S, N, N)``."""
    S = cores[0].shape[0] if cores else 0
    N = structure.total_dim
    out = np.zeros((S, N, N))
    for b, off, c in zip(structure.blocks, structure.offsets, cores):
        if b.n == 0:
            continue
        blk = np.einsum("sij,ab->siajb", c, np.eye(b.n)).reshape(S, b.dim, b.dim)
        out[:, off:off + b.dim, off:off + b.dim] = blk
    return out


def _sigma_min(stack: np.ndarray) -> np.ndarray:
    if stack.shape[-1] == 0:
        return np.ones(stack.shape[0])
    return np.linalg.svd(stack, compute_uv=False)[:, -1]


def _norms(stack: np.ndarray) -> np.ndarray:
    if stack.shape[-1] == 0 or stack.shape[-2] == 0:
        return np.zeros(stack.shape[0])
    return np.linalg.svd(stack, compute_uv=False)[:, 0]


def _violation(structure, cores, i, reason, scale=1.0, **extra):
    return {"index": int(i), "reason": reason,
            "delta": {"blocks": [(c[i] * scale).tolist() for c in cores]}, **extra}


def _stability_scan(A, structure, cores, deltas):
    """Per-sample ``sigma_min(I - Delta A)``, spectral radius of ``Delta A`` and
    detected violations (singular loads, including ones on the segment
    ``[0, Delta]`` detected through real eigenvalues >= 1)."""
    N = deltas.shape[-1]
    DA = deltas @ A
    smin = _sigma_min(np.eye(N) - DA)
    if N:
        eig = np.linalg.eigvals(DA)
        rho = np.abs(eig).max(axis=1)
    else:
        eig = np.zeros((deltas.shape[0], 0))
        rho = np.zeros(deltas.shape[0])
    bad = {}
    for i in np.nonzero(smin <= 1.0 / ILL_POSED_COND)[0]:
        bad[i] = _violation(structure, cores, i, "singular", sigma_min=float(smin[i]))
    real = (np.abs(eig.imag) <= REAL_EIG_TOL * np.maximum(1.0, np.abs(eig.real))) & (eig.real >= 1.0)
    for i in np.nonzero(real.any(axis=1))[0]:
        if i in bad:
            continue
        lam = float(eig.real[i][real[i]].max())
        bad[i] = _violation(structure, cores, i, "singular-on-segment", scale=1.0 / lam,
                            eigenvalue=lam)
    return smin, rho, bad


def _finish(report: SampleReport, bad: dict):
    report.n_violations = len(bad)
    report.violations = [bad[i] for i in sorted(bad)[:MAX_STORED_VIOLATIONS]]
    return report


def sample_robust_stability(A: np.ndarray, structure: BlockStructure, n_samples: int = 10_000,
                            seed: int = 0, radius: float = 1.0) -> SampleReport:
    A = np.asarray(A, dtype=float)
    N = structure.total_dim
    if A.shape != (N, N):
        raise StructureError(f"A has shape {A.shape}, structure needs {(N, N)}")
    cores = draw_batch(structure, n_samples, seed, radius)
    deltas = assemble_batch(structure, cores)
    smin, rho, bad = _stability_scan(A, structure, cores, deltas)
    report = SampleReport("robust-stability", n_samples, radius, seed,
                          float(smin.min()) if n_samples else np.inf,
                          float(rho.max()) if n_samples else 0.0)
    return _finish(report, bad)


def _upper_lft_batch(M, deltas, n):
    """``D + C (I - Delta A)^{-1} Delta B`` for every load of the stack."""
    A, B, C, D = M[:n, :n], M[:n, n:], M[n:, :n], M[n:, n:]
    if n == 0:
        return np.broadcast_to(D, (deltas.shape[0],) + D.shape).copy()
    X = np.linalg.solve(np.eye(n) - deltas @ A, deltas @ B)
    return D + C @ X


def _lower_lft_batch(M, loads, p, q):
    """``A + B (I - L D)^{-1} L C`` with ``L`` of shape ``(p, q)``."""
    r = M.shape[1] - q
    c = M.shape[2] - p
    A, B = M[:, :r, :c], M[:, :r, c:]
    C, D = M[:, r:, :c], M[:, r:, c:]
    if p == 0 or q == 0:
        return A.copy()
    X = np.linalg.solve(np.eye(p) - loads @ D, loads @ C)
    return A + B @ X


def sample_robust_performance(M: np.ndarray, structure: BlockStructure, n_samples: int = 10_000,
                              seed: int = 0, radius: float = 1.0) -> SampleReport:
    """Largest sampled ``||F_u(M, Delta)||`` against the strict bound 1.

    Singular loads are reported as stability violations and excluded from
    the norm; a gain within ``BOUND_TOL`` of 1 counts as a violation and sets
    ``bound_attained``.
    """
    M = np.asarray(M, dtype=float)
    N = structure.total_dim
    if M.shape[0] != M.shape[1] or M.shape[0] < N:
        raise StructureError("robust performance needs a square system over the structure")
    cores = draw_batch(structure, n_samples, seed, radius)
    deltas = assemble_batch(structure, cores)
    smin, rho, bad = _stability_scan(M[:N, :N], structure, cores, deltas)
    ok = np.array([i not in bad for i in range(n_samples)], dtype=bool)
    norms = np.zeros(n_samples)
    if ok.any():
        norms[ok] = _norms(_upper_lft_batch(M, deltas[ok], N))
    attained = ok & (norms >= 1.0 - BOUND_TOL)
    for i in np.nonzero(attained)[0]:
        bad[i] = _violation(structure, cores, i, "gain-bound", norm=float(norms[i]))
    report = SampleReport("robust-performance", n_samples, radius, seed,
                          float(smin.min()) if n_samples else np.inf,
                          float(rho.max()) if n_samples else 0.0,
                          worst_norm=float(norms[ok].max()) if ok.any() else None,
                          bound_attained=bool(attained.any()))
    return _finish(report, bad)


def closed_loop_gain_check(plant: PartitionedSystem, controller: Controller,
                           n_samples: int = 10_000, seed: int = 0,
                           radius: float = 1.0) -> SampleReport:
    """Sample coupled closed-loop loads (plant and controller copies of each
    block share one core) and evaluate the closed-loop gain two ways: the
    closed realization directly, and the controller's LFT closed around the
    plant's LFT.  ``path_discrepancy`` is the largest relative difference."""
    cl = close_loop(plant, controller)
    s_p, s_k, merged = plant.structure, controller.structure, cl.merged_structure
    n, nK = plant.n, controller.nK
    cores = draw_batch(s_p, n_samples, seed, radius)
    dp = assemble_batch(s_p, cores)
    dk = assemble_batch(s_k, cores)
    dcl = np.zeros((n_samples, n + nK, n + nK))
    dcl[:, :n, :n] = dp
    dcl[:, n:, n:] = dk
    # the merged layout of the coupled load must be a member of the merged structure
    idx = cl.permutation.index
    if not np.array_equal(dcl[:, idx][:, :, idx], assemble_batch(merged, cores)):
        raise AssertionError("coupled load does not share cores across plant and controller")

    smin, rho, bad = _stability_scan(cl.A, s_p, cores, dcl)
    # well-posedness of the two factors used by the nested evaluation
    if n:
        sp = _sigma_min(np.eye(n) - dp @ plant.A)
    else:
        sp = np.ones(n_samples)
    if nK:
        sk = _sigma_min(np.eye(nK) - dk @ controller.AK)
    else:
        sk = np.ones(n_samples)
    for i in np.nonzero(np.minimum(sp, sk) <= 1.0 / ILL_POSED_COND)[0]:
        bad.setdefault(i, _violation(s_p, cores, i, "ill-posed-factor"))
    ok = np.array([i not in bad for i in range(n_samples)], dtype=bool)

    norms = np.zeros(n_samples)
    discrepancy = 0.0
    p2, q2 = plant.p2, plant.q2
    if ok.any():
        direct = _upper_lft_batch(cl.matrix, dcl[ok], n + nK)
        G = _upper_lft_batch(plant.matrix, dp[ok], n)          # (u1,u2) -> (y1,y2)
        K = _upper_lft_batch(controller.matrix, dk[ok], nK)    # y2 -> u2
        nested = _lower_lft_batch(G, K, p2, q2)
        norms[ok] = _norms(direct)
        if direct.size:
            diff = np.abs(direct - nested).max(axis=(1, 2))
            ref = np.maximum(1.0, np.abs(direct).max(axis=(1, 2)))
            discrepancy = float((diff / ref).max())
    attained = ok & (norms >= 1.0 - BOUND_TOL)
    for i in np.nonzero(attained)[0]:
        bad[i] = _violation(s_p, cores, i, "gain-bound", norm=float(norms[i]))
    report = SampleReport("closed-loop-gain", n_samples, radius, seed,
                          float(smin.min()) if n_samples else np.inf,
                          float(rho.max()) if n_samples else 0.0,
                          worst_norm=float(norms[ok].max()) if ok.any() else None,
                          bound_attained=bool(attained.any()), path_discrepancy=discrepancy)
    return _finish(report, bad)
