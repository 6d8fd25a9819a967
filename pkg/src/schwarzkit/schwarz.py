"""One- and two-level additive Schwarz preconditioners, PCG with a Lanczos
condition estimate, and a dense brute-force condition oracle for tiny
problems."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .coarse_spaces import CoarseSpace
from .decomposition import OverlappingSets
from .sparse_core import (
    CholeskyFactor,
    NotSPDError,
    SparseMatrix,
    StructuralError,
    cholesky_factor,
    extract_submatrix,
)

__all__ = [
    "Preconditioner",
    "SolveReport",
    "build",
    "apply_preconditioner",
    "pcg",
    "dense_condition_oracle",
]


@dataclass(frozen=True)
class Preconditioner:
    """Additive Schwarz preconditioner with optional exact coarse solve."""

    n: int
    local_sets: tuple
    local_factors: tuple
    e0: sp.csr_matrix = None
    coarse_factor: CholeskyFactor = None
    coarse_dims: tuple = None      # (pre-POD, post-POD) when a coarse space is set

    def apply(self, r: np.ndarray) -> np.ndarray:
        return apply_preconditioner(self, r)

    @property
    def two_level(self) -> bool:
        return self.e0 is not None


def build(A: SparseMatrix, overlapping: OverlappingSets,
          coarse: CoarseSpace = None) -> Preconditioner:
    """Factorize the overlapping subdomain blocks and the coarse matrix.

    Raises :class:`NotSPDError` naming the offending subdomain when a local
    block is not SPD.
    """
    factors = []
    for i, idx in enumerate(overlapping.sets):
        block = extract_submatrix(A, idx, idx)
        try:
            factors.append(cholesky_factor(block))
        except NotSPDError as err:
            raise NotSPDError(f"subdomain {i} block is not SPD: {err}",
                              pivot=err.pivot) from err
    e0 = None
    coarse_factor = None
    coarse_dims = None
    if coarse is not None:
        e0 = coarse.e0
        a0 = (e0.T @ (A.tocsr() @ e0)).toarray()
        a0 = 0.5 * (a0 + a0.T)
        try:
            coarse_factor = cholesky_factor(a0)
        except NotSPDError as err:
            raise NotSPDError(f"coarse matrix is not SPD: {err}",
                              pivot=err.pivot) from err
        coarse_dims = (coarse.dim_pre_pod, coarse.dim_post_pod)
    return Preconditioner(A.n_rows, tuple(overlapping.sets), tuple(factors),
                          e0, coarse_factor, coarse_dims)


def apply_preconditioner(M: Preconditioner, r: np.ndarray) -> np.ndarray:
    """z = sum_i E_i A_i^-1 R_i r  (+ E0 A0^-1 E0^T r for two levels)."""
    r = np.asarray(r, dtype=float)
    if r.shape[0] != M.n:
        raise StructuralError("dimension mismatch in preconditioner apply")
    z = np.zeros_like(r)
    for idx, factor in zip(M.local_sets, M.local_factors):
        z[idx.indices] += factor.solve(r[idx.indices])
    if M.e0 is not None:
        z += M.e0 @ M.coarse_factor.solve(M.e0.T @ r)
    return z


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a PCG solve."""

    iterations: int
    kappa_estimate: float
    residual_history: np.ndarray
    converged: bool
    coarse_dim_pre_pod: int = 0
    coarse_dim_post_pod: int = 0
    wall_times: dict = field(default_factory=dict)

    def summary(self) -> str:
        lines = [
            f"iterations {self.iterations}",
            f"kappa_estimate {self.kappa_estimate:.6g}",
            f"converged {self.converged}",
            f"coarse_dim_pre_pod {self.coarse_dim_pre_pod}",
            f"coarse_dim_post_pod {self.coarse_dim_post_pod}",
        ]
        for phase, seconds in self.wall_times.items():
            lines.append(f"time_{phase} {seconds:.6g}")
        return "\n".join(lines)


def pcg(A: SparseMatrix, b: np.ndarray, M: Preconditioner,
        rel_tol: float = 1.0e-10, max_it: int = 2000):
    """Preconditioned conjugate gradients with Lanczos condition estimate.

    Stops once ||M^-1 r_k|| / ||M^-1 r_0|| < rel_tol.  The condition number
    estimate is taken from the eigenvalue extremes of the tridiagonal
    matrix built from the CG recurrence coefficients.
    """
    t0 = time.perf_counter()
    A_csr = A.tocsr()
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    z = M.apply(r)
    delta = float(r @ z)
    z0_norm = np.linalg.norm(z)
    history = [max(z0_norm, np.finfo(float).tiny)]
    alphas, betas = [], []
    converged = z0_norm == 0.0
    iterations = 0
    p = z.copy()
    while not converged and iterations < max_it:
        q = A_csr @ p
        alpha = delta / float(p @ q)
        alphas.append(alpha)
        x += alpha * p
        r -= alpha * q
        z = M.apply(r)
        delta_new = float(r @ z)
        z_norm = np.linalg.norm(z)
        history.append(max(z_norm, np.finfo(float).tiny))
        iterations += 1
        if z_norm / z0_norm < rel_tol:
            converged = True
            break
        beta = delta_new / delta
        betas.append(beta)
        p = z + beta * p
        delta = delta_new
    kappa = _lanczos_kappa(alphas, betas[: max(len(alphas) - 1, 0)])
    dims = M.coarse_dims or (0, 0)
    report = SolveReport(
        iterations=iterations,
        kappa_estimate=kappa,
        residual_history=np.asarray(history),
        converged=converged,
        coarse_dim_pre_pod=dims[0],
        coarse_dim_post_pod=dims[1],
        wall_times={"solve": time.perf_counter() - t0},
    )
    return x, report


def _lanczos_kappa(alphas, betas) -> float:
    """Condition estimate from the CG-coefficient tridiagonal matrix."""
    m = len(alphas)
    if m == 0:
        return 1.0
    diag = np.empty(m)
    diag[0] = 1.0 / alphas[0]
    for k in range(1, m):
        diag[k] = 1.0 / alphas[k] + betas[k - 1] / alphas[k - 1]
    off = np.array([np.sqrt(betas[k]) / alphas[k] for k in range(m - 1)])
    if m == 1:
        return 1.0
    ev = sla.eigh_tridiagonal(diag, off, eigvals_only=True)
    lo, hi = float(ev[0]), float(ev[-1])
    if lo <= 0:
        return np.inf
    return hi / lo


def dense_condition_oracle(A: SparseMatrix, M: Preconditioner,
                           size_guard: int = 2500) -> float:
    """Exact condition number of the preconditioned operator.

    Forms M^-1 densely column by column and returns lambda_max/lambda_min of
    the symmetric pencil; only meant for tiny validation problems.
    """
    n = A.n_rows
    if n > size_guard:
        raise StructuralError(f"oracle size guard exceeded ({n} > {size_guard})")
    eye = np.eye(n)
    minv = np.column_stack([M.apply(eye[:, j]) for j in range(n)])
    minv = 0.5 * (minv + minv.T)
    L = np.linalg.cholesky(minv)
    C = L.T @ A.todense() @ L
    C = 0.5 * (C + C.T)
    ev = np.linalg.eigvalsh(C)
    return float(ev[-1] / ev[0])
