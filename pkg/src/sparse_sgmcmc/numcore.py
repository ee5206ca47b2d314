"""Numerical kernels shared by the rest of the package.

Dense factorizations delegate to LAPACK through numpy; the conjugate-gradient
solver is written out because its stopping rule is part of the contract.
Random numbers come from numpy's counter-based Philox generator keyed by a
``(seed, stream_id)`` pair, so any stream can be rebuilt exactly on another
machine.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

logger = logging.getLogger(__name__)


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    """Raised by :func:`cg_solve` when the iteration cap is hit."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def is_symmetric(a: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    return bool(np.abs(a - a.T).max(initial=0.0) <= rtol * scale)


def cholesky(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is non-positive (the message says "not positive definite").
    """
    a = _as_square(a)
    if not is_symmetric(a):
        raise ValueError("matrix is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("not positive definite") from exc


def sym_eigen(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, eigenvalues in nonincreasing order.

    Column ``i`` of the returned matrix is the unit eigenvector for
    eigenvalue ``i``.
    """
    a = _as_square(a)
    if not is_symmetric(a):
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(a)
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


def sparse_system(dimension: int, rows, cols, values) -> sps.csr_matrix:
    """Assemble a symmetric sparse system from (row, col, value) triplets.

    Duplicate triplets are summed.  The pattern must be symmetric and the
    diagonal strictly positive.
    """
    mat = sps.coo_matrix((values, (rows, cols)), shape=(dimension, dimension)).tocsr()
    mat.sum_duplicates()
    if abs(mat - mat.T).max() > 1e-12 * max(abs(mat).max(), 1.0):
        raise ValueError("sparse system is not symmetric")
    if np.any(mat.diagonal() <= 0):
        raise ValueError("sparse system has a non-positive diagonal entry")
    return mat


def cg_solve(system, rhs, tol: float = 1e-10, maxiter: int | None = None) -> np.ndarray:
    """Solve an SPD system by unpreconditioned conjugate gradients.

    Stops once ``||rhs - A x||_2 <= tol * ||rhs||_2``.  The residual is
    recomputed from scratch before accepting convergence so the recursion's
    drift cannot fake a pass.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(rhs, dtype=np.float64)
    n = b.shape[0]
    if maxiter is None:
        maxiter = 10 * n + 100
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n)
    if bnorm == 0.0:
        return x
    target = tol * bnorm
    r = b.copy()
    d = r.copy()
    rr = float(r @ r)
    for it in range(1, maxiter + 1):
        ad = system @ d
        step = rr / float(d @ ad)
        x += step * d
        r -= step * ad
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= target:
            r = b - system @ x
            rr_new = float(r @ r)
            if np.sqrt(rr_new) <= target:
                return x
        d = r + (rr_new / rr) * d
        rr = rr_new
    res = float(np.linalg.norm(b - system @ x))
    raise ConvergenceError(
        f"cg did not converge in {maxiter} iterations (residual {res:.3e}, target {target:.3e})",
        residual=res,
        iterations=maxiter,
    )


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream named by ``(seed, stream_id)``.

    The Philox-4x64 key is derived from the pair through numpy's
    ``SeedSequence`` (``entropy=seed``, ``spawn_key=(stream_id,)``), which is
    a documented, platform-independent hash.  Distinct stream ids give
    independent streams.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id: int) -> RngStream:
        # stream ids are folded so children of different parents stay distinct
        return RngStream(self.seed, self.stream_id * 1_000_003 + stream_id + 1)


def draw_gaussian(stream: RngStream, n: int) -> np.ndarray:
    """First ``n`` standard normal draws of ``stream``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return stream.generator().standard_normal(n)
