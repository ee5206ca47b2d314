"""Karhunen-Loeve expansion of a squared-exponential log-permeability field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import sym_eigen


@dataclass
class KLEBasis:
    """Leading eigenpairs of the covariance matrix on an ``m x m`` cell grid.

    ``modes`` has shape ``(p, m*m)``; each row is a unit vector under the plain
    sum-over-cells inner product, and ``eigenvalues`` are those of the cell
    covariance matrix itself (so they sum to ``m*m*sigma_cov`` over all modes).
    Cells are ordered row-major with ``y`` as the row index.
    """

    m: int
    eigenvalues: np.ndarray
    modes: np.ndarray
    l_x: float
    l_y: float
    sigma_cov: float
    kappa0: float = 0.0
    all_eigenvalues: np.ndarray | None = None

    @property
    def p(self) -> int:
        return len(self.eigenvalues)

    def pointwise_variance(self) -> np.ndarray:
        return (self.eigenvalues[:, None] * self.modes**2).sum(axis=0)


def cell_centers(m: int) -> tuple[np.ndarray, np.ndarray]:
    c = (np.arange(m) + 0.5) / m
    yy, xx = np.meshgrid(c, c, indexing="ij")
    return xx.ravel(), yy.ravel()


def covariance_matrix(m: int, l_x: float, l_y: float, sigma_cov: float) -> np.ndarray:
    x, y = cell_centers(m)
    dx = np.subtract.outer(x, x)
    dy = np.subtract.outer(y, y)
    return sigma_cov * np.exp(-(dx**2) / l_x**2 - dy**2 / l_y**2)


def kle_build(
    m: int,
    l_x: float = 0.2,
    l_y: float = 0.3,
    sigma_cov: float = 2.0,
    p_modes: int = 16,
    kappa0: float = 0.0,
) -> KLEBasis:
    if m < 1:
        raise ValueError("grid size must be >= 1")
    if not 1 <= p_modes <= m * m:
        raise ValueError(f"p_modes must lie in [1, {m * m}]")
    vals, vecs = sym_eigen(covariance_matrix(m, l_x, l_y, sigma_cov))
    vals = np.where(vals < 0, 0.0, vals)
    n_pos = int(np.sum(vals > 0))
    if p_modes > n_pos:
        raise ValueError(f"p_modes={p_modes} exceeds the {n_pos} positive eigenvalues")
    modes = vecs[:, :p_modes].T.copy()
    # fix the sign of each mode for reproducibility across LAPACK builds
    pivot = np.argmax(np.abs(modes), axis=1)
    modes *= np.sign(modes[np.arange(p_modes), pivot])[:, None]
    return KLEBasis(m, vals[:p_modes].copy(), modes, l_x, l_y, sigma_cov, kappa0, vals)


def log_field(basis: KLEBasis, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape[-1] != basis.p:
        raise ValueError(f"mu must have length {basis.p}")
    return basis.kappa0 + (mu * np.sqrt(basis.eigenvalues)) @ basis.modes


def sample_permeability(basis: KLEBasis, mu, mode: str = "lognormal", kappa_min: float = 1e-3) -> np.ndarray:
    """Permeability on the ``m x m`` grid for KLE coefficients ``mu``.

    ``mode="lognormal"`` exponentiates the expansion; ``"clamped"`` uses it
    directly, floored at ``kappa_min``.
    """
    g = log_field(basis, mu)
    if mode == "lognormal":
        k = np.exp(g)
    elif mode == "clamped":
        k = np.maximum(g, kappa_min)
    else:
        raise ValueError(f"unknown permeability mode {mode!r}")
    return k.reshape(g.shape[:-1] + (basis.m, basis.m))
