"""Correlated-design linear regression data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import RngStream, cholesky


@dataclass
class RegressionDataset:
    X: np.ndarray
    y: np.ndarray
    beta_true: np.ndarray
    noise_sd: float
    col_scales: np.ndarray
    seed: int
    stream_id: int


def correlation_matrix(p: int, corr_base: float) -> np.ndarray:
    """Toeplitz matrix with entries ``corr_base ** |i - j|``."""
    lag = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return corr_base ** lag.astype(float)


def gen_regression(
    n: int,
    p: int,
    corr_base: float,
    beta_true,
    noise_var: float,
    col_scales=None,
    stream: RngStream | None = None,
) -> RegressionDataset:
    """Draw ``n`` rows of ``X ~ N_p(0, Sigma)``, rescale columns, add noise.

    Rows are ``z @ L.T`` with ``L`` the Cholesky factor of ``Sigma``; the noise
    is drawn after ``X`` from the same stream.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    if not abs(corr_base) < 1:
        raise ValueError("|corr_base| must be < 1")
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    beta_true = np.asarray(beta_true, dtype=float)
    if beta_true.shape != (p,):
        raise ValueError(f"beta_true must have length {p}")
    scales = np.ones(p) if col_scales is None else np.asarray(col_scales, dtype=float)
    stream = stream or RngStream(0)
    rng = stream.generator()
    L = cholesky(correlation_matrix(p, corr_base))
    X = rng.standard_normal((n, p)) @ L.T
    X *= scales
    y = X @ beta_true + np.sqrt(noise_var) * rng.standard_normal(n)
    return RegressionDataset(X, y, beta_true, float(np.sqrt(noise_var)), scales, stream.seed, stream.stream_id)
