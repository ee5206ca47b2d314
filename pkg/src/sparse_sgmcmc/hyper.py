"""Stochastic-approximation updates for the spike-and-slab latent variables.

Per sparse weight ``j`` the state keeps ``rho_j`` (probability of the narrow
Gaussian component), ``kappa0_j`` and ``kappa1_j`` (smoothed expected inverse
scale factors of the Laplace and Gaussian components).  ``sigma`` is the noise
standard deviation and ``delta`` holds one mixture weight per sparse layer.
Each update moves every quantity a step ``omega`` toward its EMVS-style target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import Network, ParamState

DELTA_CLIP = 1e-8


@dataclass(frozen=True)
class PriorConfig:
    """Prior constants.

    ``v0`` scales the Laplace component, ``v1`` the Gaussian component, ``a``/``b``
    parameterize the Beta prior on ``delta``, ``nu``/``lam`` the inverse-gamma
    prior on ``sigma**2``, and ``sigma0`` is the std of the dense-layer Gaussian
    prior.  ``kappa1_squared`` switches the sigma quadratic to the literal
    ``||kappa1 * beta||_2^2`` penalty instead of ``sum(kappa1 * beta**2)``.
    """

    v0: float = 10.0
    v1: float = 0.1
    a: float = 1.0
    b: float = 1.0
    nu: float = 1.0
    lam: float = 1.0
    sigma0: float = 1.0
    kappa1_squared: bool = False

    def __post_init__(self):
        for name in ("v0", "v1", "a", "b", "nu", "lam", "sigma0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"prior constant {name} must be positive")


@dataclass
class HyperState:
    rho: np.ndarray
    kappa0: np.ndarray
    kappa1: np.ndarray
    sigma: float
    delta: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "rho": self.rho.tolist(),
                "kappa0": self.kappa0.tolist(),
                "kappa1": self.kappa1.tolist(),
                "sigma": self.sigma,
                "delta": self.delta.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> HyperState:
        d = json.loads(text)
        return cls(
            np.asarray(d["rho"], dtype=float),
            np.asarray(d["kappa0"], dtype=float),
            np.asarray(d["kappa1"], dtype=float),
            float(d["sigma"]),
            np.asarray(d["delta"], dtype=float),
        )

    def copy(self) -> HyperState:
        return HyperState(self.rho.copy(), self.kappa0.copy(), self.kappa1.copy(), self.sigma, self.delta.copy())

    def violations(self, prior: PriorConfig) -> list[str]:
        """Names of the range invariants this state breaks (empty when valid)."""
        out = []
        if np.any(self.rho < 0) or np.any(self.rho > 1):
            out.append("rho outside [0,1]")
        if np.any(self.kappa0 < 0) or np.any(self.kappa0 > 1 / prior.v0):
            out.append("kappa0 outside [0,1/v0]")
        if np.any(self.kappa1 < 0) or np.any(self.kappa1 > 1 / prior.v1):
            out.append("kappa1 outside [0,1/v1]")
        if not self.sigma > 0:
            out.append("sigma not positive")
        if np.any(self.delta <= 0) or np.any(self.delta >= 1):
            out.append("delta outside (0,1)")
        return out


def init_hyper(net: Network, prior: PriorConfig, delta0: float = 0.5, sigma_init: float = 1.0) -> HyperState:
    """Start with rho = delta0 everywhere and kappas at their implied targets."""
    rho = np.full(net.n_sparse, delta0)
    return HyperState(
        rho=rho,
        kappa0=(1 - rho) / prior.v0,
        kappa1=rho / prior.v1,
        sigma=float(sigma_init),
        delta=np.full(len(net.sparse_groups), delta0),
    )


@dataclass(frozen=True)
class SmoothingStep:
    raw: float

    def __post_init__(self):
        if not self.raw >= 0:
            raise ValueError("smoothing step must be nonnegative")

    @property
    def clamped(self) -> float:
        return min(self.raw, 1.0)


def _clamped(omega) -> float:
    return omega.clamped if isinstance(omega, SmoothingStep) else min(float(omega), 1.0)


def log_responsibilities(beta, sigma, delta, prior: PriorConfig):
    """Log of the unnormalized component weights ``(log a, log b)``."""
    beta = np.asarray(beta, dtype=float)
    with np.errstate(divide="ignore"):
        log_d, log_1md = np.log(delta), np.log1p(-np.asarray(delta, dtype=float))
    var1 = sigma**2 * prior.v1
    log_a = log_d - 0.5 * np.log(2 * np.pi * var1) - beta**2 / (2 * var1)
    scale0 = sigma * prior.v0
    log_b = log_1md - np.log(2 * scale0) - np.abs(beta) / scale0
    return log_a, log_b


def responsibilities(beta, sigma: float, delta, prior: PriorConfig):
    """Slab weight ``a``, spike weight ``b`` and ``rho_target = a / (a + b)``.

    The target is computed in log space so that it stays accurate when both
    densities underflow.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    log_a, log_b = log_responsibilities(beta, sigma, delta, prior)
    log_norm = logsumexp(np.stack(np.broadcast_arrays(log_a, log_b)), axis=0)
    rho_target = np.exp(log_a - log_norm)
    return np.exp(log_a), np.exp(log_b), np.clip(rho_target, 0.0, 1.0)


def sa_smooth(old, target, omega):
    w = _clamped(omega)
    return (1.0 - w) * old + w * target


def sigma_root(A: float, B: float, C: float) -> float:
    """Positive root of ``A s^2 + B s - C = 0`` (cancellation-free form)."""
    if not (A > 0 and C > 0 and B >= 0):
        raise ValueError("sigma_root needs A > 0, B >= 0, C > 0")
    return 2.0 * C / (B + np.sqrt(B * B + 4.0 * A * C))


def sigma_coefficients(beta_sparse, kappa0, kappa1, residual_ss, n_data, prior: PriorConfig):
    A = n_data + beta_sparse.size + prior.nu
    B = float(np.sum(kappa0 * np.abs(beta_sparse)))
    if prior.kappa1_squared:
        pen = float(np.sum((kappa1 * beta_sparse) ** 2))
    else:
        pen = float(np.sum(kappa1 * beta_sparse**2))
    C = residual_ss + pen + prior.nu * prior.lam
    return A, B, C


def update_hyper(
    state: HyperState,
    params: ParamState,
    net: Network,
    batch_residual_ss: float,
    omega,
    prior: PriorConfig,
    n_data: int,
) -> HyperState:
    """One stochastic-approximation sweep.

    ``batch_residual_ss`` must already carry the ``N/n`` minibatch scaling and be
    evaluated at the current ``params``.  Quantities are refreshed in order
    rho, kappa0/kappa1, sigma, delta; later ones use the fresh earlier ones.
    """
    w = _clamped(omega)
    bs = params.beta[net.sparse_index]
    delta_per = np.empty(net.n_sparse)
    for li, grp in enumerate(net.sparse_groups):
        delta_per[grp] = state.delta[li]
    _, _, target = responsibilities(bs, state.sigma, delta_per, prior)
    rho = sa_smooth(state.rho, target, w)
    kappa0 = sa_smooth(state.kappa0, (1.0 - rho) / prior.v0, w)
    kappa1 = sa_smooth(state.kappa1, rho / prior.v1, w)
    A, B, C = sigma_coefficients(bs, kappa0, kappa1, batch_residual_ss, n_data, prior)
    sigma = float(sa_smooth(state.sigma, sigma_root(A, B, C), w))
    delta = np.empty_like(state.delta)
    for li, grp in enumerate(net.sparse_groups):
        tgt = (rho[grp].sum() + prior.a - 1.0) / (prior.a + prior.b + grp.size - 2.0)
        tgt = min(max(tgt, DELTA_CLIP), 1.0 - DELTA_CLIP)
        delta[li] = sa_smooth(state.delta[li], tgt, w)
    # convex combinations can overshoot [0, 1] by an ulp
    rho = np.clip(rho, 0.0, 1.0)
    kappa0 = np.clip(kappa0, 0.0, 1.0 / prior.v0)
    kappa1 = np.clip(kappa1, 0.0, 1.0 / prior.v1)
    return HyperState(rho, kappa0, kappa1, sigma, delta)

