"""SGLD / preconditioned SGLD updates, schedules, pruning and the bias proxy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .model import Network, ParamState

logger = logging.getLogger(__name__)

VARIANTS = ("sgld", "psgld", "sgld-sa", "psgld-sa")
GRAD_CLIP = 1e6


@dataclass(frozen=True)
class ScheduleSet:
    """Step-size sequences.

    ``eps_k = eps_c * (eps_d + k) ** -eps_gamma`` drives the sampler,
    ``omega_k = omega_c1 * (omega_c2 + k) ** -omega_gamma`` drives the latent
    variables, and the preconditioner weight is
    ``alpha_k = max(alpha_floor, 1 - omega_k)``.
    """

    eps_c: float = 0.05
    eps_d: float = 0.0
    eps_gamma: float = 1.0 / 3.0
    omega_c1: float = 100.0
    omega_c2: float = 100.0
    omega_gamma: float = 0.7
    alpha_floor: float = 0.9

    def eps(self, k):
        return self.eps_c * (self.eps_d + np.asarray(k, dtype=float)) ** -self.eps_gamma

    def omega(self, k):
        return self.omega_c1 * (self.omega_c2 + np.asarray(k, dtype=float)) ** -self.omega_gamma

    def alpha(self, k):
        return np.maximum(self.alpha_floor, 1.0 - self.omega(k))


def validate_schedules(s: ScheduleSet) -> list[str]:
    """Return every violated condition; an empty list means the set is usable."""
    out = []
    if not 0.5 < s.omega_gamma <= 1.0:
        out.append("γ_ω outside (0.5,1]")
    if not 0.0 < s.eps_gamma <= 1.0:
        out.append("γ_ε outside (0,1]")
    if not (s.eps_c > 0 and s.omega_c1 > 0):
        out.append("nonpositive constant")
    if s.eps_d < 0 or s.omega_c2 < 0:
        out.append("negative offset constant")
    if not 0.0 < s.alpha_floor < 1.0:
        out.append("α floor outside (0,1)")
    return out


@dataclass(frozen=True)
class SamplerConfig:
    variant: str = "psgld-sa"
    tau: float = 1.0
    schedules: ScheduleSet = field(default_factory=ScheduleSet)
    prune_plan: tuple = ()
    burn_in: int | None = None
    thinning: int = 10
    eta: float = 1e-3
    v_convention: str = "decay"
    freeze_preconditioner: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown sampler variant {self.variant!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.v_convention not in ("decay", "swapped"):
            raise ValueError("v_convention must be 'decay' or 'swapped'")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        rates = [float(r) for _, r in self.prune_plan]
        if any(b < a for a, b in zip(rates, rates[1:])):
            raise ValueError("prune-plan rates must be nondecreasing")
        if any(not 0 <= r < 100 for r in rates):
            raise ValueError("prune-plan rates must lie in [0, 100)")

    @property
    def preconditioned(self) -> bool:
        return self.variant.startswith("psgld")

    @property
    def adaptive(self) -> bool:
        return self.variant.endswith("-sa")


@dataclass
class PreconditionerState:
    V: np.ndarray
    k: int = 0
    eta: float = 1e-3
    initialized: bool = False
    convention: str = "decay"
    frozen: bool = False

    @classmethod
    def zeros(cls, n: int, eta: float = 1e-3, convention: str = "decay", frozen: bool = False):
        return cls(np.zeros(n), 0, eta, frozen, convention, frozen)


def update_preconditioner(state: PreconditionerState, grad, alpha_k: float) -> PreconditionerState:
    """Fold ``grad**2`` into the running second moment.

    The first call sets ``V = g*g``.  Afterwards ``V = alpha V + (1-alpha) g*g``
    (``convention="decay"``) or the swapped weights (``"swapped"``).  Gradients are
    clipped to +-1e6 for this moment only.
    """
    if state.frozen:
        return replace(state, k=state.k + 1)
    g = np.asarray(grad, dtype=float)
    if np.any(np.abs(g) > GRAD_CLIP):
        logger.info("clipping %d gradient entries before the V update", int(np.sum(np.abs(g) > GRAD_CLIP)))
        g = np.clip(g, -GRAD_CLIP, GRAD_CLIP)
    g2 = g * g
    if not state.initialized:
        V = g2
    elif state.convention == "decay":
        V = alpha_k * state.V + (1.0 - alpha_k) * g2
    else:
        V = (1.0 - alpha_k) * state.V + alpha_k * g2
    return PreconditionerState(V, state.k + 1, state.eta, True, state.convention, False)


def precondition(state: PreconditionerState) -> np.ndarray:
    return 1.0 / (state.eta + np.sqrt(state.V))


def _finite_or_abort(beta, k):
    if not np.all(np.isfinite(beta)):
        raise FloatingPointError(f"non-finite parameters at iteration {k}")


def step_sgld(params: ParamState, grad, eps_k: float, tau: float, noise, k: int | None = None) -> ParamState:
    """``beta + eps*grad + sqrt(2 eps / tau) * noise``, then re-mask."""
    if not (eps_k > 0 and tau > 0):
        raise ValueError("eps_k and tau must be positive")
    drift = eps_k * grad
    beta = params.beta + drift + np.sqrt(2.0 * eps_k / tau) * noise
    _finite_or_abort(beta, k)
    return ParamState(beta, params.pruned.copy()).apply_mask()


def step_psgld(
    params: ParamState,
    grad,
    state: PreconditionerState,
    eps_k: float,
    tau: float,
    noise,
    alpha_k: float,
    k: int | None = None,
) -> tuple[ParamState, PreconditionerState]:
    """Preconditioned step; ``G`` comes from the freshly updated moment."""
    if not (eps_k > 0 and tau > 0):
        raise ValueError("eps_k and tau must be positive")
    state = update_preconditioner(state, grad, alpha_k)
    G = precondition(state)
    drift = eps_k * (G * grad)
    beta = params.beta + drift + np.sqrt(2.0 * eps_k / tau) * (np.sqrt(G) * noise)
    _finite_or_abort(beta, k)
    return ParamState(beta, params.pruned.copy()).apply_mask(), state


def prune(params: ParamState, net: Network, s_percent: float) -> ParamState:
    """Mask the ``ceil(s% * n_sparse)`` smallest-magnitude sparse weights.

    Rounding up keeps the achieved rate at or above ``s%``.

    Already-pruned weights are ranked first and stay pruned; ties in magnitude
    go to the lower flat index.
    """
    if not 0 <= s_percent < 100:
        raise ValueError("s_percent must lie in [0, 100)")
    out = params.copy()
    idx = net.sparse_index
    # absorbs float error such as 0.07 * 100 = 7.000000000000001
    n_cut = int(np.ceil(s_percent / 100.0 * idx.size - 1e-9))
    if n_cut == 0:
        return out
    mag = np.abs(params.beta[idx])
    order = np.lexsort((idx, mag, ~params.pruned[idx]))
    out.pruned[idx[order[:n_cut]]] = True
    return out.apply_mask()


def sparse_rate(params: ParamState, net: Network) -> float:
    if net.n_sparse == 0:
        return 0.0
    return float(np.mean(params.pruned[net.sparse_index]))


@dataclass(frozen=True)
class BiasProxy:
    total: float
    last_gap: float
    ratio: float


def bias_proxy(schedules: ScheduleSet, K: int) -> BiasProxy:
    """Partial sum of ``(1 - alpha_k) / alpha_floor**1.5`` for ``k <= K``.

    Also reports the final gap ``1 - alpha_K`` and the running mean
    ``total / K``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    gaps = 1.0 - schedules.alpha(np.arange(1, K + 1))
    total = float(np.sum(gaps) / schedules.alpha_floor**1.5)
    return BiasProxy(total, float(gaps[-1]), total / K)
