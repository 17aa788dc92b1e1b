"""Nakagami-m fading SNR model with outage.

The instantaneous SNR gamma = P_trans * X / sigma^2 with X the channel power
gain is Gamma-distributed with shape m and scale Omega * P_trans / (m sigma^2).
Transmission is abandoned below gamma_th, chosen so the outage probability
equals the design threshold epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .numerics import QuadratureSpec


@dataclass(frozen=True)
class ChannelParams:
    """Fading shape m, spread Omega, noise variance (W), bandwidth (Hz)."""

    m: float
    omega: float
    noise_var: float = 1.0
    bandwidth: float = 20e6

    def __post_init__(self):
        if not self.m >= 0.5:
            raise ValueError(f"Nakagami shape m must be >= 0.5, got {self.m}")
        if not self.omega > 0.0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.noise_var > 0.0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        if not self.bandwidth > 0.0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class LinkBudget:
    """Transmit power (W) with its outage design point (epsilon, gamma_th)."""

    p_trans: float
    epsilon: float
    gamma_th: float

    def __post_init__(self):
        if not self.p_trans > 0.0:
            raise ValueError(f"p_trans must be positive, got {self.p_trans}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not self.gamma_th > 0.0:
            raise ValueError(f"gamma_th must be positive, got {self.gamma_th}")

    def check_consistent(self, params: ChannelParams, tol: float = 1e-9) -> None:
        """Assert the Eq.-coupling F(gamma_th) = epsilon to within tol."""
        err = abs(snr_cdf(params, self.p_trans, self.gamma_th) - self.epsilon)
        if err > tol:
            raise ValueError(f"gamma_th inconsistent with epsilon (|F - eps| = {err:.3e})")


def snr_scale(params: ChannelParams, p_trans: float) -> float:
    """Gamma scale of the SNR: Omega * P / (m * sigma^2)."""
    return params.omega * p_trans / (params.m * params.noise_var)


def snr_pdf(params: ChannelParams, p_trans: float, gamma: float) -> float:
    """Density of the instantaneous SNR at gamma >= 0."""
    if gamma < 0.0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    m = params.m
    theta = snr_scale(params, p_trans)
    if gamma == 0.0:
        if m > 1.0:
            return 0.0
        if m == 1.0:
            return 1.0 / theta
        return math.inf
    logw = (m - 1.0) * math.log(gamma) - gamma / theta - math.lgamma(m) - m * math.log(theta)
    return math.exp(logw)


def snr_cdf(params: ChannelParams, p_trans: float, gamma: float) -> float:
    """F(gamma) = 1 - Q(m, m sigma^2 gamma / (Omega P))."""
    if gamma < 0.0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    return 1.0 - numerics.reg_upper_gamma(params.m, gamma / snr_scale(params, p_trans))


def outage_probability(params: ChannelParams, budget: LinkBudget) -> float:
    """Probability the instantaneous SNR falls below gamma_th."""
    return snr_cdf(params, budget.p_trans, budget.gamma_th)


def solve_gamma_th(params: ChannelParams, p_trans: float, epsilon: float) -> float:
    """Invert the outage coupling: gamma_th with F(gamma_th) = epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    u = numerics.inv_reg_upper_gamma(params.m, 1.0 - epsilon)
    return u * snr_scale(params, p_trans)


def make_link_budget(params: ChannelParams, p_trans: float, epsilon: float) -> LinkBudget:
    """LinkBudget with gamma_th solved from (epsilon, p_trans)."""
    return LinkBudget(p_trans, epsilon, solve_gamma_th(params, p_trans, epsilon))


def sample_snr(params: ChannelParams, p_trans: float, rng: np.random.Generator) -> float:
    """Unconditional SNR draw: P * X / sigma^2 with X ~ Gamma(m, Omega/m)."""
    x = rng.gamma(params.m, params.omega / params.m)
    return p_trans * x / params.noise_var


def sample_snr_conditional(
    params: ChannelParams, budget: LinkBudget, rng: np.random.Generator
) -> float:
    """SNR draw conditioned on gamma >= gamma_th (rejection against the prior)."""
    while True:
        gamma = sample_snr(params, budget.p_trans, rng)
        if gamma >= budget.gamma_th:
            return gamma


def sample_snr_conditional_batch(
    params: ChannelParams, budget: LinkBudget, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized conditional SNR draws (Monte-Carlo oracle helper)."""
    scale = snr_scale(params, budget.p_trans)
    out = np.empty(0)
    # acceptance is 1 - epsilon, so oversample modestly per round
    per_round = max(int(size / max(1.0 - budget.epsilon, 1e-12) * 1.1), 1024)
    while out.size < size:
        gammas = rng.gamma(params.m, scale, size=per_round)
        out = np.concatenate([out, gammas[gammas >= budget.gamma_th]])
    return out[:size]


def conditional_expectation(
    params: ChannelParams,
    budget: LinkBudget,
    g,
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Outage-conditioned expectation (1/(1-eps)) * int_{gamma_th}^inf g f dgamma.

    ``g`` must accept numpy arrays elementwise and grow at most polynomially.
    """
    m = params.m
    theta = snr_scale(params, budget.p_trans)
    log_norm = math.lgamma(m) + m * math.log(theta)

    def integrand(x):
        logw = (m - 1.0) * np.log(x) - x / theta - log_norm
        return np.asarray(g(x), dtype=float) * np.exp(logw)

    tail = numerics.integrate_semi_infinite(integrand, budget.gamma_th, spec)
    return tail / (1.0 - budget.epsilon)


def expected_inv_log2_capacity(
    params: ChannelParams, budget: LinkBudget, spec: QuadratureSpec = QuadratureSpec()
) -> float:
    """Fast path for E[1 / log2(1 + gamma) | gamma >= gamma_th]."""
    theta = snr_scale(params, budget.p_trans)
    tail = numerics.gamma_tail_expectation(
        numerics.KIND_INV_LOG2, params.m, theta, budget.gamma_th, spec
    )
    return tail / (1.0 - budget.epsilon)
