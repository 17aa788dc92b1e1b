"""Per-request carbon footprint model.

Inference-phase carbon (GPU operational + amortized embodied), wireless
communication carbon (transmit + base-station fixed + embodied), their
outage-conditioned averages, the QoE curve, and the energy proxy.

Internally everything is SI: seconds, watts, hertz, bits, gCO2, and gCO2 per
joule. kWh-based intensities, kg embodied values, and year lifespans are
converted once at configuration load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import channel as ch
from .numerics import QuadratureSpec

JOULES_PER_KWH = 3.6e6
SECONDS_PER_YEAR = 365.0 * 86400.0


@dataclass(frozen=True)
class InferenceProfile:
    """Data-center constants; times in seconds, powers in watts, carbon in gCO2."""

    n_gpu: int = 8
    p_gpu: float = 428.0  # thermal design power per GPU [W]
    pue: float = 1.58
    psi_oi: float = 0.35e12  # FLOP per inference operation
    psi_iw: float = 5.0  # inference operations per output word
    omega_pf: float = 156e12  # peak FLOP/s per GPU
    alpha: float = 0.8  # acceleration exponent
    c_gpu_emb: float = 318e3  # embodied gCO2 per GPU
    t_dc: float = 3.0 * SECONDS_PER_YEAR  # data-center lifespan [s]

    def __post_init__(self):
        for name in ("n_gpu", "p_gpu", "pue", "psi_oi", "psi_iw", "omega_pf", "c_gpu_emb", "t_dc"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")

    @property
    def gpu_seconds_per_word(self) -> float:
        """Single-GPU time to emit one output word [s/word]."""
        return self.psi_oi * self.psi_iw / self.omega_pf


@dataclass(frozen=True)
class CommProfile:
    """Base-station constants; throughput in bits/s, carbon in gCO2."""

    beta: float = 50.0  # bits per output word
    p_fixed: float = 600.0  # BBU + cooling power [W]
    k_rate: float = 1000e6  # total BS throughput [bits/s]
    t_bs: float = 10.0 * SECONDS_PER_YEAR  # BS lifespan [s]
    c_bs_emb: float = 6500e3  # total BS embodied carbon [gCO2]

    def __post_init__(self):
        for name in ("beta", "p_fixed", "k_rate", "t_bs", "c_bs_emb"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CarbonIntensities:
    """Grid carbon intensities stored per joule."""

    zeta1: float  # data-center grid [gCO2/J]
    zeta2: float  # BS-local grid [gCO2/J]

    def __post_init__(self):
        if not (self.zeta1 > 0.0 and self.zeta2 > 0.0):
            raise ValueError("carbon intensities must be positive")

    @classmethod
    def from_kwh(cls, zeta1_kwh: float, zeta2_kwh: float) -> "CarbonIntensities":
        """Accepts boundary values in gCO2/kWh."""
        return cls(zeta1_kwh / JOULES_PER_KWH, zeta2_kwh / JOULES_PER_KWH)


@dataclass(frozen=True)
class QoEModel:
    """Unimodal QoE score of output word count: zero at zero, peak at a*b."""

    a: float = 2.0  # shape exponent
    b: float = 40.0  # scale [words]
    q_max: float = 10.0  # peak score

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0 and self.q_max > 0.0):
            raise ValueError("QoE parameters must be positive")


@dataclass(frozen=True)
class ConstraintSet:
    """Bounds of the per-request optimization problem."""

    q_th: float = 7.0  # minimum QoE score
    e_th: float = 1600.0  # energy budget [abstract units]
    rho1: float = 1.0  # energy per word
    rho2: float = 10.0  # energy per transmit watt
    t_infer_th: float = 0.3  # inference time limit [s]
    t_trans_th: float = 0.5e-3  # average transmission time limit [s]
    p_trans_max: float = 60.0  # transmit power cap [W]

    def __post_init__(self):
        for name in ("q_th", "e_th", "rho1", "rho2", "t_infer_th", "t_trans_th", "p_trans_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def inference_time(profile: InferenceProfile, kappa: float) -> float:
    """GPU wall time to generate kappa output words [s]."""
    if kappa < 0.0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    return profile.gpu_seconds_per_word / profile.n_gpu * kappa**profile.alpha


def inference_carbon(profile: InferenceProfile, zeta1: float, kappa: float) -> float:
    """Inference-phase carbon [gCO2]: operational plus amortized embodied."""
    if kappa < 0.0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    w = kappa**profile.alpha * profile.gpu_seconds_per_word
    return w * (profile.p_gpu * profile.pue * zeta1 + profile.c_gpu_emb / profile.t_dc)


def trans_time(comm: CommProfile, channel: ch.ChannelParams, kappa: float, gamma: float) -> float:
    """Shannon-capacity transmission time for kappa words at SNR gamma [s]."""
    if kappa < 0.0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return kappa * comm.beta / (channel.bandwidth * math.log2(1.0 + gamma))


def comm_carbon_fixed_rate(comm: CommProfile, zeta2: float) -> float:
    """Gamma-independent communication carbon per transmitted bit-second share.

    Equals (zeta2 * P_fixed * T_BS + C_BS_emb) / (K * T_BS) in gCO2 per
    (bit/K)-unit; multiply by kappa * beta to get the per-request fixed term.
    """
    return (zeta2 * comm.p_fixed * comm.t_bs + comm.c_bs_emb) / (comm.k_rate * comm.t_bs)


def comm_carbon_instant(
    comm: CommProfile,
    channel: ch.ChannelParams,
    zeta2: float,
    kappa: float,
    p_trans: float,
    gamma: float,
) -> float:
    """Instantaneous communication carbon at SNR gamma [gCO2]."""
    if p_trans <= 0.0:
        raise ValueError(f"p_trans must be positive, got {p_trans}")
    transmit = zeta2 * p_trans * trans_time(comm, channel, kappa, gamma)
    return transmit + kappa * comm.beta * comm_carbon_fixed_rate(comm, zeta2)


def avg_trans_time(
    comm: CommProfile,
    channel: ch.ChannelParams,
    budget: ch.LinkBudget,
    kappa: float,
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Outage-conditioned average transmission time [s]."""
    if kappa < 0.0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    if kappa == 0.0:
        return 0.0
    j = ch.expected_inv_log2_capacity(channel, budget, spec)
    return kappa * comm.beta / channel.bandwidth * j


def avg_comm_carbon(
    comm: CommProfile,
    channel: ch.ChannelParams,
    budget: ch.LinkBudget,
    zeta2: float,
    kappa: float,
    p_trans: float,
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Outage-conditioned average communication carbon [gCO2].

    The gamma-independent term carries the 1/(1-eps) factor of the outage
    convention (see decisions ledger for the estimator this implies).
    """
    transmit = zeta2 * p_trans * avg_trans_time(comm, channel, budget, kappa, spec)
    fixed = kappa * comm.beta * comm_carbon_fixed_rate(comm, zeta2) / (1.0 - budget.epsilon)
    return transmit + fixed


def qoe(model: QoEModel, kappa: float) -> float:
    """QoE score in [0, q_max]; zero at zero, peak q_max at kappa = a*b."""
    if kappa < 0.0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    if kappa == 0.0:
        return 0.0
    peak = model.a * model.b
    return model.q_max * (kappa / peak) ** model.a * math.exp(model.a - kappa / model.b)


def energy_proxy(constraints: ConstraintSet, kappa: float, p_trans: float) -> float:
    """Linear energy proxy rho1 * kappa + rho2 * P_trans."""
    return constraints.rho1 * kappa + constraints.rho2 * p_trans
