"""The decision environment: state sampling, constraint evaluation, reward.

One step: observe channel/grid conditions, pick an output word count and a
transmit power, receive the negated total carbon (milligrams) as reward, or
the -100 penalty when any constraint is violated. Next states are sampled
i.i.d.; episodes only structure the step counter. A brute-force grid oracle
over the action box provides per-state optima for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _backend
from .carbon import CommProfile, ConstraintSet, InferenceProfile, QoEModel
from .numerics import (
    ConvergenceError,
    QuadratureSpec,
    _gamma_tail_jit,
    _gamma_tail_raw,
    _inv_q_gamma_jit,
    _inv_q_gamma_raw,
)

PENALTY_REWARD = -100.0

CONSTRAINT_IDS = ("qoe", "energy", "t_infer", "t_trans", "p_max")


@dataclass(frozen=True)
class Range:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"range must have lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class StateRanges:
    """Sampling box for the five state components."""

    m: Range = Range(2.0, 12.0)
    omega: Range = Range(0.1, 10.0)
    bandwidth: Range = Range(15e6, 25e6)  # [Hz]
    zeta1: Range = Range(50.0, 150.0)  # [gCO2/kWh]
    zeta2: Range = Range(400.0, 900.0)  # [gCO2/kWh]

    def as_tuple(self) -> tuple[Range, ...]:
        return (self.m, self.omega, self.bandwidth, self.zeta1, self.zeta2)


@dataclass(frozen=True)
class State:
    m: float
    omega: float
    bandwidth: float  # [Hz]
    zeta1: float  # [gCO2/kWh]
    zeta2: float  # [gCO2/kWh]

    def as_array(self) -> np.ndarray:
        return np.array([self.m, self.omega, self.bandwidth, self.zeta1, self.zeta2])


@dataclass(frozen=True)
class ActionBox:
    kappa_min: float = 1.0
    kappa_max: float = 1000.0
    p_min: float = 0.1  # [W]
    p_max: float = 60.0  # [W]

    def __post_init__(self):
        if not 0 <= self.kappa_min <= self.kappa_max:
            raise ValueError("need 0 <= kappa_min <= kappa_max")
        if not 0.0 < self.p_min <= self.p_max:
            raise ValueError("need 0 < p_min <= p_max")


@dataclass(frozen=True)
class Action:
    kappa: int  # output words
    p_trans: float  # [W]


@dataclass(frozen=True)
class EvalReport:
    """Full per-request diagnostics for one (state, action) pair."""

    feasible: bool
    carbon_total: float  # [gCO2]
    carbon_infer: float  # [gCO2]
    carbon_comm: float  # [gCO2]
    qoe: float
    energy: float
    t_infer: float  # [s]
    t_trans_avg: float  # [s]
    violated: tuple[str, ...]

    def __post_init__(self):
        if self.feasible != (len(self.violated) == 0):
            raise ValueError("feasible flag must match an empty violation list")


@dataclass(frozen=True)
class Transition:
    state: State
    action: Action
    reward: float
    next_state: State
    report: EvalReport


@dataclass(frozen=True)
class EnvConfig:
    ranges: StateRanges = StateRanges()
    box: ActionBox = ActionBox()
    infer: InferenceProfile = InferenceProfile()
    comm: CommProfile = CommProfile()
    qoe: QoEModel = QoEModel()
    constraints: ConstraintSet = ConstraintSet()
    noise_var: float = 1.0  # [W]
    epsilon: float = 0.1
    quad: QuadratureSpec = QuadratureSpec()
    reward_scale: float = 1000.0  # gCO2 -> mg in the reward

    def __post_init__(self):
        if not self.noise_var > 0.0:
            raise ValueError("noise_var must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        if not self.reward_scale > 0.0:
            raise ValueError("reward_scale must be positive")

    @cached_property
    def kernel_pack(self) -> np.ndarray:
        """Flat constant vector consumed by the evaluate/oracle kernels."""
        c = self.constraints
        i = self.infer
        w = self.comm
        q = self.qoe
        return np.array(
            [
                self.noise_var,
                self.epsilon,
                w.beta,
                w.k_rate,
                w.p_fixed,
                w.c_bs_emb,
                w.t_bs,
                i.gpu_seconds_per_word,
                float(i.n_gpu),
                i.p_gpu,
                i.pue,
                i.c_gpu_emb,
                i.t_dc,
                i.alpha,
                q.a,
                q.b,
                q.q_max,
                c.q_th,
                c.e_th,
                c.rho1,
                c.rho2,
                c.t_infer_th,
                c.t_trans_th,
                c.p_trans_max,
                self.quad.rel_tol,
                self.quad.abs_tol,
                float(self.quad.max_subdivisions),
                self.reward_scale,
            ]
        )

    def normalize_state(self, state: State) -> np.ndarray:
        """Map each component to [0, 1] by its configured range."""
        out = np.empty(5)
        for k, (v, r) in enumerate(zip(state.as_array(), self.ranges.as_tuple())):
            out[k] = 0.5 if r.width == 0.0 else (v - r.lo) / r.width
        return out

    def action_from_raw(self, raw: np.ndarray) -> Action:
        """Affine map from normalized [-1, 1]^2 to the action box; kappa rounded."""
        b = self.box
        kappa = b.kappa_min + (float(raw[0]) + 1.0) * 0.5 * (b.kappa_max - b.kappa_min)
        p = b.p_min + (float(raw[1]) + 1.0) * 0.5 * (b.p_max - b.p_min)
        return Action(kappa=int(round(kappa)), p_trans=p)


def sample_state(ranges: StateRanges, rng: np.random.Generator) -> State:
    """Each component uniform over its range, drawn independently."""
    vals = [rng.uniform(r.lo, r.hi) if r.width > 0.0 else r.lo for r in ranges.as_tuple()]
    return State(*map(float, vals))


# --------------------------------------------------------------------------
# Evaluation kernel. Composite of the outage inversion, the conditional
# capacity expectation, and the carbon/constraint algebra; built twice, once
# over the interpreted scalar kernels and once over their jitted twins.
# --------------------------------------------------------------------------


def _make_evaluate(inv_q, gamma_tail):
    def evaluate_kernel(m, omega, b_hz, z1_kwh, z2_kwh, kappa, p_trans, pack):
        sigma2 = pack[0]
        eps = pack[1]
        beta = pack[2]
        z1 = z1_kwh / 3.6e6
        z2 = z2_kwh / 3.6e6
        theta = omega * p_trans / (m * sigma2)
        u = inv_q(m, 1.0 - eps)
        gamma_th = u * theta
        jtail = gamma_tail(2, m, theta, gamma_th, pack[24], pack[25], int(pack[26]))
        j = jtail / (1.0 - eps)
        t_tr = kappa * beta / b_hz * j
        w = kappa ** pack[13] * pack[7]
        t_inf = w / pack[8]
        c_i = w * (pack[9] * pack[10] * z1 + pack[11] / pack[12])
        fixed_rate = (z2 * pack[4] * pack[6] + pack[5]) / (pack[3] * pack[6])
        c_c = z2 * p_trans * t_tr + kappa * beta * fixed_rate / (1.0 - eps)
        if kappa == 0.0:
            q = 0.0
        else:
            q = pack[16] * (kappa / (pack[14] * pack[15])) ** pack[14] * math.exp(
                pack[14] - kappa / pack[15]
            )
        energy = pack[19] * kappa + pack[20] * p_trans
        viol = 0
        if math.isnan(t_tr):
            viol = -1
        else:
            if q < pack[17]:
                viol += 1
            if energy > pack[18]:
                viol += 2
            if t_inf > pack[21]:
                viol += 4
            if t_tr > pack[22]:
                viol += 8
            if p_trans > pack[23]:
                viol += 16
        return c_i, c_c, q, energy, t_inf, t_tr, gamma_th, viol

    return evaluate_kernel


_evaluate_kernel = _backend.kernel(
    "evaluate",
    _make_evaluate(_inv_q_gamma_raw, _gamma_tail_raw),
    _make_evaluate(_inv_q_gamma_jit, _gamma_tail_jit),
)


def _make_oracle(inv_q, gamma_tail):
    def oracle_kernel(m, omega, b_hz, z1_kwh, z2_kwh, kappas, ps, pack):
        sigma2 = pack[0]
        eps = pack[1]
        beta = pack[2]
        z1 = z1_kwh / 3.6e6
        z2 = z2_kwh / 3.6e6
        scale = pack[27]
        u = inv_q(m, 1.0 - eps)
        n_p = ps.shape[0]
        n_k = kappas.shape[0]
        jcond = np.empty(n_p)
        for jdx in range(n_p):
            theta = omega * ps[jdx] / (m * sigma2)
            jtail = gamma_tail(2, m, theta, u * theta, pack[24], pack[25], int(pack[26]))
            jcond[jdx] = np.inf if math.isnan(jtail) else jtail / (1.0 - eps)
        fixed_rate = (z2 * pack[4] * pack[6] + pack[5]) / (pack[3] * pack[6])
        best = -math.inf
        bi = 0
        bj = 0
        for i in range(n_k):
            kappa = kappas[i]
            w = kappa ** pack[13] * pack[7]
            t_inf = w / pack[8]
            c_i = w * (pack[9] * pack[10] * z1 + pack[11] / pack[12])
            if kappa == 0.0:
                q = 0.0
            else:
                q = pack[16] * (kappa / (pack[14] * pack[15])) ** pack[14] * math.exp(
                    pack[14] - kappa / pack[15]
                )
            fixed_term = kappa * beta * fixed_rate / (1.0 - eps)
            for jdx in range(n_p):
                p = ps[jdx]
                t_tr = kappa * beta / b_hz * jcond[jdx]
                feasible = (
                    q >= pack[17]
                    and pack[19] * kappa + pack[20] * p <= pack[18]
                    and t_inf <= pack[21]
                    and t_tr <= pack[22]
                    and p <= pack[23]
                )
                if feasible:
                    r = -(c_i + z2 * p * t_tr + fixed_term) * scale
                else:
                    r = -100.0
                if r > best:
                    best = r
                    bi = i
                    bj = jdx
        return bi, bj, best

    return oracle_kernel


_oracle_kernel = _backend.kernel(
    "grid_oracle",
    _make_oracle(_inv_q_gamma_raw, _gamma_tail_raw),
    _make_oracle(_inv_q_gamma_jit, _gamma_tail_jit),
)


def _unpack_violations(viol: int) -> tuple[str, ...]:
    return tuple(name for bit, name in enumerate(CONSTRAINT_IDS) if viol & (1 << bit))


def evaluate(state: State, action: Action, config: EnvConfig) -> EvalReport:
    """Carbon, QoE, energy, and timing diagnostics plus constraint checks."""
    if action.kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {action.kappa}")
    if action.p_trans <= 0.0:
        raise ValueError(f"p_trans must be positive, got {action.p_trans}")
    c_i, c_c, q, energy, t_inf, t_tr, _, viol = _evaluate_kernel(
        state.m,
        state.omega,
        state.bandwidth,
        state.zeta1,
        state.zeta2,
        float(action.kappa),
        float(action.p_trans),
        config.kernel_pack,
    )
    if viol < 0:
        raise ConvergenceError("conditional transmission-time quadrature did not converge")
    violated = _unpack_violations(viol)
    return EvalReport(
        feasible=not violated,
        carbon_total=c_i + c_c,
        carbon_infer=c_i,
        carbon_comm=c_c,
        qoe=q,
        energy=energy,
        t_infer=t_inf,
        t_trans_avg=t_tr,
        violated=violated,
    )


def reward(report: EvalReport, config: EnvConfig = EnvConfig()) -> float:
    """Negated total carbon (scaled to milligrams) when feasible, else -100."""
    if not report.feasible:
        return PENALTY_REWARD
    return -report.carbon_total * config.reward_scale


def step(state: State, raw_action: np.ndarray, config: EnvConfig, rng: np.random.Generator) -> Transition:
    """Apply a normalized action, collect the reward, sample the next state."""
    action = config.action_from_raw(raw_action)
    report = evaluate(state, action, config)
    next_state = sample_state(config.ranges, rng)
    return Transition(
        state=state,
        action=action,
        reward=reward(report, config),
        next_state=next_state,
        report=report,
    )


def oracle_grids(config: EnvConfig, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint-inclusive action grids with env-identical kappa rounding."""
    b = config.box
    kappas = np.round(np.linspace(b.kappa_min, b.kappa_max, resolution))
    ps = np.linspace(b.p_min, b.p_max, resolution)
    return kappas, ps


def grid_oracle(state: State, resolution: int, config: EnvConfig) -> tuple[Action, float]:
    """Best action on a resolution x resolution grid over the action box.

    Deterministic; ties break toward smaller kappa, then smaller power.
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    kappas, ps = oracle_grids(config, resolution)
    bi, bj, best = _oracle_kernel(
        state.m,
        state.omega,
        state.bandwidth,
        state.zeta1,
        state.zeta2,
        kappas,
        ps,
        config.kernel_pack,
    )
    return Action(kappa=int(kappas[bi]), p_trans=float(ps[bj])), float(best)
