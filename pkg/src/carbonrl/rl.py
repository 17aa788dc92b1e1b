"""Actor-critic training loop with a double critic and target networks.

The actor (spiking or dense) is updated by deterministic policy gradient
through the minimum of the two online critics; critics regress on targets
built from the target actor and the minimum of the two target critics; both
target networks track their online twins through soft updates. Exploration
adds clipped Gaussian noise; a uniform-random warmup seeds the replay buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import env as env_mod
from . import mlp, snn
from .numerics import make_rng


class TrainingDiverged(RuntimeError):
    """A loss or objective became non-finite, or targets left their bounds."""


@dataclass
class TrainerConfig:
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    discount: float = 0.99
    tau: float = 0.005
    batch_size: int = 512
    noise_sigma: float = 0.1
    warmup_steps: int = 1000
    episodes: int = 300
    steps_per_episode: int = 100
    buffer_capacity: int = 1_000_000
    critic_hidden: tuple[int, ...] = (256, 256)
    dtype: str = "float32"

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        for name in ("lr_actor", "lr_critic", "batch_size", "warmup_steps", "episodes",
                     "steps_per_episode", "buffer_capacity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def total_steps(self) -> int:
        return self.episodes * self.steps_per_episode

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class SNNActorConfig:
    hidden_sizes: tuple[int, ...] = (256, 256)
    t_snn: int = 10
    encoder_dim: int = 20
    decoder_dim: int = 10
    v_th: float = snn.DEFAULT_V_TH
    current_decay: float = snn.DEFAULT_CURRENT_DECAY
    voltage_decay: float = snn.DEFAULT_VOLTAGE_DECAY
    surrogate_window: float = snn.DEFAULT_SURROGATE_WINDOW
    encoder_trainable: bool = True


# --------------------------------------------------------------------------
# Replay buffer.
# --------------------------------------------------------------------------


class BufferUnderflow(RuntimeError):
    """Sampling was requested before the buffer held a full batch."""


@dataclass
class ReplayBuffer:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    cursor: int = 0
    size: int = 0

    @classmethod
    def create(cls, capacity: int, state_dim: int = 5, action_dim: int = 2) -> "ReplayBuffer":
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        return cls(
            states=np.empty((capacity, state_dim), dtype=np.float32),
            actions=np.empty((capacity, action_dim), dtype=np.float32),
            rewards=np.empty(capacity, dtype=np.float32),
            next_states=np.empty((capacity, state_dim), dtype=np.float32),
        )

    @property
    def capacity(self) -> int:
        return self.states.shape[0]

    def store(self, s: np.ndarray, a: np.ndarray, r: float, s2: np.ndarray) -> None:
        i = self.cursor
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s2
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        if self.size < batch:
            raise BufferUnderflow(f"buffer holds {self.size} < batch {batch}")
        idx = rng.integers(0, self.size, size=batch)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
        )


# --------------------------------------------------------------------------
# Policy adapters: a uniform surface over the spiking and dense actors.
# --------------------------------------------------------------------------


class SNNPolicy:
    kind = "snn"

    def __init__(self, params: snn.SNNActorParams):
        self.params = params
        self._trace = None

    def act(self, states: np.ndarray, training: bool = False) -> np.ndarray:
        out, trace = snn.actor_forward(self.params, states, training=training)
        if training:
            self._trace = trace
        return out

    def backward(self, grad_actions: np.ndarray) -> dict[str, np.ndarray]:
        return snn.actor_backward(self.params, self._trace, grad_actions)

    def tensors(self) -> dict[str, np.ndarray]:
        return self.params.tensors()

    def clone(self) -> "SNNPolicy":
        return SNNPolicy(self.params.clone())


class MLPPolicy:
    kind = "mlp"

    def __init__(self, net: mlp.DenseNet):
        self.net = net
        self._trace = None
        self._actions = None

    def act(self, states: np.ndarray, training: bool = False) -> np.ndarray:
        pre, trace = mlp.net_forward(self.net, states, training=training)
        out = np.tanh(pre)
        if training:
            self._trace = trace
            self._actions = np.atleast_2d(out)
        return out

    def backward(self, grad_actions: np.ndarray) -> dict[str, np.ndarray]:
        gpre = np.atleast_2d(grad_actions) * (1.0 - self._actions**2)
        grads, _ = mlp.net_backward(self.net, self._trace, gpre)
        return grads

    def tensors(self) -> dict[str, np.ndarray]:
        return self.net.tensors()

    def clone(self) -> "MLPPolicy":
        copy = mlp.DenseNet(
            [w.copy() for w in self.net.weights],
            [b.copy() for b in self.net.biases],
            self.net.acts,
        )
        return MLPPolicy(copy)


def make_policy(
    kind: str, actor_cfg: SNNActorConfig, rng: np.random.Generator, dtype
) -> SNNPolicy | MLPPolicy:
    if kind == "snn":
        params = snn.init_actor(
            rng,
            n_state=5,
            n_action=2,
            encoder_dim=actor_cfg.encoder_dim,
            decoder_dim=actor_cfg.decoder_dim,
            hidden_sizes=tuple(actor_cfg.hidden_sizes),
            t_snn=actor_cfg.t_snn,
            v_th=actor_cfg.v_th,
            d_c=actor_cfg.current_decay,
            d_v=actor_cfg.voltage_decay,
            surrogate_window=actor_cfg.surrogate_window,
            encoder_trainable=actor_cfg.encoder_trainable,
            dtype=dtype,
        )
        return SNNPolicy(params)
    if kind == "mlp":
        net = mlp.init_dense(
            [5, *actor_cfg.hidden_sizes, 2], rng, hidden_act="mish", final_scale=3e-3, dtype=dtype
        )
        return MLPPolicy(net)
    raise ValueError(f"unknown policy kind {kind!r}")


# --------------------------------------------------------------------------
# Updates.
# --------------------------------------------------------------------------


def soft_update(online: dict[str, np.ndarray], target: dict[str, np.ndarray], tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, every tensor, in place."""
    if online.keys() != target.keys():
        raise ValueError("online/target tensor names differ")
    for k, src in online.items():
        dst = target[k]
        if dst.shape != src.shape:
            raise ValueError(f"shape mismatch for {k!r}: {src.shape} vs {dst.shape}")
        dst *= 1.0 - tau
        dst += tau * src


def select_action(
    policy, state_norm: np.ndarray, noise_sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Deterministic actor output plus clipped Gaussian exploration noise."""
    a = np.asarray(policy.act(state_norm), dtype=np.float64)
    if noise_sigma > 0.0:
        a = a + rng.normal(0.0, noise_sigma, size=a.shape)
    return np.clip(a, -1.0, 1.0)


@dataclass
class TrainerState:
    config: TrainerConfig
    policy: SNNPolicy | MLPPolicy
    target_policy: SNNPolicy | MLPPolicy
    critic: mlp.DoubleCritic
    target_critic: mlp.DoubleCritic
    adam_actor: mlp.AdamState
    adam_q1: mlp.AdamState
    adam_q2: mlp.AdamState
    buffer: ReplayBuffer
    rng: np.random.Generator
    step: int = 0

    @classmethod
    def create(
        cls,
        trainer_cfg: TrainerConfig,
        actor_cfg: SNNActorConfig,
        policy_kind: str,
        rng: np.random.Generator,
    ) -> "TrainerState":
        dtype = trainer_cfg.np_dtype
        policy = make_policy(policy_kind, actor_cfg, rng, dtype)
        critic = mlp.init_critic(5, 2, trainer_cfg.critic_hidden, rng, dtype=dtype)
        return cls(
            config=trainer_cfg,
            policy=policy,
            target_policy=policy.clone(),
            critic=critic,
            target_critic=mlp.DoubleCritic(
                mlp.DenseNet(
                    [w.copy() for w in critic.q1.weights],
                    [b.copy() for b in critic.q1.biases],
                    critic.q1.acts,
                ),
                mlp.DenseNet(
                    [w.copy() for w in critic.q2.weights],
                    [b.copy() for b in critic.q2.biases],
                    critic.q2.acts,
                ),
            ),
            adam_actor=mlp.AdamState.init_like(policy.tensors(), trainer_cfg.lr_actor),
            adam_q1=mlp.AdamState.init_like(critic.q1.tensors(), trainer_cfg.lr_critic),
            adam_q2=mlp.AdamState.init_like(critic.q2.tensors(), trainer_cfg.lr_critic),
            buffer=ReplayBuffer.create(trainer_cfg.buffer_capacity),
            rng=rng,
        )


def critic_update(ts: TrainerState, batch) -> float:
    """One TD regression step on both critics; returns the summed MSE loss."""
    s, a, r, s2 = batch
    cfg = ts.config
    a2 = np.atleast_2d(ts.target_policy.act(s2))
    x2 = np.concatenate([s2, a2], axis=1, dtype=cfg.np_dtype)
    q1t, _ = mlp.net_forward(ts.target_critic.q1, x2)
    q2t, _ = mlp.net_forward(ts.target_critic.q2, x2)
    y = r + cfg.discount * np.minimum(q1t[:, 0], q2t[:, 0])
    bound = -100.0 / (1.0 - cfg.discount) - 1.0
    if not np.isfinite(y).all() or y.min() < bound or y.max() > 1.0:
        raise TrainingDiverged(
            f"TD targets outside ({bound:.1f}, 1.0) at step {ts.step}: "
            f"[{y.min():.3g}, {y.max():.3g}]"
        )
    x = np.concatenate([s, a], axis=1, dtype=cfg.np_dtype)
    loss = 0.0
    inv_b = 1.0 / len(r)
    for net, adam in ((ts.critic.q1, ts.adam_q1), (ts.critic.q2, ts.adam_q2)):
        q, trace = mlp.net_forward(net, x, training=True)
        e = q[:, 0] - y
        loss += float(np.mean(e * e))
        grads, _ = mlp.net_backward(net, trace, (2.0 * inv_b) * e[:, None])
        mlp.adam_step(adam, net.tensors(), grads)
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite critic loss at step {ts.step}")
    return loss


def actor_update(ts: TrainerState, batch) -> float:
    """Policy-gradient ascent on the min-critic objective; returns it."""
    s = batch[0]
    cfg = ts.config
    acts = np.atleast_2d(ts.policy.act(s, training=True))
    x = np.concatenate([s, acts], axis=1, dtype=cfg.np_dtype)
    q1, tr1 = mlp.net_forward(ts.critic.q1, x, training=True)
    q2, tr2 = mlp.net_forward(ts.critic.q2, x, training=True)
    objective = float(np.minimum(q1[:, 0], q2[:, 0]).mean())
    if not math.isfinite(objective):
        raise TrainingDiverged(f"non-finite actor objective at step {ts.step}")
    pick1 = (q1[:, 0] <= q2[:, 0]).astype(cfg.np_dtype)
    inv_b = 1.0 / len(s)
    _, gx1 = mlp.net_backward(ts.critic.q1, tr1, (pick1 * inv_b)[:, None])
    _, gx2 = mlp.net_backward(ts.critic.q2, tr2, ((1.0 - pick1) * inv_b)[:, None])
    grad_actions = (gx1 + gx2)[:, 5:]
    grads = ts.policy.backward(-grad_actions)  # ascent: minimize -J
    mlp.adam_step(ts.adam_actor, ts.policy.tensors(), grads)
    return objective


# --------------------------------------------------------------------------
# Training loop.
# --------------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    episode: int
    reward: float
    carbon_mg: float
    kappa: int
    p_trans: float
    feasible: bool
    critic_loss: float | None
    actor_obj: float | None


@dataclass
class TrainResult:
    records: list[StepRecord]
    trainer: TrainerState | None  # None for the random policy

    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records])


def train(
    env_cfg: env_mod.EnvConfig,
    trainer_cfg: TrainerConfig,
    actor_cfg: SNNActorConfig = SNNActorConfig(),
    policy: str = "snn",
    seed: int = 0,
    total_steps: int | None = None,
    hook: Callable[[int, TrainerState | None], None] | None = None,
) -> TrainResult:
    """Run the full training loop; per-step metrics are returned in order."""
    if policy not in ("snn", "mlp", "random"):
        raise ValueError(f"unknown policy {policy!r}")
    rng = make_rng(seed)
    learning = policy != "random"
    ts = TrainerState.create(trainer_cfg, actor_cfg, policy, rng) if learning else None
    steps = trainer_cfg.total_steps if total_steps is None else int(total_steps)
    per_episode = trainer_cfg.steps_per_episode
    records: list[StepRecord] = []
    state = env_mod.sample_state(env_cfg.ranges, rng)
    for step in range(1, steps + 1):
        episode = (step - 1) // per_episode + 1
        if step > 1 and (step - 1) % per_episode == 0:
            state = env_mod.sample_state(env_cfg.ranges, rng)
        s_norm = env_cfg.normalize_state(state)
        if not learning or step <= trainer_cfg.warmup_steps:
            raw = rng.uniform(-1.0, 1.0, size=2)
        else:
            raw = select_action(
                ts.policy, s_norm.astype(trainer_cfg.np_dtype), trainer_cfg.noise_sigma, rng
            )
        tr = env_mod.step(state, raw, env_cfg, rng)
        closs = aobj = None
        if learning:
            ts.step = step
            ts.buffer.store(
                s_norm, raw, tr.reward, env_cfg.normalize_state(tr.next_state)
            )
            if step > trainer_cfg.warmup_steps and ts.buffer.size >= trainer_cfg.batch_size:
                batch = ts.buffer.sample(trainer_cfg.batch_size, rng)
                closs = critic_update(ts, batch)
                aobj = actor_update(ts, batch)
                soft_update(ts.critic.tensors(), ts.target_critic.tensors(), trainer_cfg.tau)
                soft_update(ts.policy.tensors(), ts.target_policy.tensors(), trainer_cfg.tau)
        records.append(
            StepRecord(
                step=step,
                episode=episode,
                reward=tr.reward,
                carbon_mg=tr.report.carbon_total * env_cfg.reward_scale,
                kappa=tr.action.kappa,
                p_trans=tr.action.p_trans,
                feasible=tr.report.feasible,
                critic_loss=closs,
                actor_obj=aobj,
            )
        )
        if hook is not None:
            hook(step, ts)
        state = tr.next_state
    return TrainResult(records=records, trainer=ts)


# --------------------------------------------------------------------------
# Evaluation and baselines.
# --------------------------------------------------------------------------


@dataclass
class PolicyEvaluation:
    rewards: np.ndarray
    carbon_g: np.ndarray
    feasible: np.ndarray
    kappas: np.ndarray
    p_trans: np.ndarray

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())

    @property
    def feasibility_rate(self) -> float:
        return float(self.feasible.mean())

    @property
    def mean_carbon_mg(self) -> float | None:
        if not self.feasible.any():
            return None
        return float(self.carbon_g[self.feasible].mean() * 1e3)


def evaluate_policy(
    actor_fn: Callable[[np.ndarray], np.ndarray],
    states: list[env_mod.State],
    env_cfg: env_mod.EnvConfig,
) -> PolicyEvaluation:
    """Deterministic noise-free rollout of actor_fn over the given states."""
    n = len(states)
    rewards = np.empty(n)
    carbon = np.empty(n)
    feasible = np.empty(n, dtype=bool)
    kappas = np.empty(n, dtype=int)
    ps = np.empty(n)
    for i, state in enumerate(states):
        raw = np.clip(np.asarray(actor_fn(env_cfg.normalize_state(state)), dtype=float), -1.0, 1.0)
        action = env_cfg.action_from_raw(raw)
        report = env_mod.evaluate(state, action, env_cfg)
        rewards[i] = env_mod.reward(report, env_cfg)
        carbon[i] = report.carbon_total
        feasible[i] = report.feasible
        kappas[i] = action.kappa
        ps[i] = action.p_trans
    return PolicyEvaluation(rewards, carbon, feasible, kappas, ps)


def policy_actor_fn(policy) -> Callable[[np.ndarray], np.ndarray]:
    """Noise-free actor function for evaluate_policy."""
    dtype = np.float32 if policy.tensors()[next(iter(policy.tensors()))].dtype == np.float32 else np.float64
    return lambda s_norm: np.asarray(policy.act(s_norm.astype(dtype)), dtype=float)


def uniform_random_actor(rng: np.random.Generator) -> Callable[[np.ndarray], np.ndarray]:
    """Uniform action over the box each call (spans [-1, 1]^2 normalized)."""
    return lambda _s: rng.uniform(-1.0, 1.0, size=2)


def baseline_random(
    env_cfg: env_mod.EnvConfig,
    trainer_cfg: TrainerConfig,
    seed: int = 0,
    total_steps: int | None = None,
) -> TrainResult:
    """Uniform-random action stream through the same metrics pipeline."""
    return train(env_cfg, trainer_cfg, policy="random", seed=seed, total_steps=total_steps)


def baseline_mlp_actor(
    env_cfg: env_mod.EnvConfig,
    trainer_cfg: TrainerConfig,
    actor_cfg: SNNActorConfig = SNNActorConfig(),
    seed: int = 0,
    total_steps: int | None = None,
) -> TrainResult:
    """Identical trainer with the spiking actor swapped for a dense one."""
    return train(
        env_cfg, trainer_cfg, actor_cfg, policy="mlp", seed=seed, total_steps=total_steps
    )
