"""Dense networks with hand-rolled reverse-mode gradients, plus Adam.

Used for the double critic and the baseline dense actor. Gradients are exact
reverse mode (no autodiff dependency); the finite-difference test suite is the
correctness gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("mish", "identity")


# --------------------------------------------------------------------------
# Mish: x * tanh(softplus(x)), elementwise.
# --------------------------------------------------------------------------


# Single-exp evaluation: with u = e^x and t = (1 + u)^2,
#   tanh(softplus(x)) = (t - 1) / (t + 1),   sigmoid(x) = u / (1 + u),
# so both the value and the derivative come from one exponential. Clipping
# the exponent at 30 is exact to machine precision (tanh(softplus) saturates).
# Vectorized numpy is the fast path here: SIMD transcendentals beat scalar
# loops, so mish is deliberately not a dispatched backend kernel.


def _mish_parts(x):
    u = np.exp(np.minimum(x, 30.0))
    t = (1.0 + u) ** 2
    tanh_sp = (t - 1.0) / (t + 1.0)
    return u, tanh_sp


def _mish(x):
    _, tanh_sp = _mish_parts(x)
    return x * tanh_sp


def _mish_grad(x):
    u, tanh_sp = _mish_parts(x)
    return tanh_sp + x * (1.0 - tanh_sp * tanh_sp) * (u / (1.0 + u))


def _mish_and_grad(x):
    u, tanh_sp = _mish_parts(x)
    return x * tanh_sp, tanh_sp + x * (1.0 - tanh_sp * tanh_sp) * (u / (1.0 + u))


def mish(x):
    """Mish activation x * tanh(softplus(x)); accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    out = _mish(arr)
    return float(out) if arr.ndim == 0 else out


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "mish":
        return _mish(z)
    return z


# --------------------------------------------------------------------------
# Dense network.
# --------------------------------------------------------------------------


@dataclass
class DenseNet:
    """Affine + activation chain; activations are 'mish' or 'identity'."""

    weights: list[np.ndarray]  # (out, in) each
    biases: list[np.ndarray]  # (out,) each
    acts: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.acts)):
            raise ValueError("weights, biases, acts must have equal length")
        for a in self.acts:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        for w_prev, w_next in zip(self.weights, self.weights[1:]):
            if w_next.shape[1] != w_prev.shape[0]:
                raise ValueError("consecutive layer dimensions do not chain")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def tensors(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{k}"] = w
            out[f"b{k}"] = b
        return out


@dataclass
class NetTrace:
    """Per-layer inputs, pre-activations, and activation derivatives."""

    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    act_grad: list[np.ndarray | None]


def init_dense(
    sizes: Sequence[int],
    rng: np.random.Generator,
    hidden_act: str = "mish",
    final_scale: float | None = None,
    dtype=np.float64,
) -> DenseNet:
    """Fan-in scaled uniform init; optional small-magnitude final layer."""
    weights, biases, acts = [], [], []
    n_layers = len(sizes) - 1
    for k in range(n_layers):
        fan_in = sizes[k]
        last = k == n_layers - 1
        scale = (final_scale if last and final_scale is not None else 1.0 / math.sqrt(fan_in))
        weights.append(rng.uniform(-scale, scale, size=(sizes[k + 1], fan_in)).astype(dtype))
        biases.append(rng.uniform(-scale, scale, size=sizes[k + 1]).astype(dtype))
        acts.append("identity" if last else hidden_act)
    return DenseNet(weights, biases, tuple(acts))


def net_forward(net: DenseNet, x: np.ndarray, training: bool = False):
    """Forward pass; returns (output, trace) with trace None in inference mode."""
    squeeze = x.ndim == 1
    h = np.atleast_2d(np.asarray(x, dtype=net.dtype))
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input width {h.shape[1]} != expected {net.in_dim}")
    inputs, pre, act_grad = [], [], []
    for w, b, act in zip(net.weights, net.biases, net.acts):
        if training:
            inputs.append(h)
        z = h @ w.T + b
        if not training:
            h = _activate(act, z)
            continue
        pre.append(z)
        if act == "mish":
            h, dz = _mish_and_grad(z)
            act_grad.append(dz)
        else:
            h = z
            act_grad.append(None)
    out = h[0] if squeeze else h
    return (out, NetTrace(inputs, pre, act_grad)) if training else (out, None)


def net_backward(net: DenseNet, trace: NetTrace, grad_out: np.ndarray):
    """Exact reverse-mode gradients; returns ({name: grad}, grad_wrt_input)."""
    if trace is None:
        raise ValueError("net_backward requires a trace from a training-mode forward")
    ga = np.atleast_2d(np.asarray(grad_out, dtype=net.dtype))
    grads: dict[str, np.ndarray] = {}
    for k in reversed(range(len(net.weights))):
        dz = trace.act_grad[k]
        gz = ga if dz is None else ga * dz
        grads[f"w{k}"] = gz.T @ trace.inputs[k]
        grads[f"b{k}"] = gz.sum(axis=0)
        ga = gz @ net.weights[k]
    return grads, ga


# --------------------------------------------------------------------------
# Double critic.
# --------------------------------------------------------------------------


@dataclass
class DoubleCritic:
    """Two independently initialized critics; min is the conservative estimate."""

    q1: DenseNet
    q2: DenseNet

    def tensors(self) -> dict[str, np.ndarray]:
        out = {f"q1/{k}": v for k, v in self.q1.tensors().items()}
        out.update({f"q2/{k}": v for k, v in self.q2.tensors().items()})
        return out


def init_critic(
    state_dim: int,
    action_dim: int,
    hidden_sizes: Sequence[int],
    rng: np.random.Generator,
    dtype=np.float64,
) -> DoubleCritic:
    sizes = [state_dim + action_dim, *hidden_sizes, 1]
    q1 = init_dense(sizes, rng, hidden_act="mish", final_scale=3e-3, dtype=dtype)
    q2 = init_dense(sizes, rng, hidden_act="mish", final_scale=3e-3, dtype=dtype)
    return DoubleCritic(q1, q2)


def q_min(critic: DoubleCritic, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    """min(Q1(s, a), Q2(s, a)); accepts single vectors or batches."""
    s = np.atleast_2d(state)
    a = np.atleast_2d(action)
    x = np.concatenate([s, a], axis=1)
    v1, _ = net_forward(critic.q1, x)
    v2, _ = net_forward(critic.q2, x)
    out = np.minimum(v1, v2)[:, 0]
    return float(out[0]) if np.ndim(state) == 1 else out


# --------------------------------------------------------------------------
# Adam.
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    """Bias-corrected adaptive optimizer state over named tensors."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init_like(cls, tensors: dict[str, np.ndarray], lr: float, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        state.m = {k: np.zeros_like(t) for k, t in tensors.items()}
        state.v = {k: np.zeros_like(t) for k, t in tensors.items()}
        return state


def adam_step(
    state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """One in-place Adam update; returns the (mutated) params mapping."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {k!r}")
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
