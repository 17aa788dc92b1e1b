"""Population-coded spiking actor.

Gaussian receptive-field encoder populations feed one-step soft-reset
integrate-and-fire neurons; current-based leaky integrate-and-fire layers
carry the spikes over a fixed number of timesteps; firing-rate decoder
populations produce continuous actions squashed into [-1, 1].

Backpropagation runs through time with a rectangular pseudo-gradient at every
spike threshold (encoder included). A "relaxed" forward mode replaces the hard
threshold with the matching piecewise-linear ramp, making the same backward
pass the exact gradient of the relaxed network; the finite-difference suite
exploits that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend

DEFAULT_V_TH = 0.999
DEFAULT_CURRENT_DECAY = 0.5
DEFAULT_VOLTAGE_DECAY = 0.75
DEFAULT_SURROGATE_WINDOW = 0.5


# --------------------------------------------------------------------------
# Time-recursion kernels (numpy twins are vectorized over the batch; numba
# twins fuse the elementwise chains).
# --------------------------------------------------------------------------


def _spike_np(x, relaxed, w, dtype):
    if relaxed:
        return np.clip(x / w + 0.5, 0.0, 1.0).astype(dtype, copy=False)
    return (x >= 0.0).astype(dtype)


def _encoder_seq_np(strength, t_snn, v_th, relaxed, w):
    b, n = strength.shape
    o_seq = np.empty((t_snn, b, n), dtype=strength.dtype)
    p_seq = np.empty((t_snn, b, n), dtype=strength.dtype)
    v = np.zeros((b, n), dtype=strength.dtype)
    for t in range(t_snn):
        p = v + strength - v_th
        o = _spike_np(p, relaxed, w, strength.dtype)
        v = v + strength - v_th * o
        o_seq[t] = o
        p_seq[t] = p
    return o_seq, p_seq


def _encoder_seq_nb(strength, t_snn, v_th, relaxed, w):
    b, n = strength.shape
    o_seq = np.empty((t_snn, b, n), dtype=strength.dtype)
    p_seq = np.empty((t_snn, b, n), dtype=strength.dtype)
    v = np.zeros((b, n), dtype=strength.dtype)
    for t in range(t_snn):
        for i in range(b):
            for j in range(n):
                p = v[i, j] + strength[i, j] - v_th
                if relaxed:
                    o = min(max(p / w + 0.5, 0.0), 1.0)
                else:
                    o = 1.0 if p >= 0.0 else 0.0
                v[i, j] = v[i, j] + strength[i, j] - v_th * o
                o_seq[t, i, j] = o
                p_seq[t, i, j] = p
    return o_seq, p_seq


def _encoder_backward_np(go_seq, p_seq, v_th, w):
    t_snn, b, n = go_seq.shape
    dtype = go_seq.dtype
    g_strength = np.zeros((b, n), dtype=dtype)
    gv = np.zeros((b, n), dtype=dtype)
    half = 0.5 * w
    inv_w = 1.0 / w
    for t in range(t_snn - 1, -1, -1):
        go_tot = go_seq[t] - v_th * gv
        gp = go_tot * (np.abs(p_seq[t]) < half).astype(dtype) * inv_w
        g_strength += gp + gv
        gv = gv + gp
    return g_strength


def _encoder_backward_nb(go_seq, p_seq, v_th, w):
    t_snn, b, n = go_seq.shape
    g_strength = np.zeros((b, n), dtype=go_seq.dtype)
    gv = np.zeros((b, n), dtype=go_seq.dtype)
    half = 0.5 * w
    inv_w = 1.0 / w
    for t in range(t_snn - 1, -1, -1):
        for i in range(b):
            for j in range(n):
                go_tot = go_seq[t, i, j] - v_th * gv[i, j]
                sur = inv_w if abs(p_seq[t, i, j]) < half else 0.0
                gp = go_tot * sur
                g_strength[i, j] += gp + gv[i, j]
                gv[i, j] = gv[i, j] + gp
    return g_strength


def _lif_seq_np(syn, d_c, d_v, v_th, relaxed, w):
    t_snn, b, n = syn.shape
    o_seq = np.empty_like(syn)
    v_seq = np.empty_like(syn)
    c = np.zeros((b, n), dtype=syn.dtype)
    v = np.zeros((b, n), dtype=syn.dtype)
    o = np.zeros((b, n), dtype=syn.dtype)
    for t in range(t_snn):
        c = d_c * c + syn[t]
        v = d_v * v * (1.0 - o) + c
        o = _spike_np(v - v_th, relaxed, w, syn.dtype)
        o_seq[t] = o
        v_seq[t] = v
    return o_seq, v_seq


def _lif_seq_nb(syn, d_c, d_v, v_th, relaxed, w):
    t_snn, b, n = syn.shape
    o_seq = np.empty_like(syn)
    v_seq = np.empty_like(syn)
    c = np.zeros((b, n), dtype=syn.dtype)
    v = np.zeros((b, n), dtype=syn.dtype)
    o = np.zeros((b, n), dtype=syn.dtype)
    for t in range(t_snn):
        for i in range(b):
            for j in range(n):
                cv = d_c * c[i, j] + syn[t, i, j]
                vv = d_v * v[i, j] * (1.0 - o[i, j]) + cv
                x = vv - v_th
                if relaxed:
                    ov = min(max(x / w + 0.5, 0.0), 1.0)
                else:
                    ov = 1.0 if x >= 0.0 else 0.0
                c[i, j] = cv
                v[i, j] = vv
                o[i, j] = ov
                o_seq[t, i, j] = ov
                v_seq[t, i, j] = vv
    return o_seq, v_seq


def _lif_backward_np(go_seq, o_seq, v_seq, d_c, d_v, v_th, w):
    t_snn, b, n = go_seq.shape
    dtype = go_seq.dtype
    gc_seq = np.empty_like(go_seq)
    gv = np.zeros((b, n), dtype=dtype)
    gc = np.zeros((b, n), dtype=dtype)
    half = 0.5 * w
    inv_w = 1.0 / w
    for t in range(t_snn - 1, -1, -1):
        go_tot = go_seq[t] - d_v * v_seq[t] * gv
        sur = (np.abs(v_seq[t] - v_th) < half).astype(dtype) * inv_w
        gv = go_tot * sur + gv * d_v * (1.0 - o_seq[t])
        gc = gv + d_c * gc
        gc_seq[t] = gc
    return gc_seq


def _lif_backward_nb(go_seq, o_seq, v_seq, d_c, d_v, v_th, w):
    t_snn, b, n = go_seq.shape
    gc_seq = np.empty_like(go_seq)
    gv = np.zeros((b, n), dtype=go_seq.dtype)
    gc = np.zeros((b, n), dtype=go_seq.dtype)
    half = 0.5 * w
    inv_w = 1.0 / w
    for t in range(t_snn - 1, -1, -1):
        for i in range(b):
            for j in range(n):
                go_tot = go_seq[t, i, j] - d_v * v_seq[t, i, j] * gv[i, j]
                sur = inv_w if abs(v_seq[t, i, j] - v_th) < half else 0.0
                gvt = go_tot * sur + gv[i, j] * d_v * (1.0 - o_seq[t, i, j])
                gct = gvt + d_c * gc[i, j]
                gv[i, j] = gvt
                gc[i, j] = gct
                gc_seq[t, i, j] = gct
    return gc_seq


_encoder_seq = _backend.kernel("encoder_seq", _encoder_seq_np, _encoder_seq_nb)
_encoder_backward = _backend.kernel("encoder_backward", _encoder_backward_np, _encoder_backward_nb)
_lif_seq = _backend.kernel("lif_seq", _lif_seq_np, _lif_seq_nb)
_lif_backward = _backend.kernel("lif_backward", _lif_backward_np, _lif_backward_nb)


# --------------------------------------------------------------------------
# Parameter containers.
# --------------------------------------------------------------------------


@dataclass
class EncoderParams:
    """Gaussian receptive fields: one (centers, widths) pair per state dim."""

    mu: np.ndarray  # (n_state, n_per_pop)
    sigma: np.ndarray  # (n_state, n_per_pop), strictly positive
    trainable: bool = True

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma must share a shape")
        if not (self.sigma > 0).all():
            raise ValueError("sigma must be strictly positive")


@dataclass
class LIFLayerParams:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    d_c: float = DEFAULT_CURRENT_DECAY
    d_v: float = DEFAULT_VOLTAGE_DECAY
    v_th: float = DEFAULT_V_TH

    def __post_init__(self):
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError("bias length must match output width")
        if not (0.0 <= self.d_c < 1.0 and 0.0 <= self.d_v < 1.0):
            raise ValueError("decay factors must lie in [0, 1)")
        if not self.v_th > 0.0:
            raise ValueError("v_th must be positive")


@dataclass
class DecoderParams:
    weights: np.ndarray  # (n_action, n_per_pop)
    bias: np.ndarray  # (n_action,)

    def __post_init__(self):
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError("decoder bias length must match action count")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("decoder parameters must be finite")


@dataclass
class SNNActorParams:
    encoder: EncoderParams
    layers: list[LIFLayerParams]
    decoder: DecoderParams
    t_snn: int = 10
    surrogate_window: float = DEFAULT_SURROGATE_WINDOW

    def __post_init__(self):
        if self.t_snn < 1:
            raise ValueError("t_snn must be >= 1")
        in_dim = self.mu_count
        for k, layer in enumerate(self.layers):
            if layer.weights.shape[1] != in_dim:
                raise ValueError(f"layer {k} input width {layer.weights.shape[1]} != {in_dim}")
            in_dim = layer.weights.shape[0]
        if in_dim != self.decoder.weights.size:
            raise ValueError("output layer width must equal n_action * decoder population")

    @property
    def n_state(self) -> int:
        return self.encoder.mu.shape[0]

    @property
    def encoder_dim(self) -> int:
        return self.encoder.mu.shape[1]

    @property
    def mu_count(self) -> int:
        return self.encoder.mu.size

    @property
    def n_action(self) -> int:
        return self.decoder.weights.shape[0]

    @property
    def decoder_dim(self) -> int:
        return self.decoder.weights.shape[1]

    @property
    def dtype(self):
        return self.layers[0].weights.dtype

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"enc/mu": self.encoder.mu, "enc/sigma": self.encoder.sigma}
        for k, layer in enumerate(self.layers):
            out[f"lif{k}/w"] = layer.weights
            out[f"lif{k}/b"] = layer.bias
        out["dec/w"] = self.decoder.weights
        out["dec/b"] = self.decoder.bias
        return out

    def clone(self) -> "SNNActorParams":
        return SNNActorParams(
            encoder=EncoderParams(
                self.encoder.mu.copy(), self.encoder.sigma.copy(), self.encoder.trainable
            ),
            layers=[
                LIFLayerParams(l.weights.copy(), l.bias.copy(), l.d_c, l.d_v, l.v_th)
                for l in self.layers
            ],
            decoder=DecoderParams(self.decoder.weights.copy(), self.decoder.bias.copy()),
            t_snn=self.t_snn,
            surrogate_window=self.surrogate_window,
        )


@dataclass
class ForwardTrace:
    """Per-timestep spikes/potentials retained for backpropagation through time."""

    state: np.ndarray  # (batch, n_state)
    strength: np.ndarray  # (batch, n_state * encoder_dim)
    enc_o: np.ndarray  # (t_snn, batch, in)
    enc_p: np.ndarray
    layer_o: list[np.ndarray] = field(default_factory=list)
    layer_v: list[np.ndarray] = field(default_factory=list)
    rates: np.ndarray | None = None  # (batch, n_action, decoder_dim)
    actions: np.ndarray | None = None  # (batch, n_action), post-squash
    relaxed: bool = False


# --------------------------------------------------------------------------
# Forward pieces.
# --------------------------------------------------------------------------


def stimulation_strength(encoder: EncoderParams, state: np.ndarray) -> np.ndarray:
    """Gaussian receptive-field response, flattened to (batch, n*dim)."""
    diff = state[:, :, None] - encoder.mu[None, :, :]
    u = np.exp(-0.5 * (diff / encoder.sigma[None, :, :]) ** 2)
    return u.reshape(state.shape[0], -1)


def encode(
    encoder: EncoderParams,
    state: np.ndarray,
    t_snn: int,
    v_th: float = DEFAULT_V_TH,
    relaxed: bool = False,
    window: float = DEFAULT_SURROGATE_WINDOW,
):
    """Population encoding: strengths drive one-step soft-reset IF neurons.

    Returns (spike train (t_snn, batch, n*dim), strengths, pre-activations).
    """
    state = np.atleast_2d(state)
    if state.shape[1] != encoder.mu.shape[0]:
        raise ValueError(f"state width {state.shape[1]} != {encoder.mu.shape[0]}")
    u = stimulation_strength(encoder, state)
    o_seq, p_seq = _encoder_seq(u, t_snn, float(v_th), relaxed, float(window))
    return o_seq, u, p_seq


def lif_forward(
    layer: LIFLayerParams,
    input_spikes: np.ndarray,
    relaxed: bool = False,
    window: float = DEFAULT_SURROGATE_WINDOW,
):
    """Run one LIF layer over a (t_snn, batch, in) spike train."""
    t_snn, b, n_in = input_spikes.shape
    if n_in != layer.weights.shape[1]:
        raise ValueError(f"input width {n_in} != layer width {layer.weights.shape[1]}")
    syn = input_spikes.reshape(t_snn * b, n_in) @ layer.weights.T + layer.bias
    syn = np.ascontiguousarray(syn.reshape(t_snn, b, layer.weights.shape[0]))
    return _lif_seq(syn, float(layer.d_c), float(layer.d_v), float(layer.v_th), relaxed, float(window))


def decode(decoder: DecoderParams, output_spikes: np.ndarray, t_snn: int):
    """Firing rates per output population, then the per-action weighted sum."""
    t, b, width = output_spikes.shape
    if t != t_snn:
        raise ValueError(f"spike train length {t} != t_snn {t_snn}")
    n_action, pop = decoder.weights.shape
    if width != n_action * pop:
        raise ValueError(f"output width {width} != {n_action} populations of {pop}")
    rates = output_spikes.mean(axis=0).reshape(b, n_action, pop)
    pre = np.einsum("bmd,md->bm", rates, decoder.weights) + decoder.bias
    return pre, rates


def actor_forward(
    actor: SNNActorParams, state: np.ndarray, training: bool = False, relaxed: bool = False
):
    """Normalized state -> action in [-1, 1]^n_action (+ trace when training)."""
    squeeze = np.ndim(state) == 1
    state2 = np.atleast_2d(np.asarray(state, dtype=actor.dtype))
    win = actor.surrogate_window
    v_th_enc = actor.layers[0].v_th
    enc_o, u, enc_p = encode(actor.encoder, state2, actor.t_snn, v_th_enc, relaxed, win)
    trace = ForwardTrace(state=state2, strength=u, enc_o=enc_o, enc_p=enc_p, relaxed=relaxed)
    spikes = enc_o
    for layer in actor.layers:
        spikes, volts = lif_forward(layer, spikes, relaxed, win)
        trace.layer_o.append(spikes)
        trace.layer_v.append(volts)
    pre, rates = decode(actor.decoder, spikes, actor.t_snn)
    actions = np.tanh(pre)
    trace.rates = rates
    trace.actions = actions
    out = actions[0] if squeeze else actions
    return (out, trace) if training else (out, None)


def actor_backward(
    actor: SNNActorParams, trace: ForwardTrace, grad_action: np.ndarray
) -> dict[str, np.ndarray]:
    """Surrogate-gradient BPTT; returns gradients keyed like actor.tensors()."""
    if trace is None or trace.actions is None:
        raise ValueError("actor_backward requires a trace from a training-mode forward")
    win = actor.surrogate_window
    t_snn = actor.t_snn
    b = trace.state.shape[0]
    gact = np.atleast_2d(np.asarray(grad_action, dtype=actor.dtype))

    # decoder (squash then weighted firing rate)
    gpre = gact * (1.0 - trace.actions**2)
    grads: dict[str, np.ndarray] = {
        "dec/w": np.einsum("bm,bmd->md", gpre, trace.rates),
        "dec/b": gpre.sum(axis=0),
    }
    g_rates = gpre[:, :, None] * actor.decoder.weights[None, :, :]
    g_last = np.ascontiguousarray(
        np.broadcast_to(
            g_rates.reshape(b, -1) / t_snn, (t_snn, b, g_rates.size // b)
        )
    )

    # LIF layers, deepest first
    go_seq = g_last
    for k in reversed(range(len(actor.layers))):
        layer = actor.layers[k]
        gc_seq = _lif_backward(
            go_seq,
            trace.layer_o[k],
            trace.layer_v[k],
            float(layer.d_c),
            float(layer.d_v),
            float(layer.v_th),
            float(win),
        )
        width = layer.weights.shape[0]
        gc_flat = gc_seq.reshape(t_snn * b, width)
        x_seq = trace.layer_o[k - 1] if k > 0 else trace.enc_o
        x_flat = x_seq.reshape(t_snn * b, layer.weights.shape[1])
        grads[f"lif{k}/w"] = gc_flat.T @ x_flat
        grads[f"lif{k}/b"] = gc_flat.sum(axis=0)
        go_seq = np.ascontiguousarray(
            (gc_flat @ layer.weights).reshape(t_snn, b, layer.weights.shape[1])
        )

    # encoder IF dynamics, then the Gaussian receptive fields
    g_strength = _encoder_backward(
        go_seq, trace.enc_p, float(actor.layers[0].v_th), float(win)
    )
    enc = actor.encoder
    if enc.trainable:
        n_state, pop = enc.mu.shape
        gu = g_strength.reshape(b, n_state, pop)
        u = trace.strength.reshape(b, n_state, pop)
        diff = trace.state[:, :, None] - enc.mu[None, :, :]
        common = gu * u * diff / enc.sigma[None, :, :] ** 2
        grads["enc/mu"] = common.sum(axis=0)
        grads["enc/sigma"] = (common * diff / enc.sigma[None, :, :]).sum(axis=0)
    else:
        grads["enc/mu"] = np.zeros_like(enc.mu)
        grads["enc/sigma"] = np.zeros_like(enc.sigma)
    return grads


def init_actor(
    rng: np.random.Generator,
    n_state: int = 5,
    n_action: int = 2,
    encoder_dim: int = 20,
    decoder_dim: int = 10,
    hidden_sizes: tuple[int, ...] = (256, 256),
    t_snn: int = 10,
    v_th: float = DEFAULT_V_TH,
    d_c: float = DEFAULT_CURRENT_DECAY,
    d_v: float = DEFAULT_VOLTAGE_DECAY,
    surrogate_window: float = DEFAULT_SURROGATE_WINDOW,
    encoder_trainable: bool = True,
    decoder_scale: float = 0.01,
    dtype=np.float64,
) -> SNNActorParams:
    """Evenly spaced receptive fields over [0, 1], fan-in scaled LIF weights,
    near-zero decoder."""
    if encoder_dim > 1:
        centers = np.linspace(0.0, 1.0, encoder_dim)
        width = 1.0 / (encoder_dim - 1)
    else:
        centers = np.array([0.5])
        width = 0.5
    mu = np.tile(centers, (n_state, 1)).astype(dtype)
    sigma = np.full((n_state, encoder_dim), width, dtype=dtype)
    encoder = EncoderParams(mu=mu, sigma=sigma, trainable=encoder_trainable)

    sizes = [n_state * encoder_dim, *hidden_sizes, n_action * decoder_dim]
    layers = []
    for k in range(len(sizes) - 1):
        fan_in = sizes[k]
        scale = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-scale, scale, size=(sizes[k + 1], fan_in)).astype(dtype)
        bias = np.zeros(sizes[k + 1], dtype=dtype)
        layers.append(LIFLayerParams(weights=w, bias=bias, d_c=d_c, d_v=d_v, v_th=v_th))

    dec_w = rng.uniform(-decoder_scale, decoder_scale, size=(n_action, decoder_dim)).astype(dtype)
    dec_b = np.zeros(n_action, dtype=dtype)
    decoder = DecoderParams(weights=dec_w, bias=dec_b)
    return SNNActorParams(
        encoder=encoder,
        layers=layers,
        decoder=decoder,
        t_snn=t_snn,
        surrogate_window=surrogate_window,
    )
