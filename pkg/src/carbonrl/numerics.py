"""Special functions, root finding, adaptive quadrature, and gamma sampling.

Everything downstream (channel statistics, carbon averages, the grid oracle)
is built on the scalar kernels here, so they are written in a numba-compatible
subset and registered with both backends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend

LN2 = math.log(2.0)


class BracketError(ValueError):
    """Root bracket endpoints do not straddle a sign change."""


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its budget before reaching tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and subdivision budget for adaptive quadrature."""

    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.rel_tol > 0.0:
            raise ValueError("rel_tol must be positive")
        if not self.abs_tol > 0.0:
            raise ValueError("abs_tol must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0."""
    if not x > 0.0:
        raise ValueError(f"ln_gamma requires x > 0, got {x}")
    return math.lgamma(x)


# --------------------------------------------------------------------------
# Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
# Series for x < a + 1, Lentz continued fraction otherwise.
# --------------------------------------------------------------------------


def _q_gamma_raw(a, x):
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        # lower-tail series; Q = 1 - P
        ap = a
        term = 1.0 / a
        total = term
        for _ in range(1000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        p = total * math.exp(-x + a * math.log(x) - math.lgamma(a))
        return 1.0 - p
    # upper-tail continued fraction (modified Lentz)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1e300
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


_q_gamma_jit = _backend.njit(_q_gamma_raw)
_q_gamma = _backend.kernel("q_gamma", _q_gamma_raw)


def reg_upper_gamma(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x), in [0, 1]."""
    if not a > 0.0:
        raise ValueError(f"reg_upper_gamma requires a > 0, got {a}")
    if x < 0.0:
        raise ValueError(f"reg_upper_gamma requires x >= 0, got {x}")
    return _q_gamma(float(a), float(x))


# --------------------------------------------------------------------------
# Inverse of Q(m, .): solve Q(m, u) = q for u. Safeguarded Newton on a
# bracket; dQ/du = -u^(m-1) e^(-u) / Gamma(m).
# --------------------------------------------------------------------------


def _inv_q_gamma_raw(m, q):
    if q >= 1.0:
        return 0.0
    lgm = math.lgamma(m)
    lo = 0.0
    hi = m + 10.0 * math.sqrt(m) + 10.0
    for _ in range(400):
        if _q_gamma_jit(m, hi) <= q:
            break
        lo = hi
        hi *= 2.0
    u = 0.5 * (lo + hi)
    for _ in range(200):
        f = _q_gamma_jit(m, u) - q
        if abs(f) <= 1e-13:
            return u
        if f > 0.0:
            lo = u
        else:
            hi = u
        dq = -math.exp((m - 1.0) * math.log(u) - u - lgm)
        step_ok = dq != 0.0
        if step_ok:
            un = u - f / dq
            if un <= lo or un >= hi:
                step_ok = False
        if step_ok:
            u = un
        else:
            u = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, u):
            return u
    return u


# numba callers use the jitted symbol directly; it is the interpreted source
# when numba is absent.
_inv_q_gamma_jit = _backend.njit(_inv_q_gamma_raw)
_inv_q_gamma = _backend.kernel("inv_q_gamma", _inv_q_gamma_raw)


def inv_reg_upper_gamma(m: float, q: float) -> float:
    """Solve Q(m, u) = q for u >= 0, with 0 < q <= 1."""
    if not m > 0.0:
        raise ValueError(f"inv_reg_upper_gamma requires m > 0, got {m}")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"inv_reg_upper_gamma requires q in (0, 1], got {q}")
    return _inv_q_gamma(float(m), float(q))


# --------------------------------------------------------------------------
# Root finding: false position with the Illinois modification and a
# bisection safeguard. Guaranteed to converge on a sign-changing bracket.
# --------------------------------------------------------------------------


def find_root(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of a continuous monotone f on [lo, hi].

    Stops when |f(x)| <= tol or the bracket width drops below
    tol * max(1, |x|).
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    a, b = float(lo), float(hi)
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa < 0.0) == (fb < 0.0):
        raise BracketError(f"f({lo}) = {fa} and f({hi}) = {fb} have the same sign")
    side = 0
    x = 0.5 * (a + b)
    for _ in range(500):
        denom = fb - fa
        x = 0.5 * (a + b) if denom == 0.0 else (a * fb - b * fa) / denom
        if not a < x < b:
            x = 0.5 * (a + b)
        fx = f(x)
        if abs(fx) <= tol or (b - a) <= tol * max(1.0, abs(x)):
            return x
        if (fa < 0.0) == (fx < 0.0):
            a, fa = x, fx
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            b, fb = x, fx
            if side == 1:
                fa *= 0.5
            side = 1
    raise ConvergenceError("find_root did not converge in 500 iterations")


# --------------------------------------------------------------------------
# Gauss-Kronrod 7-15 pair. Gauss-7 nodes are the odd-indexed Kronrod nodes.
# --------------------------------------------------------------------------

_XGK = np.array(
    [
        -0.991455371120813,
        -0.949107912342759,
        -0.864864423359769,
        -0.741531185599394,
        -0.586087235467691,
        -0.405845151377397,
        -0.207784955007898,
        0.0,
        0.207784955007898,
        0.405845151377397,
        0.586087235467691,
        0.741531185599394,
        0.864864423359769,
        0.949107912342759,
        0.991455371120813,
    ]
)
_WGK = np.array(
    [
        0.022935322010529,
        0.063092092629979,
        0.104790010322250,
        0.140653259715525,
        0.169004726639267,
        0.190350578064785,
        0.204432940075298,
        0.209482141084728,
        0.204432940075298,
        0.190350578064785,
        0.169004726639267,
        0.140653259715525,
        0.104790010322250,
        0.063092092629979,
        0.022935322010529,
    ]
)
_WG7 = np.array(
    [
        0.129484966168870,
        0.279705391489277,
        0.381830050505119,
        0.417959183673469,
        0.381830050505119,
        0.279705391489277,
        0.129484966168870,
    ]
)


def integrate_semi_infinite(g, lower: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Integral of g over [lower, inf) for integrands with decaying tails.

    Maps the semi-infinite interval to t in [0, 1) via x = lower + t/(1-t) and
    refines adaptively with a Gauss-Kronrod 7-15 pair, splitting every panel
    whose error estimate exceeds its share of the budget. ``g`` must accept
    numpy arrays elementwise.
    """
    lower = float(lower)

    def panel_eval(a, b):
        # a, b: (n,) panel bounds in t-space
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        t = mid[:, None] + half[:, None] * _XGK[None, :]
        x = lower + t / (1.0 - t)
        jac = 1.0 / ((1.0 - t) * (1.0 - t))
        fx = np.asarray(g(x), dtype=float) * jac
        vals = half * (fx @ _WGK)
        g7 = half * (fx[:, 1::2] @ _WG7)
        errs = np.abs(vals - g7)
        return vals, errs

    a = np.array([0.0])
    b = np.array([1.0])
    vals, errs = panel_eval(a, b)
    splits = 0
    for _ in range(spec.max_subdivisions + 2):
        total = float(vals.sum())
        tol = max(spec.abs_tol, spec.rel_tol * abs(total))
        if float(errs.sum()) <= tol:
            return total
        bad = errs > tol / (2.0 * len(a))
        n_bad = int(bad.sum())
        if splits + n_bad > spec.max_subdivisions:
            raise ConvergenceError(
                f"quadrature needs more than {spec.max_subdivisions} subdivisions"
            )
        splits += n_bad
        mid = 0.5 * (a[bad] + b[bad])
        new_a = np.concatenate([a[~bad], a[bad], mid])
        new_b = np.concatenate([b[~bad], mid, b[bad]])
        keep_vals, keep_errs = vals[~bad], errs[~bad]
        split_vals, split_errs = panel_eval(new_a[len(keep_vals):], new_b[len(keep_vals):])
        a, b = new_a, new_b
        vals = np.concatenate([keep_vals, split_vals])
        errs = np.concatenate([keep_errs, split_errs])
    raise ConvergenceError("quadrature did not converge")  # pragma: no cover


# --------------------------------------------------------------------------
# Tail expectations of a Gamma(m, theta) variable: the scalar kernel behind
# the channel's outage-conditioned averages. Computes
#     integral_{lower}^{inf} K(x) x^(m-1) e^(-x/theta) / (Gamma(m) theta^m) dx
# with K selected by ``kind``: 0 -> 1, 1 -> x, 2 -> 1/log2(1+x).
# Returns nan when the subdivision budget is exhausted.
# --------------------------------------------------------------------------

KIND_ONE = 0
KIND_IDENTITY = 1
KIND_INV_LOG2 = 2


def _gamma_tail_raw(kind, m, theta, lower, rel_tol, abs_tol, max_subdiv):
    lgm = math.lgamma(m)
    logth = math.log(theta)
    ln2 = 0.6931471805599453

    def panel(lo, hi):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (lo + hi)
        acc_k = 0.0
        acc_g = 0.0
        for j in range(15):
            t = mid + half * _XGK[j]
            x = lower + t / (1.0 - t)
            logw = (m - 1.0) * math.log(x) - x / theta - lgm - m * logth
            if logw < -700.0:
                val = 0.0
            else:
                jac = 1.0 / ((1.0 - t) * (1.0 - t))
                if kind == 0:
                    kv = 1.0
                elif kind == 1:
                    kv = x
                else:
                    kv = ln2 / math.log1p(x)
                val = kv * math.exp(logw) * jac
            acc_k += _WGK[j] * val
            if j % 2 == 1:
                acc_g += _WG7[(j - 1) // 2] * val
        return half * acc_k, abs(half * (acc_k - acc_g))

    cap = 2 * max_subdiv + 8
    pa = np.empty(cap)
    pb = np.empty(cap)
    pv = np.empty(cap)
    pe = np.empty(cap)
    pa[0] = 0.0
    pb[0] = 1.0
    pv[0], pe[0] = panel(0.0, 1.0)
    n = 1
    splits = 0
    for _ in range(max_subdiv + 2):
        total = 0.0
        err = 0.0
        for i in range(n):
            total += pv[i]
            err += pe[i]
        tol = max(abs_tol, rel_tol * abs(total))
        if err <= tol:
            return total
        thresh = tol / (2.0 * n)
        n0 = n
        for i in range(n0):
            if pe[i] > thresh:
                splits += 1
                if splits > max_subdiv or n >= cap:
                    return math.nan
                mid = 0.5 * (pa[i] + pb[i])
                vl, el = panel(pa[i], mid)
                vr, er = panel(mid, pb[i])
                pa[n] = mid
                pb[n] = pb[i]
                pv[n] = vr
                pe[n] = er
                n += 1
                pb[i] = mid
                pv[i] = vl
                pe[i] = el
    return math.nan


_gamma_tail_jit = _backend.njit(_gamma_tail_raw)
_gamma_tail = _backend.kernel("gamma_tail", _gamma_tail_raw)


def gamma_tail_expectation(
    kind: int, m: float, theta: float, lower: float, spec: QuadratureSpec = QuadratureSpec()
) -> float:
    """E[K(X) 1{X >= lower}] for X ~ Gamma(m, theta); K selected by ``kind``."""
    out = _gamma_tail(
        int(kind),
        float(m),
        float(theta),
        float(lower),
        spec.rel_tol,
        spec.abs_tol,
        spec.max_subdivisions,
    )
    if math.isnan(out):
        raise ConvergenceError(
            f"gamma tail quadrature exceeded {spec.max_subdivisions} subdivisions"
        )
    return out


def sample_gamma(shape: float, scale: float, rng: np.random.Generator) -> float:
    """One draw from Gamma(shape, scale)."""
    if not shape > 0.0:
        raise ValueError(f"sample_gamma requires shape > 0, got {shape}")
    if not scale > 0.0:
        raise ValueError(f"sample_gamma requires scale > 0, got {scale}")
    return float(rng.gamma(shape, scale))


def sample_gamma_batch(
    shape: float, scale: float, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized Gamma(shape, scale) draws (Monte-Carlo oracle helper)."""
    if not shape > 0.0 or not scale > 0.0:
        raise ValueError("sample_gamma_batch requires positive shape and scale")
    return rng.gamma(shape, scale, size=size)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator; distinct streams never collide."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))
