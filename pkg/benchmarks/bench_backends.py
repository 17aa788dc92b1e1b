"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs every registered hot kernel on a representative workload under both
backends, reporting wall time, speedup, and the worst numeric deviation
between the two implementations.

    python benchmarks/bench_backends.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from carbonrl import _backend, env, snn
from carbonrl import numerics as num


def timeit(fn, repeats: int) -> float:
    fn()  # warm (and JIT-compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def _flatten(x) -> np.ndarray:
    if isinstance(x, (list, tuple)):
        parts = [_flatten(p) for p in x]
        return np.concatenate(parts) if parts else np.empty(0)
    return np.ravel(np.asarray(x, dtype=float))


def rel_dev(a, b) -> float:
    fa, fb = _flatten(a), _flatten(b)
    denom = np.maximum(np.abs(fa), 1e-12)
    return float(np.max(np.abs(fa - fb) / denom)) if fa.size else 0.0


def workloads():
    rng = np.random.default_rng(0)
    cfg = env.EnvConfig()
    pack = cfg.kernel_pack
    state = env.State(m=7.0, omega=5.0, bandwidth=20e6, zeta1=100.0, zeta2=650.0)

    yield "q_gamma (x1000)", lambda: [num._q_gamma(6.0, x) for x in np.linspace(0.0, 30.0, 1000)]
    yield "inv_q_gamma (x200)", lambda: [num._inv_q_gamma(m, 0.9) for m in np.linspace(2.0, 12.0, 200)]
    yield "gamma_tail inv-log2 (x100)", lambda: [
        num._gamma_tail(2, 7.0, 1.5, 0.8, 1e-8, 1e-12, 200) for _ in range(100)
    ]
    yield "env evaluate (x500)", lambda: [
        env._evaluate_kernel(7.0, 5.0, 20e6, 100.0, 650.0, float(k), 12.0, pack)
        for k in range(1, 501)
    ]
    kappas, ps = env.oracle_grids(cfg, 100)
    yield "grid_oracle res100", lambda: env._oracle_kernel(
        state.m, state.omega, state.bandwidth, state.zeta1, state.zeta2, kappas, ps, pack
    )

    strength = rng.uniform(0.0, 1.0, size=(512, 100)).astype(np.float32)
    yield "encoder_seq 512x100 T10", lambda: snn._encoder_seq(strength, 10, 0.999, False, 0.5)
    syn = np.ascontiguousarray(rng.standard_normal((10, 512, 256)).astype(np.float32))
    yield "lif_seq 10x512x256", lambda: snn._lif_seq(syn, 0.5, 0.75, 0.999, False, 0.5)
    o_seq, v_seq = snn._lif_seq_np(syn, 0.5, 0.75, 0.999, False, 0.5)
    go = np.ascontiguousarray(rng.standard_normal((10, 512, 256)).astype(np.float32))
    yield "lif_backward 10x512x256", lambda: snn._lif_backward(go, o_seq, v_seq, 0.5, 0.75, 0.999, 0.5)
    enc_o, enc_p = snn._encoder_seq_np(strength, 10, 0.999, False, 0.5)
    go_enc = np.ascontiguousarray(rng.standard_normal((10, 512, 100)).astype(np.float32))
    yield "encoder_backward 10x512x100", lambda: snn._encoder_backward(go_enc, enc_p, 0.999, 0.5)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    print(f"{'kernel':34} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max rel dev':>12}")
    print("-" * 80)
    for name, fn in workloads():
        times = {}
        results = {}
        for backend in ("numpy", "numba"):
            _backend.use(backend)
            times[backend] = timeit(fn, args.repeats)
            results[backend] = fn()
        dev = rel_dev(results["numpy"], results["numba"])
        print(
            f"{name:34} {times['numpy']*1e3:9.2f}ms {times['numba']*1e3:9.2f}ms "
            f"{times['numpy']/times['numba']:7.1f}x {dev:12.2e}"
        )
    _backend.use("auto")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
