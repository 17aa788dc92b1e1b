"""Operator command line: train, eval, oracle, sweep, channel-check.

Every run writes a frozen copy of its fully resolved configuration next to its
outputs, and all output files are deterministic functions of (config, seed);
wall-clock timing goes to stdout only.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import channel as ch
from . import env as env_mod
from . import rl
from .carbon import avg_trans_time, comm_carbon_fixed_rate
from .checkpoint import CheckpointError, load_tensors, restore_into, save_tensors
from .config import ConfigError, RunConfig
from .numerics import make_rng

METRICS_HEADER = "step,episode,reward,carbon_mg,kappa,p_trans,feasible,critic_loss,actor_obj"

SWEEP_AXES = ("hidden_size", "t_snn", "encoder_dim", "decoder_dim", "outage")


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.10g}"


def write_metrics_csv(path: Path, records: list[rl.StepRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(METRICS_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.step},{r.episode},{_fmt(r.reward)},{_fmt(r.carbon_mg)},"
                f"{r.kappa},{_fmt(r.p_trans)},{int(r.feasible)},"
                f"{_fmt(r.critic_loss)},{_fmt(r.actor_obj)}\n"
            )


def window_stats(records: list[rl.StepRecord], frac: float = 0.1) -> dict:
    n = max(1, int(len(records) * frac))
    tail = records[-n:]
    feas = [r for r in tail if r.feasible]
    return {
        "window_steps": n,
        "mean_reward": float(np.mean([r.reward for r in tail])),
        "mean_carbon_mg": float(np.mean([r.carbon_mg for r in feas])) if feas else None,
        "feasibility": len(feas) / n,
    }


def eval_states(env_cfg, eval_seed: int, n: int) -> list[env_mod.State]:
    rng = make_rng(eval_seed)
    return [env_mod.sample_state(env_cfg.ranges, rng) for _ in range(n)]


def _policy_meta(cfg: RunConfig, policy_kind: str, seed: int, step: int) -> dict:
    return {
        "policy": policy_kind,
        "actor_config": dataclasses.asdict(cfg.actor_config()),
        "critic_hidden": list(cfg.trainer_config().critic_hidden),
        "dtype": cfg.trainer_config().dtype,
        "seed": seed,
        "step": step,
    }


def save_policy_checkpoint(path: Path, policy, cfg: RunConfig, seed: int, step: int) -> None:
    save_tensors(path, policy.tensors(), _policy_meta(cfg, policy.kind, seed, step))


def load_policy_checkpoint(path: Path, cfg: RunConfig):
    """Rebuild the saved actor; errors when the config disagrees with it."""
    tensors, meta = load_tensors(path)
    kind = meta.get("policy")
    if kind not in ("snn", "mlp"):
        raise CheckpointError(f"checkpoint policy {kind!r} is not evaluable")
    saved = dict(meta.get("actor_config", {}))
    saved["hidden_sizes"] = tuple(saved.get("hidden_sizes", ()))
    current = dataclasses.asdict(cfg.actor_config())
    current["hidden_sizes"] = tuple(current["hidden_sizes"])
    if saved != current:
        diffs = {k for k in current if saved.get(k) != current[k]}
        raise ConfigError(
            f"checkpoint/config mismatch on actor fields {sorted(diffs)}; "
            "evaluate with the configuration the checkpoint was trained under"
        )
    dtype = np.float32 if meta.get("dtype", "float32") == "float32" else np.float64
    policy = rl.make_policy(kind, cfg.actor_config(), make_rng(0), dtype)
    restore_into(tensors, policy.tensors())
    return policy, meta


def deterministic_evaluation(policy, env_cfg, eval_seed: int, n_states: int) -> dict:
    states = eval_states(env_cfg, eval_seed, n_states)
    outcome = rl.evaluate_policy(rl.policy_actor_fn(policy), states, env_cfg)
    return {
        "eval_seed": eval_seed,
        "n_states": n_states,
        "mean_reward": outcome.mean_reward,
        "mean_carbon_mg": outcome.mean_carbon_mg,
        "feasibility_rate": outcome.feasibility_rate,
    }


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    cfg.validate()
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out)
    env_cfg = cfg.env_config()
    trainer_cfg = cfg.trainer_config()
    actor_cfg = cfg.actor_config()
    policy_kind = str(cfg.get("run", "policy"))
    seed = int(cfg.get("run", "seed"))
    steps = args.steps if args.steps else trainer_cfg.total_steps
    checkpoint_every = int(cfg.get("run", "checkpoint_every"))

    def hook(step: int, ts):
        if ts is not None and checkpoint_every > 0 and step % checkpoint_every == 0 and step < steps:
            save_policy_checkpoint(out / f"checkpoint_step{step}.npz", ts.policy, cfg, seed, step)

    t0 = time.perf_counter()
    result = rl.train(
        env_cfg, trainer_cfg, actor_cfg, policy=policy_kind, seed=seed,
        total_steps=steps, hook=hook,
    )
    elapsed = time.perf_counter() - t0
    write_metrics_csv(out / "metrics.csv", result.records)
    summary = {
        "policy": policy_kind,
        "seed": seed,
        "steps": steps,
        "last_window": window_stats(result.records),
    }
    if result.trainer is not None:
        save_policy_checkpoint(out / "checkpoint_final.npz", result.trainer.policy, cfg, seed, steps)
        summary["final_eval"] = deterministic_evaluation(
            result.trainer.policy,
            env_cfg,
            int(cfg.get("run", "eval_seed")),
            int(cfg.get("run", "n_eval_states")),
        )
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"trained {policy_kind} for {steps} steps in {elapsed:.1f}s -> {out}")
    print(json.dumps(summary["last_window"], sort_keys=True))
    return 0


# --------------------------------------------------------------------------
# eval
# --------------------------------------------------------------------------


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    cfg.validate()
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out)
    env_cfg = cfg.env_config()
    policy, meta = load_policy_checkpoint(Path(args.checkpoint), cfg)
    n_states = args.n_states or int(cfg.get("run", "n_eval_states"))
    eval_seed = int(cfg.get("run", "eval_seed"))
    summary = deterministic_evaluation(policy, env_cfg, eval_seed, n_states)
    summary["checkpoint"] = str(args.checkpoint)
    summary["policy"] = meta["policy"]
    if args.against_oracle:
        resolution = int(cfg.get("run", "oracle_resolution"))
        states = eval_states(env_cfg, eval_seed, n_states)
        outcome = rl.evaluate_policy(rl.policy_actor_fn(policy), states, env_cfg)
        oracle_carbon = np.array(
            [-env_mod.grid_oracle(s, resolution, env_cfg)[1] for s in states]
        ) / env_cfg.reward_scale
        mask = outcome.feasible
        summary["oracle_resolution"] = resolution
        summary["oracle_mean_carbon_mg"] = float(oracle_carbon.mean() * 1e3)
        if mask.any():
            ratio = float(outcome.carbon_g[mask].mean() / oracle_carbon[mask].mean())
            summary["carbon_ratio_vs_oracle"] = ratio
        else:
            summary["carbon_ratio_vs_oracle"] = None
    (out / "eval_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


# --------------------------------------------------------------------------
# oracle
# --------------------------------------------------------------------------


def cmd_oracle(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    cfg.validate()
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out)
    env_cfg = cfg.env_config()
    resolution = args.resolution or int(cfg.get("run", "oracle_resolution"))
    n_states = args.n_states or int(cfg.get("run", "n_eval_states"))
    states = eval_states(env_cfg, int(cfg.get("run", "eval_seed")), n_states)
    t0 = time.perf_counter()
    path = out / "oracle.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,m,omega,bandwidth_hz,zeta1_g_per_kwh,zeta2_g_per_kwh,kappa,p_trans,reward\n")
        for i, s in enumerate(states):
            action, best = env_mod.grid_oracle(s, resolution, env_cfg)
            fh.write(
                f"{i},{_fmt(s.m)},{_fmt(s.omega)},{_fmt(s.bandwidth)},{_fmt(s.zeta1)},"
                f"{_fmt(s.zeta2)},{action.kappa},{_fmt(action.p_trans)},{_fmt(best)}\n"
            )
    print(f"oracle over {n_states} states at resolution {resolution} "
          f"in {time.perf_counter() - t0:.1f}s -> {path}")
    return 0


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------


def _apply_sweep_value(cfg: RunConfig, axis: str, value: float) -> None:
    if axis == "hidden_size":
        cfg.set("snn", "hidden_sizes", (int(value), int(value)))
    elif axis == "t_snn":
        cfg.set("snn", "t_snn", int(value))
    elif axis == "encoder_dim":
        cfg.set("snn", "encoder_dim", int(value))
    elif axis == "decoder_dim":
        cfg.set("snn", "decoder_dim", int(value))
    elif axis == "outage":
        cfg.set("channel", "epsilon", float(value))
    else:  # pragma: no cover - guarded by argparse choices
        raise ConfigError(f"unknown sweep axis {axis!r}")


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    cfg.validate()
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values list: {exc}") from exc
    if not values:
        raise ConfigError("--values must name at least one sweep point")
    seeds = tuple(cfg.get("sweep", "seeds"))
    steps = args.steps or int(cfg.get("sweep", "steps"))
    early_window = min(3000, steps)
    rows = []
    t0 = time.perf_counter()
    for value in values:
        run_cfg = RunConfig({s: dict(kv) for s, kv in cfg.values.items()})
        _apply_sweep_value(run_cfg, args.axis, value)
        env_cfg = run_cfg.env_config()
        trainer_cfg = run_cfg.trainer_config()
        actor_cfg = run_cfg.actor_config()
        for seed in seeds:
            result = rl.train(
                env_cfg, trainer_cfg, actor_cfg, policy="snn", seed=int(seed), total_steps=steps
            )
            stats = window_stats(result.records)
            early = float(np.mean([r.reward for r in result.records[:early_window]]))
            rows.append(
                {
                    "axis": args.axis,
                    "value": value,
                    "seed": int(seed),
                    "steps": steps,
                    "early_mean_reward": early,
                    "mean_final_reward": stats["mean_reward"],
                    "mean_final_carbon_mg": stats["mean_carbon_mg"],
                    "final_feasibility": stats["feasibility"],
                }
            )
            print(
                f"sweep {args.axis}={value:g} seed={seed}: early={early:.2f} "
                f"final={stats['mean_reward']:.2f}"
            )
    path = out / "sweep.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "axis", "value", "seed", "steps", "early_mean_reward",
                "mean_final_reward", "mean_final_carbon_mg", "final_feasibility",
            ],
            lineterminator="\n",
        )
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in row.items()})
    print(f"sweep complete in {time.perf_counter() - t0:.1f}s -> {path}")
    return 0


# --------------------------------------------------------------------------
# channel-check
# --------------------------------------------------------------------------


def channel_check(env_cfg, draws: int, samples: int, seed: int) -> dict:
    """Quadrature vs conditional Monte-Carlo for the averaged link quantities.

    The last draw runs at epsilon ~ 0 to exercise the unconditional limit.
    """
    rng = make_rng(seed)
    results = []
    for i in range(draws):
        state = env_mod.sample_state(env_cfg.ranges, rng)
        kappa = float(rng.integers(1, 1001))
        p_trans = float(rng.uniform(env_cfg.box.p_min, env_cfg.box.p_max))
        eps = 1e-6 if i == draws - 1 else env_cfg.epsilon
        chp = ch.ChannelParams(
            m=state.m, omega=state.omega, noise_var=env_cfg.noise_var, bandwidth=state.bandwidth
        )
        budget = ch.make_link_budget(chp, p_trans, eps)
        z2 = state.zeta2 / 3.6e6
        t_quad = avg_trans_time(env_cfg.comm, chp, budget, kappa, env_cfg.quad)
        gammas = ch.sample_snr_conditional_batch(chp, budget, samples, rng)
        t_mc = kappa * env_cfg.comm.beta / chp.bandwidth * float(
            (1.0 / np.log2(1.0 + gammas)).mean()
        )
        fixed = kappa * env_cfg.comm.beta * comm_carbon_fixed_rate(env_cfg.comm, z2) / (1.0 - eps)
        c_quad = z2 * p_trans * t_quad + fixed
        c_mc = z2 * p_trans * t_mc + fixed
        results.append(
            {
                "m": state.m,
                "omega": state.omega,
                "bandwidth_hz": state.bandwidth,
                "kappa": kappa,
                "p_trans": p_trans,
                "epsilon": eps,
                "t_trans_quad_s": t_quad,
                "t_trans_mc_s": t_mc,
                "t_rel_err": abs(t_quad - t_mc) / t_mc,
                "carbon_quad_g": c_quad,
                "carbon_mc_g": c_mc,
                "carbon_rel_err": abs(c_quad - c_mc) / c_mc,
            }
        )
    return {
        "draws": draws,
        "samples": samples,
        "seed": seed,
        "max_t_rel_err": max(r["t_rel_err"] for r in results),
        "max_carbon_rel_err": max(r["carbon_rel_err"] for r in results),
        "results": results,
    }


def cmd_channel_check(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    cfg.validate()
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out)
    t0 = time.perf_counter()
    report = channel_check(
        cfg.env_config(), args.draws, args.samples, int(cfg.get("run", "seed"))
    )
    (out / "channel_check.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    worst = max(report["max_t_rel_err"], report["max_carbon_rel_err"])
    print(
        f"channel check: {report['draws']} draws, max rel err "
        f"t_trans={report['max_t_rel_err']:.2e} carbon={report['max_carbon_rel_err']:.2e} "
        f"({time.perf_counter() - t0:.1f}s)"
    )
    if worst > 0.01:
        print("FAIL: relative error above 1%", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------------------
# argument plumbing
# --------------------------------------------------------------------------


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.set("run", "seed", args.seed)
    if getattr(args, "policy", None):
        cfg.set("run", "policy", args.policy)
    if getattr(args, "out_dir", None):
        cfg.set("run", "out_dir", args.out_dir)
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="INI configuration file")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--out-dir", type=str, default=None, help="override run.out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carbonrl",
        description="Carbon-minimal wireless LLM serving: simulate, train, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy and write metrics/checkpoints")
    _add_common(p)
    p.add_argument("--policy", choices=("snn", "mlp", "random"), default=None)
    p.add_argument("--steps", type=int, default=None, help="override total training steps")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on held-out states")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, type=str)
    p.add_argument("--n-states", type=int, default=None)
    p.add_argument("--against-oracle", action="store_true",
                   help="also report the grid-oracle carbon ratio")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("oracle", help="per-state brute-force optima over the action box")
    _add_common(p)
    p.add_argument("--n-states", type=int, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("sweep", help="train across one hyperparameter axis")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, type=str, help="comma-separated sweep values")
    p.add_argument("--steps", type=int, default=None, help="override sweep.steps")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("channel-check", help="quadrature vs Monte-Carlo link averages")
    _add_common(p)
    p.add_argument("--draws", type=int, default=20)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.set_defaults(fn=cmd_channel_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except rl.TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
