"""Run configuration: INI files with strict, unit-annotated keys.

Every key has a typed default (the simulation-parameter table values where
those exist, the documented design defaults otherwise). Unknown sections or
keys are hard errors. The fully resolved configuration can be serialized back
out, which every CLI run does next to its outputs.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .carbon import (
    SECONDS_PER_YEAR,
    CommProfile,
    ConstraintSet,
    InferenceProfile,
    QoEModel,
)
from .env import ActionBox, EnvConfig, Range, StateRanges
from .numerics import QuadratureSpec
from .rl import SNNActorConfig, TrainerConfig

OUT_ROOT_ENV_VAR = "CARBONRL_OUT_ROOT"


class ConfigError(ValueError):
    """Malformed configuration file, unknown key, or bad value."""


@dataclass(frozen=True)
class Field:
    kind: str  # "int" | "float" | "bool" | "str" | "pair" | "ints"
    default: Any
    doc: str


SCHEMA: dict[str, dict[str, Field]] = {
    "run": {
        "seed": Field("int", 1, "training seed"),
        "out_dir": Field("str", "runs/run", "output directory (relative paths resolve under $CARBONRL_OUT_ROOT)"),
        "policy": Field("str", "snn", "actor family: snn | mlp | random"),
        "eval_seed": Field("int", 9999, "seed for held-out evaluation states"),
        "n_eval_states": Field("int", 100, "held-out states for the final evaluation"),
        "oracle_resolution": Field("int", 400, "grid oracle resolution per action axis"),
        "checkpoint_every": Field("int", 10000, "steps between periodic checkpoints"),
        "reward_scale": Field("float", 1000.0, "carbon-to-reward scale (1000 = milligrams)"),
    },
    "channel": {
        "noise_var_w": Field("float", 1.0, "receiver noise variance sigma^2 [W]"),
        "epsilon": Field("float", 0.1, "outage probability design threshold"),
    },
    "state_ranges": {
        "m": Field("pair", (2.0, 12.0), "Nakagami shape range"),
        "omega": Field("pair", (0.1, 10.0), "spread parameter range"),
        "bandwidth_mhz": Field("pair", (15.0, 25.0), "channel bandwidth range [MHz]"),
        "zeta1_g_per_kwh": Field("pair", (50.0, 150.0), "data-center carbon intensity [gCO2/kWh]"),
        "zeta2_g_per_kwh": Field("pair", (400.0, 900.0), "BS-local carbon intensity [gCO2/kWh]"),
    },
    "action": {
        "kappa_min": Field("float", 1.0, "minimum output word count"),
        "kappa_max": Field("float", 1000.0, "maximum output word count"),
        "p_min_w": Field("float", 0.1, "action-box lower transmit power [W]"),
        "p_max_w": Field("float", 60.0, "transmit power cap [W]"),
    },
    "inference": {
        "n_gpu": Field("int", 8, "GPUs serving one request"),
        "p_gpu_w": Field("float", 428.0, "thermal design power per GPU [W]"),
        "pue": Field("float", 1.58, "data-center power usage effectiveness"),
        "psi_oi_tflop": Field("float", 0.35, "TFLOP per inference operation"),
        "psi_iw": Field("float", 5.0, "inference operations per output word"),
        "omega_pf_tflops": Field("float", 156.0, "peak TFLOP/s per GPU"),
        "alpha": Field("float", 0.8, "inference acceleration exponent, in (0, 1]"),
        "gpu_embodied_kgco2": Field("float", 318.0, "embodied carbon per GPU [kgCO2]"),
        "dc_lifespan_years": Field("float", 3.0, "data-center lifespan [365-day years]"),
    },
    "comm": {
        "beta_bits_per_word": Field("float", 50.0, "bits per output word"),
        "p_fixed_w": Field("float", 600.0, "BS fixed power (BBU + cooling) [W]"),
        "k_rate_mbps": Field("float", 1000.0, "total BS throughput [Mbit/s]"),
        "bs_lifespan_years": Field("float", 10.0, "base-station lifespan [365-day years]"),
        "bs_embodied_kgco2": Field("float", 6500.0, "total BS embodied carbon [kgCO2]"),
    },
    "qoe": {
        "a": Field("float", 2.0, "QoE shape exponent"),
        "b": Field("float", 40.0, "QoE scale [words]; peak at a*b"),
        "q_max": Field("float", 10.0, "peak QoE score"),
    },
    "constraints": {
        "q_th": Field("float", 7.0, "minimum QoE score"),
        "e_th": Field("float", 1600.0, "energy budget [abstract units]"),
        "rho1": Field("float", 1.0, "energy per word"),
        "rho2": Field("float", 10.0, "energy per transmit watt"),
        "t_infer_th_s": Field("float", 0.3, "inference time limit [s]"),
        "t_trans_th_ms": Field("float", 0.5, "average transmission time limit [ms]"),
    },
    "trainer": {
        "lr_actor": Field("float", 1e-3, "actor Adam learning rate"),
        "lr_critic": Field("float", 1e-3, "critic Adam learning rate"),
        "discount": Field("float", 0.99, "reward discount factor"),
        "tau": Field("float", 0.005, "target-network soft update rate"),
        "batch_size": Field("int", 512, "replay mini-batch size"),
        "noise_sigma": Field("float", 0.1, "exploration noise std (normalized action units)"),
        "warmup_steps": Field("int", 1000, "uniform-random steps before updates"),
        "episodes": Field("int", 300, "training episodes"),
        "steps_per_episode": Field("int", 100, "steps per episode"),
        "buffer_capacity": Field("int", 1_000_000, "replay buffer capacity"),
        "critic_hidden": Field("ints", (256, 256), "critic hidden layer widths"),
        "dtype": Field("str", "float32", "network dtype: float32 | float64"),
    },
    "snn": {
        "hidden_sizes": Field("ints", (256, 256), "spiking hidden layer widths"),
        "t_snn": Field("int", 10, "spike timesteps per forward pass"),
        "encoder_dim": Field("int", 20, "neurons per input population"),
        "decoder_dim": Field("int", 10, "neurons per output population"),
        "v_th": Field("float", 0.999, "firing threshold potential"),
        "current_decay": Field("float", 0.5, "LIF current decay d_c"),
        "voltage_decay": Field("float", 0.75, "LIF voltage decay d_v"),
        "surrogate_window": Field("float", 0.5, "rectangular pseudo-gradient window"),
        "encoder_trainable": Field("bool", True, "train receptive-field centers/widths"),
    },
    "quadrature": {
        "rel_tol": Field("float", 1e-8, "relative tolerance"),
        "abs_tol": Field("float", 1e-12, "absolute tolerance"),
        "max_subdivisions": Field("int", 200, "adaptive subdivision budget"),
    },
    "sweep": {
        "seeds": Field("ints", (1, 2, 3), "seeds per sweep point"),
        "steps": Field("int", 3000, "training steps per sweep run"),
    },
}


def _parse_value(section: str, key: str, raw: str) -> Any:
    field = SCHEMA[section][key]
    raw = raw.strip()
    try:
        if field.kind == "int":
            return int(raw)
        if field.kind == "float":
            return float(raw)
        if field.kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if field.kind == "pair":
            parts = [float(p) for p in raw.split(",")]
            if len(parts) != 2:
                raise ValueError("expected 'lo, hi'")
            return tuple(parts)
        if field.kind == "ints":
            if not raw:
                return ()
            return tuple(int(p) for p in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def _format_value(field: Field, value: Any) -> str:
    if field.kind in ("pair", "ints"):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if field.kind == "float":
        return repr(float(value))
    if field.kind == "bool":
        return "true" if value else "false"
    return str(value)


@dataclass
class RunConfig:
    """Fully resolved configuration; values keyed by (section, key)."""

    values: dict[str, dict[str, Any]]

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({s: {k: f.default for k, f in keys.items()} for s, keys in SCHEMA.items()})

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        cfg = cls.defaults()
        if path is None:
            return cfg
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                cfg.values[section][key] = _parse_value(section, key, raw)
        return cfg

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    def set(self, section: str, key: str, value: Any) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown key [{section}] {key}")
        self.values[section][key] = value

    # ---- typed sub-configurations -------------------------------------

    def env_config(self) -> EnvConfig:
        v = self.values
        sr = v["state_ranges"]
        bw = sr["bandwidth_mhz"]
        try:
            return EnvConfig(
                ranges=StateRanges(
                    m=Range(*sr["m"]),
                    omega=Range(*sr["omega"]),
                    bandwidth=Range(bw[0] * 1e6, bw[1] * 1e6),
                    zeta1=Range(*sr["zeta1_g_per_kwh"]),
                    zeta2=Range(*sr["zeta2_g_per_kwh"]),
                ),
                box=ActionBox(
                    kappa_min=v["action"]["kappa_min"],
                    kappa_max=v["action"]["kappa_max"],
                    p_min=v["action"]["p_min_w"],
                    p_max=v["action"]["p_max_w"],
                ),
                infer=InferenceProfile(
                    n_gpu=v["inference"]["n_gpu"],
                    p_gpu=v["inference"]["p_gpu_w"],
                    pue=v["inference"]["pue"],
                    psi_oi=v["inference"]["psi_oi_tflop"] * 1e12,
                    psi_iw=v["inference"]["psi_iw"],
                    omega_pf=v["inference"]["omega_pf_tflops"] * 1e12,
                    alpha=v["inference"]["alpha"],
                    c_gpu_emb=v["inference"]["gpu_embodied_kgco2"] * 1e3,
                    t_dc=v["inference"]["dc_lifespan_years"] * SECONDS_PER_YEAR,
                ),
                comm=CommProfile(
                    beta=v["comm"]["beta_bits_per_word"],
                    p_fixed=v["comm"]["p_fixed_w"],
                    k_rate=v["comm"]["k_rate_mbps"] * 1e6,
                    t_bs=v["comm"]["bs_lifespan_years"] * SECONDS_PER_YEAR,
                    c_bs_emb=v["comm"]["bs_embodied_kgco2"] * 1e3,
                ),
                qoe=QoEModel(a=v["qoe"]["a"], b=v["qoe"]["b"], q_max=v["qoe"]["q_max"]),
                constraints=ConstraintSet(
                    q_th=v["constraints"]["q_th"],
                    e_th=v["constraints"]["e_th"],
                    rho1=v["constraints"]["rho1"],
                    rho2=v["constraints"]["rho2"],
                    t_infer_th=v["constraints"]["t_infer_th_s"],
                    t_trans_th=v["constraints"]["t_trans_th_ms"] * 1e-3,
                    p_trans_max=v["action"]["p_max_w"],
                ),
                noise_var=v["channel"]["noise_var_w"],
                epsilon=v["channel"]["epsilon"],
                quad=QuadratureSpec(
                    rel_tol=v["quadrature"]["rel_tol"],
                    abs_tol=v["quadrature"]["abs_tol"],
                    max_subdivisions=v["quadrature"]["max_subdivisions"],
                ),
                reward_scale=v["run"]["reward_scale"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def trainer_config(self) -> TrainerConfig:
        t = self.values["trainer"]
        try:
            return TrainerConfig(
                lr_actor=t["lr_actor"],
                lr_critic=t["lr_critic"],
                discount=t["discount"],
                tau=t["tau"],
                batch_size=t["batch_size"],
                noise_sigma=t["noise_sigma"],
                warmup_steps=t["warmup_steps"],
                episodes=t["episodes"],
                steps_per_episode=t["steps_per_episode"],
                buffer_capacity=t["buffer_capacity"],
                critic_hidden=tuple(t["critic_hidden"]),
                dtype=t["dtype"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def actor_config(self) -> SNNActorConfig:
        s = self.values["snn"]
        return SNNActorConfig(
            hidden_sizes=tuple(s["hidden_sizes"]),
            t_snn=s["t_snn"],
            encoder_dim=s["encoder_dim"],
            decoder_dim=s["decoder_dim"],
            v_th=s["v_th"],
            current_decay=s["current_decay"],
            voltage_decay=s["voltage_decay"],
            surrogate_window=s["surrogate_window"],
            encoder_trainable=s["encoder_trainable"],
        )

    def out_dir(self) -> Path:
        raw = Path(str(self.get("run", "out_dir")))
        root = os.environ.get(OUT_ROOT_ENV_VAR)
        if root and not raw.is_absolute():
            return Path(root) / raw
        return raw

    def resolved_text(self) -> str:
        """INI rendering of every resolved key, with unit docs as comments."""
        buf = io.StringIO()
        for section, keys in SCHEMA.items():
            buf.write(f"[{section}]\n")
            for key, field in keys.items():
                buf.write(f"# {field.doc}\n")
                buf.write(f"{key} = {_format_value(field, self.values[section][key])}\n")
            buf.write("\n")
        return buf.getvalue()

    def write_resolved(self, directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "config_resolved.ini"
        path.write_text(self.resolved_text(), encoding="utf-8")
        return path

    def validate(self) -> None:
        """Build every typed view once so field errors surface immediately."""
        if self.get("run", "policy") not in ("snn", "mlp", "random"):
            raise ConfigError("run.policy must be one of snn | mlp | random")
        self.env_config()
        self.trainer_config()
        self.actor_config()
