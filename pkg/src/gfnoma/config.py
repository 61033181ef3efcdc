"""Scenario configuration, unit conversions and the flat key=value file format.

A config file is UTF-8 text with one ``key = value`` pair per line. ``#`` starts
a comment. Lists are comma separated, booleans are ``true``/``false``. Learning
hyperparameters use the ``learn.`` prefix. Keys that are not set keep the
defaults below (the paper-scale scenario).
"""
from __future__ import annotations

import dataclasses
import enum
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

SEED_ENV_VAR = "GFNOMA_SEED"


class ConfigError(ValueError):
    """Raised for unreadable config files and invariant violations."""


class Scheme(str, enum.Enum):
    KREP = "krep"
    PROACTIVE = "proactive"


@dataclass(frozen=True)
class LearnConfig:
    lr: float = 1e-4
    gamma: float = 0.5
    eps_min: float = 0.1
    minibatch: int = 32
    replay_capacity: int = 10000
    target_sync_every: int = 1000
    hidden_sizes: tuple[int, ...] = (128, 128)
    m_obs: int = 5
    episodes: int = 300
    eps_decay_fraction: float = 0.5
    ddqn: bool = True

    def __post_init__(self) -> None:
        _check(self.lr > 0, "learn.lr", "must be > 0")
        _check(0 <= self.gamma < 1, "learn.gamma", "must lie in [0, 1)")
        _check(0 < self.eps_min <= 1, "learn.eps_min", "must lie in (0, 1]")
        _check(self.minibatch >= 1, "learn.minibatch", "must be >= 1")
        _check(
            self.minibatch <= self.replay_capacity,
            "learn.minibatch",
            "must not exceed learn.replay_capacity",
        )
        _check(self.target_sync_every >= 1, "learn.target_sync_every", "must be >= 1")
        _check(all(h >= 1 for h in self.hidden_sizes), "learn.hidden_sizes", "must be positive")
        _check(self.m_obs >= 1, "learn.m_obs", "must be >= 1")
        _check(self.episodes >= 1, "learn.episodes", "must be >= 1")
        _check(
            0 < self.eps_decay_fraction <= 1,
            "learn.eps_decay_fraction",
            "must lie in (0, 1]",
        )


@dataclass(frozen=True)
class SimConfig:
    n_ues: int = 20000
    cell_radius_m: float = 10000.0
    pathloss_exp: float = 4.0
    tx_power_dbm: float = 23.0
    noise_dbm: float = -132.0
    sinr_threshold_db: float = -10.0
    tti_ms: float = 0.125
    traffic_total_s: float = 2.0
    beta_alpha: float = 2.0
    beta_beta: float = 4.0
    scheme: Scheme = Scheme.KREP
    k_set: tuple[int, ...] = (1, 2, 4, 6, 8)
    c_set: tuple[int, ...] = (12, 24, 36, 48)
    n_rbs: int = 4
    latency_constraint_ms: float = 2.0
    learn: LearnConfig = field(default_factory=LearnConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        _check(self.n_ues >= 0, "n_ues", "must be >= 0")
        _check(self.cell_radius_m > 0, "cell_radius_m", "must be > 0")
        _check(self.tti_ms > 0, "tti_ms", "must be > 0")
        _check(self.traffic_total_s > 0, "traffic_total_s", "must be > 0")
        _check(self.beta_alpha > 0, "beta_alpha", "must be > 0")
        _check(self.beta_beta > 0, "beta_beta", "must be > 0")
        _check(self.n_rbs >= 1, "n_rbs", "must be >= 1")
        _check(self.seed >= 0, "seed", "must be an unsigned integer")
        for name in ("k_set", "c_set"):
            values = getattr(self, name)
            _check(len(values) > 0, name, "must be nonempty")
            _check(all(v > 0 for v in values), name, "must be positive")
            _check(
                all(a < b for a, b in zip(values, values[1:])),
                name,
                "must be strictly increasing",
            )
        for c in self.c_set:
            _check(c % self.n_rbs == 0, "c_set", f"C not divisible by F ({c} % {self.n_rbs})")
        budget = latency_budget_ttis(self)
        _check(
            budget >= rtt_duration_ttis(min(self.k_set)),
            "latency_constraint_ms",
            f"budget of {budget} TTIs cannot fit one RTT with k={min(self.k_set)}",
        )

    @property
    def horizon_ttis(self) -> int:
        return int(math.ceil(self.traffic_total_s * 1000.0 / self.tti_ms - 1e-9))

    @property
    def tti_s(self) -> float:
        return self.tti_ms / 1000.0

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def _check(ok: bool, key: str, message: str) -> None:
    if not ok:
        raise ConfigError(f"{key}: {message}")


def dbm_to_watt(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0) * 1e-3


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def rtt_duration_ttis(k: int) -> int:
    """K repetitions plus feedback, BS processing and UE processing (one TTI each)."""
    if k < 1:
        raise ValueError(f"repetition value must be >= 1, got {k}")
    return int(k) + 3


def latency_budget_ttis(cfg: SimConfig) -> int:
    ratio = cfg.latency_constraint_ms / cfg.tti_ms
    budget = round(ratio)
    if abs(ratio - budget) > 1e-9:
        raise ConfigError(
            f"latency_constraint_ms: {cfg.latency_constraint_ms} ms is not a whole "
            f"number of {cfg.tti_ms} ms TTIs"
        )
    return int(budget)


# -- file format ------------------------------------------------------------

_SIM_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig) if f.name != "learn"}
_LEARN_FIELDS = {f.name: f for f in dataclasses.fields(LearnConfig)}


def _parse_value(key: str, raw: str, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(f"expected true/false, got {raw!r}")
            return low == "true"
        if isinstance(default, Scheme):
            return Scheme(raw.lower())
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None
    raise ConfigError(f"{key}: unsupported type")  # pragma: no cover


def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    """Parse a config file body; keys it sets override ``base`` (default: SimConfig())."""
    sim: dict[str, Any] = {}
    learn: dict[str, Any] = {}
    sim_default = SimConfig() if base is None else base
    learn_default = sim_default.learn
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key.startswith("learn."):
            name = key[len("learn."):]
            if name not in _LEARN_FIELDS:
                raise ConfigError(f"{key}: unknown key")
            learn[name] = _parse_value(key, raw, getattr(learn_default, name))
        elif key in _SIM_FIELDS:
            sim[key] = _parse_value(key, raw, getattr(sim_default, key))
        else:
            raise ConfigError(f"{key}: unknown key")
    return dataclasses.replace(
        sim_default, learn=dataclasses.replace(learn_default, **learn), **sim
    )


def load_config(
    path: str | os.PathLike[str] | None, base: SimConfig | None = None
) -> SimConfig:
    """Read a config file over ``base``; ``None`` gives ``base`` itself.

    A GFNOMA_SEED environment variable overrides the seed.
    """
    if path is None:
        cfg = SimConfig() if base is None else base
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            text = p.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read {p}: {exc}") from None
        cfg = parse_config(text, base)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None and env_seed.strip():
        try:
            cfg = cfg.replace(seed=int(env_seed))
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR}: not an integer: {env_seed!r}") from None
    return cfg


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Scheme):
        return value.value
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: SimConfig) -> str:
    lines = []
    for name in _SIM_FIELDS:
        lines.append(f"{name} = {_format_value(getattr(cfg, name))}")
    for name in _LEARN_FIELDS:
        lines.append(f"learn.{name} = {_format_value(getattr(cfg.learn, name))}")
    return "\n".join(lines) + "\n"


def save_config(cfg: SimConfig, path: str | os.PathLike[str]) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")


def config_to_dict(cfg: SimConfig) -> dict[str, Any]:
    out = {name: getattr(cfg, name) for name in _SIM_FIELDS}
    out["scheme"] = cfg.scheme.value
    out["k_set"] = list(cfg.k_set)
    out["c_set"] = list(cfg.c_set)
    out["learn"] = dataclasses.asdict(cfg.learn)
    out["learn"]["hidden_sizes"] = list(cfg.learn.hidden_sizes)
    return out
