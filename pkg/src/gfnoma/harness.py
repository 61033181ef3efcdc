"""Run profiles, policy wrappers, training/evaluation drivers and run artifacts.

Every run writes into its own directory: the resolved config, the CSV tables,
any checkpoints, and ``manifest.json``. CSV files never contain wallclock
values, so a re-run from the manifest reproduces them byte for byte.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from . import rng as rngmod
from .agents import CURVE_COLUMNS, AgentBundle, EpisodeStats, train_cma, train_single
from .baselines import FixedPolicy, LeUrcPolicy, RandomPolicy
from .config import SimConfig, dump_config, load_config, parse_config
from .env import TRACE_COLUMNS, GfNomaEnv, MultiParamEnv, SingleParamEnv, cma_state, single_state
from .valuefn import ValueNet, forward, load_checkpoint, save_checkpoint

PROFILES = ("desk", "paper")
MODES = ("single", "cma")
POLICIES = ("cma", "single", "leurc", "fixed", "random")
LEARNED = ("cma", "single")

# per mode latency budget: the single-parameter study uses 2 ms, the joint one 8 ms
MODE_LATENCY_MS = {"single": 2.0, "cma": 8.0}

CHECKPOINTS = {"single": ("agent_k.gfqn",), "cma": ("agent_k.gfqn", "agent_c.gfqn")}

EVAL_COLUMNS = ("tti_bucket", "succ", "non_coll", "coll", "dec_fail")
SUMMARY_COLUMNS = ("quantity", "mean", "std")
EPISODE_COLUMNS = ("episode", "seed", "steps", "served", "dropped", "activated", "total_reward")
TRAIN_EPISODE_COLUMNS = ("episode", "seed", "steps", "total_reward", "eps")
COMPARE_COLUMNS = ("policy", "mean_served", "std_served", "episodes", "ratio")
COMPARE_RAW_COLUMNS = ("policy", "episode", "seed", "served")

BUCKET_TTIS = 100
DEFAULT_EVAL_EPISODES = 50


class UsageError(ValueError):
    """Bad flag combination or missing input; maps to exit code 1."""


# -- profiles -------------------------------------------------------------------


def profile_config(profile: str, mode: str = "single") -> SimConfig:
    """Base scenario for a profile; the latency budget follows the control mode."""
    if profile not in PROFILES:
        raise UsageError(f"unknown profile {profile!r}; choose from {PROFILES}")
    if mode not in MODES:
        raise UsageError(f"unknown mode {mode!r}; choose from {MODES}")
    cfg = SimConfig(latency_constraint_ms=MODE_LATENCY_MS[mode])
    if profile == "desk":
        # same peak arrival intensity per TTI as the full scenario, 1/4 of the duration
        cfg = cfg.replace(n_ues=5000, traffic_total_s=0.5)
    else:
        cfg = cfg.replace(learn=dataclasses.replace(cfg.learn, episodes=1000))
    return cfg


def resolve_config(
    profile: str, mode: str, config_path: str | None = None, seed: int | None = None
) -> SimConfig:
    cfg = load_config(config_path, base=profile_config(profile, mode))
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg


# -- policies ---------------------------------------------------------------------


def _greedy(net: ValueNet, s: np.ndarray) -> int:
    return int(np.argmax(forward(net, s)))


class CmaPolicy:
    """Greedy joint action from the two trained agents on the shared state."""

    name = "cma"

    def __init__(self, cfg: SimConfig, k_net: ValueNet, c_net: ValueNet):
        self.cfg = cfg
        self.nets = (k_net, c_net)

    def reset(self) -> None:
        pass

    def act(self, history) -> tuple[int, int]:
        s = cma_state(history, self.cfg.learn.m_obs, self.cfg.k_set, self.cfg.c_set)
        ki, ci = (_greedy(net, s) for net in self.nets)
        return int(self.cfg.k_set[ki]), int(self.cfg.c_set[ci])


class SinglePolicy:
    """Greedy repetition value from the single agent; CTU count fixed at max(c_set)."""

    name = "single"

    def __init__(self, cfg: SimConfig, net: ValueNet):
        self.cfg = cfg
        self.net = net
        self.c = max(cfg.c_set)

    def reset(self) -> None:
        pass

    def act(self, history) -> tuple[int, int]:
        s = single_state(history[-1], max(self.cfg.c_set))
        return int(self.cfg.k_set[_greedy(self.net, s)]), self.c


def load_learned(cfg: SimConfig, mode: str, ckpt_dir: str | os.PathLike[str]):
    paths = [Path(ckpt_dir) / name for name in CHECKPOINTS[mode]]
    for p in paths:
        if not p.is_file():
            raise UsageError(f"missing checkpoint {p}")
    nets = [load_checkpoint(p) for p in paths]
    return CmaPolicy(cfg, *nets) if mode == "cma" else SinglePolicy(cfg, nets[0])


def make_policy(
    name: str, cfg: SimConfig, ckpt_dir: str | None = None, episode: int = 0
):
    if name not in POLICIES:
        raise UsageError(f"unknown policy {name!r}; choose from {POLICIES}")
    if name in LEARNED:
        if ckpt_dir is None:
            raise UsageError(f"policy {name!r} needs --checkpoint")
        return load_learned(cfg, name, ckpt_dir)
    if name == "fixed":
        return FixedPolicy(cfg)
    if name == "leurc":
        return LeUrcPolicy(cfg)
    return RandomPolicy(cfg, rngmod.substream(cfg.seed, "baseline-policy", episode))


# -- episodes ---------------------------------------------------------------------


@dataclass
class EpisodeMetrics:
    episode: int
    seed: int
    total_reward: float
    served: int
    dropped: int
    activated: int
    steps: int
    trace: list[tuple] = field(default_factory=list, repr=False)
    collided: list[int] = field(default_factory=list, repr=False)
    wallclock_s: float = 0.0

    def row(self) -> tuple:
        return (self.episode, self.seed, self.steps, self.served, self.dropped,
                self.activated, self.total_reward)


def run_episode(cfg: SimConfig, policy, seed: int, episode: int = 0,
                env: GfNomaEnv | None = None) -> EpisodeMetrics:
    """One episode of ``policy`` with greedy actions; records the per-RTT trace."""
    env = GfNomaEnv(cfg) if env is None else env
    t0 = time.perf_counter()
    env.reset(seed)
    policy.reset()
    trace, collided, total, done = [], [], 0.0, False
    while not done:
        k, c = policy.act(env.history)
        obs, reward, done = env.step(k, c)
        total += reward
        trace.append(env.trace_row(obs, reward))
        collided.append(env.last_info.collided_ues)
    return EpisodeMetrics(
        episode=episode,
        seed=int(seed),
        total_reward=total,
        served=env.served_cum,
        dropped=env.dropped_cum,
        activated=env.activated,
        steps=len(trace),
        trace=trace,
        collided=collided,
        wallclock_s=time.perf_counter() - t0,
    )


def eval_seed(master: int, episode: int) -> int:
    return rngmod.derive_seed(master, "evaluation", episode)


def _eval_task(args: tuple) -> EpisodeMetrics:
    cfg, name, ckpt_dir, episode = args
    policy = make_policy(name, cfg, ckpt_dir, episode)
    return run_episode(cfg, policy, eval_seed(cfg.seed, episode), episode)


def evaluate(
    cfg: SimConfig,
    policy_name: str,
    n_episodes: int,
    ckpt_dir: str | None = None,
    workers: int = 1,
) -> list[EpisodeMetrics]:
    """Greedy evaluation over episodes with independent seeds.

    Each episode derives everything from (seed, episode index), so the result
    does not depend on ``workers``.
    """
    make_policy(policy_name, cfg, ckpt_dir)  # fail early on bad names or paths
    tasks = [(cfg, policy_name, ckpt_dir, ep) for ep in range(n_episodes)]
    if workers <= 1:
        return [_eval_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_eval_task, tasks))


def bucket_table(metrics: Sequence[EpisodeMetrics], bucket_ttis: int = BUCKET_TTIS) -> list[tuple]:
    """Per-episode mean of served, singleton, collided and decode-failure UEs per TTI bucket.

    RTT rows are assigned to the bucket holding their starting TTI.
    """
    i_clock = TRACE_COLUMNS.index("tti_clock")
    i_sd, i_sc, i_ud = (TRACE_COLUMNS.index(c) for c in ("v_sd", "v_sc", "v_ud"))
    sums: dict[int, np.ndarray] = {}
    for m in metrics:
        for row, coll in zip(m.trace, m.collided):
            b = row[i_clock] // bucket_ttis * bucket_ttis
            acc = sums.setdefault(b, np.zeros(4))
            acc += (row[i_sd], row[i_sc], coll, row[i_ud])
    n = max(len(metrics), 1)
    return [(b, *(sums[b] / n)) for b in sorted(sums)]


def summary_table(metrics: Sequence[EpisodeMetrics]) -> list[tuple]:
    i_sd, i_sc, i_ud = (TRACE_COLUMNS.index(c) for c in ("v_sd", "v_sc", "v_ud"))
    i_r = TRACE_COLUMNS.index("reward")
    per_step = {
        "reward_per_rtt": [r[i_r] for m in metrics for r in m.trace],
        "served_per_rtt": [r[i_sd] for m in metrics for r in m.trace],
        "non_coll_per_rtt": [r[i_sc] for m in metrics for r in m.trace],
        "coll_per_rtt": [c for m in metrics for c in m.collided],
        "dec_fail_per_rtt": [r[i_ud] for m in metrics for r in m.trace],
        "served_per_episode": [m.served for m in metrics],
        "dropped_per_episode": [m.dropped for m in metrics],
        "rtts_per_episode": [m.steps for m in metrics],
    }
    out = []
    for name, values in per_step.items():
        v = np.asarray(values, dtype=float)
        out.append((name, float(v.mean()) if v.size else 0.0, float(v.std()) if v.size else 0.0))
    return out


# -- artifacts --------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str | os.PathLike[str], columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path: str | os.PathLike[str]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def code_version() -> str:
    """Package version plus a digest of the package sources."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


@dataclass
class RunManifest:
    command: str
    config: str
    seed: int
    scheme: str
    policy: list[str]
    args: dict
    artifacts: list[str]
    code_version: str = field(default_factory=code_version)

    def save(self, out_dir: str | os.PathLike[str]) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)

    def resolved_config(self) -> SimConfig:
        return parse_config(self.config)


# -- drivers ----------------------------------------------------------------------


def train_run(cfg: SimConfig, mode: str, out_dir: str | os.PathLike[str],
              episodes: int | None = None) -> tuple[list[AgentBundle], list[EpisodeStats], list[str]]:
    """Train in ``mode``; writes the learning curve, episode table and checkpoints."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "single":
        bundle, curve = train_single(cfg, SingleParamEnv(cfg), episodes=episodes)
        bundles = [bundle]
    elif mode == "cma":
        bundles, curve = train_cma(cfg, MultiParamEnv(cfg), episodes=episodes)
    else:
        raise UsageError(f"unknown mode {mode!r}")
    write_csv(out / "learning_curve.csv", CURVE_COLUMNS, (c.curve_row() for c in curve))
    write_csv(
        out / "episodes.csv",
        TRAIN_EPISODE_COLUMNS,
        ((c.episode, c.seed, c.steps, c.total_reward, c.eps) for c in curve),
    )
    artifacts = ["learning_curve.csv", "episodes.csv"]
    for b, name in zip(bundles, CHECKPOINTS[mode]):
        save_checkpoint(b.online, out / name)
        artifacts.append(name)
    return bundles, curve, artifacts


def eval_run(cfg: SimConfig, policy_name: str, out_dir: str | os.PathLike[str], n_episodes: int,
             ckpt_dir: str | None = None, workers: int = 1) -> tuple[list[EpisodeMetrics], list[str]]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = evaluate(cfg, policy_name, n_episodes, ckpt_dir, workers)
    write_csv(out / "eval.csv", EVAL_COLUMNS, bucket_table(metrics))
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary_table(metrics))
    write_csv(out / "eval_episodes.csv", EPISODE_COLUMNS, (m.row() for m in metrics))
    write_csv(
        out / "trace.csv",
        ("episode", *TRACE_COLUMNS, "coll_ues"),
        ((m.episode, *row, coll) for m in metrics for row, coll in zip(m.trace, m.collided)),
    )
    return metrics, ["eval.csv", "summary.csv", "eval_episodes.csv", "trace.csv"]


def compare_rows(served: dict[str, list[int]]) -> list[tuple]:
    """One row per policy: mean and std of served UEs, ratio to the first policy."""
    names = list(served)
    base = float(np.mean(served[names[0]]))
    rows = []
    for name in names:
        v = np.asarray(served[name], dtype=float)
        ratio = float(v.mean()) / base if base > 0 else float("nan")
        rows.append((name, float(v.mean()), float(v.std()), len(v), ratio))
    return rows


def compare_run(cfg: SimConfig, policies: Sequence[str], out_dir: str | os.PathLike[str],
                n_episodes: int, ckpt_dir: str | None = None,
                workers: int = 1) -> tuple[list[tuple], list[str]]:
    if len(policies) < 2:
        raise UsageError("compare needs at least two policies")
    for name in policies:
        if name not in POLICIES:
            raise UsageError(f"unknown policy {name!r}; choose from {POLICIES}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    served: dict[str, list[int]] = {}
    raw = []
    for name in policies:
        metrics = evaluate(cfg, name, n_episodes, ckpt_dir, workers)
        served[name] = [m.served for m in metrics]
        raw.extend((name, m.episode, m.seed, m.served) for m in metrics)
        write_csv(out / f"eval_{name}.csv", EVAL_COLUMNS, bucket_table(metrics))
    rows = compare_rows(served)
    write_csv(out / "compare.csv", COMPARE_COLUMNS, rows)
    write_csv(out / "compare_episodes.csv", COMPARE_RAW_COLUMNS, raw)
    artifacts = ["compare.csv", "compare_episodes.csv"] + [f"eval_{n}.csv" for n in policies]
    return rows, artifacts


def save_run_config(cfg: SimConfig, out_dir: str | os.PathLike[str]) -> str:
    text = dump_config(cfg)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "config.txt").write_text(text, encoding="utf-8")
    return text


def same_bytes(a: str | os.PathLike[str], b: str | os.PathLike[str]) -> bool:
    return Path(a).read_bytes() == Path(b).read_bytes()
