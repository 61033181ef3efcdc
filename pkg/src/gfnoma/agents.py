"""DQN agents: replay memory, exploration, and the two training loops.

``train_single`` controls one parameter (repetition value with a fixed CTU
count). ``train_cma`` runs one agent per parameter on a shared state and a
shared reward; each agent keeps its own memory and target network.

Environments only need ``reset(seed) -> state``, ``step(action) -> (state,
reward, done)``, ``state_dim`` and ``n_actions``. A truthy ``truncated``
attribute after a ``done`` step marks a time limit rather than a terminal state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import rng as rngmod
from .config import LearnConfig, SimConfig
from .valuefn import (
    Minibatch,
    ValueNet,
    copy_into_target,
    forward,
    net_init,
    rmsprop_step,
    td_gradient,
)

CURVE_COLUMNS = ("episode", "mean_reward", "eps", "loss_mean")

# single precision halves the cost of the per-step minibatch update
TRAIN_DTYPE = np.float32


class Env(Protocol):
    state_dim: int

    def reset(self, seed: int) -> np.ndarray: ...

    def step(self, action): ...


class ReplayMemory:
    """Fixed-capacity FIFO ring buffer with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, state_dim: int, dtype=np.float64):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=dtype)
        self.next_states = np.zeros((capacity, state_dim), dtype=dtype)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0
        self.pushes = 0

    def __len__(self) -> int:
        return self.size

    def push(self, s, a: int, r: float, s_next, terminal: bool) -> None:
        i = self.cursor
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.terminal[i] = terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushes += 1

    def ordered(self) -> np.ndarray:
        """Buffer slots from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> Minibatch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay memory")
        idx = rng.integers(0, self.size, size=n)
        return Minibatch(
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.terminal[idx],
        )


@dataclass
class AgentBundle:
    online: ValueNet
    target: ValueNet
    memory: ReplayMemory
    action_set: list
    learn: LearnConfig
    explore_rng: np.random.Generator
    replay_rng: np.random.Generator
    eps: float = 1.0
    step_count: int = 0
    grad_steps: int = 0
    losses: list[float] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        state_dim: int,
        action_set: Sequence,
        learn: LearnConfig,
        seed: int,
        agent: int = 0,
        dtype=TRAIN_DTYPE,
    ) -> "AgentBundle":
        dims = (state_dim, *learn.hidden_sizes, len(action_set))
        online = net_init(dims, rngmod.substream(seed, "net-init", agent), dtype=dtype)
        return cls(
            online=online,
            target=copy_into_target(online),
            memory=ReplayMemory(learn.replay_capacity, state_dim, dtype=dtype),
            action_set=list(action_set),
            learn=learn,
            explore_rng=rngmod.substream(seed, "exploration", agent),
            replay_rng=rngmod.substream(seed, "replay-sampling", agent),
        )

    def greedy(self, s: np.ndarray) -> int:
        return int(np.argmax(forward(self.online, s)))

    def observe(self, s, a: int, r: float, s_next, terminal: bool) -> None:
        """Store a transition and take one gradient step once the memory allows it."""
        self.memory.push(s, a, r, s_next, terminal)
        self.step_count += 1
        if len(self.memory) < self.learn.minibatch:
            return
        batch = self.memory.sample(self.learn.minibatch, self.replay_rng)
        grad = td_gradient(self.online, self.target, batch, self.learn.gamma, self.learn.ddqn)
        rmsprop_step(self.online, grad, self.learn.lr)
        self.losses.append(grad.loss)
        self.grad_steps += 1
        if self.grad_steps % self.learn.target_sync_every == 0:
            self.target = copy_into_target(self.online)


def epsilon_greedy(bundle: AgentBundle, s: np.ndarray, rng: np.random.Generator) -> int:
    """Uniform random action with probability eps, else argmax (lowest index on ties)."""
    if rng.random() < bundle.eps:
        return int(rng.integers(len(bundle.action_set)))
    return bundle.greedy(s)


def anneal_epsilon(
    bundle: AgentBundle | None, episode: int, total_episodes: int, learn: LearnConfig
) -> float:
    """Linear decay from 1 to eps_min over the first eps_decay_fraction of episodes."""
    horizon = learn.eps_decay_fraction * total_episodes
    if horizon <= 0 or episode >= horizon:
        eps = learn.eps_min
    else:
        eps = 1.0 + (learn.eps_min - 1.0) * episode / horizon
    if bundle is not None:
        bundle.eps = eps
    return eps


@dataclass
class EpisodeStats:
    episode: int
    seed: int
    steps: int
    total_reward: float
    eps: float
    loss_mean: float

    @property
    def mean_reward(self) -> float:
        return self.total_reward / self.steps if self.steps else 0.0

    def curve_row(self) -> tuple:
        return (self.episode, self.mean_reward, self.eps, self.loss_mean)


def episode_seed(master: int, episode: int) -> int:
    return rngmod.derive_seed(master, "episode", episode)


def _loss_mean(bundles: Sequence[AgentBundle], since: Sequence[int]) -> float:
    chunks = [b.losses[i:] for b, i in zip(bundles, since)]
    values = [v for c in chunks for v in c]
    return float(np.mean(values)) if values else float("nan")


def _terminal(env, done: bool) -> bool:
    return done and not getattr(env, "truncated", False)


def train_single(
    cfg: SimConfig,
    env: Env,
    episodes: int | None = None,
    fixed_eps: float | None = None,
    max_steps: int | None = None,
) -> tuple[AgentBundle, list[EpisodeStats]]:
    """Algorithm-1 style DDQN training of one agent over ``env.n_actions`` actions.

    ``fixed_eps`` pins the exploration rate; ``max_steps`` stops early after that
    many environment steps in total.
    """
    learn = cfg.learn
    episodes = learn.episodes if episodes is None else episodes
    bundle = AgentBundle.create(env.state_dim, list(range(env.n_actions)), learn, cfg.seed)
    curve: list[EpisodeStats] = []
    total_steps = 0
    for ep in range(episodes):
        eps = fixed_eps if fixed_eps is not None else anneal_epsilon(None, ep, episodes, learn)
        bundle.eps = eps
        seed = episode_seed(cfg.seed, ep)
        s = env.reset(seed)
        loss_mark = len(bundle.losses)
        done, steps, total = False, 0, 0.0
        while not done:
            a = epsilon_greedy(bundle, s, bundle.explore_rng)
            s_next, r, done = env.step(a)
            bundle.observe(s, a, r, s_next, _terminal(env, done))
            s = s_next
            steps += 1
            total += r
            total_steps += 1
            if max_steps is not None and total_steps >= max_steps:
                break
        curve.append(EpisodeStats(ep, seed, steps, total, eps, _loss_mean([bundle], [loss_mark])))
        if max_steps is not None and total_steps >= max_steps:
            break
    return bundle, curve


def train_cma(
    cfg: SimConfig,
    env: Env,
    episodes: int | None = None,
    fixed_eps: float | None = None,
    on_step=None,
) -> tuple[list[AgentBundle], list[EpisodeStats]]:
    """Cooperative training of one agent per parameter on a shared state and reward.

    ``env.n_actions`` is a tuple with one action count per agent and
    ``env.step`` takes the tuple of per-agent action indices. ``on_step`` is an
    optional callback ``(bundles, state, actions, reward)`` used for audits.
    """
    learn = cfg.learn
    episodes = learn.episodes if episodes is None else episodes
    bundles = [
        AgentBundle.create(env.state_dim, list(range(n)), learn, cfg.seed, agent=i)
        for i, n in enumerate(env.n_actions)
    ]
    curve: list[EpisodeStats] = []
    for ep in range(episodes):
        eps = fixed_eps if fixed_eps is not None else anneal_epsilon(None, ep, episodes, learn)
        for b in bundles:
            b.eps = eps
        seed = episode_seed(cfg.seed, ep)
        s = env.reset(seed)
        marks = [len(b.losses) for b in bundles]
        done, steps, total = False, 0, 0.0
        while not done:
            actions = tuple(epsilon_greedy(b, s, b.explore_rng) for b in bundles)
            s_next, r, done = env.step(actions)
            term = _terminal(env, done)
            for b, a in zip(bundles, actions):
                b.observe(s, a, r, s_next, term)
            if on_step is not None:
                on_step(bundles, s, actions, r)
            s = s_next
            steps += 1
            total += r
        curve.append(EpisodeStats(ep, seed, steps, total, eps, _loss_mean(bundles, marks)))
    return bundles, curve
