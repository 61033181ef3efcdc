"""Load-estimation CTU configurator (LE-URC), fixed and random policies.

All policies share one interface with the learned controllers: ``reset()`` at
the start of an episode and ``act(history) -> (k, c)`` where ``history`` is the
environment's list of past RTT observations (newest last).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import SimConfig
from .env import RttObservation

FIXED_K = 8
FIXED_C = 48


def le_idle_probability(c: int, n: float) -> float:
    """Probability that a given CTU is left idle by ``n`` uniform choosers."""
    return (1.0 - 1.0 / c) ** n


def le_singleton_probability(c: int, n: float) -> float:
    """Probability that exactly one of ``n`` uniform choosers takes a given CTU."""
    if n <= 0:
        return 0.0
    return n / c * (1.0 - 1.0 / c) ** (n - 1)


def le_expected_idle(c: int, n: float) -> float:
    return c * (1.0 - 1.0 / c) ** n


def le_invert(v_ic: float, c: int) -> float:
    """Load estimate from an observed idle count, clamped away from log(0)."""
    v = min(max(v_ic, 0.5), c - 0.5)
    return math.log(v / c) / math.log(1.0 - 1.0 / c)


def le_expected_success(c: int, n: float) -> float:
    if n <= 0:
        return 0.0
    return n * (1.0 - 1.0 / c) ** (n - 1)


def le_choose_c(n: float, c_set: Sequence[int]) -> int:
    values = [le_expected_success(c, n) for c in c_set]
    best = max(values)
    return int(c_set[values.index(best)])


@dataclass
class LeState:
    prev_estimate: float
    prev_delta: float
    prev_c: int
    fixed_k: int = FIXED_K


def le_predict(state: LeState, v_ic_obs: float | None, v_cc_obs: float | None) -> float:
    """Load forecast for the next RTT; updates ``state`` in place.

    ``None`` observations mean nothing has been observed yet and the forecast is 0.
    """
    if v_ic_obs is None or v_cc_obs is None:
        return 0.0
    n_last = le_invert(v_ic_obs, state.prev_c)
    delta = n_last - state.prev_estimate
    state.prev_estimate = n_last
    state.prev_delta = delta
    return max(2.0 * v_cc_obs, n_last + delta)


class FixedPolicy:
    name = "fixed"

    def __init__(self, cfg: SimConfig, k: int = FIXED_K, c: int = FIXED_C):
        if k not in cfg.k_set:
            raise ValueError(f"fixed repetition value {k} not in k_set {cfg.k_set}")
        if c not in cfg.c_set:
            raise ValueError(f"fixed CTU count {c} not in c_set {cfg.c_set}")
        self.action = (k, c)

    def reset(self) -> None:
        pass

    def act(self, history: Sequence[RttObservation]) -> tuple[int, int]:
        return self.action


def fixed_policy(cfg: SimConfig) -> FixedPolicy:
    return FixedPolicy(cfg)


class LeUrcPolicy:
    """Picks the CTU count maximizing expected singletons under the forecast load."""

    name = "leurc"

    def __init__(self, cfg: SimConfig, k: int = FIXED_K):
        if k not in cfg.k_set:
            raise ValueError(f"fixed repetition value {k} not in k_set {cfg.k_set}")
        self.cfg = cfg
        self.k = k
        self.reset()

    def reset(self) -> None:
        self.state = LeState(0.0, 0.0, self.cfg.c_set[0], self.k)
        self.first = True
        self.last_forecast = 0.0

    def act(self, history: Sequence[RttObservation]) -> tuple[int, int]:
        if self.first or not history:
            n_next = le_predict(self.state, None, None)
            self.first = False
        else:
            obs = history[-1]
            self.state.prev_c = obs.action_c
            n_next = le_predict(self.state, obs.v_ic, obs.v_cc)
        self.last_forecast = n_next
        c = le_choose_c(n_next, self.cfg.c_set)
        self.state.prev_c = c
        return self.k, c


class RandomPolicy:
    name = "random"

    def __init__(self, cfg: SimConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng

    def reset(self) -> None:
        pass

    def act(self, history: Sequence[RttObservation]) -> tuple[int, int]:
        k = self.cfg.k_set[int(self.rng.integers(len(self.cfg.k_set)))]
        c = self.cfg.c_set[int(self.rng.integers(len(self.cfg.c_set)))]
        return int(k), int(c)
