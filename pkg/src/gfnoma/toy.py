"""Deterministic two-state MDP for checking the learning loop.

States 0 and 1 are one-hot encoded. Action ``a`` always moves to state ``a``.

    state 0, action 0: reward 1   (stay)
    state 0, action 1: reward 0   (move to 1)
    state 1, action 0: reward 0   (move to 0)
    state 1, action 1: reward 3   (stay)

With discount 0.5 the optimal policy takes action 1 in both states: giving up
the immediate reward in state 0 pays off. A myopic learner picks action 0
there. Episodes start in state 0 and are cut after ``episode_len`` steps; the
cut is a time limit, not a terminal state.
"""
from __future__ import annotations

import numpy as np

REWARD = np.array([[1.0, 0.0], [0.0, 3.0]])
NEXT_STATE = np.array([[0, 1], [0, 1]])


class TwoStateMdp:
    state_dim = 2
    n_actions = 2

    def __init__(self, episode_len: int = 50):
        self.episode_len = episode_len
        self.state = 0
        self.t = 0
        self.truncated = False

    @staticmethod
    def encode(state: int) -> np.ndarray:
        out = np.zeros(2)
        out[state] = 1.0
        return out

    def reset(self, seed: int = 0) -> np.ndarray:
        self.state, self.t, self.truncated = 0, 0, False
        return self.encode(0)

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        r = float(REWARD[self.state, action])
        self.state = int(NEXT_STATE[self.state, action])
        self.t += 1
        done = self.t >= self.episode_len
        self.truncated = done
        return self.encode(self.state), r, done


def value_iteration(gamma: float, tol: float = 1e-12) -> np.ndarray:
    """Optimal Q-table of the toy MDP."""
    q = np.zeros((2, 2))
    while True:
        new = REWARD + gamma * q.max(axis=1)[NEXT_STATE]
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new


def optimal_policy(gamma: float) -> np.ndarray:
    return value_iteration(gamma).argmax(axis=1)
