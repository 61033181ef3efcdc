"""Named random substreams derived from one master seed.

Every consumer draws from its own stream, keyed by a fixed stream id plus any
number of integer counters (episode, agent, ...). Streams are derived with
``numpy.random.SeedSequence`` spawn keys, so adding draws to one consumer never
shifts another.

Fading is indexed per (rtt, ue, repetition) triple with a stateless
counter-based hash, so the gain of one triple does not depend on the order in
which triples are evaluated.
"""
from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "placement": 1,
    "activation": 2,
    "ctu-choice": 3,
    "fading": 4,
    "exploration": 5,
    "replay-sampling": 6,
    "net-init": 7,
    "episode": 8,
    "initial-action": 9,
    "evaluation": 10,
    "baseline-policy": 11,
}

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _seed_sequence(seed: int, name: str, counters: tuple[int, ...]) -> np.random.SeedSequence:
    try:
        stream_id = STREAM_IDS[name]
    except KeyError:
        raise KeyError(f"unknown random stream {name!r}") from None
    return np.random.SeedSequence(int(seed), spawn_key=(stream_id, *(int(c) for c in counters)))


def substream(seed: int, name: str, *counters: int) -> np.random.Generator:
    """Generator for stream ``name`` under master ``seed`` and optional counters."""
    return np.random.Generator(np.random.PCG64(_seed_sequence(seed, name, counters)))


def derive_seed(seed: int, name: str, *counters: int) -> int:
    """A 63-bit integer seed for stream ``name``; used to seed whole episodes."""
    state = _seed_sequence(seed, name, counters).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def stream_key(seed: int, name: str, *counters: int) -> np.uint64:
    return _seed_sequence(seed, name, counters).generate_state(1, np.uint64)[0]


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniform(key: np.uint64, *counters: np.ndarray | int) -> np.ndarray:
    """Uniform [0, 1) values, a pure function of ``key`` and the counter tuple.

    Counters broadcast against each other like numpy arrays.
    """
    arrays = np.broadcast_arrays(*(np.asarray(c, dtype=np.int64) for c in counters))
    shape = arrays[0].shape
    # 1-d working arrays: numpy scalars warn on wrapping overflow, arrays do not
    z = np.full(max(1, int(np.prod(shape))), key, dtype=np.uint64)
    for c in arrays:
        z = _mix(z ^ (c.reshape(-1).astype(np.uint64) * _GOLDEN + _GOLDEN))
    u = (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    return u.reshape(shape) if shape else u[:1].reshape(())


class FadingField:
    """Exp(1) channel power gains indexed by (rtt, ue, repetition)."""

    def __init__(self, key: np.uint64):
        self.key = np.uint64(key)

    @classmethod
    def from_seed(cls, seed: int, *counters: int) -> "FadingField":
        return cls(stream_key(seed, "fading", *counters))

    def gains(self, rtt: int, ue_ids: np.ndarray, k: int) -> np.ndarray:
        u = counter_uniform(self.key, rtt, np.asarray(ue_ids, dtype=np.int64), k)
        return -np.log1p(-u)
