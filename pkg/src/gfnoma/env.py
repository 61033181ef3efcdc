"""RTT-stepped grant-free NOMA uplink environment.

One ``step`` is one RTT: latency check, CTU choice, collision detection,
per-RB SIC decoding, HARQ bookkeeping. UEs activating during an RTT wait
(dormant) until the next RTT boundary; that waiting time is not counted in
their transmission latency.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .access import build_pool, draw_ctus, occupancy_batch
from .config import SimConfig, latency_budget_ttis, rtt_duration_ttis
from .phy import LinkBudget, UePhy, pathgain, sample_distances
from .sic import decode_stack
from .traffic import ActivationSchedule, sample_activations, window_bounds

TRACE_COLUMNS = (
    "tti_clock",
    "k",
    "c",
    "v_cc",
    "v_ic",
    "v_sc",
    "v_sd",
    "v_ud",
    "reward",
    "backlog_size",
    "dropped_cum",
)


class UeStatus(enum.IntEnum):
    DORMANT = 0
    BACKLOGGED = 1
    SERVED = 2
    DROPPED = 3


@dataclass(frozen=True)
class UeRecord:
    ue_id: int
    phy: UePhy
    activation_tti: int
    harq_index: int
    latency_ttis: int
    status: UeStatus


@dataclass(frozen=True)
class RttObservation:
    v_cc: int
    v_ic: int
    v_sc: int
    v_sd: int
    v_ud: int
    action_k: int
    action_c: int
    tti_clock: int

    def counts(self) -> tuple[int, int, int, int, int]:
        return (self.v_cc, self.v_ic, self.v_sc, self.v_sd, self.v_ud)


@dataclass
class StepInfo:
    """Per-RTT quantities beyond the BS observation, used for traces and audits."""

    start_tti: int
    transmitted: int
    collided_ues: int
    dropped: int
    backlog_size: int
    dropped_cum: int


@dataclass
class EnvState:
    backlog: np.ndarray
    schedule: ActivationSchedule
    tti_clock: int
    history: list[RttObservation]
    done: bool
    status: np.ndarray = field(repr=False)
    latency: np.ndarray = field(repr=False)
    harq: np.ndarray = field(repr=False)
    distance: np.ndarray = field(repr=False)

    def same_as(self, other: "EnvState") -> bool:
        return (
            self.tti_clock == other.tti_clock
            and self.done == other.done
            and self.history == other.history
            and np.array_equal(self.backlog, other.backlog)
            and np.array_equal(self.schedule.times, other.schedule.times)
            and np.array_equal(self.status, other.status)
            and np.array_equal(self.latency, other.latency)
            and np.array_equal(self.harq, other.harq)
            and np.array_equal(self.distance, other.distance)
        )


class EpisodeDone(RuntimeError):
    pass


def latency_admit(latency_ttis: int, k: int, budget_ttis: int) -> bool:
    """True when one more RTT with repetition ``k`` still meets the budget."""
    return latency_ttis + rtt_duration_ttis(k) <= budget_ttis


class GfNomaEnv:
    """Grant-free NOMA uplink seen from the BS, one RTT per step."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.link = LinkBudget.from_config(cfg)
        self.budget = latency_budget_ttis(cfg)
        self.horizon = cfg.horizon_ttis
        self.hard_cap = 2 * self.horizon
        self.c_max = max(cfg.c_set)
        self.m_obs = cfg.learn.m_obs
        self._pools = {c: build_pool(c, cfg.n_rbs) for c in cfg.c_set}
        self.done = True
        self.history: deque[RttObservation] = deque(maxlen=self.m_obs)

    # -- episode lifecycle ---------------------------------------------------

    def reset(self, seed: int) -> RttObservation:
        cfg = self.cfg
        self.seed = int(seed)
        self.distance = sample_distances(cfg, rngmod.substream(seed, "placement"))
        self.pathgain = pathgain(self.distance, cfg.pathloss_exp)
        self.schedule = sample_activations(cfg, rngmod.substream(seed, "activation"))
        self._ctu_rng = rngmod.substream(seed, "ctu-choice")
        self._fading = rngmod.FadingField.from_seed(seed)
        n = cfg.n_ues
        self.status = np.full(n, UeStatus.DORMANT, dtype=np.int8)
        self.latency = np.zeros(n, dtype=np.int64)
        self.harq = np.zeros(n, dtype=np.int64)
        self.activation_tti = np.ceil(self.schedule.times / cfg.tti_s - 1e-9).astype(np.int64)
        self.tti_clock = 0
        self.rtt_index = 0
        self.dropped_cum = 0
        self.served_cum = 0
        self.backlog = np.zeros(0, dtype=np.int64)
        self._admitted = 0
        self._admit(-1, 0)
        init_rng = rngmod.substream(seed, "initial-action")
        k0 = int(cfg.k_set[init_rng.integers(len(cfg.k_set))])
        c0 = int(cfg.c_set[init_rng.integers(len(cfg.c_set))])
        obs = RttObservation(0, c0, 0, 0, 0, k0, c0, 0)
        self.history = deque([obs], maxlen=self.m_obs)
        self.done = False
        self.last_info: StepInfo | None = None
        return obs

    def _admit(self, from_tti: int, to_tti: int) -> None:
        lo, hi = window_bounds(self.schedule, from_tti, to_tti, self.cfg)
        lo = max(lo, self._admitted)
        if hi > lo:
            new = np.arange(lo, hi)
            self.status[new] = UeStatus.BACKLOGGED
            self.backlog = np.concatenate([self.backlog, new])
            self._admitted = hi

    def step(self, k: int, c: int) -> tuple[RttObservation, int, bool]:
        if self.done:
            raise EpisodeDone("step() called on a finished episode; call reset()")
        if k not in self.cfg.k_set:
            raise ValueError(f"repetition value {k} not in k_set {self.cfg.k_set}")
        if c not in self._pools:
            raise ValueError(f"CTU count {c} not in c_set {self.cfg.c_set}")
        pool = self._pools[c]
        start = self.tti_clock
        rtt = rtt_duration_ttis(k)

        # latency check at the start of the RTT
        b = self.backlog
        prospective = self.latency[b] + rtt
        late = prospective > self.budget
        dropped = b[late]
        self.status[dropped] = UeStatus.DROPPED
        self.dropped_cum += int(dropped.size)
        tx = b[~late]
        self.latency[tx] = prospective[~late]
        self.harq[tx] += 1

        # collision detection
        ctus = draw_ctus(tx.size, pool, self._ctu_rng)
        occ, seen = occupancy_batch(ctus[None, :], c)
        v_sc = int(np.count_nonzero(occ[0, 1:] == 1))
        v_cc = int(np.count_nonzero(occ[0, 1:] > 1))
        v_ic = c - v_sc - v_cc
        single = seen[0] == 1

        served = self._decode(tx, ctus, single, pool.per_rb, k)
        v_sd = int(served.size)
        self.status[served] = UeStatus.SERVED
        self.served_cum += v_sd
        self.backlog = np.setdiff1d(tx, served, assume_unique=True)

        self.tti_clock = start + rtt
        self.rtt_index += 1
        self._admit(start, self.tti_clock)

        obs = RttObservation(v_cc, v_ic, v_sc, v_sd, v_sc - v_sd, k, c, start)
        self.history.append(obs)
        if self.tti_clock >= self.horizon and self.backlog.size == 0:
            self.done = True
        elif self.tti_clock >= self.hard_cap:
            left = np.flatnonzero(self.status <= UeStatus.BACKLOGGED)
            self.status[left] = UeStatus.DROPPED
            self.dropped_cum += int(left.size)
            self.backlog = np.zeros(0, dtype=np.int64)
            self.done = True
        self.last_info = StepInfo(
            start_tti=start,
            transmitted=int(tx.size),
            collided_ues=int(tx.size - np.count_nonzero(single)),
            dropped=int(dropped.size),
            backlog_size=int(self.backlog.size),
            dropped_cum=self.dropped_cum,
        )
        return obs, v_sd, self.done

    def _decode(
        self, tx: np.ndarray, ctus: np.ndarray, single: np.ndarray, per_rb: int, k: int
    ) -> np.ndarray:
        if not single.any():
            return np.zeros(0, dtype=np.int64)
        rb = (ctus - 1) // per_rb
        # only RBs carrying at least one singleton can decode anything
        rbs = np.unique(rb[single])
        useful = np.isin(rb, rbs)
        ids, rb, single = tx[useful], rb[useful], single[useful]
        reps = np.arange(1, k + 1)
        h = self._fading.gains(self.rtt_index, ids[:, None], reps[None, :])
        power = self.link.tx_power_w * h * self.pathgain[ids][:, None]
        slot = np.searchsorted(rbs, rb)
        coll_w = np.zeros((rbs.size, k))
        np.add.at(coll_w, slot[~single], power[~single])
        # singleton rows in UE-id order within each RB, zero padded to a common depth
        s_ids, s_slot, s_pow = ids[single], slot[single], power[single]
        order = np.lexsort((s_ids, s_slot))
        s_ids, s_slot, s_pow = s_ids[order], s_slot[order], s_pow[order]
        starts = np.searchsorted(s_slot, np.arange(rbs.size))
        counts = np.bincount(s_slot, minlength=rbs.size)
        pos = np.arange(s_slot.size) - starts[s_slot]
        stack = np.zeros((rbs.size, int(counts.max()), k))
        stack[s_slot, pos] = s_pow
        at = decode_stack(stack, coll_w, self.cfg.scheme, self.link)
        return np.sort(s_ids[at[s_slot, pos] > 0])

    # -- views ---------------------------------------------------------------

    def snapshot(self) -> EnvState:
        return EnvState(
            backlog=self.backlog.copy(),
            schedule=self.schedule,
            tti_clock=self.tti_clock,
            history=list(self.history),
            done=self.done,
            status=self.status.copy(),
            latency=self.latency.copy(),
            harq=self.harq.copy(),
            distance=self.distance.copy(),
        )

    def ue_record(self, ue_id: int) -> UeRecord:
        return UeRecord(
            ue_id=ue_id,
            phy=UePhy(ue_id, float(self.distance[ue_id]), float(self.pathgain[ue_id])),
            activation_tti=int(self.activation_tti[ue_id]),
            harq_index=int(self.harq[ue_id]),
            latency_ttis=int(self.latency[ue_id]),
            status=UeStatus(int(self.status[ue_id])),
        )

    def trace_row(self, obs: RttObservation, reward: int) -> tuple:
        info = self.last_info
        return (
            obs.tti_clock,
            obs.action_k,
            obs.action_c,
            *obs.counts(),
            reward,
            info.backlog_size if info else int(self.backlog.size),
            info.dropped_cum if info else self.dropped_cum,
        )

    @property
    def activated(self) -> int:
        return self.cfg.n_ues


# -- state encodings ----------------------------------------------------------

SLOT_WIDTH = 7


def single_state(obs: RttObservation, c_max: int) -> np.ndarray:
    return np.array(obs.counts(), dtype=float) / c_max


def cma_state(
    history: list[RttObservation] | deque[RttObservation],
    m_obs: int,
    k_set: tuple[int, ...],
    c_set: tuple[int, ...],
) -> np.ndarray:
    """Most recent ``m_obs`` (action, observation) slots, newest first, zero padded.

    Action entries are ``(index + 1) / set size`` so a filled slot is never all
    zero.
    """
    c_max = max(c_set)
    out = np.zeros(m_obs * SLOT_WIDTH)
    recent = list(history)[-m_obs:][::-1]
    for i, obs in enumerate(recent):
        base = i * SLOT_WIDTH
        out[base] = (k_set.index(obs.action_k) + 1) / len(k_set)
        out[base + 1] = (c_set.index(obs.action_c) + 1) / len(c_set)
        out[base + 2 : base + SLOT_WIDTH] = np.array(obs.counts(), dtype=float) / c_max
    return out


def observation_vector(env: GfNomaEnv, multi_agent: bool) -> np.ndarray:
    cfg = env.cfg
    if multi_agent:
        return cma_state(env.history, env.m_obs, cfg.k_set, cfg.c_set)
    return single_state(env.history[-1], env.c_max)


# -- agent-facing adapters ----------------------------------------------------


class SingleParamEnv:
    """Repetition value chosen per RTT; CTU count fixed."""

    def __init__(self, cfg: SimConfig, c_fixed: int | None = None):
        self.core = GfNomaEnv(cfg)
        self.c_fixed = max(cfg.c_set) if c_fixed is None else c_fixed
        if self.c_fixed not in cfg.c_set:
            raise ValueError(f"fixed CTU count {self.c_fixed} not in c_set")
        self.actions = list(cfg.k_set)
        self.n_actions = len(self.actions)
        self.state_dim = 5

    def reset(self, seed: int) -> np.ndarray:
        self.core.reset(seed)
        return observation_vector(self.core, multi_agent=False)

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        _, reward, done = self.core.step(self.actions[action], self.c_fixed)
        return observation_vector(self.core, multi_agent=False), float(reward), done


class MultiParamEnv:
    """Joint (repetition value, CTU count) per RTT; one action index per parameter."""

    def __init__(self, cfg: SimConfig):
        self.core = GfNomaEnv(cfg)
        self.action_sets = (list(cfg.k_set), list(cfg.c_set))
        self.n_actions = tuple(len(a) for a in self.action_sets)
        self.state_dim = cfg.learn.m_obs * SLOT_WIDTH

    def reset(self, seed: int) -> np.ndarray:
        self.core.reset(seed)
        return observation_vector(self.core, multi_agent=True)

    def step(self, action: tuple[int, int]) -> tuple[np.ndarray, float, bool]:
        ki, ci = action
        _, reward, done = self.core.step(self.action_sets[0][ki], self.action_sets[1][ci])
        return observation_vector(self.core, multi_agent=True), float(reward), done
