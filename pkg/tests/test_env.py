import numpy as np
import pytest

from gfnoma.config import SimConfig, latency_budget_ttis, rtt_duration_ttis
from gfnoma.env import (
    TRACE_COLUMNS,
    EpisodeDone,
    GfNomaEnv,
    MultiParamEnv,
    RttObservation,
    SingleParamEnv,
    UeStatus,
    cma_state,
    latency_admit,
    observation_vector,
    single_state,
)


def run_random(env, seed, policy_seed=0, max_steps=100000):
    cfg = env.cfg
    env.reset(seed)
    rng = np.random.default_rng(policy_seed)
    ks = []
    obs_all = []
    done = False
    while not done and len(ks) < max_steps:
        k = int(rng.choice(cfg.k_set))
        c = int(rng.choice(cfg.c_set))
        obs, r, done = env.step(k, c)
        assert r == obs.v_sd
        ks.append(k)
        obs_all.append(obs)
    return ks, obs_all


def test_reset_is_deterministic(small_cfg):
    a, b = GfNomaEnv(small_cfg), GfNomaEnv(small_cfg)
    oa, ob = a.reset(3), b.reset(3)
    assert oa == ob
    assert a.snapshot().same_as(b.snapshot())


def test_reset_seeds_differ(small_cfg):
    a, b = GfNomaEnv(small_cfg), GfNomaEnv(small_cfg)
    a.reset(1)
    b.reset(2)
    assert not np.array_equal(a.distance, b.distance)


def test_reset_observation(small_cfg):
    env = GfNomaEnv(small_cfg)
    obs = env.reset(0)
    assert obs.counts() == (0, obs.action_c, 0, 0, 0)
    assert obs.action_k in small_cfg.k_set and obs.action_c in small_cfg.c_set
    assert env.tti_clock == 0 and env.backlog.size == 0
    assert len(env.history) == 1


@pytest.mark.parametrize(
    "latency,k,ok",
    [(0, 8, True), (11, 1, True), (11, 2, True), (11, 4, False), (5, 8, True), (6, 8, False)],
)
def test_latency_admit_examples(latency, k, ok):
    # budget 16 TTIs; RTT length is k + 3
    assert latency_admit(latency, k, 16) is ok


def test_latency_budget_of_default():
    assert latency_budget_ttis(SimConfig()) == 16


def test_zero_ues_step():
    cfg = SimConfig(n_ues=0, traffic_total_s=0.01)
    env = GfNomaEnv(cfg)
    env.reset(0)
    obs, r, _ = env.step(1, 12)
    assert obs.counts() == (0, 12, 0, 0, 0) and r == 0


def test_single_ue_high_snr_is_served():
    cfg = SimConfig(n_ues=1, cell_radius_m=10.0, traffic_total_s=0.01)
    env = GfNomaEnv(cfg)
    env.reset(0)
    total, done = 0, False
    while not done:
        _, r, done = env.step(1, 12)
        total += r
    assert total == 1
    assert env.ue_record(0).status is UeStatus.SERVED


@pytest.mark.parametrize("scheme", ["krep", "proactive"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_episode_accounting(small_cfg, scheme, seed):
    cfg = small_cfg.replace(scheme=type(small_cfg.scheme)(scheme))
    env = GfNomaEnv(cfg)
    ks, obs = run_random(env, seed, policy_seed=seed)
    assert env.done
    served = sum(o.v_sd for o in obs)
    assert served + env.dropped_cum == cfg.n_ues
    assert set(np.unique(env.status)) <= {UeStatus.SERVED, UeStatus.DROPPED}
    assert np.count_nonzero(env.status == UeStatus.SERVED) == served
    assert env.tti_clock == sum(rtt_duration_ttis(k) for k in ks)
    budget = latency_budget_ttis(cfg)
    assert np.all(env.latency[env.status == UeStatus.SERVED] <= budget)
    for o in obs:
        assert o.v_sd + o.v_ud == o.v_sc
        assert o.v_cc + o.v_ic + o.v_sc == o.action_c
        assert min(o.counts()) >= 0


def test_latency_sums_entered_rtts(small_cfg):
    # with a constant k every transmission adds exactly one RTT of latency
    env = GfNomaEnv(small_cfg)
    env.reset(4)
    done = False
    while not done:
        _, _, done = env.step(2, 24)
    assert np.array_equal(env.latency, env.harq * rtt_duration_ttis(2))


def test_tti_clock_nondecreasing_and_history_bounded(small_cfg):
    env = GfNomaEnv(small_cfg)
    env.reset(0)
    last = 0
    for _ in range(20):
        env.step(4, 24)
        assert env.tti_clock >= last
        last = env.tti_clock
        assert len(env.history) <= small_cfg.learn.m_obs


def test_two_ms_budget_allows_one_rtt_with_k8():
    cfg = SimConfig(n_ues=2000, traffic_total_s=0.5)
    env = GfNomaEnv(cfg)
    env.reset(0)
    done = False
    while not done:
        _, _, done = env.step(8, 48)
    # 11 + 11 > 16: no UE is ever retransmitted
    assert env.harq.max() == 1
    assert np.all(env.latency[env.harq == 1] == 11)


def test_short_second_rtt_after_k8_still_fits():
    cfg = SimConfig(n_ues=2000, traffic_total_s=0.5)
    env = GfNomaEnv(cfg)
    env.reset(0)
    waiting = env.backlog
    while waiting.size == 0:
        env.step(8, 48)
        waiting = env.backlog[env.harq[env.backlog] == 1]
    env.step(1, 48)
    # a k=1 round brings them to 11 + 4 = 15 TTIs, within the budget
    assert np.all(env.status[waiting] != UeStatus.DROPPED)


def test_step_errors(small_cfg):
    env = GfNomaEnv(small_cfg)
    with pytest.raises(EpisodeDone):
        env.step(1, 12)
    env.reset(0)
    with pytest.raises(ValueError):
        env.step(3, 12)
    with pytest.raises(ValueError):
        env.step(1, 13)
    env.done = True
    with pytest.raises(EpisodeDone):
        env.step(1, 12)


def test_single_state_example():
    obs = RttObservation(0, 48, 0, 0, 0, 1, 48, 0)
    assert single_state(obs, 48).tolist() == [0, 1, 0, 0, 0]


def test_cma_state_length_and_padding(cfg):
    obs = RttObservation(0, 12, 0, 0, 0, 1, 12, 0)
    v = cma_state([obs], 5, cfg.k_set, cfg.c_set)
    assert v.shape == (35,)
    assert np.all(v[7:] == 0)
    assert v[:7].tolist() == [1 / 5, 1 / 4, 0, 12 / 48, 0, 0, 0]


def test_cma_state_newest_first(cfg):
    a = RttObservation(1, 10, 1, 1, 0, 1, 12, 0)
    b = RttObservation(2, 40, 6, 3, 3, 8, 48, 4)
    v = cma_state([a, b], 5, cfg.k_set, cfg.c_set)
    assert v[0] == 1.0 and v[1] == 1.0
    assert v[7] == 1 / 5 and v[8] == 1 / 4


def test_adapters(small_cfg):
    s = SingleParamEnv(small_cfg)
    x = s.reset(0)
    assert x.shape == (5,) and s.n_actions == 5
    x, r, _ = s.step(0)
    assert x.shape == (5,) and r >= 0
    m = MultiParamEnv(small_cfg)
    x = m.reset(0)
    assert x.shape == (35,) and m.n_actions == (5, 4)
    x, _, _ = m.step((4, 3))
    assert np.array_equal(x, observation_vector(m.core, multi_agent=True))


def test_trace_row_matches_columns(small_cfg):
    env = GfNomaEnv(small_cfg)
    env.reset(0)
    obs, r, _ = env.step(2, 24)
    row = env.trace_row(obs, r)
    assert len(row) == len(TRACE_COLUMNS)
    assert dict(zip(TRACE_COLUMNS, row))["reward"] == r
