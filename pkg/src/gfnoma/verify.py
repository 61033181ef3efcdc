"""Independent oracles and the self-check suites behind ``gfnoma verify``.

Each oracle recomputes a result by a different route than the production code:
exhaustive occupancy counting for collisions, a literal step-by-step replay of
the SIC procedures, central finite differences for the TD gradient, direct
probability sums and root finding for the load-estimation formulas, and
numerical quadrature for the traffic density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, stats

from . import baselines
from .access import CtuAssignment, build_pool, classify, occupancy_batch
from .config import SimConfig, db_to_linear, dbm_to_watt, rtt_duration_ttis
from .phy import LinkBudget
from .rng import FadingField
from .sic import RbRound, decode_k_repetition, decode_proactive
from .traffic import beta_pdf
from .valuefn import Minibatch, ValueNet, copy_into_target, net_init, td_gradient

FD_SCALE_FLOOR = 1e-6

FIG7_CHOICE = {1: 6, 5: 5, 4: 1, 7: 1, 2: 2, 3: 2, 6: 4, 8: 4}


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<22} cases={self.cases} failures={len(self.failures)}"


# -- collision detection ------------------------------------------------------


def occupancy_oracle(choices: tuple[int, ...], c: int) -> tuple[set, dict, dict]:
    """Idle / singleton / collision sets by counting; UE ids are 1..N in order."""
    counts = [0] * (c + 1)
    for ctu in choices:
        counts[ctu] += 1
    idle = {j for j in range(1, c + 1) if counts[j] == 0}
    single = {}
    coll: dict[int, list[int]] = {}
    for ue, ctu in enumerate(choices, start=1):
        if counts[ctu] == 1:
            single[ctu] = ue
        elif counts[ctu] > 1:
            coll.setdefault(ctu, []).append(ue)
    return idle, single, coll


def _report_matches(choices: tuple[int, ...], c: int, pool) -> bool:
    choice = {ue: ctu for ue, ctu in enumerate(choices, start=1)}
    rep = classify(CtuAssignment.from_choice(choice), pool)
    idle, single, coll = occupancy_oracle(choices, c)
    return rep.idle == idle and rep.singleton == single and rep.collision == coll


def all_assignments(n: int, c: int) -> np.ndarray:
    """Every assignment of ``n`` UEs to CTUs 1..c as rows of a (c**n, n) array."""
    codes = np.arange(c**n, dtype=np.int64)
    return codes[:, None] // c ** np.arange(n, dtype=np.int64)[None, :] % c + 1


def occupancy_by_comparison(choices: np.ndarray, c: int) -> np.ndarray:
    """(m, c) counts built CTU by CTU from equality tests."""
    return np.stack([(choices == j).sum(axis=1) for j in range(1, c + 1)], axis=1)


def collision_suite(n_max: int = 8, c_max: int = 6, literal_n_max: int = 7,
                    sampled: int = 20000, seed: int = 0) -> SuiteResult:
    """Exhaustive check of the batched occupancy path plus literal dict checks.

    Every assignment with N <= n_max and C <= c_max goes through the array path
    the environment uses. The dict-based ``classify`` is compared case by case
    for N <= literal_n_max and on ``sampled`` random assignments beyond that.
    """
    res = SuiteResult("collision-exhaustive")
    fig7_pool = build_pool(6, 2)
    fig7 = classify(CtuAssignment.from_choice(FIG7_CHOICE), fig7_pool)
    res.cases += 1
    if (fig7.idle, set(fig7.singleton), set(fig7.collision)) != ({3}, {5, 6}, {1, 2, 4}):
        res.failures.append("Fig. 7 instance misclassified")
    fig7_rows = np.array([[FIG7_CHOICE[u] for u in range(1, 9)]])
    occ, seen = occupancy_batch(fig7_rows, 6)
    res.cases += 1
    if set(np.flatnonzero(occ[0, 1:] == 0) + 1) != {3} or set(fig7_rows[0][seen[0] == 1]) != {5, 6}:
        res.failures.append("Fig. 7 instance misclassified by the array path")
    for c in range(1, c_max + 1):
        pool = build_pool(c, 1)
        for n in range(0, n_max + 1):
            rows = all_assignments(n, c)
            want = occupancy_by_comparison(rows, c)
            occ, seen = occupancy_batch(rows, c)
            want_seen = np.take_along_axis(np.concatenate([np.zeros((len(rows), 1), int), want], 1), rows, 1)
            bad = np.flatnonzero((occ[:, 1:] != want).any(axis=1) | (seen != want_seen).any(axis=1))
            res.cases += len(rows)
            res.failures.extend(f"array path C={c} choices={tuple(rows[i])}" for i in bad[:10])
            if n <= literal_n_max:
                for choices in map(tuple, rows.tolist()):
                    res.cases += 1
                    if not _report_matches(choices, c, pool):
                        res.failures.append(f"classify C={c} choices={choices}")
    rng = np.random.default_rng(seed)
    for _ in range(sampled):
        c = int(rng.integers(1, c_max + 1))
        n = int(rng.integers(literal_n_max + 1, n_max + 1))
        choices = tuple(int(v) for v in rng.integers(1, c + 1, size=n))
        res.cases += 1
        if not _report_matches(choices, c, build_pool(c, 1)):
            res.failures.append(f"classify C={c} choices={choices}")
    return res


# -- SIC decoding ---------------------------------------------------------------


def _literal_pass(
    singletons: list[int],
    colliders: list[int],
    power: Callable[[int], float],
    link: LinkBudget,
) -> list[int]:
    """Steps 2-5: decode CTUs strongest first until a stage fails."""
    p = {u: power(u) for u in singletons}
    order = sorted(singletons, key=lambda u: (-p[u], u))
    coll_total = 0.0
    for u in colliders:
        coll_total += power(u)
    decoded = []
    s = 0
    while s < len(order):
        rest = 0.0
        for m in order[s + 1:]:
            rest += p[m]
        if p[order[s]] / (rest + coll_total + link.noise_w) >= link.gamma_th:
            decoded.append(order[s])
            s += 1
        else:
            break
    return decoded


def replay_k_repetition(
    rnd: RbRound, link: LinkBudget, fading: Callable[[np.ndarray, int], np.ndarray]
) -> dict[int, int]:
    """First decoding repetition per UE, replaying the K-repetition step list."""
    dist = dict(rnd.singleton_ues + rnd.collision_ues)
    sing = [u for u, _ in rnd.singleton_ues]
    coll = [u for u, _ in rnd.collision_ues]
    first: dict[int, int] = {}
    for k in range(1, rnd.k_max + 1):

        def power(u: int, k: int = k) -> float:
            h = float(fading(np.array([u]), k)[0])
            return link.tx_power_w * h * dist[u] ** (-link.pathloss_exp)

        for u in _literal_pass(sing, coll, power, link):
            first.setdefault(u, k)
    return first


def replay_proactive(
    rnd: RbRound, link: LinkBudget, fading: Callable[[np.ndarray, int], np.ndarray]
) -> dict[int, int]:
    """First decoding repetition per UE, replaying the Proactive step list."""
    dist = dict(rnd.singleton_ues + rnd.collision_ues)
    sing = [u for u, _ in rnd.singleton_ues]
    coll = [u for u, _ in rnd.collision_ues]
    decoded_in: dict[int, set[int]] = {}
    first: dict[int, int] = {}
    for k in range(1, rnd.k_max + 1):
        if k >= 4:
            sing = [u for u in sing if u not in decoded_in.get(k - 4, set())]
            coll = []

        def power(u: int, k: int = k) -> float:
            h = float(fading(np.array([u]), k)[0])
            return link.tx_power_w * h * dist[u] ** (-link.pathloss_exp)

        decoded_in[k] = set(_literal_pass(sing, coll, power, link))
        for u in decoded_in[k]:
            first.setdefault(u, k)
    return first


def random_round(rng: np.random.Generator, k_max: int | None = None) -> RbRound:
    n_s = int(rng.integers(0, 5))
    n_c = int(rng.integers(0, 3))
    ids = rng.permutation(50)[: n_s + n_c].tolist()
    dist = rng.uniform(50.0, 10000.0, size=n_s + n_c).tolist()
    return RbRound(
        rb=1,
        singleton_ues=list(zip(ids[:n_s], dist[:n_s])),
        collision_ues=list(zip(ids[n_s:], dist[n_s:])),
        k_max=int(rng.integers(1, 9)) if k_max is None else k_max,
    )


def sic_suite(n_cases: int = 10000, seed: int = 0) -> SuiteResult:
    res = SuiteResult("sic-step-replay")
    rng = np.random.default_rng(seed)
    base = LinkBudget.from_config(SimConfig())
    for i in range(n_cases):
        rnd = random_round(rng)
        # vary the threshold so both early stops and full decodes occur
        link = LinkBudget(base.tx_power_w, base.noise_w, 10 ** rng.uniform(-1.5, 0.5), 4.0)
        field_ = FadingField(np.uint64(rng.integers(0, 2**63)))
        ues = [u for u, _ in rnd.singleton_ues + rnd.collision_ues]
        # one hash evaluation per case; both sides read the same table
        table = field_.gains(0, np.array(ues, dtype=np.int64)[:, None], np.arange(1, rnd.k_max + 1)[None, :])
        row = {u: i for i, u in enumerate(ues)}

        def fade(ids: np.ndarray, k: int, table=table, row=row) -> np.ndarray:
            return table[[row[int(u)] for u in ids], k - 1]

        for name, impl, oracle in (
            ("krep", decode_k_repetition, replay_k_repetition),
            ("proactive", decode_proactive, replay_proactive),
        ):
            res.cases += 1
            got = impl(rnd, link, fade)
            want = oracle(rnd, link, fade)
            sing = {u for u, _ in rnd.singleton_ues}
            if got.decoded_at != want or got.failed != sing - set(want):
                res.failures.append(f"case {i} {name}: got {got.decoded_at} want {want}")
    return res


# -- TD gradient ----------------------------------------------------------------


def _flat_params(net: ValueNet) -> list[np.ndarray]:
    return [p for pair in zip(net.weights, net.biases) for p in pair]


def _loss_and_pattern(online: ValueNet, batch: Minibatch, targets: np.ndarray) -> tuple[float, bytes]:
    """Loss with fixed targets, plus the ReLU on/off pattern of every hidden unit."""
    x = batch.states
    pattern = []
    for i, (w, b) in enumerate(zip(online.weights, online.biases)):
        x = x @ w + b
        if i < len(online.weights) - 1:
            pattern.append(x > 0)
            x = np.maximum(x, 0.0)
    q = x[np.arange(len(batch)), batch.actions]
    return float(0.5 * np.mean((targets - q) ** 2)), np.concatenate([p.ravel() for p in pattern]).tobytes()


def finite_difference_error(
    online: ValueNet, target: ValueNet, batch: Minibatch, gamma: float, ddqn: bool, h: float = 1e-4
) -> float:
    """Max relative error between td_gradient and a five-point central difference.

    Targets are computed once from the unperturbed nets and held fixed, since the
    gradient treats them as constants. A probe that flips any ReLU is retried
    with a smaller step, so kinks of the loss never enter the comparison.
    """
    from .valuefn import td_targets

    targets = td_targets(online, target, batch, gamma, ddqn)
    _, base_pattern = _loss_and_pattern(online, batch, targets)
    grad = td_gradient(online, target, batch, gamma, ddqn)
    analytic = [g for pair in zip(grad.weights, grad.biases) for g in pair]
    worst = 0.0
    for param, g in zip(_flat_params(online), analytic):
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = param[idx]
            step = h
            for _attempt in range(6):
                values = []
                smooth = True
                for m in (-2, -1, 1, 2):
                    param[idx] = old + m * step
                    loss, pattern = _loss_and_pattern(online, batch, targets)
                    values.append(loss)
                    smooth = smooth and pattern == base_pattern
                param[idx] = old
                if smooth:
                    break
                step /= 10
            f_m2, f_m1, f_p1, f_p2 = values
            numeric = (f_m2 - 8 * f_m1 + 8 * f_p1 - f_p2) / (12 * step)
            # the floor keeps round-off on exactly-zero gradients from dominating
            scale = max(abs(numeric), abs(g[idx]), FD_SCALE_FLOOR)
            worst = max(worst, abs(numeric - g[idx]) / scale)
    return worst


def random_batch(rng: np.random.Generator, state_dim: int, n_actions: int, size: int = 8) -> Minibatch:
    return Minibatch(
        states=rng.normal(size=(size, state_dim)),
        actions=rng.integers(0, n_actions, size=size),
        rewards=rng.normal(size=size),
        next_states=rng.normal(size=(size, state_dim)),
        terminal=rng.random(size) < 0.2,
    )


def gradient_suite(n_batches: int = 100, dims=(7, 16, 16, 5), tol: float = 1e-4, seed: int = 0) -> SuiteResult:
    res = SuiteResult("td-gradient-fd")
    rng = np.random.default_rng(seed)
    for i in range(n_batches):
        online = net_init(dims, rng)
        for b in online.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        target = copy_into_target(online)
        for w in target.weights:
            w += rng.normal(scale=0.05, size=w.shape)
        batch = random_batch(rng, dims[0], dims[-1])
        ddqn = bool(i % 2)
        err = finite_difference_error(online, target, batch, gamma=0.5, ddqn=ddqn)
        res.cases += 1
        if not err <= tol:
            res.failures.append(f"batch {i}: max relative error {err:.3e}")
    return res


# -- load estimation closed forms -------------------------------------------------


def idle_by_sum(c: int, n: int) -> float:
    """Sum over CTUs of the probability that no UE picked it."""
    return float(np.full(c, stats.binom.pmf(0, n, 1.0 / c)).sum())


def success_by_sum(c: int, n: int) -> float:
    """Sum over CTUs of the probability that exactly one UE picked it."""
    return float(np.full(c, stats.binom.pmf(1, n, 1.0 / c)).sum())


def _per_ctu_table(c: int, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """``idle_by_sum`` and ``success_by_sum`` for n = 0..n_max in one pmf call."""
    pmf = stats.binom.pmf(np.array([[0], [1]]), np.arange(n_max + 1)[None, :], 1.0 / c)
    return np.full((c, n_max + 1), pmf[0]).sum(axis=0), np.full((c, n_max + 1), pmf[1]).sum(axis=0)


def invert_by_root(v_ic: float, c: int) -> float:
    v = min(max(v_ic, 0.5), c - 0.5)
    return optimize.brentq(lambda n: c * (1 - 1 / c) ** n - v, 0.0, 1e4, xtol=1e-14, rtol=1e-15)


def le_suite(tol: float = 1e-9) -> SuiteResult:
    res = SuiteResult("le-closed-forms")

    def check(label: str, got: float, want: float) -> None:
        res.cases += 1
        if not abs(got - want) <= tol * max(1.0, abs(want)):
            res.failures.append(f"{label}: {got!r} != {want!r}")

    for c in (1, 2, 4, 12, 24, 36, 48):
        idle, success = _per_ctu_table(c, 64)
        for n in range(0, 65):
            check(f"idle c={c} n={n}", baselines.le_expected_idle(c, n), idle[n])
            check(f"success c={c} n={n}", baselines.le_expected_success(c, n), success[n])
    for c in (2, 4, 12, 24, 36, 48):
        for v in np.linspace(0, c, 25):
            check(f"invert c={c} v={v:.3f}", baselines.le_invert(v, c), invert_by_root(v, c))
    c_set = (12, 24, 36, 48)
    tables = {c: _per_ctu_table(c, 100)[1] for c in c_set}
    for n in np.linspace(0, 100, 41):
        values = [tables[c][int(n)] if float(n).is_integer() else n * (1 - 1 / c) ** (n - 1) for c in c_set]
        want = c_set[int(np.argmax(values))]
        res.cases += 1
        if baselines.le_choose_c(float(n), c_set) != want:
            res.failures.append(f"choose_c n={n}: got {baselines.le_choose_c(float(n), c_set)} want {want}")
    for k in range(1, 65):
        res.cases += 1
        if rtt_duration_ttis(k) != k + 3:
            res.failures.append(f"rtt k={k}")
    for x in np.linspace(-150.0, 40.0, 77):
        # dBm is ten times the base-10 log of milliwatts
        check(f"dbm {x:.2f}", dbm_to_watt(x), 1e-3 * math.exp(x / 10.0 * math.log(10.0)))
        check(f"db {x:.2f}", db_to_linear(x), math.exp(x / 10.0 * math.log(10.0)))
    return res


# -- traffic ------------------------------------------------------------------------


def traffic_suite() -> SuiteResult:
    res = SuiteResult("traffic-normalization")
    for a, b, total in ((2, 4, 2.0), (1, 1, 1.0), (3, 2, 0.5), (2, 4, 0.5), (1.5, 2.5, 10.0)):
        cfg = SimConfig(beta_alpha=a, beta_beta=b, traffic_total_s=total, n_ues=0)
        mass, _ = integrate.quad(lambda t: beta_pdf(t, cfg), 0.0, total, epsabs=1e-12, epsrel=1e-12)
        res.cases += 1
        if abs(mass - 1.0) > 1e-6:
            res.failures.append(f"Beta({a},{b}) T={total}: integral {mass}")
    return res


SUITES: dict[str, Callable[[], SuiteResult]] = {
    "collision": collision_suite,
    "sic": sic_suite,
    "gradient": gradient_suite,
    "le": le_suite,
    "traffic": traffic_suite,
}


def run_all(names: list[str] | None = None) -> list[SuiteResult]:
    return [SUITES[n]() for n in (names or list(SUITES))]
