"""Per-RB successive interference cancellation for the two repetition schemes.

Within one repetition the singletons of an RB are decoded strongest first. A
stage succeeds when its SINR reaches the threshold, where the interference is
every weaker singleton still in the pass plus every collision UE on the RB.
Decoded signals are removed exactly. The pass stops at the first failure.

A UE decoded in one repetition keeps transmitting (and interfering) in the
following ones unless the Proactive early-stop rule removes it; its
``decoded_at`` is the first repetition that decoded it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import Scheme
from .phy import LinkBudget

# ACK of repetition k reaches the UE during repetition k+3; it is silent from k+4
FEEDBACK_LAG = 4

FadingFn = Callable[[np.ndarray, int], np.ndarray]


@dataclass
class RbRound:
    rb: int
    singleton_ues: list[tuple[int, float]]
    collision_ues: list[tuple[int, float]]
    k_max: int

    def __post_init__(self) -> None:
        ids = {u for u, _ in self.singleton_ues}
        if ids & {u for u, _ in self.collision_ues}:
            raise ValueError("singleton and collision UE lists must be disjoint")


@dataclass
class DecodeResult:
    decoded: set[int] = field(default_factory=set)
    decoded_at: dict[int, int] = field(default_factory=dict)
    failed: set[int] = field(default_factory=set)


def stage_sinr(signal, weaker, collision, noise_w):
    return signal / (weaker + collision + noise_w)


def sic_pass(
    powers_singleton: Sequence[tuple[int, float]],
    powers_collision: Sequence[float],
    noise_w: float,
    gamma_th: float,
) -> list[int]:
    """UEs decoded by one SIC pass, in decoding order."""
    if not powers_singleton:
        return []
    ids = np.array([u for u, _ in powers_singleton])
    p = np.array([w for _, w in powers_singleton], dtype=float)
    order = np.lexsort((ids, -p))
    n_ok = _pass_length(p[order], float(np.sum(powers_collision)), noise_w, gamma_th)
    return [int(u) for u in ids[order[:n_ok]]]


def _pass_length(p_desc: np.ndarray, coll_w: float, noise_w: float, gamma_th: float) -> int:
    weaker = np.zeros_like(p_desc)
    weaker[:-1] = np.cumsum(p_desc[::-1])[::-1][1:]
    ok = stage_sinr(p_desc, weaker, coll_w, noise_w) >= gamma_th
    return int(ok.size if ok.all() else ok.argmin())


def _pass_columns(power: np.ndarray, coll_w: np.ndarray, link: LinkBudget) -> np.ndarray:
    """Decoded mask of independent passes over the UE axis (-2) of ``power``.

    ``power`` is (..., n, K) and ``coll_w`` is (..., K). Rows must be ordered by
    ascending UE id so the stable sort breaks power ties toward the lower id.
    Zero-power rows (padding, or UEs that stopped transmitting) sort last and
    never pass a stage, so they do not change the outcome of real rows.
    """
    order = np.argsort(-power, axis=-2, kind="stable")
    p_desc = np.take_along_axis(power, order, axis=-2)
    weaker = np.zeros_like(p_desc)
    weaker[..., :-1, :] = np.cumsum(p_desc[..., ::-1, :], axis=-2)[..., ::-1, :][..., 1:, :]
    sinr = stage_sinr(p_desc, weaker, coll_w[..., None, :], link.noise_w)
    ok = (sinr >= link.gamma_th) & (p_desc > 0)
    ok_sorted = np.logical_and.accumulate(ok, axis=-2)
    mask = np.empty_like(ok_sorted)
    np.put_along_axis(mask, order, ok_sorted, axis=-2)
    return mask


def decode_stack(
    sing_power: np.ndarray, coll_w: np.ndarray, scheme: Scheme, link: LinkBudget
) -> np.ndarray:
    """First decoding repetition (1-based, 0 if never) for a stack of RBs.

    ``sing_power`` is (R, S, K): singleton received powers in watts, rows sorted
    by UE id within each RB and zero padded to a common S. ``coll_w`` is (R, K),
    the summed collision power per RB and repetition.
    """
    r, n, k_max = sing_power.shape
    decoded_at = np.zeros((r, n), dtype=np.int64)
    if n == 0:
        return decoded_at
    if scheme is Scheme.KREP or k_max < FEEDBACK_LAG:
        mask = _pass_columns(sing_power, coll_w, link)
        hit = mask.any(axis=-1)
        decoded_at[hit] = mask[hit].argmax(axis=-1) + 1
        return decoded_at
    for k in range(1, k_max + 1):
        p_k = sing_power[:, :, k - 1 : k]
        if k >= FEEDBACK_LAG:
            # ACKed UEs have stopped and colliding UEs never receive an ACK to act on
            stopped = (decoded_at > 0) & (decoded_at <= k - FEEDBACK_LAG)
            p_k = np.where(stopped[:, :, None], 0.0, p_k)
            coll_k = np.zeros((r, 1))
        else:
            coll_k = coll_w[:, k - 1 : k]
        mask = _pass_columns(p_k, coll_k, link)[:, :, 0]
        decoded_at[mask & (decoded_at == 0)] = k
    return decoded_at


def decode_powers(
    sing_power: np.ndarray,
    coll_power: np.ndarray,
    scheme: Scheme,
    link: LinkBudget,
) -> np.ndarray:
    """First decoding repetition (1-based, 0 if never) for each singleton row of one RB.

    ``sing_power`` is (n_singletons, K) and ``coll_power`` is (n_collision, K),
    both received powers in watts, singleton rows sorted by UE id.
    """
    n, k_max = sing_power.shape
    coll_w = coll_power.sum(axis=0) if coll_power.size else np.zeros(k_max)
    return decode_stack(sing_power[None], coll_w[None], scheme, link)[0]


def _power_matrix(
    ues: Sequence[tuple[int, float]], k_max: int, link: LinkBudget, fading: FadingFn
) -> tuple[np.ndarray, np.ndarray]:
    ues = sorted(ues)
    ids = np.array([u for u, _ in ues], dtype=np.int64)
    g = np.array([d for _, d in ues], dtype=float) ** (-link.pathloss_exp)
    power = np.empty((ids.size, k_max))
    for k in range(1, k_max + 1):
        power[:, k - 1] = link.tx_power_w * fading(ids, k) * g
    return ids, power


def _decode_round(
    rnd: RbRound, link: LinkBudget, fading: FadingFn, scheme: Scheme
) -> DecodeResult:
    ids, sing = _power_matrix(rnd.singleton_ues, rnd.k_max, link, fading)
    _, coll = _power_matrix(rnd.collision_ues, rnd.k_max, link, fading)
    at = decode_powers(sing, coll, scheme, link)
    result = DecodeResult()
    for ue, k in zip(ids.tolist(), at.tolist()):
        if k:
            result.decoded.add(ue)
            result.decoded_at[ue] = k
        else:
            result.failed.add(ue)
    return result


def decode_k_repetition(rnd: RbRound, link: LinkBudget, fading: FadingFn) -> DecodeResult:
    """``fading(ue_ids, k)`` returns the Exp(1) gains of repetition ``k``."""
    return _decode_round(rnd, link, fading, Scheme.KREP)


def decode_proactive(rnd: RbRound, link: LinkBudget, fading: FadingFn) -> DecodeResult:
    return _decode_round(rnd, link, fading, Scheme.PROACTIVE)
