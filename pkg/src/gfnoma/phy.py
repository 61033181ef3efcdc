"""UE geometry, path loss, Rayleigh fading and the SIC stage SINR."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import SimConfig, db_to_linear, dbm_to_watt

MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class UePhy:
    ue_id: int
    distance_m: float
    pathgain: float


@dataclass(frozen=True)
class RxPower:
    ue_id: int
    k: int
    power_w: float


@dataclass(frozen=True)
class LinkBudget:
    """Linear-scale constants of the uplink, resolved once from a config."""

    tx_power_w: float
    noise_w: float
    gamma_th: float
    pathloss_exp: float

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "LinkBudget":
        return cls(
            tx_power_w=dbm_to_watt(cfg.tx_power_dbm),
            noise_w=dbm_to_watt(cfg.noise_dbm),
            gamma_th=db_to_linear(cfg.sinr_threshold_db),
            pathloss_exp=cfg.pathloss_exp,
        )


def sample_distances(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Distances of ``n_ues`` points uniform on the cell disk, floored at 1 m."""
    r = cfg.cell_radius_m * np.sqrt(rng.random(cfg.n_ues))
    return np.maximum(r, min(MIN_DISTANCE_M, cfg.cell_radius_m))


def pathgain(distance_m: np.ndarray | float, eta: float) -> np.ndarray | float:
    return np.asarray(distance_m, dtype=float) ** (-eta)


def place_ues(cfg: SimConfig, rng: np.random.Generator) -> list[UePhy]:
    r = sample_distances(cfg, rng)
    g = pathgain(r, cfg.pathloss_exp)
    return [UePhy(i, float(d), float(p)) for i, (d, p) in enumerate(zip(r, g))]


def draw_fading(rng: np.random.Generator, size: int | None = None) -> float | np.ndarray:
    return rng.exponential(1.0, size)


def received_power(cfg: SimConfig, ue: UePhy, h: float) -> float:
    if h < 0:
        raise ValueError("fading gain must be >= 0")
    return dbm_to_watt(cfg.tx_power_dbm) * h * ue.pathgain


def sinr(signal_w: float, interferers_w: Sequence[float], noise_w: float) -> float:
    if noise_w <= 0:
        raise ValueError("noise power must be > 0")
    return signal_w / (float(np.sum(interferers_w)) + noise_w)
