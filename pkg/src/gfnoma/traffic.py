"""Bursty activation traffic: time-limited Beta arrival profile."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.special import beta as beta_fn
from scipy.special import betainc

from .config import SimConfig

CDF_POINTS = 512


@dataclass(frozen=True)
class ActivationSchedule:
    """Sorted activation instants in seconds; UE ``i`` activates at ``times[i]``."""

    times: np.ndarray
    horizon_s: float

    def __post_init__(self) -> None:
        t = self.times
        if t.size and (t[0] < 0 or t[-1] > self.horizon_s or np.any(np.diff(t) < 0)):
            raise ValueError("activation times must be sorted and lie in [0, horizon]")

    @property
    def n_ues(self) -> int:
        return int(self.times.size)

    def to_csv(self, path: str | os.PathLike[str]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ue_id", "activation_s"])
            for i, t in enumerate(self.times):
                writer.writerow([i, repr(float(t))])


def beta_pdf(tau: float | np.ndarray, cfg: SimConfig) -> float | np.ndarray:
    """Activation density per second at time ``tau`` in [0, T]."""
    t = np.asarray(tau, dtype=float)
    total = cfg.traffic_total_s
    if np.any(t < 0) or np.any(t > total):
        raise ValueError(f"tau outside [0, {total}]")
    a, b = cfg.beta_alpha, cfg.beta_beta
    with np.errstate(divide="ignore"):
        dens = t ** (a - 1) * (total - t) ** (b - 1) / (total ** (a + b - 1) * beta_fn(a, b))
    return float(dens) if dens.ndim == 0 else dens


def _cdf_table(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(0.0, cfg.traffic_total_s, CDF_POINTS)
    cdf = betainc(cfg.beta_alpha, cfg.beta_beta, grid / cfg.traffic_total_s)
    cdf[0], cdf[-1] = 0.0, 1.0
    return grid, cdf


def sample_activations(cfg: SimConfig, rng: np.random.Generator) -> ActivationSchedule:
    """Draw ``n_ues`` activation times by inverse-CDF sampling, sorted ascending."""
    grid, cdf = _cdf_table(cfg)
    u = rng.random(cfg.n_ues)
    times = np.sort(np.interp(u, cdf, grid))
    return ActivationSchedule(times=times, horizon_s=cfg.traffic_total_s)


def window_bounds(
    s: ActivationSchedule, from_tti: int, to_tti: int, cfg: SimConfig
) -> tuple[int, int]:
    """Index range ``[lo, hi)`` of UEs activating in (from_tti, to_tti] (in TTIs)."""
    if not from_tti < to_tti:
        raise ValueError("window must satisfy from_tti < to_tti")
    lo = int(np.searchsorted(s.times, from_tti * cfg.tti_s, side="right"))
    hi = int(np.searchsorted(s.times, to_tti * cfg.tti_s, side="right"))
    return lo, hi


def arrivals_in_window(
    s: ActivationSchedule, from_tti: int, to_tti: int, cfg: SimConfig
) -> np.ndarray:
    lo, hi = window_bounds(s, from_tti, to_tti, cfg)
    return np.arange(lo, hi)


def expected_arrivals(from_tti: float, to_tti: float, cfg: SimConfig) -> float:
    """n_ues times the activation probability mass of the window."""
    total = cfg.traffic_total_s
    lo = min(max(from_tti * cfg.tti_s / total, 0.0), 1.0)
    hi = min(max(to_tti * cfg.tti_s / total, 0.0), 1.0)
    a, b = cfg.beta_alpha, cfg.beta_beta
    return cfg.n_ues * float(betainc(a, b, hi) - betainc(a, b, lo))


PEAK_BIN_TTIS = 25
PEAK_SMOOTH_TTIS = 400.0


def peak_of_counts(counts: np.ndarray, edges: np.ndarray, smooth_ttis: float = PEAK_SMOOTH_TTIS) -> float:
    """Center of the highest bin after Gaussian smoothing with std ``smooth_ttis``."""
    width = float(edges[1] - edges[0])
    smoothed = gaussian_filter1d(np.asarray(counts, dtype=float), smooth_ttis / width, mode="constant")
    i = int(smoothed.argmax())
    return 0.5 * float(edges[i] + edges[i + 1])


def histogram_peak_tti(
    s: ActivationSchedule, cfg: SimConfig, bin_ttis: int = PEAK_BIN_TTIS
) -> float:
    """Location (in TTIs) of the peak of the smoothed activation histogram.

    The Beta density is flat near its mode, so the raw histogram maximum is
    dominated by counting noise; smoothing first gives a stable estimate.
    """
    edges = np.arange(0, cfg.horizon_ttis + bin_ttis, bin_ttis, dtype=float)
    counts, _ = np.histogram(s.times / cfg.tti_s, bins=edges)
    return peak_of_counts(counts, edges)
