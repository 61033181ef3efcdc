"""CTU pool over F resource blocks, random CTU choice, and collision classification.

CTUs and RBs are numbered from 1. CTU ``c`` sits on RB ``ceil(c / L)`` where
``L = C / F`` is the number of signatures per RB.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class CtuPool:
    c_total: int
    n_rbs: int
    per_rb: int

    def rb_of(self, ctu: int) -> int:
        if not 1 <= ctu <= self.c_total:
            raise ValueError(f"CTU {ctu} outside 1..{self.c_total}")
        return math.ceil(ctu / self.per_rb)

    def ctus_of(self, rb: int) -> range:
        return range((rb - 1) * self.per_rb + 1, rb * self.per_rb + 1)


def build_pool(c: int, f: int) -> CtuPool:
    if c < 1 or f < 1:
        raise ValueError("C and F must be positive")
    if c % f:
        raise ValueError(f"C not divisible by F ({c} % {f} != 0)")
    return CtuPool(c_total=c, n_rbs=f, per_rb=c // f)


@dataclass
class CtuAssignment:
    choice: dict[int, int] = field(default_factory=dict)
    by_ctu: dict[int, list[int]] = field(default_factory=dict)

    @classmethod
    def from_choice(cls, choice: Mapping[int, int]) -> "CtuAssignment":
        by_ctu: dict[int, list[int]] = {}
        for ue in sorted(choice):
            by_ctu.setdefault(choice[ue], []).append(ue)
        return cls(choice=dict(choice), by_ctu=by_ctu)


@dataclass
class CollisionReport:
    idle: set[int]
    singleton: dict[int, int]
    collision: dict[int, list[int]]

    @property
    def v_ic(self) -> int:
        return len(self.idle)

    @property
    def v_sc(self) -> int:
        return len(self.singleton)

    @property
    def v_cc(self) -> int:
        return len(self.collision)


def draw_ctus(n: int, pool: CtuPool, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent uniform CTU indices in 1..C."""
    return rng.integers(1, pool.c_total + 1, size=n)


def select_ctus(
    active: Iterable[int], pool: CtuPool, rng: np.random.Generator
) -> CtuAssignment:
    ues = sorted(active)
    ctus = draw_ctus(len(ues), pool, rng)
    return CtuAssignment.from_choice(dict(zip(ues, (int(c) for c in ctus))))


def classify(assignment: CtuAssignment, pool: CtuPool) -> CollisionReport:
    singleton: dict[int, int] = {}
    collision: dict[int, list[int]] = {}
    for ctu, ues in assignment.by_ctu.items():
        if len(ues) == 1:
            singleton[ctu] = ues[0]
        else:
            collision[ctu] = list(ues)
    idle = set(range(1, pool.c_total + 1)).difference(assignment.by_ctu)
    return CollisionReport(idle=idle, singleton=singleton, collision=collision)


def occupancy(ctus: np.ndarray, pool: CtuPool) -> np.ndarray:
    """Number of UEs on each CTU; entry 0 is unused so the array is indexed by CTU."""
    return np.bincount(ctus, minlength=pool.c_total + 1)


def occupancy_batch(choices: np.ndarray, c_total: int) -> tuple[np.ndarray, np.ndarray]:
    """Occupancy for many assignments at once.

    ``choices`` is (m, n) with CTU indices in 1..C. Returns the (m, C+1) count
    table (column 0 unused) and the (m, n) count seen by each UE's CTU, so a UE
    is a singleton where that count is 1 and collided where it exceeds 1.
    """
    choices = np.asarray(choices, dtype=np.int64)
    m = choices.shape[0]
    width = c_total + 1
    flat = (choices + np.arange(m)[:, None] * width).ravel()
    occ = np.bincount(flat, minlength=m * width).reshape(m, width)
    return occ, np.take_along_axis(occ, choices, axis=1)


def classify_counts(ctus: np.ndarray, pool: CtuPool) -> tuple[int, int, int]:
    """(v_ic, v_sc, v_cc) straight from an array of chosen CTUs."""
    occ = occupancy(ctus, pool)[1:]
    v_sc = int(np.count_nonzero(occ == 1))
    v_cc = int(np.count_nonzero(occ > 1))
    return pool.c_total - v_sc - v_cc, v_sc, v_cc
