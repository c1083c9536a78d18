"""Mixed-variable deployment genome: site selection bits plus pan/tilt per site."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PAN_RANGE = (-180.0, 180.0)
TILT_RANGE = (-90.0, 90.0)


@dataclass(frozen=True, eq=False)
class Solution:
    select: np.ndarray
    pan: np.ndarray
    tilt: np.ndarray

    def __post_init__(self):
        sel = np.asarray(self.select, dtype=np.int8).copy()
        pan = np.asarray(self.pan, dtype=np.float64).copy()
        tilt = np.asarray(self.tilt, dtype=np.float64).copy()
        if not (sel.ndim == pan.ndim == tilt.ndim == 1 and len(sel) == len(pan) == len(tilt)):
            raise ValueError("select, pan and tilt must be 1-D vectors of equal length")
        for a in (sel, pan, tilt):
            a.setflags(write=False)
        object.__setattr__(self, "select", sel)
        object.__setattr__(self, "pan", pan)
        object.__setattr__(self, "tilt", tilt)

    @property
    def n_sites(self) -> int:
        return len(self.select)

    def flat(self) -> np.ndarray:
        """Flat record ``b_1..b_Z, pan_1..pan_Z, tilt_1..tilt_Z``."""
        return np.concatenate([self.select.astype(np.float64), self.pan, self.tilt])

    @classmethod
    def from_flat(cls, row) -> "Solution":
        row = np.asarray(row, dtype=np.float64)
        z = len(row) // 3
        return cls(np.rint(row[:z]).astype(np.int8), row[z:2 * z], row[2 * z:])

    def __eq__(self, other):
        if not isinstance(other, Solution):
            return NotImplemented
        return (
            np.array_equal(self.select, other.select)
            and np.array_equal(self.pan, other.pan)
            and np.array_equal(self.tilt, other.tilt)
        )

    __hash__ = None


@dataclass(frozen=True)
class EvaluatedSolution:
    solution: Solution
    fitness: float
    eval_index: int


def is_valid(sol: Solution, k: int) -> bool:
    return (
        int(sol.select.sum()) == k
        and bool(np.all((sol.select == 0) | (sol.select == 1)))
        and bool(np.all((sol.pan >= PAN_RANGE[0]) & (sol.pan <= PAN_RANGE[1])))
        and bool(np.all((sol.tilt >= TILT_RANGE[0]) & (sol.tilt <= TILT_RANGE[1])))
    )


def check_valid(sol: Solution, k: int) -> None:
    if not is_valid(sol, k):
        raise ValueError(f"invalid solution: needs exactly k={k} selected sites and in-range angles")


def stack(solutions: Sequence[Solution]) -> np.ndarray:
    """``(n, 3, Z)`` array of (select, pan, tilt) per solution."""
    return np.stack([np.stack([s.select.astype(np.float64), s.pan, s.tilt]) for s in solutions])


def unstack(arr: np.ndarray) -> list[Solution]:
    return [Solution(np.rint(a[0]).astype(np.int8), a[1], a[2]) for a in arr]


def random_solution(n_sites: int, k: int, rng: np.random.Generator) -> Solution:
    sel = np.zeros(n_sites, dtype=np.int8)
    sel[rng.choice(n_sites, size=k, replace=False)] = 1
    return Solution(sel, rng.uniform(*PAN_RANGE, n_sites), rng.uniform(*TILT_RANGE, n_sites))


def repair(select, k: int, rng: np.random.Generator) -> np.ndarray:
    """Flip randomly chosen bits until exactly ``k`` are set."""
    sel = np.array(select, dtype=np.int8)
    if k > len(sel) or k < 0:
        raise ValueError(f"k={k} incompatible with {len(sel)} sites")
    ones = np.flatnonzero(sel)
    if len(ones) > k:
        sel[rng.choice(ones, size=len(ones) - k, replace=False)] = 0
    elif len(ones) < k:
        zeros = np.flatnonzero(sel == 0)
        sel[rng.choice(zeros, size=k - len(ones), replace=False)] = 1
    return sel


def _scaled(sol: Solution) -> np.ndarray:
    return np.concatenate([
        sol.select.astype(np.float64),
        (sol.pan - PAN_RANGE[0]) / (PAN_RANGE[1] - PAN_RANGE[0]),
        (sol.tilt - TILT_RANGE[0]) / (TILT_RANGE[1] - TILT_RANGE[0]),
    ])


def unit_scale(arr: np.ndarray) -> np.ndarray:
    """Map a stacked ``(n, 3, Z)`` array to ``(n, 3Z)`` with every variable in [0, 1]."""
    out = np.empty_like(arr, dtype=np.float64)
    out[:, 0] = arr[:, 0]
    out[:, 1] = (arr[:, 1] - PAN_RANGE[0]) / (PAN_RANGE[1] - PAN_RANGE[0])
    out[:, 2] = (arr[:, 2] - TILT_RANGE[0]) / (TILT_RANGE[1] - TILT_RANGE[0])
    return out.reshape(len(arr), -1)


def gower_distance(a: Solution, b: Solution) -> float:
    """Mean per-variable dissimilarity: bit mismatch, range-normalised angle gap."""
    if a.n_sites != b.n_sites:
        raise ValueError("solutions have different numbers of sites")
    return float(np.mean(np.abs(_scaled(a) - _scaled(b))))


def normalized_euclidean(a: Solution, b: Solution) -> float:
    if a.n_sites != b.n_sites:
        raise ValueError("solutions have different numbers of sites")
    return float(np.linalg.norm(_scaled(a) - _scaled(b)))


def permute(sol: Solution, pi) -> Solution:
    pi = np.asarray(pi)
    return Solution(sol.select[pi], sol.pan[pi], sol.tilt[pi])


def permute_pair(a: Solution, b: Solution, pi) -> tuple[Solution, Solution]:
    """Move every site's (select, pan, tilt) triple to the same new slot in both solutions."""
    pi = np.asarray(pi)
    n = a.n_sites
    if b.n_sites != n or pi.shape != (n,) or not np.array_equal(np.sort(pi), np.arange(n)):
        raise ValueError("pi must be a permutation of the site indices")
    return permute(a, pi), permute(b, pi)
