"""Correlation-aware mixed-variable GA used as the global optimiser.

Each candidate site's (select, pan, tilt) triple is treated as one unit
during crossover, so a site's orientation always travels with its selection
bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .genome import PAN_RANGE, TILT_RANGE, EvaluatedSolution, Solution, repair


@dataclass(frozen=True)
class GaConfig:
    pop_size: int = 100
    crossover_prob: float = 1.0
    mutation_prob: float = 0.1
    tournament_size: int = 2
    angle_sigma_frac: float = 0.05

    def __post_init__(self):
        if self.pop_size < 2 or self.tournament_size < 2:
            raise ValueError("pop_size and tournament_size must be >= 2")
        if not (0 <= self.crossover_prob <= 1 and 0 <= self.mutation_prob <= 1):
            raise ValueError("probabilities must lie in [0, 1]")


def tournament(fitness: np.ndarray, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``n`` tournament winners (lowest fitness wins, first drawn on ties)."""
    draws = rng.integers(0, len(fitness), size=(n, size))
    return draws[np.arange(n), np.argmin(fitness[draws], axis=1)]


def _fix_count(mask: np.ndarray, p1: np.ndarray, p2: np.ndarray, k: int, rng: np.random.Generator):
    """Re-pick sites from the other parent until the child selects exactly ``k``.

    Only sites where the parents disagree on selection are touched, and a
    re-picked site takes the other parent's whole triple.  Both parents
    selecting ``k`` sites guarantees enough such sites exist.
    """
    child_sel = np.where(mask, p1[0], p2[0])
    other_sel = np.where(mask, p2[0], p1[0])
    surplus = int(child_sel.sum()) - k
    if surplus > 0:
        cand = np.flatnonzero((child_sel == 1) & (other_sel == 0))
        mask[rng.choice(cand, size=min(surplus, len(cand)), replace=False)] ^= True
    elif surplus < 0:
        cand = np.flatnonzero((child_sel == 0) & (other_sel == 1))
        mask[rng.choice(cand, size=min(-surplus, len(cand)), replace=False)] ^= True
    return np.where(mask, p1, p2)


def crossover(p1: np.ndarray, p2: np.ndarray, k: int, rng: np.random.Generator):
    """Uniform crossover over site triples; arrays are ``(3, Z)``."""
    mask = rng.random(p1.shape[1]) < 0.5
    c1 = _fix_count(mask.copy(), p1, p2, k, rng)
    c2 = _fix_count(~mask, p1, p2, k, rng)
    if int(c1[0].sum()) != k or int(c2[0].sum()) != k:
        # parents off the constraint; fall back to plain bit repair
        c1[0] = repair(c1[0], k, rng)
        c2[0] = repair(c2[0], k, rng)
    return c1, c2


def mutate(child: np.ndarray, cfg: GaConfig, rng: np.random.Generator) -> np.ndarray:
    z = child.shape[1]
    pm = cfg.mutation_prob
    sel = child[0]
    for j in np.flatnonzero(sel == 1):
        if rng.random() < pm:
            free = np.flatnonzero(sel == 0)
            if len(free):
                sel[rng.choice(free)] = 1
                sel[j] = 0
    for row, (lo, hi) in ((1, PAN_RANGE), (2, TILT_RANGE)):
        hit = rng.random(z) < pm
        noise = rng.normal(0.0, cfg.angle_sigma_frac * (hi - lo), z)
        child[row] = np.clip(np.where(hit, child[row] + noise, child[row]), lo, hi)
    return child


def ga_offspring(parents: Sequence[EvaluatedSolution], cfg: GaConfig, k: int,
                 rng: np.random.Generator) -> list[Solution]:
    """``cfg.pop_size`` offspring from tournament selection, triple crossover and mutation."""
    n = cfg.pop_size
    if len(parents) < 2:
        raise ValueError(f"need at least 2 parents, got {len(parents)}")
    genes = [np.stack([p.solution.select.astype(np.float64), p.solution.pan, p.solution.tilt])
             for p in parents]
    fitness = np.array([p.fitness for p in parents])
    winners = tournament(fitness, n + n % 2, cfg.tournament_size, rng)

    children = []
    for a, b in zip(winners[0::2], winners[1::2]):
        c1, c2 = genes[a].copy(), genes[b].copy()
        if rng.random() < cfg.crossover_prob:
            c1, c2 = crossover(c1, c2, k, rng)
        children.append(mutate(c1, cfg, rng))
        children.append(mutate(c2, cfg, rng))
    return [Solution(c[0].astype(np.int8), c[1], c[2]) for c in children[:n]]
