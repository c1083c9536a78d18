"""Surrogate-assisted local search: fitness-weighted EDA screened by a Gower RBF network."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from .genome import PAN_RANGE, TILT_RANGE, EvaluatedSolution, Solution, stack, unit_scale

log = logging.getLogger(__name__)

FITNESS_EPS = 1e-12
FALLBACK_RIDGE = 1e-8
FALLBACK_WIDTH = 0.1


@dataclass(frozen=True)
class EdaModel:
    weights: np.ndarray
    mean: np.ndarray  # (2, Z): pan row, tilt row
    std: np.ndarray
    prob: np.ndarray  # (Z,)


def top_entries(archive: Sequence[EvaluatedSolution], n: int) -> list[EvaluatedSolution]:
    """Best ``n`` entries, ties resolved by evaluation order."""
    return sorted(archive, key=lambda e: (e.fitness, e.eval_index))[:n]


def fit_eda(archive: Sequence[EvaluatedSolution], n_best: int) -> EdaModel:
    if n_best > len(archive) or n_best < 1:
        raise ValueError(f"cannot select {n_best} individuals from an archive of {len(archive)}")
    pop = top_entries(archive, n_best)
    genes = stack([e.solution for e in pop])
    f = np.array([e.fitness for e in pop])
    rev = f.max() - f + FITNESS_EPS
    w = rev / rev.sum()
    angles = genes[:, 1:]
    # centred on the best row so an identical population gives its exact value back
    ref = angles[0]
    mean = ref + np.einsum("i,ijk->jk", w, angles - ref)
    # unweighted spread around the weighted mean
    std = np.sqrt(np.sum((angles - mean) ** 2, axis=0) / n_best)
    prob = (w @ (genes[:, 0] == 1)) / (w @ np.ones_like(genes[:, 0]))
    return EdaModel(weights=w, mean=mean, std=std, prob=np.clip(prob, 0.0, 1.0))


def sample_select(prob: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Walk genes in descending probability, switching each on with its probability, until k are on."""
    order = np.argsort(-prob, kind="stable")
    sel = np.zeros(len(prob), dtype=np.int8)
    placed = 0
    while placed < k:
        placed_this_pass = 0
        for j in order:
            if sel[j]:
                continue
            if rng.random() < prob[j]:
                sel[j] = 1
                placed += 1
                placed_this_pass += 1
                if placed == k:
                    break
        if placed_this_pass == 0 and placed < k:
            j = next(j for j in order if not sel[j])
            sel[j] = 1
            placed += 1
    return sel


def sample_eda(model: EdaModel, n_samples: int, k: int, rng: np.random.Generator) -> list[Solution]:
    z = len(model.prob)
    out = []
    for _ in range(n_samples):
        sel = sample_select(model.prob, k, rng)
        angles = rng.normal(model.mean, model.std)
        pan = np.clip(angles[0], *PAN_RANGE)
        tilt = np.clip(angles[1], *TILT_RANGE)
        out.append(Solution(sel, pan[:z], tilt[:z]))
    return out


def gower_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Gower distances between two stacks of genes ``(n, 3, Z)``."""
    ua, ub = unit_scale(a), unit_scale(b)
    return cdist(ua, ub, "cityblock") / ua.shape[1]


class RbfnModel:
    """Gaussian RBF regressor over Gower distance."""

    def __init__(self, centers: np.ndarray, fitness: np.ndarray, ridge: float = 0.0):
        self.centers = centers
        self.fitness = np.asarray(fitness, dtype=np.float64)
        dist = pdist(unit_scale(centers), "cityblock") / (3 * centers.shape[2]) if len(centers) > 1 else np.zeros(0)
        width = float(np.median(dist)) if len(dist) else 0.0
        self.width = width if width > 0 else FALLBACK_WIDTH
        gram = self.kernel(gower_matrix(centers, centers))
        self.ridge = ridge
        self.weights = self._solve(gram, ridge)

    def kernel(self, d: np.ndarray) -> np.ndarray:
        return np.exp(-(d**2) / (2 * self.width**2))

    def _solve(self, gram: np.ndarray, ridge: float) -> np.ndarray:
        n = len(gram)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                w = linalg.solve(gram + ridge * np.eye(n), self.fitness, assume_a="sym")
            if np.all(np.isfinite(w)):
                return w
        except linalg.LinAlgError:
            pass
        log.warning("RBF system singular with ridge %g; retrying with %g", ridge, FALLBACK_RIDGE)
        self.ridge = FALLBACK_RIDGE
        return linalg.solve(gram + FALLBACK_RIDGE * np.eye(n), self.fitness, assume_a="sym")

    def predict(self, solutions: Sequence[Solution]) -> np.ndarray:
        return self.kernel(gower_matrix(stack(solutions), self.centers)) @ self.weights


def fit_rbfn(archive: Sequence[EvaluatedSolution], count: int, ridge: float = 0.0) -> RbfnModel:
    if len(archive) < 1:
        raise ValueError("cannot fit an RBF network on an empty archive")
    top = top_entries(archive, count)
    return RbfnModel(stack([e.solution for e in top]), [e.fitness for e in top], ridge)


def local_preselect(rbfn, candidates: Sequence[Solution], population: Sequence[Solution]) -> list[int]:
    """Indices of the best-predicted candidate and the one farthest from the population."""
    if len(candidates) < 2:
        raise ValueError("need at least two candidates")
    pred = rbfn.predict(candidates)
    best = int(np.argmin(pred))
    cand = unit_scale(stack(candidates))
    gap = cdist(cand, unit_scale(stack(population))).min(axis=1)
    ranked = np.argsort(-gap, kind="stable")
    explore = int(ranked[0]) if ranked[0] != best else int(ranked[1])
    return [best, explore]
