"""Pairwise RankNet-style global surrogate.

A shared scoring network maps one solution to a scalar ``s(x)``; the
probability that ``a`` is *worse* than ``b`` is ``sigmoid(s(a) - s(b))``.
Lower scores therefore mean better (smaller) fitness, matching the pair
label convention ``y = 0`` when the first solution is superior.

The network sees each candidate site as one token built from its
(select, pan, tilt) genes and has no positional input, so its score does not
change when sites are reordered.  Training exploits this: permutation
augmented pairs are kept as (base row, permutation) references and each
distinct base solution is scored once per mini-batch.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .genome import EvaluatedSolution, Solution, permute_pair, stack

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "rishm-ranker"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class RankerConfig:
    embed_size: int = 5
    d_model: int = 64
    feedforward_dim: int = 512
    n_heads: int = 8
    batch_size: int = 512
    learning_rate: float = 1e-3
    epochs_per_fit: int = 10
    update_threshold: int = 10
    recent_window: int = 1000
    augmentation_factor: int = 10
    preselect_count: int = 3

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive")


class PairSample(NamedTuple):
    first: Solution
    second: Solution
    label: int


def _tokens(arr: np.ndarray) -> torch.Tensor:
    """``(n, 3, Z)`` genes -> ``(n, Z, 3)`` float tokens with angles scaled to [-1, 1]."""
    t = np.transpose(arr, (0, 2, 1)).astype(np.float32)
    t[..., 1] /= 180.0
    t[..., 2] /= 90.0
    return torch.from_numpy(np.ascontiguousarray(t))


class ScoreNet(nn.Module):
    """Embedding -> Hadamard fusion -> attention over sites -> mean pool -> MLP."""

    def __init__(self, cfg: RankerConfig):
        super().__init__()
        e, d = cfg.embed_size, cfg.d_model
        self.n_heads = cfg.n_heads
        self.embed_select = nn.Linear(1, e)
        self.embed_pan = nn.Linear(1, e)
        self.embed_tilt = nn.Linear(1, e)
        self.lift = nn.Linear(e, d)
        self.qkv = nn.Linear(d, 3 * d)
        self.out = nn.Linear(d, d)
        self.fc1 = nn.Linear(d, cfg.feedforward_dim)
        self.bn1 = nn.BatchNorm1d(cfg.feedforward_dim)
        self.fc2 = nn.Linear(cfg.feedforward_dim, 1)
        # 1/sqrt(head_dim) on the query rows, applied to the composed projection
        scale = torch.ones(3 * d)
        scale[:d] = (d // cfg.n_heads) ** -0.5
        self.register_buffer("qkv_scale", scale, persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, z, _ = x.shape
        d = self.lift.out_features
        hd = d // self.n_heads
        fused = self.embed_select(x[..., 0:1]) * self.embed_pan(x[..., 1:2]) * self.embed_tilt(x[..., 2:3])
        # lift and qkv are both linear: compose them so the projection runs in embed_size
        w = (self.qkv.weight @ self.lift.weight) * self.qkv_scale[:, None]
        b = (self.qkv.weight @ self.lift.bias + self.qkv.bias) * self.qkv_scale
        q, k, v = F.linear(fused, w, b).view(n, z, 3, self.n_heads, hd).permute(2, 0, 3, 1, 4)
        att = torch.softmax(q @ k.transpose(-1, -2), dim=-1)
        # mean pooling commutes with the output projection and the residual lift
        pooled_att = (att @ v).mean(dim=2).reshape(n, d)
        h = self.out(pooled_att) + self.lift(fused.mean(dim=1))
        h = F.relu(self.bn1(self.fc1(h)))
        return self.fc2(h).squeeze(-1)


class PairSet:
    """Labelled pairs over a table of base solutions, with permutation copies.

    Row ``i`` of the set pairs ``table[first[i]]`` with ``table[second[i]]``
    after applying site permutation ``perms[i]`` to both.
    """

    def __init__(self, table: np.ndarray, first, second, label, perms: np.ndarray, n_base: int):
        self.table = table
        self.first = np.asarray(first, dtype=np.int64)
        self.second = np.asarray(second, dtype=np.int64)
        self.label = np.asarray(label, dtype=np.float32)
        self.perms = perms
        self.n_base = n_base

    def __len__(self):
        return len(self.first)

    def __getitem__(self, i) -> PairSample:
        a, b = _solution(self.table[self.first[i]]), _solution(self.table[self.second[i]])
        a, b = permute_pair(a, b, self.perms[i])
        return PairSample(a, b, int(self.label[i]))


def _solution(genes: np.ndarray) -> Solution:
    return Solution(np.rint(genes[0]).astype(np.int8), genes[1], genes[2])


def make_pairs(entries: Sequence[EvaluatedSolution], index_pairs, factor: int,
               rng: np.random.Generator) -> PairSet:
    """Label ``index_pairs`` by true fitness, drop ties, expand ``factor`` times.

    Copy 0 of each pair keeps the original site order; the other copies use
    fresh random site permutations.
    """
    table = stack([e.solution for e in entries])
    fit = np.array([e.fitness for e in entries])
    ij = np.asarray(index_pairs, dtype=np.int64).reshape(-1, 2)
    ij = ij[fit[ij[:, 0]] != fit[ij[:, 1]]]
    n_base = len(ij)
    label = (fit[ij[:, 0]] > fit[ij[:, 1]]).astype(np.float32)
    z = table.shape[2]
    perms = np.tile(np.arange(z, dtype=np.int16), (n_base * factor, 1))
    perms[n_base:] = rng.permuted(perms[n_base:], axis=1)
    return PairSet(table, np.tile(ij[:, 0], factor), np.tile(ij[:, 1], factor),
                   np.tile(label, factor), perms, n_base)


def build_initial_pairs(archive: Sequence[EvaluatedSolution], cfg: RankerConfig,
                        rng: np.random.Generator) -> PairSet:
    """All ordered pairs of archive entries with distinct fitness, augmented."""
    m = len(archive)
    if m < 2:
        raise ValueError("need at least two evaluated solutions to build pairs")
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    off = i != j
    return make_pairs(archive, np.column_stack([i[off], j[off]]), cfg.augmentation_factor, rng)


class RankModel:
    def __init__(self, cfg: RankerConfig | None = None, seed: int = 0):
        self.cfg = cfg or RankerConfig()
        self.seed = int(seed)
        torch.manual_seed(self.seed)
        self.net = ScoreNet(self.cfg)
        self.optimizer = torch.optim.Adam(self.net.parameters(), lr=self.cfg.learning_rate, betas=(0.9, 0.999))
        self.rng = np.random.default_rng(self.seed)
        self.fitted = False
        self.n_updates = 0

    def scores(self, solutions: Sequence[Solution]) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("ranker used before it was fitted")
        if len(solutions) == 0:
            return np.empty(0)
        self.net.eval()
        with torch.no_grad():
            return self.net(_tokens(stack(solutions))).double().numpy()

    def fit(self, pairs: PairSet) -> list[float]:
        """Train ``epochs_per_fit`` epochs on ``pairs``; returns mean loss per epoch."""
        if len(pairs) == 0:
            raise ValueError("no training pairs")
        cfg = self.cfg
        table = _tokens(pairs.table)
        label = torch.from_numpy(pairs.label)
        self.net.train()
        trace = []
        for _ in range(cfg.epochs_per_fit):
            order = self.rng.permutation(len(pairs))
            total = 0.0
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                a, b = pairs.first[idx], pairs.second[idx]
                rows, inv = np.unique(np.concatenate([a, b]), return_inverse=True)
                if len(rows) < 2:
                    continue
                s = self.net(table[torch.from_numpy(rows)])
                inv = torch.from_numpy(inv)
                diff = s[inv[:len(idx)]] - s[inv[len(idx):]]
                loss = F.binary_cross_entropy_with_logits(diff, label[idx])
                self.optimizer.zero_grad()
                loss.backward()
                self.optimizer.step()
                total += loss.item() * len(idx)
            trace.append(total / len(order))
        self.net.eval()
        self.fitted = True
        return trace

    def state(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.cfg),
            "seed": self.seed,
            "fitted": self.fitted,
            "n_updates": self.n_updates,
            "net": self.net.state_dict(),
            "optimizer": self.optimizer.state_dict(),
        }

    def save(self, path) -> None:
        torch.save(self.state(), path)

    @classmethod
    def load(cls, path) -> "RankModel":
        doc = torch.load(path, weights_only=False)
        if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: not a ranker checkpoint of version {CHECKPOINT_VERSION}")
        model = cls(RankerConfig(**doc["config"]), seed=doc["seed"])
        model.net.load_state_dict(doc["net"])
        model.optimizer.load_state_dict(doc["optimizer"])
        model.fitted = doc["fitted"]
        model.n_updates = doc["n_updates"]
        return model


def fit(model: RankModel, pairs: PairSet) -> RankModel:
    model.fit(pairs)
    return model


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def predict_pair(model: RankModel, a: Solution, b: Solution) -> float:
    """Probability that ``a`` is worse than ``b``; below 0.5 means ``a`` is predicted better."""
    sa = model.scores([a])[0]
    sb = model.scores([b])[0]
    return float(_sigmoid(sa - sb))


def vote_preselect(model, parents: Sequence[Solution], offspring: Sequence[Solution], count: int) -> list[int]:
    """Indices of the ``count`` offspring with the smallest summed pair predictions against all parents."""
    if count > len(offspring):
        raise ValueError("cannot preselect more offspring than were generated")
    s = model.scores(list(offspring) + list(parents))
    so, sp = s[:len(offspring)], s[len(offspring):]
    votes = _sigmoid(so[:, None] - sp[None, :]).sum(axis=1)
    return [int(i) for i in np.argsort(votes, kind="stable")[:count]]


def pairwise_accuracy(model, solutions: Sequence[Solution], fitness) -> float:
    """Fraction of unordered pairs with distinct fitness whose order the model gets right."""
    fitness = np.asarray(fitness, dtype=np.float64)
    s = model.scores(solutions)
    i, j = np.triu_indices(len(fitness), k=1)
    keep = fitness[i] != fitness[j]
    i, j = i[keep], j[keep]
    if len(i) == 0:
        raise ValueError("no pairs with distinct fitness")
    truth = fitness[i] < fitness[j]
    pred = _sigmoid(s[i] - s[j]) < 0.5
    return float(np.mean(truth == pred))


def maybe_update(model: RankModel, archive: Sequence[EvaluatedSolution], new_since_update: list,
                 best_improved: bool, rng: np.random.Generator) -> int:
    """Online update; returns the number of base pairs trained on (0 when skipped).

    Triggers only once at least ``update_threshold`` new entries exist and the
    archive best has improved.  The latest ``T`` new entries are paired with
    ``T`` older entries drawn uniformly from the most recent ``recent_window``.
    The caller's buffer is cleared after an update.
    """
    cfg = model.cfg
    t = cfg.update_threshold
    if len(new_since_update) < t or not best_improved:
        return 0
    new = list(new_since_update)[-t:]
    new_ids = {e.eval_index for e in new_since_update}
    recent = [e for e in archive[-(cfg.recent_window + len(new_ids)):] if e.eval_index not in new_ids]
    recent = recent[-cfg.recent_window:]
    if not recent:
        return 0
    old_idx = rng.choice(len(recent), size=min(t, len(recent)), replace=False)
    old = [recent[i] for i in old_idx]
    entries = old + new
    no = len(old)
    ij = [(i, no + j) for i in range(no) for j in range(len(new))]
    pairs = make_pairs(entries, ij, cfg.augmentation_factor, rng)
    if len(pairs):
        model.fit(pairs)
        model.n_updates += 1
    new_since_update.clear()
    return pairs.n_base
