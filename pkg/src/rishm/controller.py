"""Main optimisation loop: archive, initial design, diversity-driven phase switching."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from . import __version__
from .evaluator import EvalCounter, evaluate, objective_value
from .ga import GaConfig, ga_offspring
from .genome import PAN_RANGE, TILT_RANGE, EvaluatedSolution, Solution, random_solution
from .local_eda import fit_eda, fit_rbfn, local_preselect, sample_eda
from .ranker import RankerConfig, RankModel, build_initial_pairs, maybe_update, pairwise_accuracy, vote_preselect
from .scenario import ScenarioInstance

log = logging.getLogger(__name__)

VARIANTS = ("rishm", "rishm_wo_global", "rishm_wo_local", "ga_only", "random_search")

RESULT_FORMAT = "rishm-result"
RESULT_VERSION = 1


class RunError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    variant: str = "rishm"
    seed: int = 0
    pop_size: int = 100
    max_fes: int = 2000
    delta: float = 0.2
    initial_factor: int = 2
    eda_best_frac: float = 0.45
    eda_sample_factor: int = 2
    rbfn_count_factor: int = 5
    rbfn_ridge: float = 1e-6
    ga: GaConfig = field(default_factory=GaConfig)
    ranker: RankerConfig = field(default_factory=RankerConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.ga.pop_size != self.pop_size:
            object.__setattr__(self, "ga", replace(self.ga, pop_size=self.pop_size))

    def initial_count(self, inst: ScenarioInstance) -> int:
        return self.initial_factor * inst.dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        doc["ga"] = GaConfig(**doc.get("ga", {}))
        doc["ranker"] = RankerConfig(**doc.get("ranker", {}))
        return cls(**doc)


class Archive:
    """Append-only record of true evaluations."""

    def __init__(self):
        self.entries: list[EvaluatedSolution] = []
        self.phases: list[str] = []
        self.best_index = -1

    def __len__(self):
        return len(self.entries)

    @property
    def best(self) -> EvaluatedSolution:
        return self.entries[self.best_index]

    def add(self, sol: Solution, fitness: float, phase: str) -> EvaluatedSolution:
        entry = EvaluatedSolution(sol, float(fitness), len(self.entries))
        self.entries.append(entry)
        self.phases.append(phase)
        if self.best_index < 0 or entry.fitness < self.best.fitness:
            self.best_index = entry.eval_index
        return entry

    def top(self, n: int) -> list[EvaluatedSolution]:
        return sorted(self.entries, key=lambda e: (e.fitness, e.eval_index))[:n]


def fitness_diversity(entries: Sequence[EvaluatedSolution], n: int) -> float:
    top = sorted(e.fitness for e in entries)[:n]
    if len(top) < n:
        raise ValueError(f"need {n} entries, have {len(top)}")
    best, worst = top[0], top[-1]
    if worst == best:
        return 0.0
    avg = sum(top) / len(top)
    return min(1.0, max(0.0, 1.0 - abs((avg - best) / (worst - best))))


def initial_design(inst: ScenarioInstance, count: int, rng: np.random.Generator) -> list[Solution]:
    """Sobol points for site selection (top-k coordinates set), Latin hypercube for angles."""
    z, k = inst.n_sites, inst.k
    seeds = rng.integers(0, 2**32, size=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two Sobol sample size
        u_sel = qmc.Sobol(d=z, scramble=True, seed=int(seeds[0])).random(count)
    u_ang = qmc.LatinHypercube(d=2 * z, seed=int(seeds[1])).random(count)
    out = []
    for us, ua in zip(u_sel, u_ang):
        sel = np.zeros(z, dtype=np.int8)
        sel[np.argsort(-us, kind="stable")[:k]] = 1
        pan = PAN_RANGE[0] + ua[:z] * (PAN_RANGE[1] - PAN_RANGE[0])
        tilt = TILT_RANGE[0] + ua[z:] * (TILT_RANGE[1] - TILT_RANGE[0])
        out.append(Solution(sel, pan, tilt))
    return out


@dataclass
class RunResult:
    instance_id: str
    config: RunConfig
    best: EvaluatedSolution
    best_value: object
    trace: list[tuple[int, float]]
    eval_phases: list[str]
    phase_log: list[dict]
    update_log: list[dict]
    fe_used: int

    def phase_counts(self) -> dict:
        counts: dict = {}
        for p in self.eval_phases:
            counts[p] = counts.get(p, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "format": RESULT_FORMAT,
            "version": RESULT_VERSION,
            "code_version": __version__,
            "instance": self.instance_id,
            "variant": self.config.variant,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "fe_used": self.fe_used,
            "best": {
                "fitness": self.best.fitness,
                "coverage_fraction": self.best_value.coverage_fraction,
                "residual_fraction": self.best_value.residual_fraction,
                "eval_index": self.best.eval_index,
                "solution": self.best.solution.flat().tolist(),
            },
            "phase_counts": self.phase_counts(),
            "phase_log": self.phase_log,
            "update_log": self.update_log,
            "trace": [[fe, f] for fe, f in self.trace],
        }


class _Run:
    def __init__(self, inst: ScenarioInstance, cfg: RunConfig):
        self.inst = inst
        self.cfg = cfg
        self.counter = EvalCounter(cfg.max_fes)
        self.archive = Archive()
        self.trace: list[tuple[int, float]] = []
        ss = np.random.SeedSequence(cfg.seed)
        init_ss, ga_ss, eda_ss, upd_ss, torch_ss = ss.spawn(5)
        self.rng_init = np.random.default_rng(init_ss)
        self.rng_ga = np.random.default_rng(ga_ss)
        self.rng_eda = np.random.default_rng(eda_ss)
        self.rng_update = np.random.default_rng(upd_ss)
        self.torch_seed = int(torch_ss.generate_state(1)[0])
        self.model: RankModel | None = None
        self.new_buffer: list[EvaluatedSolution] = []
        self.best_improved = False
        self.phase_log: list[dict] = []
        self.update_log: list[dict] = []

    def evaluate(self, sol: Solution, phase: str) -> EvaluatedSolution | None:
        if self.counter.remaining <= 0:
            return None
        prev = self.archive.best.fitness if len(self.archive) else math.inf
        value = evaluate(sol, self.inst, self.counter)
        entry = self.archive.add(sol, value.fitness, phase)
        self.trace.append((self.counter.used, self.archive.best.fitness))
        if entry.fitness < prev:
            self.best_improved = True
        self.new_buffer.append(entry)
        return entry

    def initialize(self):
        n0 = self.cfg.initial_count(self.inst)
        if self.cfg.max_fes <= n0:
            raise RunError(f"max_fes={self.cfg.max_fes} must exceed the initial design size {n0}")
        for sol in initial_design(self.inst, n0, self.rng_init):
            self.evaluate(sol, "init")
        self.new_buffer.clear()
        self.best_improved = False

    def global_step(self, pop: list[EvaluatedSolution]):
        cfg = self.cfg
        offspring = ga_offspring(pop, cfg.ga, self.inst.k, self.rng_ga)
        tau = cfg.ranker.preselect_count
        if self.model is None:
            picks = [int(i) for i in self.rng_ga.choice(len(offspring), size=tau, replace=False)]
        else:
            picks = vote_preselect(self.model, [p.solution for p in pop], offspring, tau)
        for i in picks:
            self.evaluate(offspring[i], "global")

    def local_step(self, pop: list[EvaluatedSolution]):
        cfg = self.cfg
        eda = fit_eda(self.archive.entries, min(int(cfg.eda_best_frac * cfg.pop_size), len(self.archive)))
        cands = sample_eda(eda, cfg.eda_sample_factor * cfg.pop_size, self.inst.k, self.rng_eda)
        rbfn = fit_rbfn(self.archive.entries, cfg.rbfn_count_factor * self.inst.dim, cfg.rbfn_ridge)
        for i in local_preselect(rbfn, cands, [p.solution for p in pop]):
            self.evaluate(cands[i], "local")

    def update_model(self):
        if self.model is None:
            return
        fe = self.counter.used
        n_pairs = maybe_update(self.model, self.archive.entries, self.new_buffer, self.best_improved, self.rng_update)
        if n_pairs:
            self.best_improved = False
            self.update_log.append({"fe": fe, "pairs": n_pairs})

    def run_surrogate(self):
        cfg = self.cfg
        self.initialize()
        if cfg.variant != "rishm_wo_global":
            self.model = RankModel(cfg.ranker, seed=self.torch_seed)
            pairs = build_initial_pairs(self.archive.entries, cfg.ranker, self.rng_update)
            self.model.fit(pairs)
            self.update_log.append({"fe": self.counter.used, "pairs": pairs.n_base})
        phase = "global"
        iteration = 0
        while self.counter.remaining > 0:
            iteration += 1
            try:
                n = min(cfg.pop_size, len(self.archive))
                pop = self.archive.top(n)
                fd = fitness_diversity(self.archive.entries, n)
                if fd < cfg.delta and cfg.variant != "rishm_wo_local":
                    new = "local" if phase == "global" else "global"
                    self.phase_log.append({"iteration": iteration, "fe": self.counter.used,
                                           "fd": fd, "from": phase, "to": new})
                    phase = new
                if phase == "global":
                    self.global_step(pop)
                else:
                    self.local_step(pop)
                self.update_model()
            except Exception as exc:
                raise RunError(f"iteration {iteration} ({phase} phase, {self.counter.used} FEs used): {exc}") from exc

    def run_ga(self):
        self.initialize()
        generation = 0
        while self.counter.remaining > 0:
            generation += 1
            pop = self.archive.top(min(self.cfg.pop_size, len(self.archive)))
            for sol in ga_offspring(pop, self.cfg.ga, self.inst.k, self.rng_ga):
                if self.evaluate(sol, "ga") is None:
                    break

    def run_random(self):
        while self.counter.remaining > 0:
            self.evaluate(random_solution(self.inst.n_sites, self.inst.k, self.rng_init), "random")


def run(inst: ScenarioInstance, cfg: RunConfig) -> RunResult:
    """Optimise ``inst`` with the configured variant until the FE budget is spent."""
    r = _Run(inst, cfg)
    if cfg.variant == "ga_only":
        r.run_ga()
    elif cfg.variant == "random_search":
        r.run_random()
    else:
        r.run_surrogate()
    best = r.archive.best
    return RunResult(
        instance_id=inst.id,
        config=cfg,
        best=best,
        best_value=objective_value(best.fitness, inst),
        trace=r.trace,
        eval_phases=list(r.archive.phases),
        phase_log=r.phase_log,
        update_log=r.update_log,
        fe_used=r.counter.used,
    )


@dataclass
class AccuracyReport:
    instance_id: str
    seed: int
    accuracy: float
    train_accuracy: float
    n_offspring: int
    n_pairs: int
    loss_trace: list[float]

    def to_dict(self) -> dict:
        return {"format": "rishm-accuracy", "version": 1, "code_version": __version__, **asdict(self)}


def offspring_accuracy(inst: ScenarioInstance, cfg: RunConfig, model=None) -> AccuracyReport:
    """Pairwise accuracy of the ranker on one generation of GA offspring.

    The ranker is fitted on the initial design only (unless ``model`` is
    given); the offspring are evaluated outside any budget.
    """
    r = _Run(inst, replace(cfg, max_fes=cfg.initial_count(inst) + 1))
    r.initialize()
    trace: list[float] = []
    if model is None:
        model = RankModel(cfg.ranker, seed=r.torch_seed)
        trace = model.fit(build_initial_pairs(r.archive.entries, cfg.ranker, r.rng_update))
    pop = r.archive.top(min(cfg.pop_size, len(r.archive)))
    kids = ga_offspring(pop, cfg.ga, inst.k, r.rng_ga)
    fit = [evaluate(s, inst).fitness for s in kids]
    acc = pairwise_accuracy(model, kids, fit)
    train = pairwise_accuracy(model, [e.solution for e in r.archive.entries], [e.fitness for e in r.archive.entries])
    n = len(kids)
    distinct = sum(1 for i in range(n) for j in range(i + 1, n) if fit[i] != fit[j])
    return AccuracyReport(inst.id, cfg.seed, acc, train, n, distinct, trace)
