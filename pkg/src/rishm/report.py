"""Aggregation of run result files into summary and convergence tables."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .controller import RESULT_FORMAT, VARIANTS

SUMMARY_FIELDS = ("instance", "variant", "runs", "fitness_avg", "fitness_std_pop", "coverage_avg", "fe_used_avg")
CONVERGENCE_FIELDS = ("variant", "seed", "fe", "best_fitness")


class MixedInstancesError(ValueError):
    pass


@dataclass(frozen=True)
class SummaryRow:
    instance: str
    variant: str
    runs: int
    fitness_avg: float
    fitness_std_pop: float
    coverage_avg: float
    fe_used_avg: float

    def avg_std(self) -> str:
        return f"{self.fitness_avg:.4g}({self.fitness_std_pop:.3g})"


def load_result(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != RESULT_FORMAT:
        raise ValueError(f"{path}: not a {RESULT_FORMAT} file")
    for key in ("instance", "variant", "seed", "best", "trace"):
        if key not in doc:
            raise ValueError(f"{path}: missing field {key!r}")
    return doc


def _variant_order(v: str):
    return (VARIANTS.index(v) if v in VARIANTS else len(VARIANTS), v)


def summarize(results: Sequence[dict], group: bool = False) -> list[SummaryRow]:
    """Mean and population std of final best fitness per (instance, variant)."""
    instances = sorted({r["instance"] for r in results})
    if len(instances) > 1 and not group:
        raise MixedInstancesError(f"results span {len(instances)} instances ({', '.join(instances)}); pass --group")
    buckets = defaultdict(list)
    for r in results:
        buckets[(r["instance"], r["variant"])].append(r)
    rows = []
    for inst, variant in sorted(buckets, key=lambda key: (key[0], _variant_order(key[1]))):
        runs = sorted(buckets[(inst, variant)], key=lambda r: r["seed"])
        fit = np.array([r["best"]["fitness"] for r in runs])
        rows.append(SummaryRow(
            instance=inst,
            variant=variant,
            runs=len(runs),
            fitness_avg=float(fit.mean()),
            fitness_std_pop=float(fit.std(ddof=0)),
            coverage_avg=float(np.mean([r["best"]["coverage_fraction"] for r in runs])),
            fe_used_avg=float(np.mean([r["fe_used"] for r in runs])),
        ))
    return rows


def convergence_rows(results: Iterable[dict]) -> list[tuple]:
    rows = []
    for r in sorted(results, key=lambda r: (_variant_order(r["variant"]), r["seed"])):
        rows.extend((r["variant"], r["seed"], fe, best) for fe, best in r["trace"])
    return rows


def write_summary(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for row in rows:
            w.writerow([row.instance, row.variant, row.runs, repr(row.fitness_avg), repr(row.fitness_std_pop),
                        repr(row.coverage_avg), repr(row.fe_used_avg)])


def write_convergence(rows: Sequence[tuple], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONVERGENCE_FIELDS)
        for variant, seed, fe, best in rows:
            w.writerow([variant, seed, fe, repr(float(best))])


def format_table(rows: Sequence[SummaryRow]) -> str:
    """Plain-text table; Std is the population standard deviation (divide by R)."""
    head = f"{'instance':<16} {'variant':<16} {'R':>3}  {'fitness Avg(Std)':<22} {'coverage':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.instance:<16} {r.variant:<16} {r.runs:>3}  {r.avg_std():<22} {r.coverage_avg:>8.4f}")
    lines.append("Std: population standard deviation over seeds")
    return "\n".join(lines)
