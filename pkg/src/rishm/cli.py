"""Command line harness: instance generation, runs, reports and ranker accuracy.

Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
OUT_ENV = "RISHM_OUT"
DEFAULT_OUT = "rishm-out"

log = logging.getLogger("rishm")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def default_out() -> str:
    return os.environ.get(OUT_ENV, DEFAULT_OUT)


def _dump(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _load_instance(path):
    from .scenario import load_instance

    try:
        return load_instance(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read instance {path}: {exc}") from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pool_map(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def _single_thread_torch():
    import torch

    torch.set_num_threads(1)


# -- gen ---------------------------------------------------------------------

def cmd_gen(args) -> int:
    from .scenario import generate_instance, save_instance
    from .terrain import generate_terrain, read_ascii_grid

    if args.dem:
        try:
            grid = read_ascii_grid(args.dem)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read DEM {args.dem}: {exc}") from exc
    else:
        tseed = args.seed if args.terrain_seed is None else args.terrain_seed
        grid = generate_terrain(tseed, max_height=args.max_height)
    inst = generate_instance(args.seed, args.scale, grid)
    path = _out_dir(args) / f"{inst.id}.json"
    save_instance(inst, path)
    print(f"{path}\tsites={inst.n_sites}\ttargets={inst.n_targets}\tk={inst.k}")
    return EXIT_OK


# -- run ---------------------------------------------------------------------

def _run_job(job):
    from .controller import RunConfig, run

    _single_thread_torch()
    inst_path, variant, seed, max_fes, delta, out = job
    inst = _load_instance(inst_path)
    cfg = RunConfig(variant=variant, seed=seed, max_fes=max_fes, delta=delta)
    result = run(inst, cfg)
    path = Path(out) / f"{inst.id}__{variant}__s{seed}.json"
    _dump(result.to_dict(), path)
    return str(path), result.best.fitness, result.fe_used


def cmd_run(args) -> int:
    inst = _load_instance(args.instance)  # fail early on bad input
    variants = args.variant or ["rishm"]
    seeds = args.seed or [0]
    if args.max_fes <= 2 * inst.dim and "random_search" not in variants:
        raise UsageError(f"--max-fes must exceed the initial design of {2 * inst.dim} evaluations")
    out = _out_dir(args)
    jobs = [(str(args.instance), v, s, args.max_fes, args.delta, str(out)) for v in variants for s in seeds]
    for path, best, used in _pool_map(_run_job, jobs, args.threads):
        print(f"{path}\tbest={best!r}\tfe={used}")
    return EXIT_OK


# -- report ------------------------------------------------------------------

def cmd_report(args) -> int:
    from .report import MixedInstancesError, convergence_rows, format_table, load_result, summarize
    from .report import write_convergence, write_summary

    results = []
    for p in args.results:
        try:
            results.append(load_result(p))
        except (OSError, ValueError) as exc:
            raise DataError(str(exc)) from exc
    try:
        rows = summarize(results, group=args.group)
    except MixedInstancesError as exc:
        raise UsageError(str(exc)) from exc
    out = _out_dir(args)
    write_summary(rows, out / "summary.csv")
    instances = sorted({r["instance"] for r in results})
    written = [out / "summary.csv"]
    for inst in instances:
        subset = [r for r in results if r["instance"] == inst]
        stem = "convergence" if len(instances) == 1 else f"convergence_{inst}"
        write_convergence(convergence_rows(subset), out / f"{stem}.csv")
        written.append(out / f"{stem}.csv")
        if not args.no_plot:
            from .plotting import convergence_figure, final_fitness_figure

            suffix = "" if len(instances) == 1 else f"_{inst}"
            written.append(convergence_figure(subset, out / f"convergence{suffix}.png", title=inst))
            written.append(final_fitness_figure(subset, out / f"final_fitness{suffix}.png", title=inst))
    print(format_table(rows))
    for p in written:
        print(p)
    return EXIT_OK


# -- accuracy ----------------------------------------------------------------

def _accuracy_job(job):
    from .controller import RunConfig, offspring_accuracy

    _single_thread_torch()
    inst_path, seed, out = job
    inst = _load_instance(inst_path)
    report = offspring_accuracy(inst, RunConfig(seed=seed))
    path = Path(out) / f"accuracy_{inst.id}__s{seed}.json"
    _dump(report.to_dict(), path)
    return str(path), seed, report.accuracy, report.train_accuracy


def cmd_accuracy(args) -> int:
    _load_instance(args.instance)
    out = _out_dir(args)
    seeds = args.seed or [0]
    rows = _pool_map(_accuracy_job, [(str(args.instance), s, str(out)) for s in seeds], args.threads)
    print("seed\taccuracy\ttrain_accuracy\tfile")
    for path, seed, acc, train in rows:
        print(f"{seed}\t{acc:.4f}\t{train:.4f}\t{path}")
    print(f"median\t{statistics.median(r[2] for r in rows):.4f}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .controller import VARIANTS
    from .scenario import SCALES

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=default_out(),
                        help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--threads", type=_positive, default=1, help="parallel worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rishm", description="Directional sensor deployment benchmark harness.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a scenario instance file")
    g.add_argument("--scale", required=True, choices=sorted(SCALES))
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--terrain-seed", type=int, default=None, help="terrain seed (default: --seed)")
    g.add_argument("--max-height", type=float, default=1.5, help="synthetic relief in km")
    g.add_argument("--dem", default=None, help="use an ESRI ASCII grid instead of synthetic terrain")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", parents=[common], help="run optimiser variants on an instance")
    r.add_argument("instance")
    r.add_argument("--variant", action="append", choices=VARIANTS, help="repeatable; default rishm")
    r.add_argument("--seed", action="append", type=int, help="repeatable; default 0")
    r.add_argument("--max-fes", type=_positive, default=2000)
    r.add_argument("--delta", type=_unit, default=0.2, help="fitness-diversity switching threshold")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", parents=[common], help="summarise result files")
    rep.add_argument("results", nargs="+")
    rep.add_argument("--group", action="store_true", help="allow results from several instances")
    rep.add_argument("--no-plot", action="store_true", help="skip the PNG figures")
    rep.set_defaults(func=cmd_report)

    a = sub.add_parser("accuracy", parents=[common], help="ranker accuracy on one generation of offspring")
    a.add_argument("instance")
    a.add_argument("--seed", action="append", type=int, help="repeatable; default 0")
    a.set_defaults(func=cmd_accuracy)
    return p


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _unit(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rishm {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"rishm {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"rishm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
