"""Experiment runner: single runs, variant sweeps and variant comparisons.

Every run writes ``<out>/<variant>/<seed>.csv`` (one row per iteration) and
the sweep writes ``<out>/summary.json``.  Runs stopping at the secondary
Rosenbrock minimizer are kept in the summary but marked ``discarded`` and
left out of the per-variant aggregates.
"""
import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import problems
from .optimizer import OptConfig, RunResult, Status, TraceRecord, run
from .qn import UpdateKind
from .sampling import DirectionStrategy

logger = logging.getLogger(__name__)

OUT_ENV = "BLOCKQN_OUT"
CSV_FIELDS = ["k", "n_ghs", "n_f", "f", "grad_norm", "delta", "rho", "accepted"]
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

DEFAULTS = {
    "problem": "rosenbrock",
    "n": 100,
    "a": 100.0,
    "eig_lo": 1.0,
    "eig_hi": 100.0,
    "problem_seed": 0,
    "w": [4],
    "update": ["sr1"],
    "strategy": ["s4"],
    "pflag": [False],
    "epsilon": 1e-5,
    "delta": 1e-12,
    "delta_max": 100.0,
    "max_iterations": 100_000,
    "max_ghs": 100_000,
    "seeds": [0],
    "out": "results",
    "jobs": 1,
}
LIST_KEYS = ("w", "update", "strategy", "pflag", "seeds")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Variant:
    update: UpdateKind
    strategy: DirectionStrategy
    pflag: bool
    w: int

    @property
    def name(self):
        return f"{self.update.value}-{self.strategy.value}-p{int(self.pflag)}-w{self.w}"

    @classmethod
    def from_name(cls, name):
        try:
            update, strategy, pflag, w = name.split("-")
            return cls(UpdateKind.parse(update), DirectionStrategy.parse(strategy),
                       pflag == "p1", int(w[1:]))
        except ValueError as exc:
            raise UsageError(f"bad variant name {name!r}: {exc}") from None


@dataclass
class ExperimentPlan:
    problem: dict
    variants: List[Variant]
    seeds: List[int]
    out: Path
    epsilon: float = 1e-5
    delta: float = 1e-12
    delta_max: float = 100.0
    max_iterations: int = 100_000
    max_ghs: int = 100_000
    jobs: int = 1

    def config(self, variant: Variant, seed: int) -> OptConfig:
        return OptConfig(w=variant.w, epsilon=self.epsilon, delta=self.delta,
                         delta_max=self.delta_max, update=variant.update,
                         strategy=variant.strategy, pflag=variant.pflag,
                         max_iterations=self.max_iterations, max_ghs=self.max_ghs,
                         rng_seed=seed)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_seeds(text) -> List[int]:
    """``"0..19"`` (inclusive), ``"1,4,7"`` or a mix of both."""
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def _split(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [t for t in str(text).split(",") if t != ""]


def _parse_bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _add_run_flags(p):
    p.add_argument("--config", help="JSON file with plan settings; flags override it")
    p.add_argument("--problem", choices=["rosenbrock", "quadratic"])
    p.add_argument("--n", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--eig-lo", dest="eig_lo", type=float, help="quadratic: smallest eigenvalue")
    p.add_argument("--eig-hi", dest="eig_hi", type=float, help="quadratic: largest eigenvalue")
    p.add_argument("--problem-seed", dest="problem_seed", type=int, help="quadratic: matrix seed")
    p.add_argument("--w")
    p.add_argument("--update")
    p.add_argument("--strategy")
    p.add_argument("--pflag")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--delta-max", dest="delta_max", type=float)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--max-ghs", dest="max_ghs", type=int)
    p.add_argument("--seeds")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)


def build_parser():
    parser = _Parser(prog="blockqn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command")
    _add_run_flags(sub.add_parser("run", help="run one variant over a list of seeds"))
    _add_run_flags(sub.add_parser("sweep", help="run every combination of comma-separated variant flags"))
    cmp = sub.add_parser("compare", help="compare two variants from summary files")
    cmp.add_argument("summaries", nargs="+", help="summary.json files or output directories")
    cmp.add_argument("--a", dest="variant_a", required=True, help="variant name, e.g. sr1-s4-p0-w4")
    cmp.add_argument("--b", dest="variant_b", required=True)
    cmp.add_argument("--json", action="store_true", help="emit the report as JSON")
    return parser


def _normalize_argv(argv):
    argv = list(argv)
    if not argv or (argv[0].startswith("-") and argv[0] not in ("-h", "--help", "-v", "--verbose")):
        argv.insert(0, "run")
    return argv


def parse_config(argv, config_file=None) -> ExperimentPlan:
    """Build an experiment plan from command-line flags and an optional JSON file."""
    args = build_parser().parse_args(_normalize_argv(argv))
    if args.command == "compare":
        raise UsageError("parse_config handles run/sweep only")
    return plan_from_args(args, config_file)


def plan_from_args(args, config_file=None) -> ExperimentPlan:
    settings = dict(DEFAULTS)
    settings["out"] = os.environ.get(OUT_ENV, DEFAULTS["out"])
    path = config_file or args.config
    if path:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        settings.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value

    try:
        ws = [int(v) for v in _split(settings["w"])] if not isinstance(settings["w"], int) else [settings["w"]]
        updates = [UpdateKind.parse(u) for u in _split(settings["update"])]
        strategies = [DirectionStrategy.parse(s) for s in _split(settings["strategy"])]
        pflags = [_parse_bool(p) for p in (_split(settings["pflag"])
                                           if not isinstance(settings["pflag"], bool) else [settings["pflag"]])]
        seeds = parse_seeds(settings["seeds"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    if args.command == "run" and max(len(ws), len(updates), len(strategies), len(pflags)) > 1:
        raise UsageError("run takes a single variant; use sweep for lists")
    variants = [Variant(u, s, p, w) for u, s, p, w in itertools.product(updates, strategies, pflags, ws)]
    if not variants or not seeds:
        raise UsageError("the plan needs at least one variant and one seed")

    n = int(settings["n"])
    if n < 2:
        raise UsageError("n must be at least 2")
    for v in variants:
        if v.w < 1:
            raise UsageError("w must be at least 1")
        if 2 * v.w - 1 > n:
            raise UsageError(f"2w-1 = {2 * v.w - 1} exceeds n = {n}")
    for key in ("epsilon", "delta", "delta_max", "a"):
        if not float(settings[key]) > 0:
            raise UsageError(f"{key} must be positive")
    if int(settings["max_iterations"]) < 1 or int(settings["max_ghs"]) < 1 or int(settings["jobs"]) < 1:
        raise UsageError("budgets and jobs must be positive")

    problem = {"name": settings["problem"], "n": n}
    if settings["problem"] == "rosenbrock":
        problem["a"] = float(settings["a"])
    elif settings["problem"] == "quadratic":
        problem.update(eig_lo=float(settings["eig_lo"]), eig_hi=float(settings["eig_hi"]),
                       problem_seed=int(settings["problem_seed"]))
    else:
        raise UsageError(f"unknown problem {settings['problem']!r}")

    return ExperimentPlan(problem=problem, variants=variants, seeds=seeds, out=Path(settings["out"]),
                          epsilon=float(settings["epsilon"]), delta=float(settings["delta"]),
                          delta_max=float(settings["delta_max"]),
                          max_iterations=int(settings["max_iterations"]),
                          max_ghs=int(settings["max_ghs"]), jobs=int(settings["jobs"]))


def make_problem(problem: dict):
    if problem["name"] == "rosenbrock":
        return problems.rosenbrock(problems.RosenbrockSpec(problem["n"], problem["a"]))
    rng = np.random.default_rng(problem["problem_seed"])
    spec = problems.random_spd_quadratic(problem["n"], problem["eig_lo"], problem["eig_hi"], rng)
    return problems.quadratic(spec)


def starting_point(n, seed):
    # separate stream from the optimizer's direction draws
    return problems.random_start(n, np.random.default_rng([seed, 1]))


# -- trace files ------------------------------------------------------------

def _fmt(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def trace_to_csv(trace: List[TraceRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for rec in trace:
        writer.writerow([_fmt(getattr(rec, f)) for f in CSV_FIELDS])
    return buf.getvalue()


def read_trace(path) -> List[TraceRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_FIELDS:
            raise ValueError(f"unexpected trace header {reader.fieldnames}")
        return [
            TraceRecord(int(r["k"]), int(r["n_ghs"]), int(r["n_f"]), float(r["f"]),
                        float(r["grad_norm"]), float(r["delta"]), float(r["rho"]),
                        r["accepted"] == "1")
            for r in reader
        ]


# -- execution --------------------------------------------------------------

def _classify(problem, result: RunResult, epsilon):
    if problem["name"] != "rosenbrock":
        return None, False
    label = problems.classify_rosenbrock_result(result.x_final, result.grad_norm_final <= epsilon)
    return label.value, label is problems.RosenbrockOutcome.SecondaryMin


def run_one(plan: ExperimentPlan, variant: Variant, seed: int) -> dict:
    prog = make_problem(plan.problem)
    x0 = starting_point(plan.problem["n"], seed)
    start = time.perf_counter()
    try:
        result = run(prog, x0, plan.config(variant, seed))
    except Exception as exc:  # recorded, the sweep carries on
        logger.exception("run %s seed %d failed", variant.name, seed)
        return {"variant": variant.name, "seed": seed, "status": "Error", "classification": None,
                "discarded": False, "f_final": None, "grad_norm_final": None, "n_ghs": 0,
                "n_f": 0, "n_iterations": 0, "wall_ms": 0.0, "message": str(exc), "csv": None}
    wall_ms = 1000.0 * (time.perf_counter() - start)
    classification, discarded = _classify(plan.problem, result, plan.epsilon)
    return {
        "variant": variant.name,
        "seed": seed,
        "status": result.status.value,
        "classification": classification,
        "discarded": discarded,
        "f_final": result.f_final,
        "grad_norm_final": result.grad_norm_final,
        "n_ghs": result.counters.n_ghs,
        "n_f": result.counters.n_f,
        "n_iterations": result.n_iterations,
        "exactness_violations": result.exactness_violations,
        "wall_ms": round(wall_ms, 3),
        "message": result.message,
        "csv": trace_to_csv(result.trace),
    }


def _task(args):
    return run_one(*args)


def ghs_to_convergence(run_entry) -> float:
    """gHS count for converged runs, +inf for runs that never converged."""
    if run_entry["status"] == Status.Converged.value:
        return float(run_entry["n_ghs"])
    return math.inf


def aggregate(runs) -> dict:
    """Per-variant statistics over the runs that were not discarded.

    The median treats non-converged runs as +inf (censored at the budget);
    the mean is over converged runs only.
    """
    out = {}
    for name in sorted({r["variant"] for r in runs}):
        entries = [r for r in runs if r["variant"] == name]
        kept = [r for r in entries if not r["discarded"]]
        counts = [ghs_to_convergence(r) for r in kept]
        converged = [c for c in counts if math.isfinite(c)]
        median = statistics.median(counts) if counts else math.inf
        out[name] = {
            "n_runs": len(entries),
            "n_discarded": len(entries) - len(kept),
            "n_kept": len(kept),
            "n_converged": len(converged),
            "converged_fraction": len(converged) / len(kept) if kept else None,
            "median_n_ghs": median if math.isfinite(median) else None,
            "mean_n_ghs": statistics.fmean(converged) if converged else None,
        }
    return out


def execute(plan: ExperimentPlan) -> int:
    """Run every (variant, seed) pair, write traces and ``summary.json``."""
    tasks = [(plan, v, s) for v in plan.variants for s in plan.seeds]
    if plan.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    results.sort(key=lambda r: (r["variant"], r["seed"]))

    try:
        plan.out.mkdir(parents=True, exist_ok=True)
        for r in results:
            text = r.pop("csv")
            if text is None:
                continue
            path = plan.out / r["variant"] / f"{r['seed']}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as fh:
                fh.write(text)
        summary = {
            "problem": plan.problem,
            "settings": {"epsilon": plan.epsilon, "delta": plan.delta, "delta_max": plan.delta_max,
                         "max_iterations": plan.max_iterations, "max_ghs": plan.max_ghs},
            "runs": results,
            "variants": aggregate(results),
        }
        (plan.out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    except OSError as exc:
        logger.error("cannot write results to %s: %s", plan.out, exc)
        return EXIT_RUNTIME
    return EXIT_OK


# -- comparison -------------------------------------------------------------

def load_summary(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    return json.loads(path.read_text())


@dataclass
class VariantStats:
    variant: str
    n_kept: int
    n_converged: int
    median_n_ghs: float
    mean_n_ghs: Optional[float]


@dataclass
class ComparisonReport:
    variant_a: str
    variant_b: str
    sufficient: bool
    a: Optional[VariantStats] = None
    b: Optional[VariantStats] = None
    median_difference: Optional[float] = None
    sign: Optional[int] = None
    notes: List[str] = field(default_factory=list)

    def text(self):
        if not self.sufficient:
            return f"insufficient data: {'; '.join(self.notes)}"
        lines = []
        for s in (self.a, self.b):
            mean = "n/a" if s.mean_n_ghs is None else f"{s.mean_n_ghs:.1f}"
            lines.append(f"{s.variant}: kept={s.n_kept} converged={s.n_converged} "
                         f"median_n_ghs={s.median_n_ghs:g} mean_n_ghs={mean}")
        verdict = {-1: "A needs fewer gHS", 0: "no difference", 1: "B needs fewer gHS"}[self.sign]
        lines.append(f"median(A) - median(B) = {self.median_difference:g} ({verdict})")
        return "\n".join(lines)


def _stats(runs, name):
    kept = [r for r in runs if r["variant"] == name and not r["discarded"]]
    if not kept:
        return None
    counts = [ghs_to_convergence(r) for r in kept]
    converged = [c for c in counts if math.isfinite(c)]
    return VariantStats(name, len(kept), len(converged), statistics.median(counts),
                        statistics.fmean(converged) if converged else None)


def compare(summaries, variant_a: str, variant_b: str) -> ComparisonReport:
    """Median and mean gHS-to-convergence of two variants and the sign of the gap."""
    runs = []
    for s in summaries:
        runs.extend(s["runs"])
    report = ComparisonReport(variant_a, variant_b, sufficient=False)
    a, b = _stats(runs, variant_a), _stats(runs, variant_b)
    for name, stats in ((variant_a, a), (variant_b, b)):
        if stats is None:
            report.notes.append(f"no non-discarded runs for {name}")
    if a is None or b is None:
        return report
    report.sufficient = True
    report.a, report.b = a, b
    if a.median_n_ghs == b.median_n_ghs:
        diff = 0.0
    else:
        diff = a.median_n_ghs - b.median_n_ghs
    report.median_difference = diff
    report.sign = int(np.sign(diff))
    return report


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = parser.parse_args(_normalize_argv(argv))
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "compare":
            try:
                summaries = [load_summary(p) for p in args.summaries]
            except (OSError, json.JSONDecodeError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_RUNTIME
            report = compare(summaries, args.variant_a, args.variant_b)
            if args.json:
                print(json.dumps(asdict(report), indent=2, default=str))
            else:
                print(report.text())
            return EXIT_OK
        plan = plan_from_args(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    code = execute(plan)
    if code == EXIT_OK:
        summary = load_summary(plan.out)
        for name, agg in summary["variants"].items():
            print(f"{name}: converged {agg['n_converged']}/{agg['n_kept']} kept "
                  f"({agg['n_discarded']} discarded), median n_ghs {agg['median_n_ghs']}")
        print(f"wrote {plan.out / 'summary.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
