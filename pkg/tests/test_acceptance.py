"""Exit criteria for the package, one test per criterion.

Each test records a PASS/FAIL line that is echoed in the pytest terminal
summary.  Tolerances and budgets are fixed here and never tuned per run.
"""
import json
import time

import numpy as np
import pytest

from blockqn import problems
from blockqn.ad import finite_difference_jvp
from blockqn.cli import compare, execute, parse_config
from blockqn.linalg import orth, pinv_rank
from blockqn.optimizer import OptConfig, Status, initialize, run, secant_block, step
from blockqn.qn import psb_update, sr1_update
from blockqn.sampling import ghs
from blockqn.trs import trs_small

from conftest import ACCEPTANCE_LINES
from test_qn import psb_oracle, secant_instance
from trs_oracles import hard_case_instance, kkt_ok, kkt_report, random_instance, sampling_oracle


def verdict(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_ad_correctness():
    prog = problems.rosenbrock(problems.RosenbrockSpec(20, 100.0))
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-1, 1, 20)
        S = orth(rng.standard_normal((20, 7)))
        sample = ghs(prog, x, S)
        step_size = 1e-6 * (1 + np.max(np.abs(x)))
        pairs = [(S[:, j], sample.Y[:, j]) for j in range(7)] + [(sample.g, sample.h)]
        for direction, column in pairs:
            fd = finite_difference_jvp(prog, x, direction, step_size)
            worst = max(worst, np.max(np.abs(column - fd)) / np.max(np.abs(fd)))
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-5 and elapsed < 5.0,
            f"max relative AD/FD error {worst:.2e} (<= 1e-5), {elapsed:.2f}s (< 5s)")


def test_criterion_2_block_secant():
    rng = np.random.default_rng(202)
    worst = {"sr1": 0.0, "psb": 0.0}
    for i in range(500):
        n = int(rng.integers(4, 13))
        c = int(rng.integers(1, 5))
        for kind, update in (("sr1", sr1_update), ("psb", psb_update)):
            H, U, V = secant_instance(rng, n, c, cond_limit=1e8, kind=kind)
            H_new = update(H, U, V)
            scale = max(np.linalg.norm(U), np.linalg.norm(H) * np.linalg.norm(V))
            worst[kind] = max(worst[kind], np.linalg.norm(H_new @ V - U) / scale)
    kkt_gap = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 9))
        c = int(rng.integers(1, min(4, n - 1) + 1))
        H, U, V = secant_instance(rng, n, c, kind="psb")
        H_new = psb_update(H, U, V)
        H_opt = psb_oracle(H, U, V)
        kkt_gap = max(kkt_gap, abs(np.linalg.norm(H_new - H) - np.linalg.norm(H_opt - H)))
    ok = worst["sr1"] <= 1e-8 and worst["psb"] <= 1e-8 and kkt_gap <= 1e-8
    verdict(2, ok, f"secant residual SR1 {worst['sr1']:.1e}, PSB {worst['psb']:.1e} (<= 1e-8); "
                   f"PSB vs KKT oracle {kkt_gap:.1e} (<= 1e-8)")


def test_criterion_3_trs_global_optimality():
    rng = np.random.default_rng(303)
    instances = [hard_case_instance(rng) for _ in range(60)]
    instances += [random_instance(rng) for _ in range(940)]
    failures = []
    gap = -np.inf
    solve_time = 0.0
    start = time.perf_counter()
    for idx, m in enumerate(instances):
        t0 = time.perf_counter()
        sol = trs_small(m)
        solve_time += time.perf_counter() - t0
        best, _ = sampling_oracle(m, rng, count=100_000)
        gap = max(gap, sol.model_value - best)
        if not kkt_ok(m, sol) or sol.model_value > best + 1e-6:
            failures.append((idx, kkt_report(m, sol), sol.model_value, best))
    elapsed = time.perf_counter() - start
    hard = sum(trs_small(m).hard_case for m in instances[:60])
    ok = not failures and hard >= 50 and elapsed < 30.0
    verdict(3, ok, f"{len(instances)} instances ({hard} hard case), {len(failures)} failures, "
                   f"worst objective minus sampling best {gap:.1e} (<= 1e-6), "
                   f"{elapsed:.1f}s total / {solve_time:.2f}s in the solver (< 30s)")


def test_criterion_4_exactness_on_samples():
    prog = problems.rosenbrock(problems.RosenbrockSpec(100, 100.0))
    violations = checked = skipped = 0
    for seed in range(5):
        cfg = OptConfig(rng_seed=seed)
        state = initialize(prog, problems.random_start(100, np.random.default_rng([seed, 1])), cfg)
        while state.grad_norm > cfg.epsilon and state.k < 5000:
            new = step(state, prog, cfg)
            if new.accepted:
                U, V = secant_block(new.sample)
                gram = (U - state.H @ V).T @ V
                if pinv_rank(gram, cfg.delta) < gram.shape[0]:
                    skipped += 1
                else:
                    checked += 1
                    s = new.sample
                    ry = np.linalg.norm(new.H @ s.Y - s.S) / np.linalg.norm(s.S)
                    rg = np.linalg.norm(new.H @ s.h - s.g) / np.linalg.norm(s.g)
                    violations += ry > 1e-6 or rg > 1e-6
            state = new
        assert state.grad_norm <= cfg.epsilon
    verdict(4, violations == 0 and checked > 0,
            f"{violations} exactness violations over {checked} accepted steps "
            f"({skipped} thresholded, skipped), 5 seeds")


def test_criterion_5_quadratic_sanity():
    iterations = []
    statuses = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        prog = problems.quadratic(problems.random_spd_quadratic(50, 1.0, 100.0, rng))
        result = run(prog, rng.uniform(-1, 1, 50),
                     OptConfig(w=4, update="sr1", strategy="s1", epsilon=1e-10, rng_seed=seed,
                               max_iterations=120))
        iterations.append(result.n_iterations)
        statuses.append(result.status is Status.Converged and result.grad_norm_final <= 1e-10)
    ok = all(statuses) and max(iterations) <= 60
    verdict(5, ok, f"{sum(statuses)}/10 converged to |g| <= 1e-10, iterations {iterations} (<= 60)")


@pytest.fixture(scope="module")
def replication(tmp_path_factory):
    out = tmp_path_factory.mktemp("replication")
    plan = parse_config(["run", "--problem", "rosenbrock", "--n", "100", "--a", "100",
                         "--epsilon", "1e-5", "--update", "sr1", "--w", "4", "--strategy", "s4",
                         "--pflag", "0", "--seeds", "0..19", "--max-ghs", "2000",
                         "--out", str(out)])
    assert execute(plan) == 0
    return json.loads((out / "summary.json").read_text())


def test_criterion_6_paper_experiment(replication):
    runs = replication["runs"]
    kept = [r for r in runs if not r["discarded"]]
    converged = [r for r in kept if r["status"] == "Converged" and r["n_ghs"] <= 2000]
    slowest = max(r["wall_ms"] for r in runs) / 1000.0
    fraction = len(converged) / len(kept)
    verdict(6, fraction >= 0.7 and slowest < 60.0,
            f"{len(converged)}/{len(kept)} kept runs converged within 2000 gHS "
            f"({len(runs) - len(kept)} discarded at the secondary minimum), "
            f"fraction {fraction:.2f} (>= 0.70), slowest run {slowest:.2f}s (< 60s)")


TREND_SEEDS = "0..15"


@pytest.fixture(scope="module")
def trends(tmp_path_factory):
    out = tmp_path_factory.mktemp("trends")
    common = ["--n", "100", "--a", "100", "--w", "4", "--seeds", TREND_SEEDS, "--max-ghs", "2000"]
    summaries = []
    for extra in (["--update", "sr1,psb", "--strategy", "s4", "--pflag", "1"],
                  ["--update", "sr1", "--strategy", "s1,s4,s5,s6", "--pflag", "0"],
                  ["--update", "sr1", "--strategy", "s1", "--pflag", "1"]):
        sub = out / str(len(summaries))
        assert execute(parse_config(["sweep", *common, *extra, "--out", str(sub)])) == 0
        summaries.append(json.loads((sub / "summary.json").read_text()))
    return summaries


def _trend(summaries, a, b, strict):
    report = compare(summaries, a, b)
    enough = report.sufficient and report.a.n_kept >= 10 and report.b.n_kept >= 10
    holds = enough and (report.sign < 0 if strict else report.sign <= 0)
    detail = (f"{a} median {report.a.median_n_ghs:g} vs {b} median {report.b.median_n_ghs:g} "
              f"(kept {report.a.n_kept}/{report.b.n_kept})") if report.sufficient else report.text()
    return holds, detail


def test_criterion_7_trends(trends):
    results = {
        "a": _trend(trends, "sr1-s4-p1-w4", "psb-s4-p1-w4", strict=True),
        "b": _trend(trends, "sr1-s4-p0-w4", "sr1-s1-p0-w4", strict=False),
        "c": _trend(trends, "sr1-s1-p1-w4", "sr1-s1-p0-w4", strict=False),
    }
    fig4 = [compare(trends, "sr1-s4-p0-w4", f"sr1-{s}-p0-w4") for s in ("s5", "s6")]
    info = "; ".join(f"S4 vs {r.variant_b.split('-')[1].upper()} median diff {r.median_difference:g}"
                     for r in fig4 if r.sufficient)
    ok = all(holds for holds, _ in results.values())
    detail = " | ".join(f"({k}) {'ok' if h else 'violated'}: {d}" for k, (h, d) in results.items())
    verdict(7, ok, f"{detail} | report only: {info}")


def test_criterion_8_determinism(tmp_path):
    dirs = [tmp_path / "first", tmp_path / "second"]
    for out in dirs:
        plan = parse_config(["sweep", "--n", "100", "--w", "4", "--strategy", "s1,s4",
                             "--seeds", "0..2", "--out", str(out)])
        assert execute(plan) == 0
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].glob("*/*.csv"))
    same_csv = all((dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files)
    aggregates = [json.loads((d / "summary.json").read_text())["variants"] for d in dirs]
    ok = len(files) == 6 and same_csv and aggregates[0] == aggregates[1]
    verdict(8, ok, f"{len(files)} CSV files byte-identical: {same_csv}; "
                   f"summary aggregates identical: {aggregates[0] == aggregates[1]}")
