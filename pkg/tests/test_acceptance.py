"""Acceptance gate: one test per criterion, each recorded as a PASS/FAIL line.

The synthetic scenarios use ``configs/synthetic.ini`` with seed 7. Lines are
printed in the terminal summary under "acceptance criteria".
"""

import time

import numpy as np
import pytest

from conftest import SYNTHETIC_INI, WORKED_LABELS, WORKED_VIEWS, record_criterion
from gouda.adaptation import stopping_criterion, total_loss
from gouda.cli import main, run_adaptation
from gouda.embedding import stack_embeddings
from gouda.evaluation import oracle_filter, rank1_cross_view, supervised_adapt, triplet_correctness
from gouda.mining import MiningConfig, select_triplets, top_q
from gouda.oracles import random_triplet_batch, run_oracle_checks

pytestmark = pytest.mark.acceptance


def check(number, name, passed, detail=""):
    record_criterion(number, name, bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name} {detail}")
    assert passed, f"criterion {number} ({name}) failed: {detail}"


def test_01_selection_matches_brute_force():
    start = time.perf_counter()
    report = run_oracle_checks(n_instances=100, R=50, d=16, n_gradient=0, seed=0)
    secs = time.perf_counter() - start
    ok = report.triplet_matches == 100 and secs < 10
    check(1, "triplet selection oracle", ok, f"{report.triplet_matches}/100 exact, {secs:.2f}s")


def test_02_gradient_matches_finite_differences():
    start = time.perf_counter()
    report = run_oracle_checks(n_instances=0, d=16, n_gradient=20, seed=1)
    secs = time.perf_counter() - start
    err = report.gradient_max_rel_error
    check(2, "gradient check", err < 1e-4 and secs < 5, f"max rel err {err:.2e}, {secs:.2f}s")


def test_03_loss_scale_invariance():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        batch, W = random_triplet_batch(rng, d=16)
        a, b = total_loss(batch, W), total_loss(batch, 2 * W)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    check(3, "loss scale invariance", worst < 1e-9, f"max rel diff {worst:.1e}")


def test_04_view_bias_signature(default_run):
    test = default_run["test"]
    rep = rank1_cross_view(test)
    sc = stopping_criterion(stack_embeddings(test), [r.view for r in test])
    ok = rep.identical_view_mean > 90 and rep.overall_cross_view < 60 and sc > 4.0
    detail = f"identical {rep.identical_view_mean:.2f}%, cross {rep.overall_cross_view:.2f}%, SC {sc:.3f}"
    check(4, "view-bias signature", ok, detail)


def test_05_adaptation_gain(default_run):
    test, trace = default_run["test"], default_run["trace"]
    dt = rank1_cross_view(test).overall_cross_view
    adapted = rank1_cross_view(test, default_run["W"]).overall_cross_view
    initial_sc = trace.checkpoints[0].sc
    ok = adapted - dt >= 15 and trace.chosen.sc < initial_sc and default_run["seconds"] < 300
    detail = f"DT {dt:.2f}% -> {adapted:.2f}%, SC {initial_sc:.3f} -> {trace.chosen.sc:.3f}, {default_run['seconds']:.1f}s"
    check(5, "adaptation gain", ok, detail)


def test_06_curriculum_trend(default_run):
    stages = default_run["trace"].stages
    first = stages[0]
    rates = [s.correct_triplet_rate for s in stages]
    drops = [a - b for a, b in zip(rates, rates[1:]) if b < a]
    trend_ok = len(drops) == 0 or (len(drops) == 1 and drops[0] <= 2.0)
    ok = first.correct_triplet_rate >= first.valid_correct_triplet_rate and trend_ok
    detail = f"stage-1 top {first.correct_triplet_rate:.1f}% vs all {first.valid_correct_triplet_rate:.1f}%, stages {[round(r, 1) for r in rates]}"
    check(6, "curriculum trend", ok, detail)


def test_07_ablation_ordering(synthetic_cfg, default_dataset, default_run):
    records, test = default_dataset.records, default_run["test"]
    W_oracle, _, _, _ = run_adaptation(synthetic_cfg, records, oracle=True)
    W_sup = supervised_adapt(
        default_run["train"] + default_run["val"],
        synthetic_cfg.adam(),
        synthetic_cfg.supervised_iterations,
        synthetic_cfg.schedule.batch_triplets,
        synthetic_cfg.loss_margin,
        synthetic_cfg.seed,
    )
    scores = [rank1_cross_view(test, W).overall_cross_view for W in (None, default_run["W"], W_oracle, W_sup)]
    ok = all(a <= b + 1.0 for a, b in zip(scores, scores[1:]))
    detail = "DT {:.2f} <= GOUDA {:.2f} <= oracle {:.2f} <= supervised {:.2f}".format(*scores)
    check(7, "ablation ordering", ok, detail)


def test_08_stopping_criterion_bounds():
    rng = np.random.default_rng(8)
    in_range = True
    for _ in range(200):
        K = int(rng.integers(1, 8))
        sc = stopping_criterion(rng.standard_normal((20, 6)), rng.uniform(0, 360, 20), K=K)
        in_range &= 0 <= sc <= K
    all_equal = stopping_criterion(rng.standard_normal((10, 4)), np.full(10, 30.0), K=5) == 5.0
    cross_pairs = np.array([[1, 0], [0, 1], [0.99, 0.1], [0.1, 0.99]])
    zero = stopping_criterion(cross_pairs, [0, 5, 90, 95], K=1) == 0.0
    check(8, "SC bounds and edge cases", in_range and all_equal and zero, f"range {in_range}, all-equal {all_equal}, cross-pair {zero}")


def test_09_cli_determinism(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for out in dirs:
        for cmd in (["synth"], ["adapt"], ["eval", "--adapter", str(out / "adapter.csv")]):
            assert main([cmd[0], "--config", str(SYNTHETIC_INI), "--out", str(out), *cmd[1:]]) == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    same = names == sorted(p.name for p in dirs[1].iterdir()) and all(
        (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names
    )
    check(9, "CLI determinism", same, f"{len(names)} files compared")


def test_10_worked_instance(worked_D):
    trips = select_triplets(worked_D, WORKED_VIEWS, MiningConfig())
    got = {(t.anchor, t.positive, t.negative, round(t.confidence, 12)) for t in trips}
    half = {t[:3] for t in top_q(trips, 50)}
    report = triplet_correctness(trips, WORKED_LABELS)
    rates = tuple(float(r) for r in (report.triplet_rate, report.positive_rate, report.negative_rate))
    ok = (
        got == {(0, 3, 2, 0.7), (1, 3, 2, 0.6)}
        and half == {(0, 3, 2)}
        and oracle_filter(trips, WORKED_LABELS) == []
        and rates == (0.0, 50.0, 50.0)
    )
    check(10, "worked mining instance", ok, f"triplets {sorted(got)}, top-50% {half}, rates {rates}")
