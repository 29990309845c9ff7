"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they
complete. The desk-scale federated cells share one tuned synthetic task:
overlapping Gaussian class clusters split across K=20 clients with
Dirichlet-skewed mixtures, full-batch local descent with weight decay (each
client parks at its own optimum, so trajectories are predictable while
clients stay far apart), and a small ridge inside the forecaster's Gram
inversions.
"""

import math
import time

import numpy as np
import pytest
import scipy.stats

from fedmar.aggregators import AggregationInput, bulyan, fed_median, multi_krum, trimmed_mean
from fedmar.attacks import attack_agr_mm, attack_opt
from fedmar.cli import main as cli_main
from fedmar.mar import HistoryWindow, UpdateMatrix, estimate_mar, forecast, mar_loss
from fedmar.metrics import coordinate_tdmi, prob_at_least_one_malicious, welch_one_tailed_t
from fedmar.models import ModelSpec, loss_and_grad
from fedmar.simulation import ExperimentConfig, run_experiment

from oracles import (
    bulyan_reference,
    central_difference_grad,
    hypergeometric_none_selected,
    krum_selection,
    mar_gd_oracle,
    median_reference,
    trimmed_mean_reference,
)


def report(criterion: str, ok: bool, detail: str, started: float) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {criterion}: {detail} ({time.perf_counter() - started:.1f}s)")
    assert ok, f"{criterion}: {detail}"


def desk_config(**overrides) -> ExperimentConfig:
    base = dict(
        K=20,
        m=20,
        T=20,
        seed=11,
        center_spread=1.5,
        data_noise=2.0,
        n_examples=2000,
        n_test=400,
        epochs=200,
        lr=0.5,
        weight_decay=0.05,
        batch=10**9,
        ridge_a=1e-3,
        ridge_b=1e-3,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_criterion_01_mar_recovery():
    started = time.perf_counter()
    rng = np.random.default_rng(3)
    a = 0.99 * scipy.stats.ortho_group.rvs(10, random_state=rng)
    b = 0.99 * scipy.stats.ortho_group.rvs(8, random_state=rng)
    mats = [rng.standard_normal((10, 8))]
    for _ in range(8):
        mats.append(a @ mats[-1] @ b)
    hist = HistoryWindow(
        capacity=8,
        window=[UpdateMatrix(m_, tuple(range(8)), i) for i, m_ in enumerate(mats[:8])],
    )
    model = estimate_mar(hist, iters=100)
    pred = forecast(model, hist.newest)
    rel = np.linalg.norm(pred.values - mats[8]) / np.linalg.norm(mats[8])
    elapsed = time.perf_counter() - started
    report(
        "criterion 1 (MAR recovery)",
        rel <= 1e-6 and elapsed < 5.0,
        f"one-step relative error {rel:.2e}, {elapsed:.2f}s",
        started,
    )


def test_criterion_02_als_vs_gradient_descent_oracle():
    started = time.perf_counter()
    worst = -np.inf
    for seed in range(20):
        rng = np.random.default_rng(seed)
        a = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
        b = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
        a *= 0.97 / max(np.linalg.norm(a, 2), 1.0)
        b *= 0.97 / max(np.linalg.norm(b, 2), 1.0)
        mats = [rng.standard_normal((3, 3))]
        for _ in range(3):
            mats.append(a @ mats[-1] @ b + 0.05 * rng.standard_normal((3, 3)))
        hist = HistoryWindow(
            capacity=4,
            window=[UpdateMatrix(m_, (0, 1, 2), i) for i, m_ in enumerate(mats)],
        )
        als = mar_loss(estimate_mar(hist, iters=100), hist)
        oracle = mar_gd_oracle([(mats[i], mats[i + 1]) for i in range(3)])
        worst = max(worst, als - oracle)
    elapsed = time.perf_counter() - started
    report(
        "criterion 2 (ALS vs GD oracle)",
        worst <= 1e-6 and elapsed < 30.0,
        f"worst loss gap {worst:+.2e} over 20 instances, {elapsed:.1f}s",
        started,
    )


def test_criterion_03_detection_accuracy():
    started = time.perf_counter()
    worst = 1.0
    details = []
    for attack in ("gauss", "lie", "agr_mm"):
        for r in (0.2, 0.6, 0.8):
            cell_start = time.perf_counter()
            res = run_experiment(desk_config(r=r, attack=attack, attack_start=2))
            cell = time.perf_counter() - cell_start
            p, rc = res.summary["precision"], res.summary["recall"]
            worst = min(worst, p, rc)
            details.append(f"{attack}@r={r}: P={p:.3f} R={rc:.3f} [{cell:.0f}s]")
            assert cell < 120.0, f"cell {attack}@{r} took {cell:.0f}s"
    report(
        "criterion 3 (detection accuracy)",
        worst >= 0.95,
        "; ".join(details),
        started,
    )


def test_criterion_04_robustness_lift():
    started = time.perf_counter()
    shared = dict(r=0.8, attack="gauss", gauss_per_coordinate=True, alpha_d=2.0, n_test=1000)
    filtered = run_experiment(
        desk_config(filter_enabled=True, fallback_aggregator="multi_krum", **shared)
    )
    plain = run_experiment(desk_config(filter_enabled=False, **shared))
    clean = run_experiment(
        desk_config(filter_enabled=False, r=0.0, attack="none", alpha_d=2.0, n_test=1000)
    )
    fb = filtered.summary["best_accuracy"]
    pb = plain.summary["best_accuracy"]
    cb = clean.summary["best_accuracy"]
    elapsed = time.perf_counter() - started
    report(
        "criterion 4 (robustness lift)",
        fb >= pb + 0.20 and abs(cb - fb) <= 0.05 and elapsed < 180.0,
        f"filtered={fb:.3f} plain={pb:.3f} attack-free={cb:.3f} "
        f"lift={fb - pb:+.3f} gap={abs(cb - fb):.3f}, {elapsed:.0f}s",
        started,
    )


def test_criterion_05_attack_free_neutrality():
    started = time.perf_counter()
    on = run_experiment(desk_config(r=0.0, attack="none", filter_enabled=True, k=20))
    off = run_experiment(desk_config(r=0.0, attack="none", filter_enabled=False))
    diff = abs(on.summary["best_accuracy"] - off.summary["best_accuracy"])
    report(
        "criterion 5 (attack-free neutrality)",
        diff <= 0.02,
        f"best-accuracy difference {diff:.2e} (filter on k=m vs off)",
        started,
    )


def test_criterion_06_hypergeometric_exactness():
    started = time.perf_counter()
    mine = prob_at_least_one_malicious(100, 5, 20)
    exact = 1.0 - hypergeometric_none_selected(100, 5, 20)
    rel = abs(mine - exact) / exact
    report(
        "criterion 6 (hypergeometric exactness)",
        rel <= 1e-12 and round(mine, 2) == 0.68,
        f"value {mine:.12f}, relative error {rel:.1e} vs big-integer oracle",
        started,
    )


def test_criterion_07_aggregator_oracle_equivalence():
    started = time.perf_counter()
    checked = 0
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        m = int(rng.integers(3, 7))
        d = int(rng.integers(1, 4))
        vs = rng.standard_normal((m, d))
        data = AggregationInput.from_pairs([(i, v) for i, v in enumerate(vs)])
        assert np.array_equal(fed_median(data), median_reference(vs))
        assert np.array_equal(trimmed_mean(data, 0.2), trimmed_mean_reference(vs, 0.2))
        b = int(rng.integers(0, max(1, m - 2)))  # keep m >= b + 3
        k_sel = int(rng.integers(1, m + 1))
        chosen = krum_selection(vs, list(range(m)), b, k_sel)
        assert np.array_equal(multi_krum(data, b, k_sel), np.mean(vs[chosen], axis=0))
        if m >= 3:
            assert np.array_equal(bulyan(data, 0), bulyan_reference(vs, list(range(m)), 0))
        if m >= 7:
            assert np.array_equal(bulyan(data, 1), bulyan_reference(vs, list(range(m)), 1))
        checked += 1
    elapsed = time.perf_counter() - started
    report(
        "criterion 7 (aggregator oracle equivalence)",
        checked == 200 and elapsed < 30.0,
        f"{checked} random instances matched exactly, {elapsed:.1f}s",
        started,
    )


def test_criterion_08_tdmi_ordering_and_t_test():
    started = time.perf_counter()
    res = run_experiment(
        desk_config(
            T=50,
            r=0.2,
            attack="gauss",
            attack_fixed_ids=True,
            fallback_aggregator="multi_krum",
            epochs=1,
            lr=0.05,
            weight_decay=0.0,
        )
    )
    legit, mal = [], []
    for cid, entries in res.trajectories.items():
        seq = np.stack([vec for _, vec in entries], axis=0)
        pool = coordinate_tdmi(seq, delay=1, bins=10)
        (mal if cid in res.ever_malicious else legit).append(pool)
    legit = np.concatenate(legit)
    mal = np.concatenate(mal)
    stat, _, p = welch_one_tailed_t(legit, mal)
    report(
        "criterion 8 (TDMI ordering + t-test)",
        legit.mean() > mal.mean() and p < 0.01,
        f"mean TDMI legit={legit.mean():.3f} vs poisoned={mal.mean():.3f}, "
        f"t={stat:.1f}, one-tailed p={p:.2e}",
        started,
    )


def test_criterion_09_gradient_correctness():
    started = time.perf_counter()
    rng = np.random.default_rng(0)
    feats = rng.standard_normal((15, 6))
    labels = rng.integers(0, 3, size=15)
    worst = 0.0
    for spec in (ModelSpec("logreg", 6, 3), ModelSpec("mlp", 6, 3, hidden=5)):
        for _ in range(10):
            point = rng.standard_normal(spec.dim)
            _, analytic = loss_and_grad(point, feats, labels, spec)
            numeric = central_difference_grad(
                lambda x: loss_and_grad(x, feats, labels, spec)[0], point
            )
            worst = max(
                worst, np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
            )
    report(
        "criterion 9 (gradient correctness)",
        worst <= 1e-5,
        f"worst relative error {worst:.2e} over 10 points x 2 models",
        started,
    )


def test_criterion_10_determinism(tmp_path):
    started = time.perf_counter()
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "K = 8\nT = 4\nr = 0.25\nattack = lie\nseed = 9\nn_examples = 400\n"
        "n_test = 120\nepochs = 15\nlr = 0.3\nweight_decay = 0.05\n"
        "ridge_a = 0.001\nridge_b = 0.001\n"
    )
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert cli_main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
    assert cli_main(["run", "--config", str(cfg), "--out", str(out2)]) == 0
    same_rounds = (out1 / "rounds.csv").read_bytes() == (out2 / "rounds.csv").read_bytes()
    same_summary = (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()
    report(
        "criterion 10 (determinism)",
        same_rounds and same_summary,
        "rounds.csv and summary.json byte-identical across reruns",
        started,
    )


def test_criterion_11_halving_search_bounds():
    started = time.perf_counter()
    from fedmar.attacks import AttackContext

    ctx = AttackContext(
        benign_updates=[(0, np.array([1.0, -2.0])), (1, np.array([1.5, -2.5]))],
        malicious_ids=(7,),
        global_model=np.zeros(2),
        rng_seed=0,
        round_id=1,
    )

    def immovable(pairs):  # aggregator the attack can never satisfy
        return np.array([100.0, 100.0]) if len(pairs) > 2 else np.array([0.0, 0.0])

    _, opt_info = attack_opt(ctx, immovable, tau=1e-5, lambda_init=10.0)
    opt_bound = math.ceil(math.log2(10.0 / 1e-5)) + 1

    tight = AttackContext(
        benign_updates=[(0, np.ones(2)), (1, np.ones(2))],
        malicious_ids=(7,),
        global_model=np.zeros(2),
        rng_seed=0,
        round_id=1,
    )
    _, agr_info = attack_agr_mm(tight, tau=1e-5, gamma_init=5.0, perturbation="unit_vector")
    agr_bound = math.ceil(math.log2(5.0 / 1e-5)) + 1

    report(
        "criterion 11 (halving-search bounds)",
        (not opt_info.succeeded)
        and opt_info.iterations <= opt_bound
        and (not agr_info.succeeded)
        and agr_info.iterations <= agr_bound,
        f"deviation search {opt_info.iterations}/{opt_bound} probes, "
        f"min-max search {agr_info.iterations}/{agr_bound} probes",
        started,
    )
