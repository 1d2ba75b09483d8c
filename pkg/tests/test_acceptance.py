"""End-to-end acceptance gate.

Each test records exactly one ``ACCEPTANCE <n>: PASS|FAIL|SKIP - <detail>``
line (echoed in a terminal section after the run, so the verdicts survive
output capture) and then asserts.  Criteria 1-5 reproduce published turbofan
results and need the real C-MAPSS files: point COSMO_RUL_DATA_ROOT at a
directory with train_FD00x.txt / test_FD00x.txt / RUL_FD00x.txt (default:
./data).  When the files are absent those tests SKIP with the missing names;
they are never run against synthetic stand-ins.  Criteria 6-10 are property
checks on synthetic data and always run.
"""

import itertools
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_acceptance
from oracles import brute_force_feature_vector

from cosmo_rul.adapt import apply_coral, fit_coral
from cosmo_rul.cosmo import (
    DISTANCE_KINDS,
    REFERENCE_MODES,
    DistanceMethod,
    ReferenceGroup,
    ReferenceMode,
    check_k_condition,
    estimate_num_conditions,
    feature_vector,
)
from cosmo_rul.dataset import subset_paths, synthesize_fleet
from cosmo_rul.forest import ForestConfig
from cosmo_rul.metrics import UnitPrediction, mape_fleet, mape_unit, rmse_last_cycle
from cosmo_rul.runner import (
    ScenarioSpec,
    group_mean_mape,
    matrix_specs,
    run_curves,
    run_matrix,
    run_scenario,
    write_curve_csv,
    write_result_csv,
)

DATA_ENV = "COSMO_RUL_DATA_ROOT"

# pinned tolerances and budgets
RMSE_BASELINE_RANGE = (17.5, 22.5)       # criterion 1
BASELINE_BUDGET_S = 300.0                # criterion 1
TRANSFER_GAIN_FACTOR = 0.5               # criterion 2: cosmo mape <= 0.5 * raw
TRANSFER_BUDGET_S = 1800.0               # criteria 2 and 3
PARITY_REL_TOL = 0.20                    # criterion 4
ORACLE_TRIALS = 1000                     # criterion 6
ORACLE_BUDGET_S = 10.0                   # criterion 6
METRIC_ABS_TOL = 1e-12                   # criterion 7
METRIC_BUDGET_S = 1.0                    # criterion 7
EIGENGAP_MIN_HITS = 9                    # criterion 8: out of 10 seeds
CORAL_TRIALS = 100                       # criterion 10
CORAL_GAP_LIMIT = 1e-6                   # criterion 10


def _report(n: int, status: str, detail: str) -> None:
    record_acceptance(f"ACCEPTANCE {n}: {status} - {detail}")


def _finish(n: int, ok: bool, detail: str) -> None:
    _report(n, "PASS" if ok else "FAIL", detail)
    assert ok, f"criterion {n}: {detail}"


def _require_real_data(n: int, pairs: list[tuple[str, str]]) -> Path:
    """Return the real-data root, or SKIP naming the missing files."""
    root = Path(os.environ.get(DATA_ENV) or Path(__file__).resolve().parents[1] / "data")
    missing = []
    for subset_id, split in pairs:
        paths = subset_paths(root, subset_id)
        needed = [paths["train"]] if split == "alpha" else [paths["test"], paths["rul"]]
        missing += [p.name for p in needed if not p.is_file()]
    if missing:
        detail = (
            f"needs real turbofan data under {root} "
            f"(missing: {', '.join(sorted(set(missing)))}); set {DATA_ENV}"
        )
        _report(n, "SKIP", detail)
        pytest.skip(detail)
    return root


# ---------------------------------------------------------------------------
# criteria 1-5: published-result reproduction (real data required)


def test_criterion_01_baseline_last_cycle_rmse():
    root = _require_real_data(1, [("FD001", "alpha"), ("FD001", "beta")])
    start = time.perf_counter()
    spec = ScenarioSpec(label="A1", method="raw", eval_mode="beta", seed=0)
    result = run_scenario(spec, root)
    elapsed = time.perf_counter() - start
    lo, hi = RMSE_BASELINE_RANGE
    ok = lo <= result.rmse_mean <= hi and elapsed < BASELINE_BUDGET_S
    _finish(
        1, ok,
        f"A1 beta raw last-cycle RMSE {result.rmse_mean:.2f}+-{result.rmse_std:.2f} "
        f"(required [{lo}, {hi}]), {elapsed:.0f}s (budget {BASELINE_BUDGET_S:.0f}s)",
    )


def test_criterion_02_transfer_gain_new_conditions():
    root = _require_real_data(2, [("FD001", "alpha"), ("FD002", "alpha")])
    start = time.perf_counter()
    cache = {}
    raw = run_scenario(ScenarioSpec(label="C1", method="raw", seed=0), root, cache)
    cosmo = run_scenario(
        ScenarioSpec(
            label="C1", method="cosmo", seed=0,
            distance=DistanceMethod("mknn_median", 8),
            reference_mode=ReferenceMode("ST", "ST"),
        ),
        root, cache,
    )
    elapsed = time.perf_counter() - start
    ok = (
        cosmo.mape_mean <= TRANSFER_GAIN_FACTOR * raw.mape_mean
        and elapsed < TRANSFER_BUDGET_S
    )
    _finish(
        2, ok,
        f"C1 alpha mape: cosmo {cosmo.mape_mean:.4f} vs raw {raw.mape_mean:.4f} "
        f"(required <= {TRANSFER_GAIN_FACTOR} * raw), {elapsed:.0f}s",
    )


def test_criterion_03_transfer_gain_new_fault_and_conditions():
    root = _require_real_data(3, [("FD001", "alpha"), ("FD004", "alpha")])
    start = time.perf_counter()
    cache = {}

    def median_mape(spec):
        result = run_scenario(spec, root, cache)
        return float(np.median([r.report.mape for r in result.records]))

    raw_median = median_mape(ScenarioSpec(label="D", method="raw", seed=0))
    coral_median = median_mape(ScenarioSpec(label="D", method="coral", seed=0))
    worst = None
    for kind, mode in itertools.product(DISTANCE_KINDS, REFERENCE_MODES):
        spec = ScenarioSpec(
            label="D", method="cosmo", seed=0,
            distance=DistanceMethod(kind, 8), reference_mode=mode,
        )
        value = median_mape(spec)
        if worst is None or value > worst[0]:
            worst = (value, f"{kind} ({mode.label})")
    elapsed = time.perf_counter() - start
    ok = worst[0] < raw_median and worst[0] < coral_median and elapsed < TRANSFER_BUDGET_S
    _finish(
        3, ok,
        f"D alpha median mape: worst cosmo variant {worst[0]:.4f} [{worst[1]}] vs "
        f"raw {raw_median:.4f}, coral {coral_median:.4f} (all 12 variants must beat both), "
        f"{elapsed:.0f}s",
    )


def test_criterion_04_same_population_parity():
    pairs = [(f"FD00{i}", "alpha") for i in (1, 2, 3, 4)]
    root = _require_real_data(4, pairs)
    start = time.perf_counter()
    cache = {}
    modes = (ReferenceMode("S", "T"), ReferenceMode("ST", "ST"), ReferenceMode("ST", "T"))
    worst = (0.0, "none")
    for label in ("A1", "A2", "A3", "A4"):
        raw = run_scenario(ScenarioSpec(label=label, method="raw", seed=0), root, cache)
        for mode in modes:
            spec = ScenarioSpec(
                label=label, method="cosmo", seed=0,
                distance=DistanceMethod("mknn_median", 8), reference_mode=mode,
            )
            cosmo = run_scenario(spec, root, cache)
            rel = abs(cosmo.mape_mean - raw.mape_mean) / raw.mape_mean
            if rel > worst[0]:
                worst = (rel, f"{label} ({mode.label})")
    elapsed = time.perf_counter() - start
    ok = worst[0] <= PARITY_REL_TOL
    _finish(
        4, ok,
        f"A1-A4 alpha: worst cosmo-vs-raw relative mape gap {worst[0]:.3f} [{worst[1]}] "
        f"(required <= {PARITY_REL_TOL}), {elapsed:.0f}s",
    )


def test_criterion_05_scenario_group_ordering():
    pairs = [(f"FD00{i}", "alpha") for i in (1, 2, 3, 4)]
    root = _require_real_data(5, pairs)
    start = time.perf_counter()
    results, failures = run_matrix(matrix_specs(method="raw", seed=0), root)
    assert not failures, failures
    means = group_mean_mape(results)
    elapsed = time.perf_counter() - start
    base = means["Same population"]
    harder = {g: means[g] for g in ("New fault", "New OCs", "New fault & new OCs")}
    ok = all(value > base for value in harder.values())
    ordering = ", ".join(f"{g}={v:.4f}" for g, v in harder.items())
    _finish(
        5, ok,
        f"16-scenario raw sweep: Same population={base:.4f} vs {ordering} "
        f"(each must exceed the same-population mean), {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# criteria 6-10: property checks (synthetic, always run)


def test_criterion_06_distance_oracle_equivalence():
    rng = np.random.default_rng(2026)
    start = time.perf_counter()
    mismatches = 0
    for trial in range(ORACLE_TRIALS):
        kind = DISTANCE_KINDS[trial % len(DISTANCE_KINDS)]
        n_phi = int(rng.integers(1, 201))
        k = int(rng.integers(1, n_phi + 1))
        samples = rng.uniform(-50.0, 50.0, size=(n_phi, 24))
        x = rng.uniform(-50.0, 50.0, size=24)
        group = ReferenceGroup(samples=samples, provenance="synthetic", seed=0)
        ours = feature_vector(x, group, DistanceMethod(kind, k))
        oracle = brute_force_feature_vector(x, samples, kind, k)
        if not np.array_equal(ours, oracle):
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < ORACLE_BUDGET_S
    _finish(
        6, ok,
        f"{ORACLE_TRIALS - mismatches}/{ORACLE_TRIALS} randomized calls bitwise-equal "
        f"to the full-sort oracle (all three distances), {elapsed:.1f}s "
        f"(budget {ORACLE_BUDGET_S:.0f}s)",
    )


def test_criterion_07_metric_worked_examples():
    def unit(truths, predictions, unit_id=1):
        truths = np.asarray(truths, dtype=np.float64)
        return UnitPrediction(
            unit_id=unit_id,
            cycles=np.arange(1, len(truths) + 1),
            truths=truths,
            predictions=np.asarray(predictions, dtype=np.float64),
        )

    start = time.perf_counter()
    perfect = mape_unit(unit([10, 5], [10, 5]))
    worked = mape_unit(unit([10, 5], [5, 10]))
    rmse = rmse_last_cycle([unit([10], [13]), unit([10], [6], unit_id=2)])
    plateau_excluded = mape_unit(unit([130, 130, 130], [120, 120, 120]), rul_limit=129)
    fleet = mape_fleet([unit([10, 5], [10, 5]), unit([130, 130], [1, 1], unit_id=2)])
    elapsed = time.perf_counter() - start

    checks = (
        perfect == 0.0,
        abs(worked - 0.75) <= METRIC_ABS_TOL,
        abs(rmse - 3.5355339059327378) <= METRIC_ABS_TOL,
        plateau_excluded is None,
        fleet.n_units_excluded == 1 and fleet.mape == 0.0,
        elapsed < METRIC_BUDGET_S,
    )
    _finish(
        7, all(checks),
        f"mape(perfect)={perfect}, mape(worked)={worked!r} (0.75 within {METRIC_ABS_TOL}), "
        f"rmse={rmse!r} ({math.sqrt(12.5)!r} within {METRIC_ABS_TOL}), "
        f"plateau unit excluded, {elapsed * 1000:.0f}ms",
    )


def test_criterion_08_eigengap_condition_recovery():
    hits = {}
    for q in (1, 2, 6):
        hits[q] = 0
        for seed in range(10):
            fleet = synthesize_fleet(10, q, seed=seed)
            stacked = np.vstack([t.samples for t in fleet])
            if estimate_num_conditions(stacked) == q:
                hits[q] += 1
    k_ok = check_k_condition(8, 80, 6)
    ok = all(h >= EIGENGAP_MIN_HITS for h in hits.values()) and k_ok
    summary = ", ".join(f"q={q}: {h}/10" for q, h in hits.items())
    _finish(
        8, ok,
        f"{summary} (need >= {EIGENGAP_MIN_HITS}/10 each); "
        f"k-condition (k=8, group 80, 6 conditions) {'holds' if k_ok else 'fails'}",
    )


def test_criterion_09_byte_identical_reruns(data_root, tmp_path):
    specs = (
        ScenarioSpec(label="A1", method="raw", seed=3, n_folds=3,
                     forest=ForestConfig(n_trees=4)),
        ScenarioSpec(label="C1", method="cosmo", seed=3, n_folds=3, phi_size=30,
                     forest=ForestConfig(n_trees=4)),
    )
    identical = True
    for spec in specs:
        first = write_result_csv(run_scenario(spec, data_root), tmp_path / "one")
        second = write_result_csv(run_scenario(spec, data_root), tmp_path / "two")
        identical &= first.read_bytes() == second.read_bytes()
    curve_spec = specs[0]
    first = write_curve_csv(curve_spec, run_curves(curve_spec, data_root), tmp_path / "one")
    second = write_curve_csv(curve_spec, run_curves(curve_spec, data_root), tmp_path / "two")
    identical &= first.read_bytes() == second.read_bytes()
    _finish(
        9, identical,
        "raw and peer-distance scenarios repeated with identical seeds produce "
        "byte-identical result and curve CSVs",
    )


def test_criterion_10_coral_alignment_exactness():
    rng = np.random.default_rng(7)

    def dataset(n, d=24):
        q1 = np.linalg.qr(rng.standard_normal((d, d)))[0]
        q2 = np.linalg.qr(rng.standard_normal((d, d)))[0]
        mixing = q1 @ np.diag(rng.uniform(0.5, 2.0, size=d)) @ q2
        return rng.standard_normal((n, d)) @ mixing + rng.uniform(-5.0, 5.0, size=d)

    worst = 0.0
    for _ in range(CORAL_TRIALS):
        source = dataset(500)
        target = dataset(600)
        aligned = apply_coral(fit_coral(source, target), source)
        gap = np.linalg.norm(
            np.cov(aligned, rowvar=False) - np.cov(target, rowvar=False)
        ) / np.linalg.norm(np.cov(target, rowvar=False))
        worst = max(worst, float(gap))
    ok = worst < CORAL_GAP_LIMIT
    _finish(
        10, ok,
        f"worst covariance Frobenius relative gap {worst:.2e} over {CORAL_TRIALS} "
        f"full-rank 24-dim datasets (required < {CORAL_GAP_LIMIT})",
    )
