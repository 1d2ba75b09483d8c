"""Cross-domain experiment harness: scenarios, folds, repetitions, outputs.

A scenario names a (source subset, target subset) cell of the transfer
matrix.  Mode alpha evaluates on run-to-failure trajectories (for the
same-subset scenarios each fold scores its held-out quarter; across subsets
the full target training set is scored); mode beta evaluates on the censored
test set with truths back-extended from the provided remaining life.  Source
trajectories are split 4-fold at the trajectory level, so no unit ever
contributes samples to both the fit and validation side of a fold.  Feature
pipelines: raw sensors, CORAL-aligned sensors, or peer-distance features with
a reference mode and distance method.  Reference groups and the CORAL
transform are fixed per (scenario, repetition, seed); fold splits and forest
seeds derive from the same seed, so different methods see identical folds.

Outputs: ``results/<scenario>_<method>.csv`` (one row per fold x repetition,
full provenance), ``curves/<scenario>_<method>.csv`` (limit, mape), and
``summary.json`` aggregates.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from . import forest as forest_mod
from .adapt import apply_coral, fit_coral
from .cosmo import (
    DistanceMethod,
    K_DEFAULT,
    PHI_SIZE_DEFAULT,
    ReferenceMode,
    build_mode_groups,
    check_k_condition,
    estimate_num_conditions,
    feature_matrix,
)
from .dataset import (
    Subset,
    TAU_DEFAULT,
    TAU_MAX_DEFAULT,
    Trajectory,
    censored_rul_target,
    extract_nominal,
    label_rul,
    load_subset,
)
from .forest import ForestConfig
from .metrics import MetricReport, RUL_LIMIT_DEFAULT, UnitPrediction, mape_fleet

# label -> (source subset, target subset, scenario group)
SCENARIOS: dict[str, tuple[str, str, str]] = {
    "A1": ("FD001", "FD001", "Same population"),
    "A2": ("FD002", "FD002", "Same population"),
    "A3": ("FD003", "FD003", "Same population"),
    "A4": ("FD004", "FD004", "Same population"),
    "B1": ("FD001", "FD003", "New fault"),
    "B2": ("FD002", "FD004", "New fault"),
    "C1": ("FD001", "FD002", "New OCs"),
    "C2": ("FD003", "FD004", "New OCs"),
    "D": ("FD001", "FD004", "New fault & new OCs"),
    "E1": ("FD003", "FD001", "Fewer fault"),
    "E2": ("FD004", "FD002", "Fewer fault"),
    "F1": ("FD002", "FD001", "Fewer OCs"),
    "F2": ("FD004", "FD003", "Fewer OCs"),
    "G1": ("FD002", "FD003", "New fault & fewer OCs"),
    "G2": ("FD003", "FD002", "Fewer fault & new OCs"),
    "H": ("FD004", "FD001", "Fewer fault & fewer OCs"),
}

METHODS = ("raw", "coral", "cosmo")

RESULT_COLUMNS = (
    "scenario",
    "method",
    "eval_mode",
    "reference_mode",
    "distance",
    "k",
    "phi_size",
    "tau",
    "tau_max",
    "fold",
    "repetition",
    "seed",
    "rul_limit",
    "mape",
    "rmse_last_cycle",
    "n_units_included",
    "n_units_excluded",
)


@dataclass(frozen=True)
class ScenarioSpec:
    """One experiment: scenario label, evaluation mode, feature method.

    ``source_subset``/``target_subset`` are derived from the label; passing
    them explicitly is only a cross-check.  For ``method="cosmo"`` the
    distance defaults to mknn_median (k=8) and the reference mode to (ST,ST).
    The forest seed is derived per (seed, repetition, fold); the seed field
    of ``forest`` itself is ignored.
    """

    label: str
    method: str = "raw"
    eval_mode: str = "alpha"
    source_subset: str | None = None
    target_subset: str | None = None
    distance: DistanceMethod | None = None
    reference_mode: ReferenceMode | None = None
    seed: int = 0
    n_repetitions: int = 1
    n_folds: int = 4
    phi_size: int = PHI_SIZE_DEFAULT
    tau: int = TAU_DEFAULT
    tau_max: int = TAU_MAX_DEFAULT
    rul_limit: int = RUL_LIMIT_DEFAULT
    forest: ForestConfig = ForestConfig()

    def __post_init__(self) -> None:
        if self.label not in SCENARIOS:
            raise ValueError(f"unknown scenario label {self.label!r}; expected one of {sorted(SCENARIOS)}")
        source, target, _ = SCENARIOS[self.label]
        if self.source_subset is not None and self.source_subset != source:
            raise ValueError(f"scenario {self.label} pairs {source}->{target}, not source {self.source_subset}")
        if self.target_subset is not None and self.target_subset != target:
            raise ValueError(f"scenario {self.label} pairs {source}->{target}, not target {self.target_subset}")
        object.__setattr__(self, "source_subset", source)
        object.__setattr__(self, "target_subset", target)
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.eval_mode not in ("alpha", "beta"):
            raise ValueError(f"eval_mode must be 'alpha' or 'beta', got {self.eval_mode!r}")
        if self.method == "cosmo":
            if self.distance is None:
                object.__setattr__(self, "distance", DistanceMethod("mknn_median", K_DEFAULT))
            if self.reference_mode is None:
                object.__setattr__(self, "reference_mode", ReferenceMode("ST", "ST"))
        else:
            object.__setattr__(self, "distance", None)
            object.__setattr__(self, "reference_mode", None)
        for name, minimum in (
            ("n_repetitions", 1),
            ("n_folds", 2),
            ("phi_size", 1),
            ("tau", 1),
            ("tau_max", 1),
            ("rul_limit", 1),
        ):
            if getattr(self, name) < minimum:
                raise ValueError(f"{name} must be >= {minimum}, got {getattr(self, name)}")

    @property
    def group(self) -> str:
        return SCENARIOS[self.label][2]

    @property
    def method_slug(self) -> str:
        """Filename-safe method identifier; cosmo variants stay distinct."""
        if self.method != "cosmo":
            return self.method
        mode = f"{self.reference_mode.build_side}.{self.reference_mode.predict_side}"
        return f"cosmo-{self.distance.kind}-{mode}"

    def digest(self) -> str:
        """Short stable hash of every field that shapes the results."""
        parts = (
            self.label, self.method, self.eval_mode, self.source_subset, self.target_subset,
            "-" if self.distance is None else f"{self.distance.kind}:{self.distance.k}",
            "-" if self.reference_mode is None else self.reference_mode.label,
            self.seed, self.n_repetitions, self.n_folds, self.phi_size, self.tau,
            self.tau_max, self.rul_limit, self.forest.n_trees,
            self.forest.max_features_per_split, self.forest.min_samples_leaf,
            self.forest.max_depth, self.forest.bootstrap,
        )
        return hashlib.sha256(repr(parts).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FoldRecord:
    repetition: int
    fold: int
    seed: int
    report: MetricReport


@dataclass(frozen=True)
class ExperimentResult:
    """Per-fold records plus aggregates recomputable from them."""

    spec: ScenarioSpec
    records: tuple[FoldRecord, ...]

    def _values(self, attr: str) -> np.ndarray:
        return np.asarray([getattr(r.report, attr) for r in self.records], dtype=np.float64)

    @property
    def mape_mean(self) -> float:
        return float(np.mean(self._values("mape")))

    @property
    def mape_std(self) -> float:
        vals = self._values("mape")
        return float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0

    @property
    def rmse_mean(self) -> float:
        return float(np.mean(self._values("rmse_last_cycle")))

    @property
    def rmse_std(self) -> float:
        vals = self._values("rmse_last_cycle")
        return float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0


def fold_split(n_trajectories: int, n_folds: int, seed: int) -> list[np.ndarray]:
    """Disjoint trajectory-index folds covering range(n), seeded shuffle."""
    if n_trajectories < n_folds:
        raise ValueError(f"need at least {n_folds} trajectories for {n_folds}-fold CV, got {n_trajectories}")
    perm = np.random.default_rng(seed).permutation(n_trajectories)
    return np.array_split(perm, n_folds)


def _stack_samples(trajectories: Sequence[Trajectory]) -> np.ndarray:
    return np.vstack([t.samples for t in trajectories])


def _alpha_targets(trajectories: Sequence[Trajectory], tau_max: int) -> np.ndarray:
    return np.concatenate([label_rul(t, tau_max).values for t in trajectories])


def _truth_values(trajectory: Trajectory, tau_max: int) -> np.ndarray:
    if trajectory.censored_rul is None:
        return label_rul(trajectory, tau_max).values
    return censored_rul_target(trajectory, tau_max).values


def _get_subset(data_root, subset_id: str, split: str, cache: dict | None) -> Subset:
    key = (subset_id, split)
    if cache is not None and key in cache:
        return cache[key]
    subset = load_subset(data_root, subset_id, split)
    if cache is not None:
        cache[key] = subset
    return subset


def _unit_predictions(
    trajectories: Sequence[Trajectory], predictions: np.ndarray, tau_max: int
) -> list[UnitPrediction]:
    lengths = [t.n_cycles for t in trajectories]
    offsets = np.concatenate(([0], np.cumsum(lengths)))
    out = []
    for i, traj in enumerate(trajectories):
        sl = slice(offsets[i], offsets[i + 1])
        out.append(
            UnitPrediction(
                unit_id=traj.unit_id,
                cycles=np.arange(1, traj.n_cycles + 1),
                truths=_truth_values(traj, tau_max),
                predictions=predictions[sl],
            )
        )
    return out


def _rep_seeds(spec: ScenarioSpec, repetition: int) -> tuple[int, int, list[int]]:
    state = np.random.SeedSequence(spec.seed, spawn_key=(repetition,)).generate_state(
        2 + spec.n_folds, np.uint64
    )
    return int(state[0]), int(state[1]), [int(s) for s in state[2:]]


def _iter_fold_predictions(
    spec: ScenarioSpec, data_root, cache: dict | None
) -> Iterator[tuple[int, int, int, list[UnitPrediction]]]:
    """Yield (repetition, fold, fold_seed, unit predictions) in order.

    This is the full pipeline: load, pools/reference groups or CORAL
    transform per repetition, per-fold forest fit, target prediction.
    """
    source = _get_subset(data_root, spec.source_subset, "alpha", cache)
    same_subset_alpha = spec.eval_mode == "alpha" and spec.source_subset == spec.target_subset
    if same_subset_alpha:
        target = source
    else:
        target = _get_subset(data_root, spec.target_subset, spec.eval_mode, cache)

    source_trajs = source.trajectories
    target_trajs = target.trajectories
    source_X = _stack_samples(source_trajs)
    target_X = source_X if same_subset_alpha else _stack_samples(target_trajs)
    source_lengths = np.asarray([t.n_cycles for t in source_trajs])
    source_offsets = np.concatenate(([0], np.cumsum(source_lengths)))

    if spec.method == "cosmo":
        pool_S = extract_nominal(source_trajs, spec.tau)
        pool_T = extract_nominal(target_trajs, spec.tau)
        est = estimate_num_conditions(pool_S.samples)
        if not check_k_condition(spec.distance.k, spec.phi_size, est):
            warnings.warn(
                f"k={spec.distance.k} exceeds phi_size/n_conditions = "
                f"{spec.phi_size}/{est}; reference groups may lack same-condition peers",
                UserWarning,
                stacklevel=2,
            )

    for rep in range(spec.n_repetitions):
        fold_seed, ref_seed, forest_seeds = _rep_seeds(spec, rep)
        folds = fold_split(len(source_trajs), spec.n_folds, fold_seed)

        if spec.method == "cosmo":
            phi_fit, phi_predict = build_mode_groups(
                spec.reference_mode, pool_S, pool_T, spec.phi_size, ref_seed
            )
            fit_features = feature_matrix(source_X, phi_fit, spec.distance).values
            predict_features = feature_matrix(target_X, phi_predict, spec.distance).values
        elif spec.method == "coral":
            transform = fit_coral(source_X, target_X)
            fit_features = apply_coral(transform, source_X)
            predict_features = target_X
        else:
            fit_features = source_X
            predict_features = target_X

        for f, fold in enumerate(folds):
            holdout = set(int(i) for i in fold)
            fit_idx = [i for i in range(len(source_trajs)) if i not in holdout]
            fit_rows = np.concatenate(
                [np.arange(source_offsets[i], source_offsets[i + 1]) for i in fit_idx]
            )
            train_X = fit_features[fit_rows]
            train_y = _alpha_targets([source_trajs[i] for i in fit_idx], spec.tau_max)

            if same_subset_alpha:
                eval_traj_idx = sorted(holdout)
                eval_trajs = [source_trajs[i] for i in eval_traj_idx]
                eval_rows = np.concatenate(
                    [np.arange(source_offsets[i], source_offsets[i + 1]) for i in eval_traj_idx]
                )
                eval_X = predict_features[eval_rows]
            else:
                eval_trajs = list(target_trajs)
                eval_X = predict_features

            config = replace(spec.forest, seed=forest_seeds[f])
            model = forest_mod.fit(train_X, train_y, config)
            preds = forest_mod.predict(model, eval_X)
            yield rep, f, fold_seed, _unit_predictions(eval_trajs, preds, spec.tau_max)


def run_scenario(spec: ScenarioSpec, data_root, cache: dict | None = None) -> ExperimentResult:
    """Run one scenario end to end and score every fold x repetition."""
    records = []
    for rep, f, fold_seed, unit_preds in _iter_fold_predictions(spec, data_root, cache):
        report = mape_fleet(unit_preds, spec.rul_limit)
        records.append(FoldRecord(repetition=rep, fold=f, seed=spec.seed, report=report))
    return ExperimentResult(spec=spec, records=tuple(records))


def run_curves(
    spec: ScenarioSpec,
    data_root,
    limits: Sequence[int] | None = None,
    cache: dict | None = None,
) -> list[tuple[int, float]]:
    """MAPE-vs-limit curve, averaging each limit's fleet MAPE across folds.

    Limits where every fold has all units excluded are omitted.
    """
    if limits is None:
        limits = range(1, spec.tau_max + 1)
    limits = [int(l) for l in limits]
    fold_preds = [preds for _, _, _, preds in _iter_fold_predictions(spec, data_root, cache)]
    curve = []
    for limit in limits:
        values = []
        for preds in fold_preds:
            try:
                values.append(mape_fleet(preds, limit).mape)
            except ValueError:
                continue  # every unit excluded at this limit in this fold
        if values:
            curve.append((limit, float(np.mean(values))))
    return curve


# ---------------------------------------------------------------------------
# output files


def result_rows(result: ExperimentResult) -> list[dict[str, object]]:
    spec = result.spec
    rows = []
    for record in result.records:
        rows.append(
            {
                "scenario": spec.label,
                "method": spec.method_slug,
                "eval_mode": spec.eval_mode,
                "reference_mode": "" if spec.reference_mode is None else spec.reference_mode.label,
                "distance": "" if spec.distance is None else spec.distance.kind,
                "k": "" if spec.distance is None else spec.distance.k,
                "phi_size": spec.phi_size if spec.method == "cosmo" else "",
                "tau": spec.tau if spec.method == "cosmo" else "",
                "tau_max": spec.tau_max,
                "fold": record.fold,
                "repetition": record.repetition,
                "seed": record.seed,
                "rul_limit": record.report.rul_limit,
                "mape": repr(record.report.mape),
                "rmse_last_cycle": repr(record.report.rmse_last_cycle),
                "n_units_included": record.report.n_units_included,
                "n_units_excluded": record.report.n_units_excluded,
            }
        )
    return rows


def write_result_csv(result: ExperimentResult, out_dir) -> Path:
    out = Path(out_dir) / "results"
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{result.spec.label}_{result.spec.method_slug}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in result_rows(result):
            writer.writerow([row[c] for c in RESULT_COLUMNS])
    return path


def write_curve_csv(spec: ScenarioSpec, curve: Sequence[tuple[int, float]], out_dir) -> Path:
    out = Path(out_dir) / "curves"
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{spec.label}_{spec.method_slug}.csv"
    with open(path, "w", newline="") as fh:
        fh.write("limit,mape\n")
        for limit, mape in curve:
            fh.write(f"{limit},{mape!r}\n")
    return path


def summary_entry(result: ExperimentResult) -> dict[str, object]:
    return {
        "mape_mean": result.mape_mean,
        "mape_std": result.mape_std,
        "rmse_last_cycle_mean": result.rmse_mean,
        "rmse_last_cycle_std": result.rmse_std,
        "n_records": len(result.records),
        "eval_mode": result.spec.eval_mode,
        "group": result.spec.group,
        "seed": result.spec.seed,
        "config_digest": result.spec.digest(),
    }


def write_summary_json(results: Sequence[ExperimentResult], out_dir) -> Path:
    summary: dict[str, dict[str, object]] = {}
    for result in results:
        summary.setdefault(result.spec.label, {})[result.spec.method_slug] = summary_entry(result)
    path = Path(out_dir) / "summary.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def run_matrix(
    specs: Sequence[ScenarioSpec],
    data_root,
    out_dir=None,
    progress: Callable[[str], None] | None = None,
) -> tuple[list[ExperimentResult], list[tuple[ScenarioSpec, str]]]:
    """Run scenarios independently with a shared parse cache.

    Per-scenario failures are isolated and collected; completed results are
    written as soon as they exist (a crash loses at most the running one).
    """
    if not specs:
        raise ValueError("specs must be non-empty")
    cache: dict = {}
    results: list[ExperimentResult] = []
    failures: list[tuple[ScenarioSpec, str]] = []
    for spec in specs:
        tag = f"{spec.label}_{spec.method_slug}"
        try:
            result = run_scenario(spec, data_root, cache)
        except Exception as exc:  # isolate: one bad scenario must not stop the sweep
            failures.append((spec, f"{type(exc).__name__}: {exc}"))
            if progress:
                progress(f"{tag}: FAILED ({exc})")
            continue
        results.append(result)
        if out_dir is not None:
            write_result_csv(result, out_dir)
            write_summary_json(results, out_dir)
        if progress:
            progress(
                f"{tag}: mape={result.mape_mean:.4f}+-{result.mape_std:.4f} "
                f"rmse={result.rmse_mean:.3f}"
            )
    return results, failures


def group_mean_mape(results: Sequence[ExperimentResult]) -> dict[str, float]:
    """Scenario-group means: aggregate per scenario first, then average the
    group's scenarios."""
    by_group: dict[str, list[float]] = {}
    for result in results:
        by_group.setdefault(result.spec.group, []).append(result.mape_mean)
    return {group: float(np.mean(vals)) for group, vals in by_group.items()}


def matrix_specs(
    labels: Sequence[str] | None = None,
    method: str = "raw",
    eval_mode: str = "alpha",
    seed: int = 0,
    n_repetitions: int = 1,
    **overrides,
) -> list[ScenarioSpec]:
    """Specs for a sweep over scenario labels (default: all 16)."""
    if labels is None:
        labels = list(SCENARIOS)
    return [
        ScenarioSpec(
            label=label,
            method=method,
            eval_mode=eval_mode,
            seed=seed,
            n_repetitions=n_repetitions,
            **overrides,
        )
        for label in labels
    ]
