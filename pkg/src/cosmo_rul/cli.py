"""Command-line interface.

Subcommands: parse (validate/cache data files), features (export peer-
distance matrices), run (one scenario), matrix (scenario sweep from a config
file), curves (MAPE vs RUL limit, CSV + figure), report (summaries + figures
from result CSVs).  The data root comes from --data-root or the
COSMO_RUL_DATA_ROOT environment variable and must contain train_FD00x.txt /
test_FD00x.txt / RUL_FD00x.txt files.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from .cosmo import DistanceMethod, ReferenceMode, feature_matrix, sample_reference_group
from .dataset import (
    SUBSET_IDS,
    TAU_DEFAULT,
    TAU_MAX_DEFAULT,
    extract_nominal,
    load_subset,
    save_subset_cache,
)
from .forest import ForestConfig
from .metrics import RUL_LIMIT_DEFAULT
from .runner import (
    METHODS,
    SCENARIOS,
    ScenarioSpec,
    run_curves,
    run_matrix,
    run_scenario,
    write_curve_csv,
    write_result_csv,
    write_summary_json,
)

ENV_DATA_ROOT = "COSMO_RUL_DATA_ROOT"

DISTANCE_ALIASES = {
    "mknn": "mknn_median",
    "mknn_median": "mknn_median",
    "knn": "knn_mean",
    "knn_mean": "knn_mean",
    "mcp": "mcp",
}


class SystemExit2(RuntimeError):
    """CLI-level error carrying a diagnostic for stderr."""


def _data_root(args: argparse.Namespace) -> Path:
    root = args.data_root or os.environ.get(ENV_DATA_ROOT)
    if not root:
        raise SystemExit2(f"no data root: pass --data-root or set {ENV_DATA_ROOT}")
    return Path(root)


def parse_config(path) -> dict[str, str]:
    """Flat ``key = value`` text: '#' starts a comment, values are raw
    strings (consumers split comma lists)."""
    config: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit2(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def _distance(args: argparse.Namespace) -> DistanceMethod:
    kind = DISTANCE_ALIASES.get(args.distance)
    if kind is None:
        raise SystemExit2(
            f"unknown distance {args.distance!r}; choose from {sorted(DISTANCE_ALIASES)}"
        )
    return DistanceMethod(kind=kind, k=args.k)


def _scenario_spec(args: argparse.Namespace, label: str, method: str) -> ScenarioSpec:
    distance = _distance(args) if method == "cosmo" else None
    mode = ReferenceMode.from_label(args.mode) if method == "cosmo" else None
    return ScenarioSpec(
        label=label,
        method=method,
        eval_mode=args.eval_mode,
        distance=distance,
        reference_mode=mode,
        seed=args.seed,
        n_repetitions=args.reps,
        n_folds=args.folds,
        phi_size=args.phi_size,
        tau=args.tau,
        tau_max=args.tau_max,
        rul_limit=args.rul_limit,
        forest=ForestConfig(n_trees=args.trees),
    )


def _add_scenario_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--scenario", required=True, choices=sorted(SCENARIOS))
    sub.add_argument("--method", default="raw", choices=METHODS)
    sub.add_argument("--eval-mode", default="alpha", choices=("alpha", "beta"))
    sub.add_argument("--distance", default="mknn", help="cosmo distance: mknn, knn, or mcp")
    sub.add_argument("--mode", default="ST,ST", help="cosmo reference mode, e.g. ST,T")
    sub.add_argument("--k", type=int, default=8)
    sub.add_argument("--phi-size", type=int, default=80)
    sub.add_argument("--tau", type=int, default=TAU_DEFAULT)
    sub.add_argument("--tau-max", type=int, default=TAU_MAX_DEFAULT)
    sub.add_argument("--rul-limit", type=int, default=RUL_LIMIT_DEFAULT)
    sub.add_argument("--reps", type=int, default=1)
    sub.add_argument("--folds", type=int, default=4)
    sub.add_argument("--trees", type=int, default=100)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosmo-rul",
        description="Peer-distance transfer experiments for remaining-useful-life prediction",
    )
    parser.add_argument("--data-root", default=None, help=f"data directory (or ${ENV_DATA_ROOT})")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--config", default=None, help="flat key=value config file")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("parse", help="validate data files and optionally cache them")
    p.add_argument("--subset", required=True, choices=SUBSET_IDS)
    p.add_argument("--split", default="alpha", choices=("alpha", "beta"))
    p.add_argument("--cache", default=None, help="write a .npz cache here")

    p = sub.add_parser("features", help="export a peer-distance feature matrix")
    p.add_argument("--subset", required=True, choices=SUBSET_IDS)
    p.add_argument("--split", default="alpha", choices=("alpha", "beta"))
    p.add_argument("--distance", default="mknn")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--phi-size", type=int, default=80)
    p.add_argument("--tau", type=int, default=TAU_DEFAULT)
    p.add_argument("--file", default=None, help="output file (default <out>/features_<subset>_<split>.txt)")

    p = sub.add_parser("run", help="run one scenario")
    _add_scenario_options(p)

    p = sub.add_parser("matrix", help="run a scenario sweep from --config")

    p = sub.add_parser("curves", help="MAPE vs RUL limit for one scenario")
    _add_scenario_options(p)

    p = sub.add_parser("report", help="aggregate result CSVs into summaries and figures")
    p.add_argument("--results", default=None, help="results root (default --out)")

    return parser


def _cmd_parse(args: argparse.Namespace) -> int:
    subset = load_subset(_data_root(args), args.subset, args.split)
    n_samples = sum(t.n_cycles for t in subset.trajectories)
    if args.cache:
        save_subset_cache(subset, args.cache)
        print(f"cached {args.cache}")
    print(f"{subset.id} {subset.split}: {len(subset)} trajectories, {n_samples} samples")
    return 0


def _cmd_features(args: argparse.Namespace) -> int:
    subset = load_subset(_data_root(args), args.subset, args.split)
    pool = extract_nominal(subset.trajectories, args.tau)
    phi = sample_reference_group(pool, args.phi_size, args.seed, provenance=args.subset)
    X = np.vstack([t.samples for t in subset.trajectories])
    units = np.concatenate([np.full(t.n_cycles, t.unit_id) for t in subset.trajectories])
    cycles = np.concatenate([np.arange(1, t.n_cycles + 1) for t in subset.trajectories])
    theta = feature_matrix(X, phi, _distance(args), unit_ids=units, cycles=cycles)
    out = Path(args.file) if args.file else Path(args.out) / f"features_{args.subset}_{args.split}.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    from .cosmo import write_features

    write_features(theta, out)
    print(f"wrote {theta.n_samples} rows to {out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    spec = _scenario_spec(args, args.scenario, args.method)
    result = run_scenario(spec, _data_root(args))
    csv_path = write_result_csv(result, args.out)
    write_summary_json([result], args.out)
    print(
        f"{spec.label}_{spec.method_slug}: mape={result.mape_mean:.4f}+-{result.mape_std:.4f} "
        f"rmse_last_cycle={result.rmse_mean:.3f}+-{result.rmse_std:.3f} ({csv_path})"
    )
    return 0


def _cmd_matrix(args: argparse.Namespace) -> int:
    if not args.config:
        raise SystemExit2("matrix requires --config")
    config = parse_config(args.config)
    labels = [s.strip() for s in config.get("scenarios", ",".join(SCENARIOS)).split(",") if s.strip()]
    methods = [m.strip() for m in config.get("methods", "raw").split(",") if m.strip()]
    seed = int(config.get("seed", args.seed))
    reps = int(config.get("repetitions", 1))
    distance_kind = DISTANCE_ALIASES.get(config.get("distance", "mknn"))
    if distance_kind is None:
        raise SystemExit2(f"unknown distance {config.get('distance')!r} in {args.config}")
    specs = []
    for method in methods:
        for label in labels:
            specs.append(
                ScenarioSpec(
                    label=label,
                    method=method,
                    eval_mode=config.get("eval_mode", "alpha"),
                    distance=DistanceMethod(distance_kind, int(config.get("k", 8)))
                    if method == "cosmo"
                    else None,
                    reference_mode=ReferenceMode.from_label(config.get("reference_mode", "ST,ST"))
                    if method == "cosmo"
                    else None,
                    seed=seed,
                    n_repetitions=reps,
                    n_folds=int(config.get("folds", 4)),
                    phi_size=int(config.get("phi_size", 80)),
                    tau=int(config.get("tau", TAU_DEFAULT)),
                    tau_max=int(config.get("tau_max", TAU_MAX_DEFAULT)),
                    rul_limit=int(config.get("rul_limit", RUL_LIMIT_DEFAULT)),
                    forest=ForestConfig(n_trees=int(config.get("trees", 100))),
                )
            )
    results, failures = run_matrix(specs, _data_root(args), args.out, progress=print)
    print(f"completed {len(results)}/{len(specs)} scenarios -> {args.out}")
    for spec, message in failures:
        print(f"failed {spec.label}_{spec.method_slug}: {message}", file=sys.stderr)
    return 0 if not failures else 1


def _cmd_curves(args: argparse.Namespace) -> int:
    spec = _scenario_spec(args, args.scenario, args.method)
    curve = run_curves(spec, _data_root(args))
    csv_path = write_curve_csv(spec, curve, args.out)
    png = Path(args.out) / "figures" / f"curve_{spec.label}_{spec.method_slug}.png"
    report_mod.render_curve(curve, png, f"{spec.label} {spec.method_slug}")
    print(f"wrote {len(curve)} curve points to {csv_path} and {png}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    results_root = args.results or args.out
    written = report_mod.render_report(results_root, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "parse": _cmd_parse,
    "features": _cmd_features,
    "run": _cmd_run,
    "matrix": _cmd_matrix,
    "curves": _cmd_curves,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
