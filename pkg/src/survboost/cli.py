"""Command-line interface: ``survboost {synth,train,predict,evaluate,benchmark}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import metrics
from .data import Dataset, load_dataset, split, write_dataset
from .exceptions import DataError, ModelFormatError, SurvBoostError
from .gbt import GbtConfig, set_threads
from .ipcw import MarginalCensoring
from .nonparametric import censoring_km
from .survival_boost import (
    SurvivalBoostConfig,
    SurvivalModel,
    fit,
    fit_aalen_johansen,
    fit_kaplan_meier,
    load_any_model,
    save_model,
)
from .synthdata import CENSORING_MODES, SynthConfig, SynthOracle, draw

logger = logging.getLogger("survboost")

DEFAULT_SEED = 42
THREADS_ENV = "SURVBOOST_THREADS"
MODEL_KINDS = ("survivalboost", "aalen_johansen", "kaplan_meier")

# flag name -> (section, field) of SurvivalBoostConfig; section None = top level
TRAIN_FIELDS = {
    "learning_rate": ("gbt", "learning_rate"),
    "n_iterations": ("gbt", "n_iterations"),
    "max_depth": ("gbt", "max_depth"),
    "max_bins": ("gbt", "max_bins"),
    "min_child_weight": ("gbt", "min_child_weight"),
    "l2_regularization": ("gbt", "l2_regularization"),
    "min_samples_leaf": ("gbt", "min_samples_leaf"),
    "n_horizons_per_row": (None, "n_horizons_per_row"),
    "feedback_period": (None, "feedback_period"),
    "ipcw_clip": (None, "ipcw_clip"),
    "censoring_model": (None, "censoring_model"),
}

# randomized-search ranges for SurvivalBoost
SEARCH_SPACE = {
    "learning_rate": ("loguniform", 0.01, 0.5),
    "n_iterations": ("randint", 20, 200),
    "max_depth": ("randint", 2, 10),
    "n_horizons_per_row": ("randint", 1, 5),
}


class CliError(Exception):
    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


def _atomic_write_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_csv(path, header, rows):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def _read_config_file(path):
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {path}: {exc}", code=2) from None
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path} must hold a JSON object", code=2)
    return cfg


def _resolve(args, name, file_cfg, default=None):
    """Flag value if given, else config-file value, else ``default``."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return file_cfg.get(name, default)


def _split_list(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return list(text)
    return [c.strip() for c in text.split(",") if c.strip()]


def _load(args, file_cfg, path=None, **kw):
    path = path or _resolve(args, "data", file_cfg)
    if path is None:
        raise CliError("--data is required", code=2)
    if not Path(path).is_file():
        raise CliError(f"data file not found: {path}", code=2)
    return load_dataset(
        path,
        duration_col=_resolve(args, "duration_col", file_cfg, "duration"),
        event_col=_resolve(args, "event_col", file_cfg, "event"),
        feature_cols=_split_list(_resolve(args, "features", file_cfg)),
        categorical_cols=_split_list(_resolve(args, "categorical", file_cfg)) or (),
        **kw,
    )


def _training_config(args, file_cfg) -> SurvivalBoostConfig:
    gbt = dict(file_cfg.get("gbt", {}))
    cens_gbt = dict(file_cfg.get("censoring_gbt", {}))
    top = {}
    for name, (section, fld) in TRAIN_FIELDS.items():
        value = _resolve(args, name, file_cfg)
        if value is None:
            continue
        if section == "gbt":
            gbt[fld] = value
            cens_gbt.setdefault(fld, value)
        else:
            top[fld] = value
    seed = _resolve(args, "seed", file_cfg, DEFAULT_SEED)
    gbt["seed"] = seed
    cens_gbt["seed"] = seed
    try:
        return SurvivalBoostConfig(
            gbt=GbtConfig(**gbt), censoring_gbt=GbtConfig(**cens_gbt), seed=seed, **top
        )
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid training configuration: {exc}", code=2) from None


def _setup_threads(args):
    n = args.threads if getattr(args, "threads", None) is not None else os.environ.get(THREADS_ENV)
    if n is not None:
        set_threads(int(n))


def _fit_kind(kind, data, config, log_rows=None):
    if kind == "survivalboost":
        def log_round(record):
            if log_rows is not None:
                log_rows.append(record)
            if record["round"] % 10 == 0 or record["round"] == 1:
                logger.info(
                    "round %d  loss %.6f  %.3fs", record["round"], record["event_loss"],
                    record["seconds"],
                )
        return fit(data, config, callback=log_round)
    if kind == "aalen_johansen":
        return fit_aalen_johansen(data)
    if kind == "kaplan_meier":
        return fit_kaplan_meier(data)
    raise CliError(f"unknown model kind {kind!r}", code=2)


def sample_search_space(n, seed):
    """``n`` random SurvivalBoost settings drawn from :data:`SEARCH_SPACE`."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        cfg = {}
        for name, (dist, lo, hi) in SEARCH_SPACE.items():
            if dist == "loguniform":
                cfg[name] = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            else:
                cfg[name] = int(rng.integers(lo, hi + 1))
        out.append(cfg)
    return out


# -- subcommands ----------------------------------------------------------------


def cmd_synth(args):
    file_cfg = _read_config_file(args.config)
    config = SynthConfig(
        n_samples=_resolve(args, "n_samples", file_cfg, 20000),
        n_events=_resolve(args, "n_events", file_cfg, 2),
        n_features=_resolve(args, "n_features", file_cfg, 6),
        censoring_mode=_resolve(args, "censoring_mode", file_cfg, "covariate_dependent"),
        target_censoring_rate=_resolve(args, "censoring_rate", file_cfg, 0.5),
        seed=_resolve(args, "seed", file_cfg, DEFAULT_SEED),
    )
    out = draw(config)
    write_dataset(out.data, args.output)
    sidecar = args.oracle_out or str(args.output) + ".oracle.json"
    _atomic_write_text(sidecar, json.dumps(out.oracle.to_dict(), sort_keys=True, indent=1))
    logger.info(
        "wrote %d rows (censoring rate %.3f) to %s, oracle to %s",
        out.data.n_samples, out.data.censoring_rate, args.output, sidecar,
    )
    return 0


def cmd_train(args):
    file_cfg = _read_config_file(args.config)
    if args.search:
        seed = _resolve(args, "seed", file_cfg, DEFAULT_SEED)
        for cfg in sample_search_space(args.search, seed):
            print(json.dumps(cfg, sort_keys=True))
        return 0
    if args.model_out is None:
        raise CliError("--model-out is required", code=2)
    _setup_threads(args)
    data = _load(args, file_cfg)
    kind = _resolve(args, "model", file_cfg, "survivalboost")
    config = _training_config(args, file_cfg)
    log_rows = []
    start = time.perf_counter()
    model = _fit_kind(kind, data, config, log_rows)
    elapsed = time.perf_counter() - start

    tmp = Path(str(args.model_out) + ".tmp")
    save_model(model, tmp)
    os.replace(tmp, args.model_out)
    if args.log_out:
        header = ["round", "event_loss", "censoring_loss", "seconds"]
        _write_csv(args.log_out, header,
                   [[r.get(h, "") for h in header] for r in log_rows])
    if args.export_steps:
        _export_steps(model, data, Path(args.export_steps))
    logger.info("trained %s on %d rows in %.2fs -> %s", kind, data.n_samples, elapsed,
                args.model_out)
    return 0


def _export_steps(model, data, directory):
    directory.mkdir(parents=True, exist_ok=True)
    steps = {"censoring_km": censoring_km(data)}
    if not isinstance(model, SurvivalModel):
        steps["survival"] = model.survival
        for k, f in enumerate(model.cifs, start=1):
            steps[f"cif_{k}"] = f
    for name, step in steps.items():
        _write_csv(directory / f"{name}.csv", ["time", "value"], step.to_rows())


def _parse_grid(text):
    if text is None:
        return None
    values = [float(v) for v in _split_list(text)]
    return np.asarray(values)


def cmd_predict(args):
    _setup_threads(args)
    model = _load_model(args.model)
    data = _load_inputs_for_model(args, model)
    grid = _parse_grid(args.grid)
    if grid is None:
        grid = np.linspace(0.0, model.t_max, args.n_grid + 1)[1:]
    cif = model.predict_cif(data.features, grid, monotone=args.monotone)
    header = ["row", "time", "survival"] + [f"cif_{k}" for k in range(1, model.k_events + 1)]
    rows = []
    for i in range(cif.shape[0]):
        for j, zeta in enumerate(grid):
            rows.append([i, repr(float(zeta))] + [repr(float(v)) for v in cif[i, j]])
    _write_csv(args.output, header, rows)
    return 0


def _load_model(path):
    if not Path(path).is_file():
        raise CliError(f"model file not found: {path}", code=2)
    return load_any_model(path)


def _load_inputs_for_model(args, model, path=None):
    file_cfg = _read_config_file(getattr(args, "config", None))
    categories = getattr(model, "categories", None) or None
    try:
        data = _load(args, file_cfg, path=path, categories=categories, k_events=model.k_events)
    except DataError as exc:
        if "exceeds k_events" in str(exc):
            raise CliError(f"model/dataset K mismatch: {exc}", code=2) from None
        raise
    return data


def _oracle_censoring(path):
    try:
        oracle = SynthOracle.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read oracle sidecar {path}: {exc}", code=2) from None
    return oracle.censoring_estimator()


def evaluate_model(model, data: Dataset, g, grid=None, quantiles=metrics.DEFAULT_QUANTILES,
                   n_nodes=metrics.DEFAULT_NODES, with_c_index=False):
    """All metrics for one model on one dataset; returns a dict of reports."""
    grid = metrics.default_grid(data) if grid is None else grid
    cif = model.predict_cif(data.features, grid)
    reports = {"ibs": metrics.integrated_brier_score(cif, data, grid, g)}
    horizons = metrics.horizon_quantiles(data, quantiles)
    cif_h = model.predict_cif(data.features, np.unique(horizons))
    lookup = {z: j for j, z in enumerate(np.unique(horizons))}
    acc = [metrics.accuracy_in_time(cif_h[:, lookup[z]], data, z) for z in horizons]
    reports["accuracy"] = metrics.MetricReport(
        name="accuracy_in_time", value=float(np.mean(acc)), grid=np.asarray(horizons),
        n_effective=data.n_samples,
        details={"quantiles": list(quantiles), "values": acc},
    )
    nodes = np.linspace(0.0, model.t_max, n_nodes + 1)
    f_any = 1.0 - model.predict_cif(data.features, nodes)[:, :, 0]
    reports["s_cen_log_simple"] = metrics.s_cen_log_simple(f_any, data, model.t_max, n_nodes)
    if with_c_index:
        values = {}
        for k in range(1, data.k_events + 1):
            per_h = []
            for j, z in enumerate(horizons):
                try:
                    per_h.append(metrics.c_index_at(cif_h[:, lookup[z], k], data, z, k))
                except DataError:
                    per_h.append(float("nan"))
            values[k] = per_h
        flat = [v for vs in values.values() for v in vs if not np.isnan(v)]
        reports["c_index"] = metrics.MetricReport(
            name="c_index", value=float(np.mean(flat)) if flat else float("nan"),
            per_event_values=tuple(float(np.nanmean(values[k])) for k in values),
            grid=np.asarray(horizons), n_effective=data.n_samples,
            details={f"event_{k}": v for k, v in values.items()},
        )
    return reports


def cmd_evaluate(args):
    _setup_threads(args)
    model = _load_model(args.model)
    data = _load_inputs_for_model(args, model)
    if args.oracle:
        g = _oracle_censoring(args.oracle)
    else:
        g = MarginalCensoring(censoring_km(data))
    grid = _parse_grid(args.grid)
    if grid is None:
        grid = metrics.default_grid(data, args.n_grid)
    reports = evaluate_model(model, data, g, grid=grid, n_nodes=args.nodes,
                             with_c_index=args.c_index)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(
        out_dir / "report.json",
        json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=1, sort_keys=True),
    )
    flat = []
    for r in reports.values():
        flat.append([r.name, "all", "", repr(r.value)])
        if r.per_event_values is not None:
            for k, v in enumerate(r.per_event_values, start=1):
                flat.append([r.name, f"event_{k}", "", repr(v)])
    acc = reports["accuracy"]
    for q, z, v in zip(acc.details["quantiles"], acc.grid, acc.details["values"]):
        flat.append(["accuracy_in_time", f"q{q}", repr(float(z)), repr(v)])
    _write_csv(out_dir / "metrics.csv", ["metric", "scope", "time", "value"], flat)
    curves = reports["ibs"].details["brier_by_time"]
    _write_csv(
        out_dir / "brier_by_time.csv",
        ["time"] + [f"brier_{k}" for k in range(1, data.k_events + 1)],
        [[repr(float(z))] + [repr(float(v)) for v in row] for z, row in zip(grid, curves)],
    )
    ibs = reports["ibs"]
    print(f"IBS mean {ibs.value:.5f}  per event "
          + " ".join(f"{v:.5f}" for v in ibs.per_event_values))
    print("Acc(zeta) " + " ".join(
        f"q{q}:{v:.4f}" for q, v in zip(acc.details["quantiles"], acc.details["values"])))
    print(f"S_Cen-log-simple {reports['s_cen_log_simple'].value:.5f}")
    if "c_index" in reports:
        print(f"C-index mean {reports['c_index'].value:.4f}")
    return 0


def cmd_benchmark(args):
    _setup_threads(args)
    file_cfg = _read_config_file(args.config)
    seed = _resolve(args, "seed", file_cfg, DEFAULT_SEED)
    g_test = None
    if args.data:
        data = _load(args, file_cfg)
        train, test = split(data, args.test_fraction, seed)
    else:
        synth = SynthConfig(
            n_samples=_resolve(args, "n_samples", file_cfg, 20000),
            n_events=_resolve(args, "n_events", file_cfg, 2),
            n_features=_resolve(args, "n_features", file_cfg, 6),
            censoring_mode=_resolve(args, "censoring_mode", file_cfg, "covariate_dependent"),
            target_censoring_rate=_resolve(args, "censoring_rate", file_cfg, 0.5),
            seed=seed,
        )
        out = draw(synth)
        train, test = split(out.data, args.test_fraction, seed)
        g_test = out.oracle.censoring_estimator()
    if g_test is None:
        g_test = MarginalCensoring(censoring_km(test))
    config = _training_config(args, file_cfg)
    kinds = _split_list(args.models) or list(MODEL_KINDS)
    aliases = {"sb": "survivalboost", "aj": "aalen_johansen", "km": "kaplan_meier"}
    kinds = [aliases.get(k, k) for k in kinds]
    grid = metrics.default_grid(test, args.n_grid)
    rows = []
    for kind in kinds:
        start = time.perf_counter()
        model = _fit_kind(kind, train, config)
        fit_seconds = time.perf_counter() - start
        reports = evaluate_model(model, test, g_test, grid=grid, n_nodes=args.nodes)
        acc = reports["accuracy"]
        rows.append([kind, reports["ibs"].value, *acc.details["values"],
                     reports["s_cen_log_simple"].value, fit_seconds])
    quantiles = metrics.DEFAULT_QUANTILES
    header = ["model", "ibs", *[f"acc_q{q}" for q in quantiles], "s_cen_log_simple",
              "fit_seconds"]
    _print_table(header, rows)
    if args.output:
        _write_csv(args.output, header,
                   [[r[0]] + [repr(float(v)) for v in r[1:]] for r in rows])
    return 0


def _print_table(header, rows):
    cells = [header] + [[r[0]] + [f"{v:.4f}" for v in r[1:]] for r in rows]
    widths = [max(len(row[j]) for row in cells) for j in range(len(header))]
    for row in cells:
        print("  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in
                        enumerate(zip(row, widths))))


# -- parser -----------------------------------------------------------------------


def _add_schema(p):
    p.add_argument("--data", help="input CSV with a header row")
    p.add_argument("--duration-col", help="duration column (default: duration)")
    p.add_argument("--event-col", help="event column, 0 = censored (default: event)")
    p.add_argument("--features", help="comma-separated feature columns (default: all others)")
    p.add_argument("--categorical", help="comma-separated columns to ordinal-encode")
    p.add_argument("--config", help="JSON config file; flags override its values")


def _add_training(p):
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--n-iterations", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--max-bins", type=int)
    p.add_argument("--min-child-weight", type=float)
    p.add_argument("--l2-regularization", type=float)
    p.add_argument("--min-samples-leaf", type=int)
    p.add_argument("--n-horizons-per-row", type=int)
    p.add_argument("--feedback-period", type=int)
    p.add_argument("--ipcw-clip", type=float)
    p.add_argument("--censoring-model", choices=("boosted", "km"))


def _add_common(p):
    p.add_argument("--seed", type=int, help=f"random seed (default: {DEFAULT_SEED})")
    p.add_argument("--threads", type=int,
                   help=f"cap on worker threads (default: ${THREADS_ENV} or all cores)")


def _add_synth_options(p):
    p.add_argument("--n-samples", type=int)
    p.add_argument("--n-events", type=int)
    p.add_argument("--n-features", type=int)
    p.add_argument("--censoring-mode", choices=CENSORING_MODES)
    p.add_argument("--censoring-rate", type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="survboost", description="Gradient-boosted competing-risks models."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset and its oracle sidecar")
    _add_synth_options(p)
    _add_common(p)
    p.add_argument("--config")
    p.add_argument("--output", required=True)
    p.add_argument("--oracle-out", help="oracle sidecar path (default: OUTPUT.oracle.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model and write the model file")
    _add_schema(p)
    _add_training(p)
    _add_common(p)
    p.add_argument("--model", choices=MODEL_KINDS, help="model kind (default: survivalboost)")
    p.add_argument("--model-out")
    p.add_argument("--log-out", help="CSV of per-round training loss and wall time")
    p.add_argument("--export-steps", help="directory for step-function CSVs")
    p.add_argument("--search", type=int, default=0,
                   help="print N settings sampled from the search ranges and exit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict survival and CIFs on a time grid")
    _add_schema(p)
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--grid", help="comma-separated horizons")
    p.add_argument("--n-grid", type=int, default=100)
    p.add_argument("--monotone", action="store_true", help="clamp CIFs to be nondecreasing")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="compute IBS, accuracy in time and more")
    _add_schema(p)
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--oracle", help="synthetic oracle sidecar; use true censoring weights")
    p.add_argument("--grid", help="comma-separated IBS horizons")
    p.add_argument("--n-grid", type=int, default=100)
    p.add_argument("--nodes", type=int, default=metrics.DEFAULT_NODES)
    p.add_argument("--c-index", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="compare SurvivalBoost with marginal baselines")
    _add_schema(p)
    _add_training(p)
    _add_synth_options(p)
    _add_common(p)
    p.add_argument("--models", help="comma-separated subset of: " + ",".join(MODEL_KINDS))
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--n-grid", type=int, default=100)
    p.add_argument("--nodes", type=int, default=metrics.DEFAULT_NODES)
    p.add_argument("--output", help="CSV copy of the results table")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DataError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SurvBoostError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
