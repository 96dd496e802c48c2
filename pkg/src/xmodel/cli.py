"""Command-line front end: ``xmodel [global flags] {synth,ingest,fit,forecast,evaluate} ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from datetime import date
from pathlib import Path

import numpy as np

from . import errors as E
from .classes import write_partition_csv
from .evaluation import (
    ARForecaster, ExternalForecaster, HourlyARForecaster, OracleForecaster, PersistentForecaster,
    RegimeForecaster, XModelForecaster, rolling_study, study_days, write_coverage, write_hourly_scores,
    write_score_table,
)
from .grid import Side
from .ingest import load_panel, read_npz, read_panel_csv, save_panel, write_npz
from .model import load_models, save_models
from .panel import HOURS, PanelDataset, clearing_series
from .pipeline import WindowFit, XModelConfig, fit_window, forecast_day, prepare_window, window_bounds
from .reconstruction import curve_bands, write_curve_bands, write_forecast_report
from .synthetic import SyntheticConfig, generate_synthetic

log = logging.getLogger("xmodel")

EXIT_OK, EXIT_VALIDATION, EXIT_FIT, EXIT_EXOGENOUS, EXIT_STUDY = 0, 2, 3, 4, 5

# run-level keys accepted in the config file next to the model settings
RUN_KEYS = {
    "panel", "auctions", "exogenous_csv", "target", "start", "stop", "models", "external",
    "synthetic", "threads", "out", "dst_hour", "curve_levels",
}
BENCHMARKS = {
    "persistent": PersistentForecaster,
    "ar": ARForecaster,
    "ar24": HourlyARForecaster,
    "regime": RegimeForecaster,
    "oracle": OracleForecaster,
}


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- config -------------------------------------------------------------------------

def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CLIError(f"config file {path} does not exist", EXIT_VALIDATION)
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: invalid JSON ({exc})", EXIT_VALIDATION) from None
    if not isinstance(cfg, dict):
        raise CLIError(f"{path}: config must be a JSON object", EXIT_VALIDATION)
    return cfg


def effective_config(args) -> dict:
    """Config file values overridden by every flag the user set explicitly."""
    cfg = load_config(args.config)
    for key in ("seed", "threads", "out"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    for key, v in vars(args).items():
        if key in ("config", "seed", "threads", "out", "command", "func", "verbose") or v is None:
            continue
        cfg[key] = v
    return cfg


def model_config(cfg: dict, stochastic: bool) -> XModelConfig:
    if stochastic and cfg.get("seed") is None:
        raise CLIError("a seed is required (--seed or \"seed\" in the config)", EXIT_VALIDATION)
    fields = {k: v for k, v in cfg.items() if k in XModelConfig.__dataclass_fields__}
    fields.setdefault("seed", 0)
    try:
        return XModelConfig.from_dict(fields)
    except (TypeError, E.ConfigError) as exc:
        raise CLIError(f"invalid model settings: {exc}", EXIT_VALIDATION) from None


def check_keys(cfg: dict):
    known = RUN_KEYS | set(XModelConfig.__dataclass_fields__) | {"seed", "days", "supply_classes", "demand_classes"}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise CLIError(f"unknown config keys: {unknown}", EXIT_VALIDATION)


def _existing(path, what):
    if path is None:
        raise CLIError(f"no {what} given", EXIT_VALIDATION)
    if not Path(path).is_file():
        raise CLIError(f"{what} {path} does not exist", EXIT_VALIDATION)
    return Path(path)


def _out_dir(cfg) -> Path:
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (date, Path)):
        return str(o)
    raise TypeError(type(o).__name__)


def _day(panel: PanelDataset, value, what="target") -> int:
    if value is None:
        raise CLIError(f"no {what} day given", EXIT_VALIDATION)
    text = str(value)
    try:
        if text.lstrip("-").isdigit():
            d = int(text)
            if d < 0:
                d += panel.n_days
            if not 0 <= d <= panel.n_days:
                raise KeyError(text)
            return d
        return panel.day_index(date.fromisoformat(text))
    except (KeyError, ValueError):
        raise CLIError(f"{what} day {text} is not in the panel", EXIT_VALIDATION) from None


def _panel(cfg) -> PanelDataset:
    try:
        return load_panel(_existing(cfg.get("panel"), "panel file"))
    except (E.ValidationError, KeyError, ValueError) as exc:
        raise CLIError(f"cannot read panel: {exc}", EXIT_VALIDATION) from None


# -- panel summaries ------------------------------------------------------------------

def panel_summary(panel: PanelDataset) -> dict:
    """Auction counts and the histogram of distinct bid prices per auction."""
    out = {
        "days": panel.n_days,
        "first_day": panel.days[0].isoformat() if panel.days else None,
        "last_day": panel.days[-1].isoformat() if panel.days else None,
        "auctions": panel.n_days * HOURS,
        "dst_days": sorted(d.isoformat() for d in panel.dst_days),
        "exogenous": sorted(panel.exogenous),
    }
    for side in (Side.SUPPLY, Side.DEMAND):
        counts = panel.bids(side).counts()
        edges = np.arange(0, max(int(counts.max()) if counts.size else 0, 1) + 51, 50)
        hist, _ = np.histogram(counts, edges)
        out[f"{side.name.lower()}_distinct_prices"] = {
            "mean": float(counts.mean()) if counts.size else 0.0,
            "min": int(counts.min()) if counts.size else 0,
            "max": int(counts.max()) if counts.size else 0,
            "histogram": {"edges": edges.tolist(), "counts": hist.tolist()},
        }
    price = panel.exogenous.get("price")
    if price is not None:
        out["clearing_failures"] = int(np.isnan(price).sum())
    return out


def truth_arrays(panel: PanelDataset) -> dict:
    tr = panel.truth
    arrays = {}
    for side in (Side.SUPPLY, Side.DEMAND):
        st = tr.side(side)
        s = side.name.lower()
        arrays[f"{s}_bounds"] = st.bounds()
        arrays[f"{s}_volumes"] = st.volumes
        arrays[f"{s}_mu"] = st.mu
        arrays[f"{s}_wind_gain"] = st.wind_gain
    return arrays


def _synthetic_panel(cfg: dict) -> tuple:
    sc = SyntheticConfig()
    kw = {}
    if cfg.get("days") is not None:
        kw["n_days"] = int(cfg["days"])
    if cfg.get("supply_classes") is not None:
        kw["n_supply_classes"] = int(cfg["supply_classes"])
    if cfg.get("demand_classes") is not None:
        kw["n_demand_classes"] = int(cfg["demand_classes"])
    try:
        sc = SyntheticConfig(**kw)
    except E.ConfigError as exc:
        raise CLIError(str(exc), EXIT_VALIDATION) from None
    return generate_synthetic(sc, int(cfg["seed"])), sc


def _write_synthetic(cfg: dict, out: Path) -> dict:
    if cfg.get("seed") is None:
        raise CLIError("a seed is required for synthetic data", EXIT_VALIDATION)
    panel, sc = _synthetic_panel(cfg)
    save_panel(panel, out / "panel.npz")
    meta = {"format": "xmodel-truth", "version": 1, "seed": int(cfg["seed"]), "config": asdict(sc)}
    write_npz(out / "truth.npz", truth_arrays(panel), json.loads(json.dumps(meta, default=_json_default)))
    summary = panel_summary(panel)
    summary["synthetic"] = True
    summary["clamped"] = panel.truth.clamped
    return summary


# -- commands -------------------------------------------------------------------------

def cmd_synth(args, cfg):
    out = _out_dir(cfg)
    summary = _write_synthetic(cfg, out)
    _dump(out / "summary.json", summary)
    return summary


def cmd_ingest(args, cfg):
    out = _out_dir(cfg)
    if cfg.get("synthetic"):
        summary = _write_synthetic(cfg, out)
    else:
        auctions = _existing(cfg.get("auctions"), "auction file")
        exo = cfg.get("exogenous_csv")
        if exo is not None:
            exo = _existing(exo, "exogenous file")
        try:
            panel = read_panel_csv(auctions, exo, dst_hour=int(cfg.get("dst_hour", 2)))
        except (E.ParseError, E.IrregularDayError) as exc:
            raise CLIError(str(exc), EXIT_VALIDATION) from None
        if "price" not in panel.exogenous or "volume" not in panel.exogenous:
            price, volume = clearing_series(panel)
            extra = {}
            if "price" not in panel.exogenous:
                extra["price"] = price
            if "volume" not in panel.exogenous:
                extra["volume"] = volume
            panel = panel.with_exogenous(**extra)
        save_panel(panel, out / "panel.npz")
        summary = panel_summary(panel)
        summary["synthetic"] = False
    _dump(out / "summary.json", summary)
    return summary


def _fit(panel, target, mcfg, threads) -> WindowFit:
    try:
        return fit_window(panel, target, mcfg, threads)
    except E.ConvergenceError as exc:
        raise CLIError(f"solver failure: {exc}", EXIT_FIT) from None
    except (E.InsufficientHistoryError, E.PartitionError, E.EmptyPanelError) as exc:
        raise CLIError(f"cannot fit: {exc}", EXIT_FIT) from None
    except E.MissingExogenousError as exc:
        raise CLIError(str(exc), EXIT_EXOGENOUS) from None


def write_fit_report(path, wf: WindowFit):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "hour", "side", "lambda", "df", "bic", "sigma2"])
        ms = wf.n_supply
        for m, h, lam, df, bic, s2 in wf.models.table():
            side = "S" if m < ms else "D"
            w.writerow([m, h, side, f"{lam:.10g}", df, f"{bic:.10g}", f"{s2:.10g}"])


def cmd_fit(args, cfg):
    out = _out_dir(cfg)
    panel = _panel(cfg)
    mcfg = model_config(cfg, stochastic=False)
    target = _day(panel, cfg.get("target"))
    wf = _fit(panel.slice_days(0, min(panel.n_days, target + 1)), target, mcfg, cfg.get("threads"))
    ps, pd = wf.partitions
    extra_arrays = {"supply_bounds": ps.bounds, "demand_bounds": pd.bounds}
    extra_meta = {"window": [wf.start, wf.stop], "target": _iso(panel, target), "config": mcfg.as_dict()}
    save_models(wf.models, out / "models.npz", extra_arrays, extra_meta)
    write_partition_csv(out / "partition.csv", ps, pd)
    write_fit_report(out / "fit_report.csv", wf)
    summary = {
        "target": _iso(panel, target),
        "window": [_iso(panel, wf.start), _iso(panel, wf.stop - 1)],
        "supply_classes": ps.n_classes,
        "demand_classes": pd.n_classes,
        "models": sum(len(r) for r in wf.models.models),
        "nonzero_coefficients": int(sum(m.df for r in wf.models.models for m in r)),
    }
    _dump(out / "summary.json", summary)
    return summary


def _iso(panel, d):
    return panel.days[d].isoformat() if d < panel.n_days else str(d)


def _load_window(panel, target, mcfg, path) -> WindowFit:
    """Rebuild a fitted window from a model container, checking it matches the panel."""
    fm, arrays, meta = load_models(_existing(path, "model file"))
    start, stop = window_bounds(panel, target, mcfg.window_days)
    if meta.get("window") != [start, stop]:
        raise CLIError(f"model file was fitted on window {meta.get('window')}, not [{start}, {stop}]",
                       EXIT_VALIDATION)
    parts, layouts, cp = prepare_window(panel, start, stop, mcfg)
    if not (np.array_equal(parts[0].bounds, arrays["supply_bounds"])
            and np.array_equal(parts[1].bounds, arrays["demand_bounds"])):
        raise CLIError("model file partition does not match the panel", EXIT_VALIDATION)
    wd = panel.weekday(target) if target < panel.n_days else None
    return WindowFit(start, stop, parts, layouts, fm, cp, wd)


def cmd_forecast(args, cfg):
    out = _out_dir(cfg)
    panel = _panel(cfg)
    mcfg = model_config(cfg, stochastic=int(cfg.get("B", XModelConfig.B)) > 0)
    target = _day(panel, cfg.get("target"))
    if target >= panel.n_days:
        raise CLIError("the target day needs planned exogenous data in the panel", EXIT_EXOGENOUS)
    view = panel.slice_days(0, target + 1)
    if cfg.get("models"):
        wf = _load_window(view, target, mcfg, cfg["models"])
    else:
        wf = _fit(view, target, mcfg, cfg.get("threads"))
    try:
        fc = forecast_day(wf, mcfg)
    except E.MissingExogenousError as exc:
        raise CLIError(str(exc), EXIT_EXOGENOUS) from None
    day = panel.days[target]
    write_forecast_report(out / "forecast.csv", [(day, h, f) for h, f in enumerate(fc.hours)])
    levels = tuple(cfg.get("curve_levels") or (0.05, 0.5, 0.95))
    records = []
    ms = wf.n_supply
    for h in range(HOURS):
        for side, layout, sl in ((Side.SUPPLY, wf.layouts[0], slice(0, ms)), (Side.DEMAND, wf.layouts[1], slice(ms, None))):
            draws = fc.sample.draws[:, sl, h] if fc.sample is not None else fc.class_point[sl, h][None]
            rng = np.random.default_rng(np.random.SeedSequence([mcfg.seed, target, h, 1 if side is Side.SUPPLY else 2]))
            prices, point_cum, band = curve_bands(layout, h, fc.class_point[sl, h], draws, rng, levels, mcfg.threshold)
            records.append((day, h, side, prices, point_cum, band))
    write_curve_bands(out / "curves.csv", records, levels)
    realized = panel.series("price")[target] if "price" in panel.exogenous else np.full(HOURS, np.nan)
    summary = {
        "target": day.isoformat(),
        "B": mcfg.B,
        "point_price": [f.point_price for f in fc.hours],
        "unreliable_hours": [h for h, f in enumerate(fc.hours) if f.unreliable],
        "failed_draws": [f.n_failed for f in fc.hours],
        "realized_price": realized,
    }
    _dump(out / "summary.json", summary)
    return summary


def build_forecasters(cfg, mcfg):
    names = cfg.get("models") or ["xmodel", "persistent"]
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    window = mcfg.window_days
    out = []
    for n in names:
        if n == "xmodel":
            out.append(XModelForecaster(mcfg, cfg.get("threads")))
        elif n == "regime":
            out.append(RegimeForecaster(window, mcfg.seed))
        elif n == "oracle":
            out.append(OracleForecaster())
        elif n in BENCHMARKS:
            out.append(BENCHMARKS[n](window))
        else:
            raise CLIError(f"unknown model {n!r}; choose from xmodel, {', '.join(BENCHMARKS)}", EXIT_VALIDATION)
    ext = cfg.get("external") or []
    if isinstance(ext, str):
        ext = [ext]
    for path in ext:
        try:
            out.extend(ExternalForecaster.read(_existing(path, "external forecast file")))
        except E.ParseError as exc:
            raise CLIError(f"{path}: {exc}", EXIT_VALIDATION) from None
    return out


def cmd_evaluate(args, cfg):
    out = _out_dir(cfg)
    panel = _panel(cfg)
    mcfg = model_config(cfg, stochastic=True)
    forecasters = build_forecasters(cfg, mcfg)
    start = _day(panel, cfg.get("start", mcfg.window_days), "start")
    stop = _day(panel, cfg.get("stop", panel.n_days), "stop")
    if stop <= start:
        raise CLIError("empty out-of-sample range", EXIT_VALIDATION)
    try:
        res = rolling_study(panel, forecasters, study_days(panel, start, stop))
    except CLIError:
        raise
    except Exception as exc:  # anything the harness could not absorb per model-day
        raise CLIError(f"study failed: {exc}", EXIT_STUDY) from exc
    write_score_table(out / "scores.csv", res.scores)
    write_hourly_scores(out / "scores_hourly.csv", res.scores)
    for name, rep in res.coverage.items():
        write_coverage(out / f"coverage_{name}.csv", rep)
    summary = {
        "days": [_iso(panel, int(d)) for d in (res.days[0], res.days[-1])] if res.days.size else [],
        "n_days": int(res.days.size),
        "models": {
            name: {
                "mae": s.mae, "rmse": s.rmse, "mae_pct": s.mae_pct, "rmse_pct": s.rmse_pct,
                "missing_days": [_iso(panel, d) for d, _ in res.missing[name]],
                "central_90_coverage": res.central_coverage(name),
            }
            for name, s in res.scores.rows.items()
        },
    }
    _dump(out / "summary.json", summary)
    return summary


# -- parser -------------------------------------------------------------------------

def _global_flags(p, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=d, help="random seed (required by stochastic commands)")
    p.add_argument("--threads", type=int, default=d, help="worker threads (default: all cores)")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xmodel", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic panel with its ground truth")
    _global_flags(p, True)
    p.add_argument("--days", type=int)
    p.add_argument("--supply-classes", dest="supply_classes", type=int)
    p.add_argument("--demand-classes", dest="demand_classes", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse and normalize auction CSVs into a panel file")
    _global_flags(p, True)
    p.add_argument("auctions", nargs="?")
    p.add_argument("--exogenous", dest="exogenous_csv")
    p.add_argument("--dst-hour", dest="dst_hour", type=int)
    p.add_argument("--synthetic", action="store_const", const=True)
    p.add_argument("--days", type=int)
    p.add_argument("--supply-classes", dest="supply_classes", type=int)
    p.add_argument("--demand-classes", dest="demand_classes", type=int)
    p.set_defaults(func=cmd_ingest)

    for name, func, help_ in (
        ("fit", cmd_fit, "fit all class models for one window"),
        ("forecast", cmd_forecast, "point and probabilistic forecast of one day"),
    ):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, True)
        p.add_argument("--panel")
        p.add_argument("--target", help="ISO date or day index")
        p.add_argument("--window-days", dest="window_days", type=int)
        p.add_argument("--v-star", dest="v_star", type=float)
        if name == "forecast":
            p.add_argument("--models", help="model container written by fit")
            p.add_argument("--B", dest="B", type=int)
            p.add_argument("--threshold", type=float)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="rolling out-of-sample study")
    _global_flags(p, True)
    p.add_argument("--panel")
    p.add_argument("--start", help="first out-of-sample day (ISO date or index)")
    p.add_argument("--stop", help="end of the out-of-sample range, exclusive")
    p.add_argument("--models", help="comma-separated: xmodel,persistent,ar,ar24,regime,oracle")
    p.add_argument("--external", action="append", help="external forecast CSV (repeatable)")
    p.add_argument("--window-days", dest="window_days", type=int)
    p.add_argument("--v-star", dest="v_star", type=float)
    p.add_argument("--B", dest="B", type=int)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0) or 0, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = effective_config(args)
        check_keys(cfg)
        if cfg.get("threads") is None:
            cfg["threads"] = os.cpu_count() or 1
        out = _out_dir(cfg)
        _dump(out / "config.json", {"command": args.command, **cfg})
        args.func(args, cfg)
    except CLIError as exc:
        print(f"xmodel {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except E.XModelError as exc:
        code = EXIT_STUDY if args.command == "evaluate" else EXIT_VALIDATION
        print(f"xmodel {args.command}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
