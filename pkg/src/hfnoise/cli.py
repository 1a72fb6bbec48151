"""Command-line front end: ``hfnoise simulate | estimate | acf | mc | ingest``.

Exit codes: 0 success, 2 usage or configuration error, 3 estimation failure.
A short human-readable summary goes to stdout; every artifact is written under
the ``-o`` directory.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .errors import ConfigError, EstimationError
from .ingest import IngestSpec, load_days, read_series_csv, write_series_csv
from .multistep import Tuning, run_pipeline
from .noise_moments import estimate_noise_moments, fit_ar1_acf, log_acf_regression
from .sampling import calendar_subsample, tick_filter
from .sim import OuConfig, SvConfig, Ar1NoiseConfig, design_from_dict, design_to_dict, simulate_observed

log = logging.getLogger("hfnoise")

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION = 0, 2, 3
SECONDS_PER_DAY = 23400.0


# ---------------------------------------------------------------------------
# helpers


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _tuning(args, base=None):
    base = base or Tuning()
    kw = {}
    for flag, name in (("c", "c"), ("jn", "j_n"), ("in_", "i_n"), ("steps", "n_steps"),
                       ("alpha", "alpha"), ("max_lag", "max_lag"), ("scheme", "scheme")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[name] = v
    try:
        return replace(base, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _tuning_from_json(path):
    d = _load_json(path)
    d = d.get("tuning", d)
    try:
        return Tuning(**d)
    except TypeError as exc:
        raise ConfigError(f"bad tuning block: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _apply_sampling(s, spec):
    if spec in (None, "none"):
        return s
    if spec == "tick":
        return tick_filter(s)
    if spec.startswith("calendar:"):
        try:
            step = float(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad sampling spec {spec!r}") from None
        return calendar_subsample(s, step)
    raise ConfigError(f"sampling must be calendar:<seconds>, tick or none; got {spec!r}")


def _add_tuning_flags(p):
    p.add_argument("--c", type=float, help="pre-averaging window constant (default 0.2)")
    p.add_argument("--jn", type=int, help="lag estimating Var(U) (default 20)")
    p.add_argument("--in", dest="in_", type=int, help="autocovariances summed into sigma2_U (default 10)")
    p.add_argument("--max-lag", dest="max_lag", type=int, help="autocovariances reported (default j_n)")
    p.add_argument("--scheme", choices=("overlap", "disjoint"), help="pre-averaging block layout")


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    if args.config:
        doc = _load_json(args.config)
        price, noise = design_from_dict(doc.get("design", doc))
        n_obs = int(doc.get("n_obs", args.n))
        horizon = float(doc.get("horizon", 1.0))
        seed = int(doc.get("seed", 0))
    else:
        price = OuConfig() if args.model == "ou" else SvConfig()
        noise = None if args.noiseless else Ar1NoiseConfig(rho=args.rho if args.rho is not None else -0.7)
        n_obs, horizon, seed = args.n, 1.0, 0
    if args.seed is not None:
        seed = args.seed
    if args.n_flag is not None:
        n_obs = args.n_flag
    out = _outdir(args.output)
    path = simulate_observed(price, noise, n_obs, horizon, seed)
    s = path.series
    stamped = type(s)(s.timestamps * args.day_seconds, s.log_prices, s.label)
    write_series_csv(stamped, os.path.join(out, "path.csv"))
    truth = {
        "true_iv": path.true_iv,
        "true_sigma2_u": path.true_sigma2_u,
        "true_var_u": 0.0 if noise is None else noise.var_u,
        "n_obs": n_obs,
        "horizon": horizon,
        "day_seconds": args.day_seconds,
        "seed": seed,
        "design": design_to_dict(price, noise),
    }
    _dump(truth, os.path.join(out, "truth.json"))
    print(f"simulated {n_obs} observations: true IV {path.true_iv:.6e}, true sigma2_U {path.true_sigma2_u:.6e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate / acf


def _read_input(args):
    s = read_series_csv(args.input)
    return _apply_sampling(s, args.sampling)


def cmd_estimate(args):
    base = _tuning_from_json(args.config) if args.config else None
    cfg = _tuning(args, base)
    s = _read_input(args)
    out = _outdir(args.output)
    try:
        report = run_pipeline(s, cfg)
    except EstimationError as exc:
        partial = getattr(exc, "report", None)
        if partial is not None:
            partial.to_json(os.path.join(out, "report.json"))
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    report.to_json(os.path.join(out, "report.json"))
    report.to_csv(os.path.join(out, "summary.csv"))
    print(f"{s.label}: n = {s.n}, c = {cfg.c:g}, j_n = {cfg.j_n}, i_n = {cfg.i_n}")
    print(f"{'estimator':<10} {'IV':>13} {'CI low':>13} {'CI high':>13} {'sigma2_U':>13}")
    for row in report.summary_rows():
        print(f"{row['estimator']:<10} {row['iv']:13.6e} {row['ci_low']:13.6e} {row['ci_high']:13.6e} {row['sigma2_u']:13.6e}")
    for w in report.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_acf(args):
    cfg = _tuning(args)
    s = _read_input(args)
    out = _outdir(args.output)
    iv_hat = args.iv_hat
    try:
        if args.correct and iv_hat is None:
            iv_hat = run_pipeline(s, replace(cfg, n_steps=1)).step(1).iv.iv
            if iv_hat < 0:
                raise EstimationError("step-1 IV is negative; cannot correct")
        nm = estimate_noise_moments(s, cfg.j_n, cfg.i_n, cfg.max_lag, iv_hat=iv_hat)
    except (ValueError, EstimationError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    nm.to_csv(os.path.join(out, "acf.csv"))
    doc = nm.to_dict()
    try:
        rho = fit_ar1_acf(nm)
        doc["ar1_rho"] = rho
    except ValueError as exc:
        doc["ar1_rho"] = None
        nm.warnings.append(f"AR(1) fit failed: {exc}")
    try:
        doc["log_acf_regression"] = vars(log_acf_regression(nm))
    except ValueError as exc:
        doc["log_acf_regression"] = None
        nm.warnings.append(f"log-ACF regression skipped: {exc}")
    doc["warnings"] = list(nm.warnings)
    _dump(doc, os.path.join(out, "noise_moments.json"))
    print(f"Var(U) = {nm.var_u:.6e}, sigma2_U = {nm.sigma2_u:.6e}, corrected = {nm.bias_corrected}")
    if doc["ar1_rho"] is not None:
        print(f"AR(1) fit rho = {doc['ar1_rho']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# mc


def _fmt_cell(mean, sd):
    return f"{mean * 1e5:.2f} ({sd * 1e5:.2f})"


def _write_tables(name, reports, out):
    from .mc import ESTIMATORS

    cols = list(reports)
    path = os.path.join(out, f"{name}.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator"] + cols)
        for est in ESTIMATORS:
            if not all(est in r.values for r in reports.values()):
                continue
            cells = []
            for r in reports.values():
                s = r.summary()[est]
                # SV designs have path-dependent IV, so report bias there
                if r.config.price.__class__ is SvConfig:
                    cells.append(_fmt_cell(s["bias"], s["bias_sd"]))
                else:
                    cells.append(_fmt_cell(s["mean"], s["sd"]))
            w.writerow([est] + cells)
    with open(os.path.join(out, f"{name}_long.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["design", "estimator", "mean", "sd", "se", "bias", "bias_sd", "coverage", "n_ok", "n_failed"])
        for col, r in reports.items():
            for est, s in r.summary().items():
                w.writerow([col, est, repr(s["mean"]), repr(s["sd"]), repr(float(s["se"])), repr(s["bias"]),
                            repr(s["bias_sd"]), repr(s["coverage"]), r.n_ok, len(r.failed)])
    return path


def _slug(text):
    return "".join(ch if ch.isalnum() or ch in "-." else "_" for ch in text).strip("_")


def cmd_mc(args):
    from .mc import McConfig, acf_band_report, preset_configs, qq_data, run_mc, rv_curve

    if bool(args.preset) == bool(args.config):
        raise ConfigError("give exactly one of --preset or --config")
    seed = args.seed if args.seed is not None else 20240101
    if args.preset:
        try:
            cfgs = preset_configs(args.preset, reps=args.reps or 1000, seed=seed)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        name = args.preset.replace("-", "_")
    else:
        doc = _load_json(args.config)
        try:
            cfg = McConfig.from_dict(doc)
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"bad Monte Carlo config: {exc}") from None
        over = {}
        if args.reps:
            over["n_reps"] = args.reps
        if args.seed is not None:
            over["base_seed"] = args.seed
        cfgs = {cfg.label or "design": replace(cfg, **over)}
        name = "table"
    out = _outdir(args.output)

    reports = {}
    for col, cfg in cfgs.items():
        log.info("running %s (%d reps, n_obs=%d)", col, cfg.n_reps, cfg.n_obs)
        rep = run_mc(cfg, workers=args.workers)
        reports[col] = rep
        if rep.n_ok == 0:
            rep.to_json(os.path.join(out, f"{name}_{_slug(col)}_report.json"))
            print(f"{col}: all {cfg.n_reps} replications failed", file=sys.stderr)
            return EXIT_ESTIMATION
        stem = os.path.join(out, f"{name}_{_slug(col)}")
        rep.to_json(stem + "_report.json")
        rep.paths_to_csv(stem + "_paths.csv")
        if "qq" in cfg.outputs:
            for est in ("iv_raw_corrected", "iv_step2"):
                q = qq_data(rep, est)
                q.to_csv(f"{stem}_qq_{est}.csv")
                print(f"{col} {est}: KS p = {q.ks_pvalue:.3g}, coverage = {rep.summary()[est]['coverage']:.3f}")
        if "acf_bands" in cfg.outputs:
            for est in ("rv", "bcrv"):
                rows = acf_band_report(rep, est)
                with open(f"{stem}_acf_bands_{est}.csv", "w", newline="") as fh:
                    w = csv.DictWriter(fh, fieldnames=list(rows[0]))
                    w.writeheader()
                    w.writerows(rows)
        if "rv_curve" in cfg.outputs:
            sigma2 = getattr(cfg.price, "sigma2", None)
            with open(f"{stem}_rv_curve.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["j", "variant", "value"])
                w.writerows(rv_curve(rep))
            if sigma2 is None:
                log.info("rv-curve variants scale each path's true IV")
    table = _write_tables(name, reports, out)

    print(f"wrote {table}")
    with open(table) as fh:
        for line in fh:
            print("  " + line.rstrip())
    n_failed = sum(len(r.failed) for r in reports.values())
    if n_failed:
        print(f"{n_failed} replication(s) failed and were excluded")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args):
    if args.config:
        d = _load_json(args.config)
        d.setdefault("path", args.input)
        spec = IngestSpec.from_dict(d)
    else:
        start, _, end = (args.session or "09:30:00-16:00:00").partition("-")

        def col(v):
            return int(v) if v is not None and v.isdigit() else v

        spec = IngestSpec(
            path=args.input,
            time_col=col(args.time_col),
            price_col=col(args.price_col),
            date_col=None if args.date_col == "none" else col(args.date_col),
            timestamp_format=args.timestamp_format,
            session_start=start,
            session_end=end,
            price_scale=args.price_scale,
            delimiter=args.delimiter,
            header=not args.no_header,
        )
    if spec.path is None:
        raise ConfigError("no input file given")
    out = _outdir(args.output)
    res = load_days(spec)
    for date, s in res:
        write_series_csv(s, os.path.join(out, f"{date}.csv"))
    _dump(res.to_dict(), os.path.join(out, "ingest.json"))
    print(f"{res.rows_in} rows read, {res.rows_kept} kept, {len(res)} day(s)")
    for reason, count in res.drops.items():
        if count:
            print(f"  dropped {count} ({reason})")
    for m in res.messages[:10]:
        print(f"  {m}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="hfnoise", description="Integrated volatility under dependent microstructure noise.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="simulate one observed price path")
    sp.add_argument("--config", help="JSON with design, n_obs, horizon, seed")
    sp.add_argument("--model", choices=("ou", "sv"), default="ou")
    sp.add_argument("--n", dest="n_flag", type=int, help="number of observations (default 23401)")
    sp.add_argument("--rho", type=float, help="noise AR(1) coefficient (default -0.7)")
    sp.add_argument("--noiseless", action="store_true")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--day-seconds", type=float, default=SECONDS_PER_DAY,
                    help="seconds per unit of model time in path.csv (default 23400)")
    sp.add_argument("-o", "--output", default=".")
    sp.set_defaults(func=cmd_simulate, n=23401)

    for name, func, hlp in (("estimate", cmd_estimate, "multi-step IV estimate of one series"),
                            ("acf", cmd_acf, "noise variance and autocorrelations of one series")):
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("input", help="canonical CSV (timestamp_seconds,log_price)")
        _add_tuning_flags(sp)
        sp.add_argument("--sampling", default="none", help="calendar:<seconds> | tick | none")
        sp.add_argument("-o", "--output", default=".")
        if name == "estimate":
            sp.add_argument("--steps", type=int, help="number of pipeline steps (default 2)")
            sp.add_argument("--alpha", type=float, help="CI level is 1 - alpha (default 0.05)")
            sp.add_argument("--config", help="JSON tuning block")
        else:
            sp.add_argument("--correct", action="store_true", help="remove finite-sample bias using the step-1 IV")
            sp.add_argument("--iv-hat", dest="iv_hat", type=float, help="IV used for the bias correction")
        sp.set_defaults(func=func)

    sp = sub.add_parser("mc", help="Monte Carlo experiment")
    sp.add_argument("--preset", help="table1 | table2 | sv-appendix | qq | rv-curve | acf-bands")
    sp.add_argument("--config", help="McConfig JSON")
    sp.add_argument("--reps", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--seed", type=int)
    sp.add_argument("-o", "--output", default=".")
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("ingest", help="split a tick CSV into per-day canonical series")
    sp.add_argument("input", nargs="?")
    sp.add_argument("--config", help="IngestSpec JSON")
    sp.add_argument("--time-col", default="time")
    sp.add_argument("--price-col", default="price")
    sp.add_argument("--date-col", default="date", help="'none' if the time column holds full timestamps")
    sp.add_argument("--timestamp-format")
    sp.add_argument("--session", help="HH:MM:SS-HH:MM:SS (default 09:30:00-16:00:00)")
    sp.add_argument("--price-scale", choices=("raw", "log"), default="raw")
    sp.add_argument("--delimiter", default=",")
    sp.add_argument("--no-header", action="store_true")
    sp.add_argument("-o", "--output", default=".")
    sp.set_defaults(func=cmd_ingest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except ValueError as exc:  # ConfigError and config-dataclass validation
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
