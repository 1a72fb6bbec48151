"""Monte Carlo harness for the simulation designs.

Replication ``r`` is driven by ``child_seed(base_seed, r)``, and results are
stored by replication index, so a report is a pure function of its config no
matter how many worker processes produced it.
"""

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from ._accel import backend
from .errors import ConfigError
from .multistep import Tuning, run_pipeline
from .noise_moments import finite_sample_bias, noise_moments_from_rv, rv_lags
from .preavg import normalized_stat, pav_geometry
from . import kernels
from .sim import (
    Ar1NoiseConfig,
    OuConfig,
    SvConfig,
    child_seed,
    design_from_dict,
    design_to_dict,
    model_autocov,
    simulate_noise,
    simulate_observed,
)

__all__ = [
    "McConfig",
    "McReport",
    "QQResult",
    "run_mc",
    "rv_curve",
    "qq_data",
    "acf_band_report",
    "preaveraged_noise_variance",
    "PRESETS",
    "preset_configs",
    "ESTIMATORS",
]

ESTIMATORS = ("iv_step1", "iv_raw_corrected", "iv_step2", "iv_step3")
OUTPUTS = ("tables", "qq", "acf_bands", "rv_curve")

SECONDS_PER_DAY = 23400


@dataclass(frozen=True)
class McConfig:
    price: object = field(default_factory=OuConfig)
    noise: Ar1NoiseConfig = field(default_factory=Ar1NoiseConfig)
    n_obs: int = SECONDS_PER_DAY + 1
    horizon: float = 1.0
    n_reps: int = 1000
    base_seed: int = 20240101
    tuning: Tuning = field(default_factory=lambda: Tuning(n_steps=3))
    outputs: tuple = ("tables",)
    max_lag: int = 30
    label: str = ""

    def __post_init__(self):
        if self.n_reps < 1:
            raise ConfigError("n_reps must be at least 1")
        if self.n_obs < 3:
            raise ConfigError("n_obs must be at least 3")
        if self.max_lag < self.tuning.i_n:
            raise ConfigError("max_lag must be at least i_n")
        bad = set(self.outputs) - set(OUTPUTS)
        if bad:
            raise ConfigError(f"unknown outputs {sorted(bad)}")

    def to_dict(self):
        return {
            "label": self.label,
            "design": design_to_dict(self.price, self.noise),
            "n_obs": self.n_obs,
            "horizon": self.horizon,
            "n_reps": self.n_reps,
            "base_seed": self.base_seed,
            "tuning": self.tuning.to_dict(),
            "outputs": list(self.outputs),
            "max_lag": self.max_lag,
        }

    @classmethod
    def from_dict(cls, d):
        if "design" not in d:
            raise ConfigError("missing field 'design' in Monte Carlo config")
        price, noise = design_from_dict(d["design"])
        try:
            tuning = Tuning(**d.get("tuning", {}))
        except TypeError as exc:
            raise ConfigError(f"bad tuning block: {exc}") from None
        kw = {k: d[k] for k in ("n_obs", "n_reps", "base_seed", "max_lag", "label") if k in d}
        if "horizon" in d:
            kw["horizon"] = float(d["horizon"])
        if "outputs" in d:
            kw["outputs"] = tuple(d["outputs"])
        return cls(price=price, noise=noise, tuning=tuning, **kw)


# ---------------------------------------------------------------------------
# one replication


def _one_path(cfg, r):
    path = simulate_observed(cfg.price, cfg.noise, cfg.n_obs, cfg.horizon, child_seed(cfg.base_seed, r))
    tun = cfg.tuning
    rep = run_pipeline(path.series, tun)
    out = {
        "true_iv": path.true_iv,
        "iv_raw_corrected": rep.raw.iv,
        "tau": rep.raw.tau,
        "var_u_raw": rep.raw_noise.var_u,
        "sigma2_u_raw": rep.raw_noise.sigma2_u,
    }
    for st in rep.steps:
        out[f"iv_step{st.step}"] = st.iv.iv
        out[f"sigma2_u_step{st.step}"] = st.noise.sigma2_u
        out[f"var_u_step{st.step}"] = st.noise.var_u
    ests = [("iv_raw_corrected", rep.raw)] + [(f"iv_step{st.step}", st.iv) for st in rep.steps]
    for name, est in ests:
        out[f"z_{name}"] = normalized_stat(est, path.true_iv)
        out[f"cover_{name}"] = float(est.ci_low <= path.true_iv <= est.ci_high)

    if "acf_bands" in cfg.outputs or "rv_curve" in cfg.outputs:
        y = path.series.log_prices
        n = y.shape[0] - 1
        lags = np.arange(1, max(cfg.max_lag, tun.j_n) + 1)
        rv = rv_lags(y, lags)
        out["rv"] = rv[: cfg.max_lag]
        corr = {
            "rv": None,
            "bcrv": rep.step(1).iv.iv,
            "bcrv_true": path.true_iv,
        }
        for key, iv_hat in corr.items():
            nm = noise_moments_from_rv(rv, n, tun.j_n, tun.i_n, cfg.max_lag, iv_hat)
            out[f"gamma_{key}"] = nm.gamma
            out[f"var_u_{key}"] = nm.var_u
    return out


def _run_chunk(args):
    cfg, reps = args
    res = []
    for r in reps:
        try:
            res.append((r, _one_path(cfg, r), None))
        except Exception as exc:  # recorded per path, never aborts the run
            res.append((r, None, f"{type(exc).__name__}: {exc}"))
    return res


# ---------------------------------------------------------------------------
# report


@dataclass
class McReport:
    config: McConfig
    values: dict
    failed: list = field(default_factory=list)
    runtime: dict = field(default_factory=dict)

    @property
    def n_ok(self):
        return int(np.sum(self.ok_mask))

    @property
    def ok_mask(self):
        return np.isfinite(self.values["true_iv"])

    def column(self, name):
        v = np.asarray(self.values[name])
        return v[self.ok_mask]

    def mean(self, name):
        return np.mean(self.column(name), axis=0)

    def sd(self, name):
        """Sample standard deviation (``ddof=1``); zero for a single replication."""
        v = self.column(name)
        if v.shape[0] < 2:
            return np.zeros(v.shape[1:]) if v.ndim > 1 else 0.0
        return np.std(v, axis=0, ddof=1)

    def summary(self):
        """``{name: {"mean", "sd", "se", "bias"}}`` for the IV estimators present."""
        out = {}
        truth = self.column("true_iv")
        for name in ESTIMATORS:
            if name not in self.values:
                continue
            v = self.column(name)
            sd = float(self.sd(name))
            out[name] = {
                "mean": float(v.mean()),
                "sd": sd,
                "se": sd / np.sqrt(v.shape[0]),
                "bias": float(np.mean(v - truth)),
                "bias_sd": float(np.std(v - truth, ddof=1)) if v.shape[0] > 1 else 0.0,
                "coverage": float(self.column(f"cover_{name}").mean()),
            }
        return out

    def to_dict(self, include_paths=True):
        d = {
            "config": self.config.to_dict(),
            "n_ok": self.n_ok,
            "failed": self.failed,
            "runtime": self.runtime,
            "summary": self.summary(),
        }
        if include_paths:
            d["paths"] = {
                k: np.asarray(v).tolist() for k, v in self.values.items()
            }
        return d

    def to_json(self, path, include_paths=True):
        with open(path, "w") as fh:
            json.dump(self.to_dict(include_paths), fh, indent=2)

    def paths_to_csv(self, path):
        scalar = [k for k, v in self.values.items() if np.ndim(v) == 1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rep"] + scalar)
            for r in range(self.config.n_reps):
                w.writerow([r] + [repr(float(self.values[k][r])) for k in scalar])


def _assemble(cfg, results):
    results = sorted(results, key=lambda t: t[0])
    template = next((o for _, o, _ in results if o is not None), None)
    values = {}
    failed = [{"rep": r, "error": e} for r, _, e in results if e is not None]
    if template is None:
        return {"true_iv": np.full(cfg.n_reps, np.nan)}, failed
    for key, val in template.items():
        shape = (cfg.n_reps,) + np.shape(val)
        arr = np.full(shape, np.nan)
        for r, o, _ in results:
            if o is not None:
                arr[r] = o[key]
        values[key] = arr
    return values, failed


def run_mc(cfg, workers=1, chunk=None):
    """Run ``cfg.n_reps`` replications and aggregate them into an :class:`McReport`.

    ``workers > 1`` fans replications out to a process pool; the result is
    identical to the serial run.
    """
    t0 = time.perf_counter()
    reps = list(range(cfg.n_reps))
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1:
        results = _run_chunk((cfg, reps))
    else:
        chunk = chunk or max(1, cfg.n_reps // (4 * workers))
        parts = [(cfg, reps[i : i + chunk]) for i in range(0, len(reps), chunk)]
        results = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, parts):
                results.extend(part)
    values, failed = _assemble(cfg, results)
    runtime = {
        "seconds": time.perf_counter() - t0,
        "workers": workers,
        "backend": backend(),
        "n_failed": len(failed),
    }
    return McReport(cfg, values, failed, runtime)


# ---------------------------------------------------------------------------
# derived outputs


@dataclass
class QQResult:
    sample: np.ndarray
    theoretical: np.ndarray
    ks_stat: float
    ks_pvalue: float
    slope: float
    intercept: float
    flags: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theoretical", "sample"])
            for a, b in zip(self.theoretical, self.sample):
                w.writerow([repr(float(a)), repr(float(b))])


def qq_data(report_or_samples, estimator="iv_step2"):
    """Standard-normal QQ pairs at plotting positions ``(i - 0.5) / N`` plus a KS test."""
    if isinstance(report_or_samples, McReport):
        z = report_or_samples.column(f"z_{estimator}")
    else:
        z = np.asarray(report_or_samples, dtype=float)
    z = np.sort(z[np.isfinite(z)])
    if z.size == 0:
        raise ValueError("no normalized statistics to plot")
    q = stats.norm.ppf((np.arange(1, z.size + 1) - 0.5) / z.size)
    flags = []
    if z.size < 2:
        flags.append("KS undefined for a single sample")
        return QQResult(z, q, float("nan"), float("nan"), float("nan"), float("nan"), flags)
    ks = stats.kstest(z, "norm")
    slope, intercept = np.polyfit(q, z, 1)
    return QQResult(z, q, float(ks.statistic), float(ks.pvalue), float(slope), float(intercept), flags)


def _noise_truth(cfg, lags):
    if cfg.noise is None:
        return np.zeros(len(lags)), 0.0
    return model_autocov(cfg.noise, lags), cfg.noise.var_u


def rv_curve(cfg_or_report, max_lag=None, iv_scales=(0.8, 1.0, 1.2), workers=1):
    """Mean ``RV(j)`` across replications, raw and bias-adjusted, plus the model line.

    The adjusted variants subtract ``j * s * IV / (2 (n - j + 1))`` with ``IV``
    the path's true integrated volatility and ``s`` each entry of ``iv_scales``.

    Returns a list of ``(j, variant, value)`` rows.
    """
    report = _ensure_report(cfg_or_report, "rv_curve", workers)
    cfg = report.config
    max_lag = max_lag or cfg.max_lag
    if max_lag > cfg.max_lag:
        raise ValueError("max_lag exceeds the lags stored in the report")
    n = cfg.n_obs - 1
    lags = np.arange(1, max_lag + 1)
    rv = report.column("rv")[:, :max_lag]
    truth = report.column("true_iv")
    rows = []
    for j, v in zip(lags, rv.mean(axis=0)):
        rows.append((int(j), "rv", float(v)))
    for s in iv_scales:
        adj = rv - finite_sample_bias(s * truth[:, None], lags[None, :], n)
        for j, v in zip(lags, adj.mean(axis=0)):
            rows.append((int(j), f"adj_{s:g}", float(v)))
    gam, var_u = _noise_truth(cfg, lags)
    for j, g in zip(lags, gam):
        rows.append((int(j), "model", float(var_u - g)))
    return rows


def acf_band_report(cfg_or_report, estimator="bcrv", workers=1, level=0.95):
    """Per-lag mean and empirical quantile band of the estimated noise ACF.

    Quantiles use the inverted empirical CDF, so with two replications the
    band is exactly [min, max].

    ``estimator`` is ``"rv"`` (no finite-sample correction), ``"bcrv"``
    (corrected with the step-1 IV, i.e. the step-2 moments) or
    ``"bcrv_true"`` (corrected with the true IV).
    """
    if estimator not in ("rv", "bcrv", "bcrv_true"):
        raise ValueError("estimator must be 'rv', 'bcrv' or 'bcrv_true'")
    report = _ensure_report(cfg_or_report, "acf_bands", workers)
    cfg = report.config
    gam = report.column(f"gamma_{estimator}")
    var_u = report.column(f"var_u_{estimator}")
    with np.errstate(divide="ignore", invalid="ignore"):
        acf = gam / var_u[:, None]
    lags = np.arange(1, acf.shape[1] + 1)
    true_g, true_var = _noise_truth(cfg, lags)
    true_acf = true_g / true_var if true_var > 0 else np.zeros_like(true_g)
    lo_q = (1 - level) / 2
    rows = []
    for i, j in enumerate(lags):
        col = acf[:, i]
        col = col[np.isfinite(col)]
        rows.append({
            "lag": int(j),
            "mean": float(col.mean()),
            "lower": float(np.quantile(col, lo_q, method="inverted_cdf")),
            "upper": float(np.quantile(col, 1 - lo_q, method="inverted_cdf")),
            "true": float(true_acf[i]),
        })
    return rows


def _ensure_report(obj, output, workers):
    if isinstance(obj, McReport):
        if "rv" not in obj.values:
            raise ValueError(f"report was run without the '{output}' output")
        return obj
    cfg = obj
    if output not in cfg.outputs:
        cfg = replace(cfg, outputs=tuple(cfg.outputs) + (output,))
    return run_mc(cfg, workers=workers)


def preaveraged_noise_variance(noise_cfg, n_obs, n_reps=100, c=0.2, base_seed=7, scheme="overlap"):
    """Pooled variance of ``n^{1/4} Ubar_m`` over blocks and replications, for pure noise.

    The limit is ``2 sigma2_U / c``.
    """
    g = pav_geometry(n_obs, c, scheme)
    scale = g.n ** 0.25
    total = 0.0
    count = 0
    for r in range(n_reps):
        u = simulate_noise(noise_cfg, n_obs, child_seed(base_seed, r))
        ubar = kernels.block_preaverages(u, g.k_n, g.m_n, g.n_inc) * scale
        total += kernels.compensated_sum(ubar * ubar)
        count += ubar.shape[0]
    # mean zero is known, so no centring
    return total / count


# ---------------------------------------------------------------------------
# presets

RHOS = (-0.7, -0.3, 0.0, 0.3, 0.7)
_PAPER_TUNING = Tuning(c=0.2, j_n=20, i_n=10, n_steps=3, scheme="disjoint")


def _ou_design(rho, n_obs, reps, seed, outputs=("tables",), label=""):
    return McConfig(
        price=OuConfig(sigma2=6e-5, delta=0.5, mu=1.6, x0=1.6),
        noise=Ar1NoiseConfig(var_v=2.9e-8, var_eps=4.3e-8, rho=rho),
        n_obs=n_obs,
        horizon=1.0,
        n_reps=reps,
        base_seed=seed,
        tuning=_PAPER_TUNING,
        outputs=outputs,
        label=label,
    )


def _sv_design(rho, delta_seconds, reps, seed):
    n = int(round(SECONDS_PER_DAY / delta_seconds))
    return McConfig(
        price=SvConfig(),
        noise=Ar1NoiseConfig(var_v=1.9e-7, var_eps=1.3e-7, rho=rho),
        n_obs=n + 1,
        horizon=1.0,
        n_reps=reps,
        base_seed=seed,
        tuning=_PAPER_TUNING,
        outputs=("tables", "acf_bands"),
        label=f"sv rho={rho:g} delta={delta_seconds:g}s",
    )


SV_CELLS = ((0.7, 0.2), (0.0, 1.0), (-0.7, 0.4))


def preset_configs(name, reps=1000, seed=20240101):
    """Named experiment grids as ``{column label: McConfig}``."""
    if name == "table1":
        return {f"{r:g}": _ou_design(r, SECONDS_PER_DAY + 1, reps, seed, label=f"table1 rho={r:g}") for r in RHOS}
    if name == "table2":
        return {f"{r:g}": _ou_design(r, 20 * SECONDS_PER_DAY + 1, reps, seed, label=f"table2 rho={r:g}") for r in RHOS}
    if name == "qq":
        return {f"{r:g}": _ou_design(r, 20 * SECONDS_PER_DAY + 1, reps, seed, ("tables", "qq"), f"qq rho={r:g}") for r in (-0.7, 0.0, 0.7)}
    if name == "sv-appendix":
        return {f"rho={r:g},delta={d:g}s": _sv_design(r, d, reps, seed) for r, d in SV_CELLS}
    if name == "rv-curve":
        return {"-0.7": _ou_design(-0.7, SECONDS_PER_DAY + 1, reps, seed, ("tables", "rv_curve"), "rv-curve")}
    if name == "acf-bands":
        return {f"{r:g}": _ou_design(r, SECONDS_PER_DAY + 1, reps, seed, ("tables", "acf_bands"), f"acf-bands rho={r:g}") for r in (-0.7, 0.7)}
    raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


PRESETS = ("table1", "table2", "sv-appendix", "qq", "rv-curve", "acf-bands")
