"""Interlocked bias correction for integrated volatility and noise moments.

Step 1 treats the noise as iid (``sigma2_U = RV(1)``) and gives a first IV.
Each later step removes the finite-sample diffusion bias from the lagged
realized volatilities using the previous IV, re-estimates ``sigma2_U`` and
recomputes IV. The pre-averaged statistics and the lagged sums do not depend
on the noise estimates, so they are computed once per series.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EstimationError, GeometryError
from .noise_moments import NoiseMoments, noise_moments_from_rv, rv_lags
from .preavg import DEFAULT_C, SCHEMES, iv_from_pav, pav_stats

__all__ = [
    "Tuning",
    "StepResult",
    "PipelineReport",
    "run_pipeline",
    "iv_raw_corrected",
]


@dataclass(frozen=True)
class Tuning:
    c: float = DEFAULT_C
    j_n: int = 20
    i_n: int = 10
    max_lag: int = None
    n_steps: int = 2
    alpha: float = 0.05
    scheme: str = "overlap"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not 1 <= self.i_n <= self.j_n:
            raise ValueError("need 1 <= i_n <= j_n")
        if self.max_lag is not None and self.max_lag < self.i_n:
            raise ValueError("max_lag must be at least i_n")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @property
    def lags(self):
        return self.j_n if self.max_lag is None else self.max_lag

    def to_dict(self):
        return asdict(self)


@dataclass
class StepResult:
    step: int
    noise: NoiseMoments
    iv: object  # IvEstimate

    def to_dict(self):
        return {"step": self.step, "noise": self.noise.to_dict(), "iv": self.iv.to_dict()}


@dataclass
class PipelineReport:
    steps: list
    config: Tuning
    raw: object = None  # IvEstimate from uncorrected noise moments
    raw_noise: NoiseMoments = None
    pav: object = None
    warnings: list = field(default_factory=list)
    label: str = ""

    def step(self, k):
        return self.steps[k - 1]

    @property
    def final(self):
        return self.steps[-1]

    def to_dict(self):
        return {
            "label": self.label,
            "config": self.config.to_dict(),
            "pav": None if self.pav is None else self.pav.to_dict(),
            "raw": None if self.raw is None else self.raw.to_dict(),
            "raw_noise": None if self.raw_noise is None else self.raw_noise.to_dict(),
            "steps": [s.to_dict() for s in self.steps],
            "warnings": list(self.warnings),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def summary_rows(self):
        rows = []
        entries = [("raw", self.raw_noise, self.raw)] if self.raw is not None else []
        entries += [(f"step{s.step}", s.noise, s.iv) for s in self.steps]
        for name, nm, iv in entries:
            rows.append({
                "estimator": name,
                "var_u": nm.var_u,
                "sigma2_u": nm.sigma2_u,
                "iv": iv.iv,
                "tau": iv.tau,
                "ci_low": iv.ci_low,
                "ci_high": iv.ci_high,
            })
        return rows

    def to_csv(self, path):
        rows = self.summary_rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["estimator"])
            w.writeheader()
            for r in rows:
                w.writerow({k: (v if isinstance(v, str) else repr(float(v))) for k, v in r.items()})


def _step1_noise(rv, n, max_lag):
    var_u = float(rv[0])
    return NoiseMoments(
        var_u=var_u,
        gamma=np.zeros(max_lag),
        sigma2_u=var_u,
        j_n=1,
        i_n=1,
        n=n,
        warnings=[],
    )


def run_pipeline(s, cfg=None, n_steps=None):
    """Run the multi-step estimator on one series.

    Parameters
    ----------
    s : TickSeries or array_like
    cfg : Tuning, optional
    n_steps : int, optional
        Overrides ``cfg.n_steps``.

    Returns
    -------
    PipelineReport
        Steps ``1..n_steps`` plus the estimator built from uncorrected noise
        moments (``report.raw``).

    Raises
    ------
    EstimationError
        If the series is too short for the tuning; ``exc.report`` holds the
        partial report.
    """
    cfg = cfg or Tuning()
    if n_steps is not None:
        cfg = Tuning(**{**asdict(cfg), "n_steps": n_steps})
    y = s.log_prices if hasattr(s, "log_prices") else np.asarray(s, dtype=float)
    label = getattr(s, "label", "")
    n = y.shape[0] - 1
    report = PipelineReport(steps=[], config=cfg, label=label)

    try:
        pav = pav_stats(y, cfg.c, scheme=cfg.scheme)
    except GeometryError as exc:
        report.warnings.append(f"infeasible geometry: {exc}")
        err = EstimationError(str(exc))
        err.report = report
        raise err from exc
    if cfg.j_n >= n or cfg.lags > n:
        report.warnings.append(f"lags exceed series length (n={n})")
        err = EstimationError(f"j_n={cfg.j_n} too large for n={n}")
        err.report = report
        raise err
    report.pav = pav

    max_lag = cfg.lags
    rv = rv_lags(y, np.arange(1, max(max_lag, cfg.j_n) + 1))

    report.raw_noise = noise_moments_from_rv(rv, n, cfg.j_n, cfg.i_n, max_lag)
    report.raw = iv_from_pav(pav, report.raw_noise.sigma2_u, cfg.alpha, step="raw")

    noise = _step1_noise(rv, n, max_lag)
    iv = iv_from_pav(pav, noise.sigma2_u, cfg.alpha, step="step1")
    report.steps.append(StepResult(1, noise, iv))
    for k in range(2, cfg.n_steps + 1):
        noise = noise_moments_from_rv(rv, n, cfg.j_n, cfg.i_n, max_lag, iv_hat=iv.iv)
        iv = iv_from_pav(pav, noise.sigma2_u, cfg.alpha, step=f"step{k}")
        report.steps.append(StepResult(k, noise, iv))

    for st in [report.raw_noise] + [r.noise for r in report.steps]:
        report.warnings.extend(w for w in st.warnings if w not in report.warnings)
    for est in [report.raw] + [r.iv for r in report.steps]:
        report.warnings.extend(f"{est.step}: {w}" for w in est.flags)
    if any(r.iv.iv < 0 for r in report.steps) and "negative iv used for correction" not in report.warnings:
        report.warnings.append("negative iv used for correction")
    return report


def iv_raw_corrected(s, cfg=None):
    """IV from uncorrected noise moments: asymptotic-bias removal only."""
    cfg = cfg or Tuning()
    return run_pipeline(s, cfg, n_steps=1).raw
