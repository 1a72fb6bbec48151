"""Noise variance and autocovariances from lagged realized volatility.

With observations ``Y_0, ..., Y_n``, the lag-``j`` realized volatility

    RV(j) = sum_{i=0}^{n-j} (Y_{i+j} - Y_i)^2 / (2 (n - j + 1))

converges to ``Var(U) - gamma(j)``. In finite samples it carries the
diffusion term ``j * IV / (2 (n - j + 1))``, which the ``iv_hat`` arguments
below remove.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import kernels

__all__ = [
    "NoiseMoments",
    "rv_lag",
    "rv_lags",
    "rv_lag_adjusted",
    "finite_sample_bias",
    "estimate_noise_moments",
    "noise_moments_from_rv",
    "sigma2_u_of",
    "fit_ar1_acf",
    "order_continuation_probability",
    "log_acf_regression",
    "LogAcfFit",
    "DEFAULT_TUNING",
    "EMPIRICAL_TUNING",
]

# (j_n, i_n)
DEFAULT_TUNING = (20, 10)
EMPIRICAL_TUNING = (30, 15)


@dataclass
class NoiseMoments:
    """Estimated second moments of the noise.

    ``gamma[j - 1]`` holds the lag-``j`` autocovariance, ``j = 1..max_lag``.
    """

    var_u: float
    gamma: np.ndarray
    sigma2_u: float
    j_n: int
    i_n: int
    n: int
    iv_used: float = None
    bias_corrected: bool = False
    warnings: list = field(default_factory=list)

    @property
    def max_lag(self):
        return len(self.gamma)

    def acf(self):
        if not self.var_u > 0:
            raise ValueError("autocorrelations need a positive variance estimate")
        return np.asarray(self.gamma) / self.var_u

    def to_dict(self):
        d = asdict(self)
        d["gamma"] = [float(g) for g in self.gamma]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["gamma"] = np.asarray(d["gamma"], dtype=float)
        return cls(**d)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path):
        """Two-column ``lag,value`` autocovariance table; lag 0 is the variance."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag", "value"])
            w.writerow([0, repr(float(self.var_u))])
            for j, g in enumerate(self.gamma, start=1):
                w.writerow([j, repr(float(g))])


def _prices(s):
    return s.log_prices if hasattr(s, "log_prices") else np.asarray(s, dtype=float)


def _check_lags(n, lags):
    lags = np.atleast_1d(np.asarray(lags))
    if n < 1:
        raise ValueError("need at least two observations")
    if lags.size and (lags.min() < 1 or lags.max() > n):
        raise ValueError(f"lags must lie in [1, {n}]")
    return lags.astype(np.int64)


def rv_lags(s, lags):
    """Vector of ``RV(j)`` for every ``j`` in ``lags`` (one kernel call)."""
    y = _prices(s)
    n = y.shape[0] - 1
    lags = _check_lags(n, lags)
    return kernels.lag_sq_sums(y, lags) / (2.0 * (n - lags + 1))


def rv_lag(s, j):
    """Lag-``j`` realized volatility of a :class:`TickSeries` (or raw price array)."""
    return float(rv_lags(s, [j])[0])


def finite_sample_bias(iv, j, n):
    """Diffusion contribution ``j * iv / (2 (n - j + 1))`` to ``RV(j)``."""
    j = np.asarray(j, dtype=float)
    return iv * j / (2.0 * (n - j + 1))


def rv_lag_adjusted(s, j, iv_hat):
    y = _prices(s)
    if iv_hat < 0:
        raise ValueError("iv_hat must be nonnegative")
    return rv_lag(y, j) - float(finite_sample_bias(iv_hat, j, y.shape[0] - 1))


def estimate_noise_moments(s, j_n=20, i_n=10, max_lag=None, iv_hat=None):
    """Estimate ``Var(U)``, ``gamma(1..max_lag)`` and ``sigma2_U``.

    Parameters
    ----------
    s : TickSeries or array_like
    j_n : int
        Large lag whose realized volatility estimates ``Var(U)``.
    i_n : int
        Number of autocovariances summed into ``sigma2_U`` (``i_n <= j_n``).
    max_lag : int, optional
        Number of autocovariances returned; defaults to ``j_n``.
    iv_hat : float, optional
        Integrated-volatility estimate used to remove the finite-sample bias
        from every lagged realized volatility. ``None`` gives the uncorrected
        estimators.

    Notes
    -----
    Negative corrected values are kept as they are (clipping would bias
    ``sigma2_U``); a flag is appended to ``warnings`` instead.
    """
    y = _prices(s)
    n = y.shape[0] - 1
    if max_lag is None:
        max_lag = j_n
    _check_tuning(n, j_n, i_n, max_lag)
    rv = rv_lags(y, np.arange(1, max(max_lag, j_n) + 1))
    return noise_moments_from_rv(rv, n, j_n, i_n, max_lag, iv_hat)


def _check_tuning(n, j_n, i_n, max_lag):
    if not 1 <= i_n <= j_n < n:
        raise ValueError(f"need 1 <= i_n <= j_n < n, got i_n={i_n}, j_n={j_n}, n={n}")
    if max_lag < i_n or max_lag > n:
        raise ValueError(f"max_lag must lie in [i_n, n], got {max_lag}")


def noise_moments_from_rv(rv, n, j_n, i_n, max_lag, iv_hat=None):
    """Same as :func:`estimate_noise_moments` given ``rv[j - 1] = RV(j)``.

    Lets callers that need several corrections of one series (the multi-step
    pipeline) pay for the lagged sums once.
    """
    _check_tuning(n, j_n, i_n, max_lag)
    rv = np.asarray(rv, dtype=float)
    if rv.shape[0] < max(max_lag, j_n):
        raise ValueError("rv vector shorter than max(max_lag, j_n)")
    rv = rv[: max(max_lag, j_n)]
    if iv_hat is not None:
        rv = rv - finite_sample_bias(iv_hat, np.arange(1, rv.shape[0] + 1), n)
    var_u = float(rv[j_n - 1])
    gamma = var_u - rv[:max_lag]
    if max_lag >= j_n:
        gamma[j_n - 1] = 0.0
    sigma2_u = var_u + 2.0 * float(np.sum(gamma[:i_n]))

    notes = []
    if var_u < 0:
        notes.append("negative variance estimate")
    if sigma2_u < 0:
        notes.append("negative long-run variance estimate")
    return NoiseMoments(
        var_u=var_u,
        gamma=np.asarray(gamma, dtype=float),
        sigma2_u=sigma2_u,
        j_n=int(j_n),
        i_n=int(i_n),
        n=int(n),
        iv_used=None if iv_hat is None else float(iv_hat),
        bias_corrected=iv_hat is not None,
        warnings=notes,
    )


def sigma2_u_of(nm):
    """Recompute ``Var(U) + 2 sum_{j <= i_n} gamma(j)`` from stored moments."""
    return nm.var_u + 2.0 * float(np.sum(np.asarray(nm.gamma)[: nm.i_n]))


def _acf_input(source, max_fit_lag):
    if isinstance(source, NoiseMoments):
        acf = source.acf()
    else:
        acf = np.asarray(source, dtype=float)
    if max_fit_lag is None:
        max_fit_lag = acf.shape[0]
    if max_fit_lag > acf.shape[0] or max_fit_lag < 1:
        raise ValueError("max_fit_lag out of range")
    return acf[:max_fit_lag]


def fit_ar1_acf(nm, max_fit_lag=None, tol=1e-6, amplitude=False):
    """Least-squares AR(1) coefficient matching ``acf(j) ~ rho**j``, ``j = 1..max_fit_lag``.

    ``nm`` may also be a raw autocorrelation vector starting at lag 1.

    With ``amplitude=True`` the fit is ``acf(j) ~ A rho**j`` with ``A`` profiled
    out. This is the ACF of iid noise plus AR(1) noise, where
    ``A = var_eps / Var(U)``; the unit-amplitude fit is biased toward zero there.
    """
    acf = _acf_input(nm, max_fit_lag)
    j = np.arange(1, acf.shape[0] + 1)

    def losses(r):
        p = np.power.outer(np.atleast_1d(r), j)
        if not amplitude:
            return np.sum((acf - p) ** 2, axis=1)
        # residual after the best A for each rho
        num = p @ acf
        den = np.sum(p * p, axis=1)
        safe = np.where(den > 0, den, 1.0)
        return np.sum(acf * acf) - np.where(den > 0, num * num / safe, 0.0)

    # the loss can be bimodal in sign, so bracket on a coarse grid first;
    # scanning outward from 0 breaks exact ties (flat loss) toward rho = 0
    grid = np.linspace(-0.999, 0.999, 1999)
    grid = grid[np.argsort(np.abs(grid), kind="stable")]
    best = grid[int(np.argmin(losses(grid)))]
    lo = max(best - 0.001, -0.999)
    hi = min(best + 0.001, 0.999)
    res = optimize.minimize_scalar(lambda r: float(losses(r)[0]), bounds=(lo, hi), method="bounded",
                                   options={"xatol": tol})
    # keep the grid point when the refinement gains nothing (flat loss)
    return float(res.x) if res.fun < losses(best)[0] else float(best)


def order_continuation_probability(rho):
    """``(1 + rho) / 2`` for the order-flow interpretation of an AR(1) noise ACF."""
    return (1.0 + rho) / 2.0


@dataclass
class LogAcfFit:
    slope: float
    intercept: float
    r_squared: float
    lags_used: np.ndarray
    n_excluded: int


def log_acf_regression(nm, max_fit_lag=None):
    """OLS of ``log acf(j)`` on ``j``; lags with nonpositive autocorrelation are dropped."""
    acf = _acf_input(nm, max_fit_lag)
    j = np.arange(1, acf.shape[0] + 1)
    ok = acf > 0
    if ok.sum() < 2:
        raise ValueError("fewer than two lags with positive autocorrelation")
    x = j[ok].astype(float)
    z = np.log(acf[ok])
    slope, intercept = np.polyfit(x, z, 1)
    resid = z - (slope * x + intercept)
    tss = float(np.sum((z - z.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / tss if tss > 0 else 1.0
    return LogAcfFit(float(slope), float(intercept), r2, j[ok], int((~ok).sum()))
