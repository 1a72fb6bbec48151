"""Hot numerical kernels.

Every kernel exists twice: a numba version (``_nb_*``) and a numpy/scipy
version (``_np_*``). The public names dispatch on :data:`USE_NUMBA`, which is
read once at import time from the ``HFNOISE_DISABLE_NUMBA`` environment
variable. Both paths must agree to rounding; ``tests/test_kernels.py`` checks
this and ``benchmarks/bench_kernels.py`` times them against each other.

Lagged sums of squared differences are accumulated with Neumaier-compensated
summation (numba) or ``math.fsum`` (numpy): the terms are ~1e-8 and there can
be ~5e5 of them, which is enough to lose digits in a naive running sum.
"""

import math

import numpy as np
from scipy.signal import lfilter

from ._accel import USE_NUMBA, njit

__all__ = [
    "lag_sq_sums",
    "block_preaverages",
    "ar1_recursion",
    "sv_euler",
    "compensated_sum",
]


# ---------------------------------------------------------------------------
# numba kernels


@njit
def _nb_compensated_sum(x):
    s = 0.0
    comp = 0.0
    for i in range(x.shape[0]):
        v = x[i]
        t = s + v
        if abs(s) >= abs(v):
            comp += (s - t) + v
        else:
            comp += (v - t) + s
        s = t
    return s + comp


@njit
def _nb_lag_sq_sums(y, lags):
    n_obs = y.shape[0]
    out = np.empty(lags.shape[0])
    for q in range(lags.shape[0]):
        j = lags[q]
        s = 0.0
        comp = 0.0
        for i in range(n_obs - j):
            d = y[i + j] - y[i]
            v = d * d
            t = s + v
            if s >= v:
                comp += (s - t) + v
            else:
                comp += (v - t) + s
            s = t
        out[q] = s + comp
    return out


@njit
def _nb_block_preaverages(y, k, m, n_inc):
    out = np.empty(m)
    for b in range(m):
        start = 2 * b * k
        s = 0.0
        comp = 0.0
        for i in range(start, start + n_inc):
            v = y[i + k] - y[i]
            t = s + v
            if abs(s) >= abs(v):
                comp += (s - t) + v
            else:
                comp += (v - t) + s
            s = t
        out[b] = (s + comp) / n_inc
    return out


@njit
def _nb_ar1_recursion(innov, phi, init):
    out = np.empty(innov.shape[0])
    if innov.shape[0] == 0:
        return out
    out[0] = init
    for i in range(1, innov.shape[0]):
        out[i] = phi * out[i - 1] + innov[i]
    return out


@njit
def _nb_sv_euler(z_w, z_b, dt, x0, delta, mu1, kappa, mu2, gamma_vol, rho_lev, v0):
    n = z_w.shape[0] + 1
    x = np.empty(n)
    v = np.empty(n)
    x[0] = x0
    v_raw = v0
    v[0] = max(v0, 0.0)
    sq = math.sqrt(dt)
    ortho = math.sqrt(1.0 - rho_lev * rho_lev)
    for i in range(n - 1):
        vp = max(v_raw, 0.0)
        vol = math.sqrt(vp)
        zw = z_w[i]
        zb = rho_lev * zw + ortho * z_b[i]
        x[i + 1] = x[i] - delta * (x[i] - mu1) * dt + vol * sq * zw
        v_raw = v_raw + kappa * (mu2 - vp) * dt + gamma_vol * vol * sq * zb
        v[i + 1] = max(v_raw, 0.0)
    return x, v


# ---------------------------------------------------------------------------
# numpy kernels


def _np_compensated_sum(x):
    return math.fsum(x)


def _np_lag_sq_sums(y, lags):
    out = np.empty(len(lags))
    for q, j in enumerate(lags):
        d = y[j:] - y[:-j]
        out[q] = math.fsum(d * d)
    return out


def _np_block_preaverages(y, k, m, n_inc):
    if m == 0:
        return np.empty(0)
    # the increments y[i + k] - y[i], i = 2bk .. 2bk + n_inc - 1, telescope to
    # (sum of upper half) - (sum of lower half); with n_inc = k + 1 each half
    # also picks up its right endpoint
    base = y[: 2 * m * k + 1] - y[0]
    chunks = base[: 2 * m * k].reshape(2 * m, k).sum(axis=1)
    lower = chunks[0::2]
    upper = chunks[1::2]
    if n_inc == k + 1:
        lower = lower + base[k : 2 * m * k : 2 * k]
        upper = upper + base[2 * k : 2 * m * k + 1 : 2 * k]
    return (upper - lower) / n_inc


def _np_ar1_recursion(innov, phi, init):
    innov = np.asarray(innov, dtype=float)
    if innov.shape[0] == 0:
        return np.empty(0)
    out = np.empty(innov.shape[0])
    out[0] = init
    if innov.shape[0] > 1:
        out[1:], _ = lfilter([1.0], [1.0, -phi], innov[1:], zi=[phi * init])
    return out


def _np_sv_euler(z_w, z_b, dt, x0, delta, mu1, kappa, mu2, gamma_vol, rho_lev, v0):
    n = z_w.shape[0] + 1
    x = np.empty(n)
    v = np.empty(n)
    x[0] = x0
    v_raw = v0
    v[0] = max(v0, 0.0)
    sq = math.sqrt(dt)
    ortho = math.sqrt(1.0 - rho_lev * rho_lev)
    zb_all = rho_lev * z_w + ortho * z_b
    xi = x0
    for i, (zw, zb) in enumerate(zip(z_w.tolist(), zb_all.tolist())):
        vp = v_raw if v_raw > 0.0 else 0.0
        vol = math.sqrt(vp)
        xi = xi - delta * (xi - mu1) * dt + vol * sq * zw
        x[i + 1] = xi
        v_raw = v_raw + kappa * (mu2 - vp) * dt + gamma_vol * vol * sq * zb
        v[i + 1] = v_raw if v_raw > 0.0 else 0.0
    return x, v


# ---------------------------------------------------------------------------
# dispatch


def _as_f64(y):
    return np.ascontiguousarray(y, dtype=np.float64)


def compensated_sum(x):
    """Sum of ``x`` with compensated (error-free in practice) accumulation."""
    x = _as_f64(x)
    return float(_nb_compensated_sum(x) if USE_NUMBA else _np_compensated_sum(x))


def lag_sq_sums(y, lags):
    """Return ``sum_i (y[i+j] - y[i])**2`` for every ``j`` in ``lags``.

    Lags must satisfy ``1 <= j < len(y)``; validation is the caller's job.
    """
    y = _as_f64(y)
    lags = np.ascontiguousarray(lags, dtype=np.int64)
    if USE_NUMBA:
        return _nb_lag_sq_sums(y, lags)
    return _np_lag_sq_sums(y, lags)


def block_preaverages(y, k, m, n_inc=None):
    """Flat-weight pre-averages of ``m`` consecutive blocks of half-width ``k``.

    Block ``b`` (0-based) averages the ``n_inc`` increments ``y[i + k] - y[i]``
    for ``i = 2bk, ..., 2bk + n_inc - 1``. ``n_inc`` is ``k + 1`` (default;
    neighbouring blocks share one endpoint) or ``k`` (fully disjoint blocks).
    """
    y = _as_f64(y)
    k, m = int(k), int(m)
    n_inc = k + 1 if n_inc is None else int(n_inc)
    if n_inc not in (k, k + 1):
        raise ValueError("n_inc must be k or k + 1")
    if 2 * m * k + n_inc - k > y.shape[0]:
        raise ValueError("block geometry exceeds series length")
    if USE_NUMBA:
        return _nb_block_preaverages(y, k, m, n_inc)
    return _np_block_preaverages(y, k, m, n_inc)


def ar1_recursion(innov, phi, init):
    """``out[0] = init``; ``out[i] = phi * out[i-1] + innov[i]`` (``innov[0]`` unused)."""
    innov = _as_f64(innov)
    if USE_NUMBA:
        return _nb_ar1_recursion(innov, float(phi), float(init))
    return _np_ar1_recursion(innov, float(phi), float(init))


def sv_euler(z_w, z_b, dt, x0, delta, mu1, kappa, mu2, gamma_vol, rho_lev, v0):
    """Full-truncation Euler scheme for the mean-reverting SV price model.

    Returns the price grid and the (truncated, nonnegative) variance grid,
    each of length ``len(z_w) + 1``.
    """
    z_w = _as_f64(z_w)
    z_b = _as_f64(z_b)
    args = (float(dt), float(x0), float(delta), float(mu1), float(kappa),
            float(mu2), float(gamma_vol), float(rho_lev), float(v0))
    if USE_NUMBA:
        return _nb_sv_euler(z_w, z_b, *args)
    return _np_sv_euler(z_w, z_b, *args)
