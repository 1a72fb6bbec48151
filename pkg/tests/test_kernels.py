import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hfnoise import kernels
from hfnoise._accel import HAS_NUMBA
from hfnoise.noise_moments import rv_lag
from hfnoise.preavg import block_preaverage, pav_geometry, pav_stat

from oracles import block_preaverage_naive, pav_stat_naive, rv_lag_naive

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
short_series = arrays(np.float64, st.integers(5, 50), elements=finite)


def rel_close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(abs(a), abs(b), 1e-300) or abs(a - b) < 1e-300


# ---------------------------------------------------------------------------
# oracle equivalence on short random series


@settings(max_examples=200, deadline=None)
@given(short_series, st.data())
def test_rv_lag_matches_naive(y, data):
    j = data.draw(st.integers(1, len(y) - 1))
    assert rel_close(rv_lag(y, j), rv_lag_naive(y.tolist(), j))


@settings(max_examples=200, deadline=None)
@given(short_series, st.sampled_from([0.2, 0.5, 1.0]), st.sampled_from(["overlap", "disjoint"]), st.data())
def test_block_preaverage_matches_naive(y, c, scheme, data):
    g = pav_geometry(len(y), c, scheme)
    m = data.draw(st.integers(1, g.m_n))
    got = block_preaverage(y, g, m)
    want = block_preaverage_naive(y.tolist(), g.k_n, m, scheme)
    assert abs(got - want) <= 1e-12 * max(1.0, np.abs(y).max())


@settings(max_examples=200, deadline=None)
@given(short_series, st.sampled_from([0.2, 0.5, 1.0]), st.sampled_from([2, 4]), st.sampled_from(["overlap", "disjoint"]))
def test_pav_stat_matches_naive(y, c, r, scheme):
    got = pav_stat(y, c, r, scheme)
    want = pav_stat_naive(y.tolist(), c, r, scheme)
    scale = max(1.0, np.abs(y).max()) ** r * len(y)
    assert abs(got - want) <= 1e-12 * scale


def test_block_hand_check_k2():
    y = np.array([0.3, -1.2, 0.8, 2.5, -0.4, 1.1, 0.0, 0.9, 3.0])
    want = ((y[2] - y[0]) + (y[3] - y[1]) + (y[4] - y[2])) / 3
    assert kernels.block_preaverages(y, 2, 1, 3)[0] == pytest.approx(want, rel=1e-15)
    want_disjoint = ((y[2] - y[0]) + (y[3] - y[1])) / 2
    assert kernels.block_preaverages(y, 2, 1, 2)[0] == pytest.approx(want_disjoint, rel=1e-15)


def test_block_preaverage_ramp():
    y = 0.7 * np.arange(200.0)
    for n_inc in (5, 6):
        assert np.allclose(kernels.block_preaverages(y, 5, 19, n_inc), 0.7 * 5, rtol=1e-14)


def test_block_geometry_guard():
    with pytest.raises(ValueError):
        kernels.block_preaverages(np.zeros(10), 3, 2, 4)
    with pytest.raises(ValueError):
        kernels.block_preaverages(np.zeros(100), 3, 2, 7)


# ---------------------------------------------------------------------------
# backend agreement


@needs_numba
def test_lag_sq_sums_backends_agree(rng):
    y = np.cumsum(rng.standard_normal(20001)) * 1e-4
    lags = np.arange(1, 31, dtype=np.int64)
    a = kernels._nb_lag_sq_sums(y, lags)
    b = kernels._np_lag_sq_sums(y, lags)
    assert np.allclose(a, b, rtol=1e-14, atol=0)


@needs_numba
@pytest.mark.parametrize("n_inc_extra", [0, 1])
def test_block_preaverages_backends_agree(rng, n_inc_extra):
    y = 1.6 + np.cumsum(rng.standard_normal(23401)) * 1e-4
    k, m = 30, 390
    a = kernels._nb_block_preaverages(y, k, m, k + n_inc_extra)
    b = kernels._np_block_preaverages(y, k, m, k + n_inc_extra)
    # the numpy path telescopes sums of levels, so allow cancellation error
    assert np.allclose(a, b, rtol=0, atol=1e-12)


@needs_numba
def test_ar1_backends_agree(rng):
    z = rng.standard_normal(5000)
    a = kernels._nb_ar1_recursion(z, -0.7, 0.3)
    b = kernels._np_ar1_recursion(z, -0.7, 0.3)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    assert a[0] == 0.3 and a[1] == pytest.approx(-0.7 * 0.3 + z[1])


@needs_numba
def test_sv_backends_agree(rng):
    zw, zb = rng.standard_normal((2, 3000))
    args = (1 / 3000, 1.6, 0.5, 1.6, 5.0, 0.04, 3.0, -0.5, 0.04)
    xa, va = kernels._nb_sv_euler(zw, zb, *args)
    xb, vb = kernels._np_sv_euler(zw, zb, *args)
    assert np.allclose(xa, xb, rtol=1e-13) and np.allclose(va, vb, rtol=1e-13, atol=1e-16)
    assert (va >= 0).all()


@needs_numba
def test_compensated_sum_backends(rng):
    x = rng.standard_normal(100000) * 1e-8
    assert kernels._nb_compensated_sum(x) == pytest.approx(math.fsum(x), rel=1e-15)
    x = np.array([1e16, 1.0, -1e16, 1.0])
    assert kernels._nb_compensated_sum(x) == 2.0


def test_numpy_backend_in_subprocess():
    """The env switch selects the fallback before import."""
    import os
    import subprocess
    import sys

    code = (
        "import numpy as np; from hfnoise import kernels, backend;"
        "from hfnoise.noise_moments import rv_lag;"
        "print(backend(), rv_lag(np.array([0., 1., 0., 1.]), 1))"
    )
    env = dict(os.environ, HFNOISE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "0.5"]
