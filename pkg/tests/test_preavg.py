import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import toeplitz

from hfnoise.errors import GeometryError
from hfnoise.preavg import (
    IvEstimate,
    block_preaverage,
    block_preaverages,
    iv_estimate,
    iv_from_pav,
    normal_quantile,
    normalized_stat,
    optimal_c,
    pav_geometry,
    pav_stat,
    pav_stats,
)
from hfnoise.sim import Ar1NoiseConfig, OuConfig, model_autocov, model_sigma2_u, simulate_observed

BENCH_NOISE = Ar1NoiseConfig(var_v=2.9e-8, var_eps=4.3e-8, rho=-0.7)


# ---------------------------------------------------------------------------
# geometry


@pytest.mark.parametrize("n, k, m", [(23400, 30, 390), (468000, 136, 1720)])
def test_geometry_examples(n, k, m):
    g = pav_geometry(n + 1, 0.2)
    assert (g.k_n, g.m_n, g.n) == (k, m, n)
    assert 2 * g.m_n * g.k_n <= g.n


def test_geometry_errors():
    with pytest.raises(GeometryError):
        pav_geometry(10, 5.0)
    with pytest.raises(ValueError):
        pav_geometry(100, 0.0)
    with pytest.raises(ValueError):
        pav_geometry(100, 0.2, scheme="sliding")


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 10**6), st.floats(0.01, 2.0))
def test_geometry_always_feasible(n_obs, c):
    try:
        g = pav_geometry(n_obs, c)
    except GeometryError:
        assert 2 * max(1, math.floor(c * math.sqrt(n_obs - 1))) > n_obs - 1
        return
    assert g.k_n >= 1 and g.m_n >= 1 and 2 * g.m_n * g.k_n <= g.n


# ---------------------------------------------------------------------------
# block pre-averages


def test_block_constant_and_ramp():
    g = pav_geometry(401, 0.2)
    assert not block_preaverages(np.full(401, 1.6), g).any()
    ramp = 0.01 * np.arange(401)
    assert np.allclose(block_preaverages(ramp, g), 0.01 * g.k_n, rtol=1e-13)


def test_block_index_range(rng):
    g = pav_geometry(401, 0.2)
    y = rng.standard_normal(401)
    with pytest.raises(IndexError):
        block_preaverage(y, g, 0)
    with pytest.raises(IndexError):
        block_preaverage(y, g, g.m_n + 1)
    assert block_preaverage(y, g, 3) == pytest.approx(block_preaverages(y, g)[2], rel=1e-14)


@pytest.mark.parametrize("scheme", ["overlap", "disjoint"])
def test_block_support(rng, scheme):
    g = pav_geometry(1001, 0.3, scheme)
    k = g.k_n
    y = rng.standard_normal(1001)
    base = block_preaverages(y, g)
    m = 4
    lo, hi = (2 * m - 2) * k, 2 * m * k
    for idx in (lo - 1, hi + 1):
        z = y.copy()
        z[idx] += 10.0
        assert block_preaverages(z, g)[m - 1] == base[m - 1]
    z = y.copy()
    z[hi] += 10.0
    changed = block_preaverages(z, g)[m - 1] != base[m - 1]
    assert changed == (scheme == "overlap")


# ---------------------------------------------------------------------------
# PAV statistics


def test_pav_constant_zero():
    assert pav_stat(np.full(1000, 2.0), 0.2, 2) == 0.0
    assert pav_stat(np.full(1000, 2.0), 0.2, 4) == 0.0


def test_pav_bad_r():
    with pytest.raises(ValueError):
        pav_stat(np.arange(100.0), 0.2, 3)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100.0), st.sampled_from(["overlap", "disjoint"]))
def test_pav_homogeneity(seed, a, scheme):
    y = np.cumsum(np.random.default_rng(seed).standard_normal(2001))
    for r in (2, 4):
        p = pav_stat(y, 0.2, r, scheme)
        assert p >= 0
        assert pav_stat(a * y, 0.2, r, scheme) == pytest.approx(a**r * p, rel=1e-12)


def test_pav4_scaling_matches_definition(rng):
    y = rng.standard_normal(2501)
    g = pav_geometry(2501, 0.2)
    ybar = block_preaverages(y, g)
    assert pav_stat(y, 0.2, 4) == pytest.approx(g.n**0.5 * np.sum(ybar**4), rel=1e-13)
    assert pav_stat(y, 0.2, 2) == pytest.approx(np.sum(ybar**2), rel=1e-13)


def _block_coefficients(k, n_inc):
    """Weights on observations 0..2k of one block mean, by direct counting."""
    a = np.zeros(2 * k + 1)
    for i in range(n_inc):
        a[i + k] += 1.0 / n_inc
        a[i] -= 1.0 / n_inc
    return a


def expected_pav2(n_obs, c, sigma2, noise, scheme):
    """Exact E[PAV(Y, 2)] for Brownian X plus stationary noise."""
    g = pav_geometry(n_obs, c, scheme)
    a = _block_coefficients(g.k_n, g.n_inc)
    incr_w = -np.cumsum(a)[:-1]  # weights on the 2k increments
    diffusion = sigma2 / g.n * np.sum(incr_w**2)
    gam = model_autocov(noise, np.arange(a.size))
    noise_part = a @ toeplitz(gam) @ a
    return g.m_n * (diffusion + noise_part)


@pytest.mark.parametrize("scheme", ["overlap", "disjoint"])
def test_pav2_mean_matches_exact_expectation(scheme):
    price = OuConfig(sigma2=6e-5, delta=0.0, mu=1.6, x0=1.6)
    vals = [pav_stat(simulate_observed(price, BENCH_NOISE, 23401, 1.0, s).series, 0.2, 2, scheme) for s in range(400)]
    want = expected_pav2(23401, 0.2, 6e-5, BENCH_NOISE, scheme)
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - want) < 3 * se
    # both layouts share the large-sample limit IV/3 + sigma2_U/c^2
    limit = 6e-5 / 3 + model_sigma2_u(BENCH_NOISE) / 0.04
    assert limit == pytest.approx(2.0915e-5, rel=1e-4)
    assert want == pytest.approx(limit, rel=0.02)


def test_layout_diffusion_factors():
    # sum of squared increment weights relative to the limit 2k/3:
    # overlap (2k + 1) / (2k + 2), disjoint 1 + 1 / (2k^2)
    k = 30
    for scheme, factor in (("overlap", (2 * k + 1) / (2 * k + 2)), ("disjoint", 1 + 1 / (2 * k * k))):
        g = pav_geometry(23401, 0.2, scheme)
        w = -np.cumsum(_block_coefficients(k, g.n_inc))[:-1]
        assert np.sum(w**2) / (2 * k / 3) == pytest.approx(factor, rel=1e-12)


# ---------------------------------------------------------------------------
# IV estimate


def test_iv_identity_and_interval(rng):
    y = 1.6 + np.cumsum(rng.standard_normal(23401)) * 5e-5 + rng.standard_normal(23401) * 2e-4
    st_ = pav_stats(y, 0.2)
    est = iv_estimate(y, 0.2, 3.659e-8)
    assert est.iv == 3 * (st_.pav2 - 3.659e-8 / 0.04)
    assert est.tau == math.sqrt(6 * st_.pav4)
    half = 1.959963984540054 * est.tau / 23400**0.25
    assert est.ci_low == pytest.approx(est.iv - half, rel=1e-13)
    assert est.ci_low <= est.iv <= est.ci_high
    assert iv_estimate(y, 0.2, 0.0).iv == 3 * st_.pav2


def test_iv_arithmetic_example():
    # wrong-oracle illustration: 3 (8.366e-6 - 3.659e-8 / 0.04)
    from hfnoise.preavg import PavGeometry, PavStats

    pav = PavStats(PavGeometry(0.2, 30, 390, 23400), 8.366e-6, 1e-9)
    assert iv_from_pav(pav, 3.659e-8).iv == pytest.approx(2.235e-5, rel=1e-3)


def test_negative_sigma2_flagged(rng):
    est = iv_estimate(rng.standard_normal(1001), 0.2, -1e-6)
    assert est.flags == ["negative sigma2_u used"]


def test_alpha_validation(rng):
    with pytest.raises(ValueError):
        iv_estimate(rng.standard_normal(1001), 0.2, 0.0, alpha=1.0)


def test_normal_quantile():
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.005) == pytest.approx(-2.5758293035489004, abs=1e-12)


def test_optimal_c():
    assert optimal_c(1.0, 1.0) == 3.0
    assert optimal_c(3.659e-8, 6e-5) == pytest.approx(3 * math.sqrt(3.659e-8 / 6e-5), rel=1e-14)
    assert optimal_c(3.659e-8, 6e-5) == pytest.approx(0.0741, abs=1e-4)
    assert optimal_c(1e-2, 1.0) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        optimal_c(1e-8, 0.0)
    with pytest.raises(ValueError):
        optimal_c(-1e-8, 1.0)


def _est(iv, tau, n=10000):
    return IvEstimate(iv, tau, iv, iv, 0.0, "raw", n, 0.2)


def test_normalized_stat():
    assert normalized_stat(_est(6e-5, 1e-4), 6e-5) == 0.0
    tau = 2e-4
    assert normalized_stat(_est(6e-5 + tau / 10000**0.25, tau), 6e-5) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        normalized_stat(_est(1.0, 0.0), 1.0)


def test_serialization(tmp_path, rng):
    y = rng.standard_normal(2001)
    st_ = pav_stats(y, 0.2, keep_blocks=True)
    d = json.loads(json.dumps(st_.to_dict(with_blocks=True)))
    assert d["geometry"]["k_n"] == st_.geometry.k_n and len(d["block_means"]) == st_.geometry.m_n
    st_.blocks_to_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "block,value" and float(lines[1].split(",")[1]) == st_.block_means[0]
    est = iv_estimate(y, 0.2, 0.0)
    est.to_json(tmp_path / "e.json")
    assert json.loads((tmp_path / "e.json").read_text())["iv"] == est.iv
