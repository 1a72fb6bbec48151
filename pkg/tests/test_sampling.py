import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hfnoise.sampling import TickSeries, calendar_subsample, tick_filter, time_warp_grid


def series(t, y, label="x"):
    return TickSeries(np.asarray(t, float), np.asarray(y, float), label)


@st.composite
def tick_series(draw):
    n = draw(st.integers(1, 60))
    gaps = draw(st.lists(st.floats(0.01, 3.0), min_size=n, max_size=n))
    prices = draw(st.lists(st.sampled_from([1.0, 1.5, 2.0, 2.5]), min_size=n, max_size=n))
    return series(np.cumsum(gaps), prices)


def pairs(s):
    return set(zip(s.timestamps.tolist(), s.log_prices.tolist()))


# ---------------------------------------------------------------------------
# TickSeries


def test_invariants_enforced():
    with pytest.raises(ValueError, match="length"):
        series([0, 1], [1.0])
    with pytest.raises(ValueError, match="increasing"):
        series([0, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError, match="non-finite"):
        series([0, 1], [1, np.nan])
    s = series([0, 1], [1, 2])
    with pytest.raises(ValueError):
        s.log_prices[0] = 5.0


def test_n_is_last_index():
    assert series([0, 1, 2], [1, 1, 1]).n == 2


# ---------------------------------------------------------------------------
# calendar


def test_calendar_first_in_cell():
    s = series([0.2, 0.7, 1.4], [1, 2, 3])
    out = calendar_subsample(s, 1.0)
    assert out.timestamps.tolist() == [0.2, 1.4]
    assert out.log_prices.tolist() == [1, 3]
    assert out.meta["calendar_timestamp"] == "trade"


def test_calendar_fine_grid_identity():
    s = series([0.0, 0.5, 1.7, 3.0], [1, 2, 3, 4])
    assert calendar_subsample(s, 0.1) == s


def test_calendar_density():
    rng = np.random.default_rng(0)
    t = np.cumsum(rng.exponential(1 / 10.5, size=int(23400 * 10.5)))
    t = t[t < 23400]
    out = calendar_subsample(series(t, np.zeros_like(t)), 1.0)
    # Poisson rate 10.5: a second is empty with probability e^-10.5
    assert len(out) == pytest.approx(23400 * (1 - np.exp(-10.5)), rel=2e-3)
    assert len(out) == pytest.approx(21691, rel=0.08)


def test_calendar_errors():
    with pytest.raises(ValueError):
        calendar_subsample(series([0, 1], [1, 1]), 0.0)


@settings(max_examples=100, deadline=None)
@given(tick_series(), st.sampled_from([0.5, 1.0, 2.5]))
def test_calendar_properties(s, g):
    out = calendar_subsample(s, g)
    assert calendar_subsample(out, g) == out
    assert pairs(out) <= pairs(s)
    cells = np.floor(out.timestamps / g)
    assert np.all(np.diff(cells) > 0)


# ---------------------------------------------------------------------------
# tick filter


def test_tick_filter_example():
    s = series(range(5), [1, 1, 2, 2, 1])
    assert tick_filter(s).log_prices.tolist() == [1, 2, 1]


def test_tick_filter_alternating_identity():
    s = series(range(6), [1, 2, 1, 2, 1, 2])
    assert tick_filter(s) == s


def test_tick_filter_zero_return_share():
    rng = np.random.default_rng(1)
    moves = rng.random(100000) < 0.3
    y = np.cumsum(np.where(moves, rng.choice([-1.0, 1.0], 100000), 0.0))
    out = tick_filter(series(np.arange(100000.0), y))
    assert len(out) / 100000 == pytest.approx(0.3, abs=0.01)


@settings(max_examples=100, deadline=None)
@given(tick_series())
def test_tick_filter_properties(s):
    once = tick_filter(s)
    twice = tick_filter(once)
    assert twice == once and twice.label == once.label
    assert np.all(np.diff(once.log_prices) != 0)
    assert pairs(once) <= pairs(s)


# ---------------------------------------------------------------------------
# time warp


def test_warp_identity():
    assert np.allclose(time_warp_grid(11, lambda x: x), np.arange(11) / 10, rtol=0, atol=1e-15)


def test_warp_square_accepted():
    t = time_warp_grid(101, lambda x: x**2)
    assert t[0] == 0.0 and t[-1] == 1.0
    assert np.all(np.diff(t) > 0) and np.diff(t)[0] < np.diff(t)[-1]


def test_warp_exponential_endpoints():
    t = time_warp_grid(1001, lambda x: np.expm1(x) / np.expm1(1.0))
    assert t[0] == 0.0 and t[-1] == 1.0 and np.all(np.diff(t) > 0)


def test_warp_rejects_bad_maps():
    with pytest.raises(ValueError, match="increasing"):
        time_warp_grid(101, lambda x: x + 0.2 * np.sin(6 * np.pi * x))
    with pytest.raises(ValueError, match="f\\(0\\)"):
        time_warp_grid(11, lambda x: 0.5 + x / 2)
    # non-monotone only between grid points, caught by the refined grid
    with pytest.raises(ValueError, match="increasing"):
        time_warp_grid(3, lambda x: x + 0.3 * np.sin(4 * np.pi * x))
