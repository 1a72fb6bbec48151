"""Tick series container and sampling-scheme transforms.

Estimators treat every series as equidistant in observation index; the
timestamps only matter for the transforms in this module and for reporting.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TickSeries",
    "calendar_subsample",
    "tick_filter",
    "time_warp_grid",
]


@dataclass(frozen=True, eq=False)
class TickSeries:
    """Ordered log-price observations.

    Parameters
    ----------
    timestamps : array_like
        Seconds since session open (or any time unit), strictly increasing.
    log_prices : array_like
        Observed log-prices, same length as ``timestamps``.
    label : str
        Free-form provenance string.
    meta : dict
        Extra metadata carried along by transforms (e.g. drop counts).
    """

    timestamps: np.ndarray
    log_prices: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.ascontiguousarray(self.timestamps, dtype=np.float64)
        y = np.ascontiguousarray(self.log_prices, dtype=np.float64)
        if t.ndim != 1 or y.ndim != 1:
            raise ValueError("timestamps and log_prices must be 1-d")
        if t.shape != y.shape:
            raise ValueError(
                f"length mismatch: {t.shape[0]} timestamps vs {y.shape[0]} prices"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite timestamp or price")
        if t.shape[0] > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "log_prices", y)

    def __len__(self):
        return self.log_prices.shape[0]

    @property
    def n(self):
        """Index of the last observation (observations are numbered 0..n)."""
        return len(self) - 1

    @classmethod
    def from_prices(cls, log_prices, horizon=1.0, label=""):
        """Wrap a price vector on the regular grid ``i * horizon / n``."""
        y = np.asarray(log_prices, dtype=np.float64)
        if y.shape[0] < 2:
            t = np.zeros(y.shape[0])
        else:
            t = np.linspace(0.0, horizon, y.shape[0])
        return cls(t, y, label)

    def scaled(self, a):
        return TickSeries(self.timestamps, a * self.log_prices, self.label, dict(self.meta))

    def take(self, idx, label=None, **meta):
        idx = np.asarray(idx)
        return TickSeries(
            self.timestamps[idx],
            self.log_prices[idx],
            self.label if label is None else label,
            {**self.meta, **meta},
        )

    def __eq__(self, other):
        if not isinstance(other, TickSeries):
            return NotImplemented
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.log_prices, other.log_prices)
        )


def calendar_subsample(s, grid_step):
    """Keep the first observation in every calendar cell of width ``grid_step``.

    Cells without an observation produce nothing (no forward filling), and the
    kept points retain their original trade timestamps.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    if len(s) == 0:
        raise ValueError("cannot subsample an empty series")
    cells = np.floor(s.timestamps / grid_step).astype(np.int64)
    keep = np.empty(len(s), dtype=bool)
    keep[0] = True
    keep[1:] = cells[1:] != cells[:-1]
    return s.take(
        np.flatnonzero(keep),
        label=f"{s.label}|calendar:{grid_step:g}",
        calendar_step=grid_step,
        calendar_timestamp="trade",
    )


def tick_filter(s):
    """Suppress zero returns: keep the first price and every subsequent change."""
    if len(s) == 0:
        raise ValueError("cannot filter an empty series")
    y = s.log_prices
    keep = np.empty(len(s), dtype=bool)
    keep[0] = True
    # consecutive duplicates only, so comparing with the previous raw price is
    # the same as comparing with the last kept one
    keep[1:] = y[1:] != y[:-1]
    label = s.label if s.label.endswith("|tick") else f"{s.label}|tick"
    return s.take(np.flatnonzero(keep), label=label)


def time_warp_grid(n_obs, f, check_points=None):
    """Observation times ``t_i = f(i / n)``, ``i = 0..n``, for a monotone warp ``f``.

    ``f`` must map [0, 1] onto itself with ``f(0) = 0``, ``f(1) = 1`` and be
    strictly increasing; monotonicity is checked on the output grid and on a
    refined grid of ``check_points`` points.
    """
    if n_obs < 2:
        raise ValueError("n_obs must be at least 2")
    n = n_obs - 1
    u = np.arange(n_obs) / n
    t = np.asarray(f(u), dtype=np.float64)
    if t.shape != u.shape:
        raise ValueError("f must map arrays elementwise")
    if not np.isclose(t[0], 0.0, atol=1e-12) or not np.isclose(t[-1], 1.0, atol=1e-12):
        raise ValueError("f must satisfy f(0) = 0 and f(1) = 1")
    fine = np.linspace(0.0, 1.0, check_points or max(4 * n_obs, 1001))
    for grid in (t, np.asarray(f(fine), dtype=np.float64)):
        if not np.all(np.diff(grid) > 0):
            raise ValueError("f is not strictly increasing on the evaluation grid")
    t[0], t[-1] = 0.0, 1.0
    return t
