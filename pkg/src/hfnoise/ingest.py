"""Tick-data CSV ingestion.

Rows are split by trading day, restricted to the session window (inclusive at
both ends), cleaned of nonpositive prices and duplicate timestamps, and turned
into :class:`~hfnoise.sampling.TickSeries` with timestamps in seconds since
the session open. Every dropped row is counted under one reason, so
``rows_in == rows_kept + sum(drops.values())``.

No bounce-back or outlier filtering is applied: it would change the noise
moments the estimators are meant to recover.
"""

import csv
import datetime as _dt
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .sampling import TickSeries

__all__ = [
    "IngestSpec",
    "IngestResult",
    "load_days",
    "write_series_csv",
    "read_series_csv",
    "DROP_REASONS",
]

DROP_REASONS = ("unparseable", "outside_session", "nonpositive_price", "duplicate_timestamp")


def _parse_clock(text):
    """``HH:MM:SS[.fff]`` -> seconds after midnight."""
    h, m, s = text.strip().split(":")
    out = int(h) * 3600 + int(m) * 60 + float(s)
    if not (0 <= int(m) < 60 and 0 <= float(s) < 61):
        raise ValueError(f"bad clock time {text!r}")
    return out


@dataclass(frozen=True)
class IngestSpec:
    """Where and how to read a tick file.

    Columns are given by header name or by 0-based index. With ``date_col``
    set to ``None`` the timestamp column must carry the date too, either as
    ``YYYY-MM-DD HH:MM:SS[.fff]`` / ISO ``T`` form or via ``timestamp_format``
    (a ``strptime`` pattern; slower).
    """

    path: str
    time_col: object = "time"
    price_col: object = "price"
    date_col: object = "date"
    timestamp_format: str = None
    session_start: str = "09:30:00"
    session_end: str = "16:00:00"
    price_scale: str = "raw"
    delimiter: str = ","
    header: bool = True
    dedupe: str = "keep-first"

    def __post_init__(self):
        try:
            start = _parse_clock(self.session_start)
            end = _parse_clock(self.session_end)
        except ValueError as exc:
            raise ConfigError(f"bad session window: {exc}") from None
        if not start < end:
            raise ConfigError("session start must precede session end")
        if self.price_scale not in ("raw", "log"):
            raise ConfigError("price_scale must be 'raw' or 'log'")
        if self.dedupe != "keep-first":
            raise ConfigError("only the 'keep-first' dedupe rule is supported")
        if not self.header:
            for name in ("time_col", "price_col", "date_col"):
                v = getattr(self, name)
                if v is not None and not isinstance(v, int):
                    raise ConfigError(f"{name} must be a column index when the file has no header")

    @property
    def window(self):
        return _parse_clock(self.session_start), _parse_clock(self.session_end)

    @classmethod
    def from_dict(cls, d):
        names = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown field(s) {unknown} in IngestSpec")
        if "path" not in d:
            raise ConfigError("missing field 'path' in IngestSpec")
        return cls(**d)


@dataclass
class IngestResult:
    """Per-day series plus the bookkeeping of what was dropped and why."""

    days: list
    rows_in: int
    rows_kept: int
    drops: dict
    messages: list = field(default_factory=list)
    empty_days: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.days)

    def __len__(self):
        return len(self.days)

    def to_dict(self):
        return {
            "days": [{"date": d, "n_obs": len(s)} for d, s in self.days],
            "rows_in": self.rows_in,
            "rows_kept": self.rows_kept,
            "drops": dict(self.drops),
            "empty_days": list(self.empty_days),
            "messages": list(self.messages),
        }


def _resolve(col, header, what):
    if col is None:
        return None
    if isinstance(col, int):
        return col
    if header is None or col not in header:
        raise ConfigError(f"{what} column {col!r} not found in header {header}")
    return header.index(col)


def _split_stamp(text, fmt):
    if fmt is not None:
        t = _dt.datetime.strptime(text.strip(), fmt)
        return t.date().isoformat(), t.hour * 3600 + t.minute * 60 + t.second + t.microsecond * 1e-6
    text = text.strip().replace("T", " ")
    date, clock = text.split(" ", 1)
    return _dt.date.fromisoformat(date).isoformat(), _parse_clock(clock)


def load_days(spec, max_messages=100):
    """Read ``spec.path`` and return one :class:`TickSeries` per trading day.

    Parameters
    ----------
    spec : IngestSpec
    max_messages : int
        Cap on the number of per-row diagnostics kept (counts are always exact).

    Returns
    -------
    IngestResult
        Iterable over ``(date, TickSeries)`` in date order. Series labels are
        the ISO date; ``meta`` records the drop counts of that day.
    """
    start, end = spec.window
    drops = dict.fromkeys(DROP_REASONS, 0)
    messages = []
    per_day = defaultdict(lambda: ([], [], []))  # times, prices, line numbers
    date_cache = {}
    seen = set()
    rows_in = 0

    def note(reason, line, why):
        drops[reason] += 1
        if len(messages) < max_messages:
            messages.append(f"line {line}: {reason}: {why}")

    try:
        fh = open(spec.path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {spec.path}: {exc}") from None
    with fh:
        reader = csv.reader(fh, delimiter=spec.delimiter)
        header = None
        if spec.header:
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                header = []
        it = _resolve(spec.time_col, header, "time")
        ip = _resolve(spec.price_col, header, "price")
        idate = _resolve(spec.date_col, header, "date")
        need = max(i for i in (it, ip, idate) if i is not None)
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            rows_in += 1
            try:
                if len(row) <= need:
                    raise ValueError(f"expected at least {need + 1} fields, got {len(row)}")
                if idate is None:
                    date, clock = _split_stamp(row[it], spec.timestamp_format)
                else:
                    raw_date = row[idate].strip()
                    date = date_cache.get(raw_date)
                    if date is None:
                        date = _dt.date.fromisoformat(raw_date).isoformat()
                        date_cache[raw_date] = date
                    clock = _parse_clock(row[it])
                price = float(row[ip])
                if not math.isfinite(price):
                    raise ValueError("non-finite price")
            except (ValueError, IndexError) as exc:
                note("unparseable", line, exc)
                continue
            seen.add(date)
            if clock < start or clock > end:
                drops["outside_session"] += 1
                continue
            if spec.price_scale == "raw" and price <= 0:
                note("nonpositive_price", line, price)
                continue
            times, prices, lines = per_day[date]
            times.append(clock - start)
            prices.append(price)
            lines.append(line)

    days = []
    empty = []
    kept = 0
    for date in sorted(seen):
        if date not in per_day:
            empty.append(date)
            continue
        t, p, _ = per_day[date]
        t = np.asarray(t)
        p = np.asarray(p)
        order = np.argsort(t, kind="stable")
        t, p = t[order], p[order]
        first = np.ones(t.shape[0], dtype=bool)
        first[1:] = t[1:] != t[:-1]
        n_dup = int((~first).sum())
        drops["duplicate_timestamp"] += n_dup
        t, p = t[first], p[first]
        y = np.log(p) if spec.price_scale == "raw" else p
        meta = {"date": date, "duplicate_timestamp": n_dup, "reordered": bool((order != np.arange(order.size)).any()),
                "session_start": spec.session_start}
        days.append((date, TickSeries(t, y, label=date, meta=meta)))
        kept += t.shape[0]
    if empty:
        messages.append(f"skipped empty day(s): {', '.join(empty)}")
    return IngestResult(days, rows_in, kept, drops, messages, empty)


# ---------------------------------------------------------------------------
# canonical format

CANONICAL_HEADER = ("timestamp_seconds", "log_price")


def write_series_csv(s, path):
    """Write ``timestamp_seconds,log_price`` with 12 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CANONICAL_HEADER) + "\n")
        for t, y in zip(s.timestamps.tolist(), s.log_prices.tolist()):
            fh.write(f"{t:.12g},{y:.12g}\n")


def read_series_csv(path, label=None):
    """Read a canonical ``timestamp_seconds,log_price`` file back into a :class:`TickSeries`."""
    try:
        with open(path, encoding="utf-8") as fh:
            head = fh.readline().strip().split(",")
            if tuple(h.strip() for h in head) != CANONICAL_HEADER:
                raise ConfigError(f"{path}: expected header {','.join(CANONICAL_HEADER)}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.shape[0] == 0:
        raise ConfigError(f"{path}: no rows")
    return TickSeries(data[:, 0], data[:, 1], label=label if label is not None else str(path))
