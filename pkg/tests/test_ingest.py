import math
import time
from pathlib import Path

import numpy as np
import pytest

from hfnoise.errors import ConfigError
from hfnoise.ingest import DROP_REASONS, IngestSpec, load_days, read_series_csv, write_series_csv
from hfnoise.sampling import TickSeries


def write(tmp_path, text, name="ticks.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def load(tmp_path, text, **kw):
    return load_days(IngestSpec(write(tmp_path, text), **kw))


def test_toy_file(tmp_path):
    res = load(tmp_path, "date,time,price\n2024-01-02,09:30:00,100\n2024-01-02,09:30:01,101\n2024-01-02,09:30:03,100\n")
    assert len(res) == 1
    date, s = res.days[0]
    assert date == "2024-01-02" and s.label == "2024-01-02"
    assert s.timestamps.tolist() == [0.0, 1.0, 3.0]
    assert np.allclose(s.log_prices, [math.log(100), math.log(101), math.log(100)], rtol=0, atol=1e-15)
    assert res.rows_in == res.rows_kept == 3 and not any(res.drops.values())


def test_session_window_inclusive(tmp_path):
    text = "date,time,price\n" + "".join(
        f"2024-01-02,{t},10\n" for t in ("09:29:59", "09:30:00", "12:00:00.250", "16:00:00", "16:00:00.001")
    )
    res = load(tmp_path, text)
    s = res.days[0][1]
    assert s.timestamps.tolist() == [0.0, 9000.25, 23400.0]
    assert res.drops["outside_session"] == 2
    custom = load(tmp_path, text, session_start="09:29:59", session_end="12:00:00")
    assert custom.days[0][1].timestamps.tolist() == [0.0, 1.0]


def test_drop_accounting(tmp_path):
    text = (
        "date,time,price\n"
        "2024-01-02,09:30:00,10\n"
        "2024-01-02,09:30:00,11\n"  # duplicate, keep first
        "2024-01-02,09:30:02,0\n"  # nonpositive
        "2024-01-02,9h30,10\n"  # unparseable time
        "2024-01-02,09:30:04,abc\n"  # unparseable price
        "2024-01-02,09:30:05\n"  # short row
        "2024-01-02,08:00:00,10\n"  # outside
        "2024-01-02,09:30:06,-1\n"
        "2024-01-02,09:30:07,12\n"
    )
    res = load(tmp_path, text)
    assert res.drops == {"unparseable": 3, "outside_session": 1, "nonpositive_price": 2, "duplicate_timestamp": 1}
    assert res.rows_in == 9 and res.rows_in == res.rows_kept + sum(res.drops.values())
    s = res.days[0][1]
    assert s.timestamps.tolist() == [0.0, 7.0]
    assert s.log_prices[0] == math.log(10)
    assert any(m.startswith("line 5: unparseable") for m in res.messages)
    assert any(m.startswith("line 4: nonpositive_price") for m in res.messages)
    assert set(res.drops) == set(DROP_REASONS)


def test_reordered_rows_sorted_stably(tmp_path):
    text = "date,time,price\n2024-01-02,09:30:05,10\n2024-01-02,09:30:01,11\n2024-01-02,09:30:05,12\n"
    res = load(tmp_path, text)
    s = res.days[0][1]
    assert s.timestamps.tolist() == [1.0, 5.0]
    assert s.log_prices.tolist() == [math.log(11), math.log(10)]
    assert s.meta["reordered"] and s.meta["duplicate_timestamp"] == 1


def test_multiple_days_and_empty_day(tmp_path):
    text = (
        "date,time,price\n"
        "2024-01-03,10:00:00,20\n"
        "2024-01-02,10:00:00,10\n"
        "2024-01-04,17:00:00,30\n"  # only after-hours rows
        "2024-01-02,10:00:01,11\n"
    )
    res = load(tmp_path, text)
    assert [d for d, _ in res] == ["2024-01-02", "2024-01-03"]
    assert res.empty_days == ["2024-01-04"]
    assert any("2024-01-04" in m for m in res.messages)
    assert res.to_dict()["days"] == [{"date": "2024-01-02", "n_obs": 2}, {"date": "2024-01-03", "n_obs": 1}]


def test_timestamp_column_forms(tmp_path):
    text = "ts,px\n2024-01-02 09:30:00.5,10\n2024-01-02T09:30:01,11\n"
    res = load(tmp_path, text, time_col="ts", price_col="px", date_col=None)
    assert res.days[0][1].timestamps.tolist() == [0.5, 1.0]
    text = "ts,px\n02/01/2024 09:30:00,10\n02/01/2024 09:30:02,11\n"
    res = load(tmp_path, text, time_col="ts", price_col="px", date_col=None, timestamp_format="%d/%m/%Y %H:%M:%S")
    assert res.days[0][0] == "2024-01-02" and res.days[0][1].timestamps.tolist() == [0.0, 2.0]


def test_no_header_and_log_scale(tmp_path):
    text = "4.6;09:30:00;2024-01-02\n-0.1;09:30:01;2024-01-02\n"
    res = load(tmp_path, text, header=False, time_col=1, price_col=0, date_col=2, delimiter=";", price_scale="log")
    assert res.days[0][1].log_prices.tolist() == [4.6, -0.1]
    assert res.drops["nonpositive_price"] == 0


def test_spec_validation(tmp_path):
    with pytest.raises(ConfigError):
        IngestSpec("x", session_start="16:00:00", session_end="09:30:00")
    with pytest.raises(ConfigError):
        IngestSpec("x", header=False)
    with pytest.raises(ConfigError):
        IngestSpec("x", price_scale="cents")
    with pytest.raises(ConfigError, match="unknown"):
        IngestSpec.from_dict({"path": "x", "tz": "UTC"})
    with pytest.raises(ConfigError, match="not found"):
        load(tmp_path, "a,b\n1,2\n")
    with pytest.raises(ConfigError):
        load_days(IngestSpec(str(tmp_path / "missing.csv")))


def test_canonical_roundtrip(tmp_path, rng):
    t = np.cumsum(rng.exponential(0.1, 5000))
    s = TickSeries(t, 4.6 + np.cumsum(rng.standard_normal(5000)) * 1e-4, "x")
    write_series_csv(s, tmp_path / "a.csv")
    once = read_series_csv(tmp_path / "a.csv")
    write_series_csv(once, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    assert np.allclose(once.log_prices, s.log_prices, rtol=1e-11, atol=0)
    assert read_series_csv(tmp_path / "b.csv", label="d").label == "d"


def test_canonical_reader_errors(tmp_path):
    with pytest.raises(ConfigError, match="header"):
        read_series_csv(write(tmp_path, "t,y\n0,1\n"))
    with pytest.raises(ConfigError):
        read_series_csv(write(tmp_path, "timestamp_seconds,log_price\n0,x\n"))


def test_ingest_speed(tmp_path, rng):
    # about a quarter of a million ticks should load in a few seconds
    n = 250_000
    t = np.sort(rng.uniform(0, 23400, n)) + 34200
    px = 100 * np.exp(np.cumsum(rng.standard_normal(n)) * 1e-4)
    lines = ["date,time,price"]
    for sec, p in zip(t.tolist(), px.tolist()):
        h, rem = divmod(sec, 3600)
        m, s_ = divmod(rem, 60)
        lines.append(f"2024-01-02,{int(h):02d}:{int(m):02d}:{s_:06.3f},{p:.4f}")
    path = write(tmp_path, "\n".join(lines) + "\n")
    t0 = time.perf_counter()
    res = load_days(IngestSpec(path))
    assert time.perf_counter() - t0 < 5.0
    assert res.rows_in == n and res.rows_in == res.rows_kept + sum(res.drops.values())


def test_example_file():
    path = Path(__file__).resolve().parents[1] / "data" / "example_ticks.csv"
    res = load_days(IngestSpec(str(path)))
    assert [d for d, _ in res] == ["2024-03-04", "2024-03-05"]
    assert res.rows_in == res.rows_kept + sum(res.drops.values())
    assert res.drops["outside_session"] > 0 and res.drops["unparseable"] == 0
