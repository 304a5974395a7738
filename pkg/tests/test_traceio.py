"""Serialization tests: lossless round trips, byte determinism, exact medians."""

import json
import math

import numpy as np
import pytest

from dngd.optimizer import TraceRow, TrainTrace
from dngd.traceio import (
    SWEEP_COLUMNS,
    TRACE_COLUMNS,
    read_summary,
    summarize,
    sweep_from_csv,
    sweep_to_csv,
    trace_from_csv,
    trace_to_csv,
    write_summary,
)


def sample_trace(seed=0, losses=(2.0, 1.0 / 3.0, 0.05)):
    rows = [TraceRow(iteration=0, wall_time=1.0, loss=losses[0])]
    for i, loss in enumerate(losses[1:], start=1):
        rows.append(
            TraceRow(
                iteration=i,
                wall_time=float(i + 1),
                loss=loss,
                rel_l2=loss / 10.0,
                lam=1e-5,
                eta=2.0**-i,
                cg_iterations=i,
                ga_ratio=0.01 * i,
            )
        )
    return TrainTrace(problem="poisson2d", method="dngd", seed=seed, rows=rows)


def rows_equal(a, b):
    def same(x, y):
        return x == y or (isinstance(x, float) and math.isnan(x) and math.isnan(y))

    return all(
        same(getattr(a, f), getattr(b, f))
        for f in (
            "iteration",
            "wall_time",
            "loss",
            "rel_l2",
            "lam",
            "eta",
            "cg_iterations",
            "ga_ratio",
        )
    )


def test_trace_csv_round_trip_is_lossless(tmp_path):
    trace = sample_trace()
    path = tmp_path / "trace.csv"
    trace_to_csv(trace, path)
    back = trace_from_csv(path)
    assert len(back) == len(trace.rows)
    for a, b in zip(trace.rows, back):
        assert rows_equal(a, b)


def test_trace_csv_is_byte_deterministic_with_lf_endings(tmp_path):
    trace = sample_trace()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    trace_to_csv(trace, p1)
    trace_to_csv(trace, p2)
    b1, b2 = p1.read_bytes(), p2.read_bytes()
    assert b1 == b2
    assert b"\r" not in b1
    assert b1.decode().splitlines()[0] == ",".join(TRACE_COLUMNS)


def test_trace_csv_nan_fields_round_trip(tmp_path):
    trace = sample_trace()
    path = tmp_path / "trace.csv"
    trace_to_csv(trace, path)
    first = trace_from_csv(path)[0]
    assert math.isnan(first.rel_l2) and math.isnan(first.eta) and math.isnan(first.lam)


def test_trace_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        trace_from_csv(path)


def test_sweep_csv_round_trip(tmp_path):
    rows = [
        {"m": 600, "n": 40, "primal_s": 0.001, "dual_s": 0.03, "winner": "primal"},
        {"m": 40, "n": 600, "primal_s": 0.05, "dual_s": 0.002, "winner": "dual"},
    ]
    path = tmp_path / "sweep.csv"
    sweep_to_csv(rows, path)
    assert path.read_text().splitlines()[0] == ",".join(SWEEP_COLUMNS)
    assert sweep_from_csv(path) == rows


def test_summary_median_is_exact_for_odd_seed_count():
    traces = [sample_trace(seed=s, losses=(5.0, loss)) for s, loss in enumerate((3.0, 1.0, 2.0))]
    summary = summarize(traces)
    assert summary["final_loss"]["median"] == 2.0  # exact middle of {1, 2, 3}
    assert summary["final_loss"]["q75"] >= summary["final_loss"]["q25"]
    assert summary["final_loss"]["iqr"] == pytest.approx(
        summary["final_loss"]["q75"] - summary["final_loss"]["q25"]
    )
    assert summary["seeds"] == [0, 1, 2]
    assert all(v == "completed" for v in summary["statuses"].values())


def test_summary_handles_missing_rel_l2_and_stays_strict_json(tmp_path):
    trace = TrainTrace(
        problem="allencahn",
        method="dngd",
        seed=4,
        rows=[TraceRow(iteration=0, wall_time=1.0, loss=0.5)],
    )
    summary = summarize([trace])
    path = tmp_path / "summary.json"
    write_summary(summary, path)
    text = path.read_text()
    json.loads(text)  # must be strict JSON: no NaN tokens
    assert "NaN" not in text
    back = read_summary(path)
    assert back["final_rel_l2"]["median"] is None
    assert back["final_rel_l2"]["per_seed"]["4"] is None
    assert back["final_loss"]["median"] == 0.5


def test_summary_records_aborted_and_diverged_statuses():
    ok = sample_trace(seed=0)
    bad = sample_trace(seed=1)
    bad.aborted = True
    bad.abort_reason = "10 consecutive step rejections"
    sick = sample_trace(seed=2)
    sick.diverged = True
    sick.abort_reason = "loss 1e12 above divergence cutoff"
    summary = summarize([ok, bad, sick])
    assert summary["statuses"]["0"] == "completed"
    assert summary["statuses"]["1"].startswith("aborted:")
    assert summary["statuses"]["2"].startswith("diverged:")


def test_summary_requires_at_least_one_trace():
    with pytest.raises(ValueError):
        summarize([])


def test_float_formatting_shortest_round_trip(tmp_path):
    probe = TrainTrace(
        problem="p",
        method="dngd",
        seed=0,
        rows=[
            TraceRow(
                iteration=0,
                wall_time=1.0,
                loss=1.0 / 3.0,
                rel_l2=np.nextafter(0.1, 1.0),
                lam=1e-12,
                eta=2.0**-30,
                cg_iterations=3,
                ga_ratio=0.3333333333333333,
            )
        ],
    )
    path = tmp_path / "t.csv"
    trace_to_csv(probe, path)
    row = trace_from_csv(path)[0]
    assert row.loss == 1.0 / 3.0
    assert row.rel_l2 == np.nextafter(0.1, 1.0)
    assert row.eta == 2.0**-30
