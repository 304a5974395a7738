"""Trace and summary serialization: per-seed CSVs, sweep CSVs, and summary JSON.

All floats are written in shortest round-trip form ('.' decimal separator),
files use LF line endings and a header row, and unavailable values appear
as 'nan', so reruns are byte-identical and parsing back is lossless.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .optimizer import TraceRow, TrainTrace

TRACE_COLUMNS = (
    "iteration",
    "wall_time_s",
    "loss",
    "rel_l2",
    "lambda",
    "eta",
    "cg_iters",
    "ga_ratio",
)
SWEEP_COLUMNS = ("m", "n", "primal_s", "dual_s", "winner")


def _fmt(x: float | None) -> str:
    if x is None:
        return "nan"
    return repr(float(x))


def trace_to_csv(trace: TrainTrace, path) -> None:
    """One row per outer iteration, schema TRACE_COLUMNS, LF endings."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in trace.rows:
            writer.writerow(
                [
                    row.iteration,
                    _fmt(row.wall_time),
                    _fmt(row.loss),
                    _fmt(row.rel_l2),
                    _fmt(row.lam),
                    _fmt(row.eta),
                    row.cg_iterations,
                    _fmt(row.ga_ratio),
                ]
            )


def trace_from_csv(path) -> list[TraceRow]:
    """Parse a trace CSV back into rows; exact inverse of trace_to_csv."""
    path = Path(path)
    with path.open("r", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        rows = []
        for rec in reader:
            rows.append(
                TraceRow(
                    iteration=int(rec[0]),
                    wall_time=float(rec[1]),
                    loss=float(rec[2]),
                    rel_l2=float(rec[3]),
                    lam=float(rec[4]),
                    eta=float(rec[5]),
                    cg_iterations=int(rec[6]),
                    ga_ratio=float(rec[7]),
                )
            )
    return rows


def sweep_to_csv(rows: list[dict], path) -> None:
    """Regime-map table: one row per (m, n) cell, schema SWEEP_COLUMNS."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow(
                [row["m"], row["n"], _fmt(row["primal_s"]), _fmt(row["dual_s"]), row["winner"]]
            )


def sweep_from_csv(path) -> list[dict]:
    path = Path(path)
    with path.open("r", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != SWEEP_COLUMNS:
            raise ValueError(f"unexpected sweep header {header}")
        return [
            {
                "m": int(rec[0]),
                "n": int(rec[1]),
                "primal_s": float(rec[2]),
                "dual_s": float(rec[3]),
                "winner": rec[4],
            }
            for rec in reader
        ]


def _clean(x):
    """NaN/inf -> None so the summary stays strict JSON."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _num(x) -> float:
    return float("nan") if x is None else float(x)


def row_to_dict(row: TraceRow) -> dict:
    """JSON-safe view of one trace row, keyed by the CSV column names."""
    return {
        "iteration": int(row.iteration),
        "wall_time_s": _clean(float(row.wall_time)),
        "loss": _clean(float(row.loss)),
        "rel_l2": _clean(float(row.rel_l2)),
        "lambda": _clean(float(row.lam)),
        "eta": _clean(float(row.eta)) if row.eta is not None else None,
        "cg_iters": int(row.cg_iterations),
        "ga_ratio": _clean(float(row.ga_ratio)),
    }


def row_from_dict(d: dict) -> TraceRow:
    return TraceRow(
        iteration=int(d["iteration"]),
        wall_time=_num(d["wall_time_s"]),
        loss=_num(d["loss"]),
        rel_l2=_num(d["rel_l2"]),
        lam=_num(d["lambda"]),
        eta=_num(d["eta"]),
        cg_iterations=int(d["cg_iters"]),
        ga_ratio=_num(d["ga_ratio"]),
    )


def trace_to_payload(trace: TrainTrace) -> dict:
    """JSON-safe view of a whole trace (parameters omitted)."""
    return {
        "problem": trace.problem,
        "method": trace.method,
        "seed": trace.seed,
        "rows": [row_to_dict(r) for r in trace.rows],
        "aborted": trace.aborted,
        "abort_reason": trace.abort_reason,
        "diverged": trace.diverged,
        "final_loss": _clean(trace.final_loss),
        "final_rel_l2": _clean(trace.final_rel_l2),
    }


def trace_from_payload(d: dict) -> TrainTrace:
    return TrainTrace(
        problem=d["problem"],
        method=d["method"],
        seed=int(d["seed"]),
        rows=[row_from_dict(r) for r in d["rows"]],
        aborted=bool(d["aborted"]),
        abort_reason=d["abort_reason"],
        diverged=bool(d["diverged"]),
    )


def _stats(values: list[float]) -> dict:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return {"median": None, "q25": None, "q75": None, "iqr": None}
    q25, med, q75 = (float(q) for q in np.percentile(finite, [25.0, 50.0, 75.0]))
    return {"median": med, "q25": q25, "q75": q75, "iqr": q75 - q25}


def summarize(traces: list[TrainTrace]) -> dict:
    """Cross-seed report: median and interquartile range of the final errors."""
    if not traces:
        raise ValueError("cannot summarize zero traces")
    statuses = {}
    for t in traces:
        if t.aborted:
            statuses[str(t.seed)] = f"aborted: {t.abort_reason}"
        elif t.diverged:
            statuses[str(t.seed)] = f"diverged: {t.abort_reason}"
        else:
            statuses[str(t.seed)] = "completed"
    losses = [t.final_loss for t in traces]
    errors = [t.final_rel_l2 for t in traces]
    return {
        "problem": traces[0].problem,
        "method": traces[0].method,
        "seeds": [t.seed for t in traces],
        "final_loss": {
            "per_seed": {str(t.seed): _clean(t.final_loss) for t in traces},
            **_stats(losses),
        },
        "final_rel_l2": {
            "per_seed": {str(t.seed): _clean(t.final_rel_l2) for t in traces},
            **_stats(errors),
        },
        "statuses": statuses,
    }


def write_summary(summary: dict, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_summary(path) -> dict:
    with Path(path).open("r") as fh:
        return json.load(fh)
