"""HTTP service exposing training runs, timing sweeps, and the self-check suite.

The service owns all experiment execution; the command-line client only
submits requests and writes the returned traces to disk. Jobs run either
synchronously (``wait=true``) or on a background thread, and seeds within
one experiment may fan out across threads up to the ``DNGD_THREADS`` cap.
"""

from __future__ import annotations

import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from typing import Literal

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from .checks import format_results, run_checks
from .errors import DngdError
from .model import MlpSpec
from .optimizer import OptimizerConfig, baseline_run, dngd_run, timing_sweep
from .problems import PROBLEMS, make_problem
from .traceio import summarize, trace_to_payload

SERVICE_VERSION = "1.0.0"


class ExperimentRequest(BaseModel):
    """One experiment: a problem, a network, an optimizer, and some seeds."""

    model_config = {"extra": "forbid"}

    problem: str
    method: Literal["dngd", "adam", "sgd_momentum"] = "dngd"
    seeds: list[int] = Field(min_length=1)
    widths: list[int] | None = None
    counts: dict[str, int] | None = None
    max_iters: int | None = Field(default=None, ge=1)
    wall_seconds: float | None = Field(default=None, gt=0.0)
    lam_cap: float | None = Field(default=None, gt=0.0)
    dense_threshold: int = Field(default=4000, ge=1)
    nystrom_rank: int = Field(default=64, ge=1)
    cg_tol: float = Field(default=1e-10, gt=0.0)
    cg_max_iters: int = Field(default=500, ge=1)
    use_ga: bool = True
    line_search_points: int = Field(default=31, ge=1)
    resample: bool = True
    reject_if_worse: bool = False
    deterministic: bool = False
    hyperparams: dict[str, float] | None = None


class SweepRequest(BaseModel):
    """Primal-vs-dual timing grid."""

    model_config = {"extra": "forbid"}

    grid: list[tuple[int, int]] = Field(min_length=1)
    iterations: int = Field(default=3, ge=1)
    lam: float = Field(default=1e-3, gt=0.0)
    seed: int = 0


def _build_run_inputs(req: ExperimentRequest):
    """Resolve a request into concrete library objects, failing fast."""
    problem = make_problem(req.problem)
    widths = tuple(req.widths) if req.widths else tuple(problem.default_widths)
    spec = MlpSpec(widths)
    if spec.input_dim != problem.embedding.out_dim:
        raise DngdError(
            f"first layer width {spec.input_dim} does not match the embedded "
            f"input dimension {problem.embedding.out_dim} of {problem.name}"
        )
    problem.resolve_counts(req.counts)
    lam_cap = req.lam_cap if req.lam_cap is not None else problem.default_lam_cap
    config = OptimizerConfig(
        lam_cap=lam_cap,
        dense_threshold=req.dense_threshold,
        nystrom_rank=req.nystrom_rank,
        cg_tol=req.cg_tol,
        cg_max_iters=req.cg_max_iters,
        use_ga=req.use_ga,
        line_search_points=req.line_search_points,
        max_iters=req.max_iters,
        wall_seconds=req.wall_seconds,
        resample=req.resample,
        reject_if_worse=req.reject_if_worse,
        deterministic_timing=req.deterministic,
    )
    if req.method != "dngd" and config.max_iters is None:
        raise DngdError("baseline methods need an iteration budget (max_iters)")
    return problem, spec, config


def _worker_cap(req: ExperimentRequest) -> int:
    if req.deterministic:
        return 1
    raw = os.environ.get("DNGD_THREADS", "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        return 1


def run_experiment_payload(req: ExperimentRequest) -> dict:
    """Execute every seed and assemble the JSON-safe result document."""
    problem, spec, config = _build_run_inputs(req)

    def one_seed(seed: int):
        if req.method == "dngd":
            return dngd_run(problem, spec, config, seed, counts=req.counts)
        return baseline_run(
            problem,
            spec,
            req.method,
            config,
            seed,
            counts=req.counts,
            hyperparams=req.hyperparams,
        )

    workers = min(_worker_cap(req), len(req.seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(one_seed, req.seeds))
    else:
        traces = [one_seed(s) for s in req.seeds]
    return {
        "problem": problem.name,
        "method": req.method,
        "seeds": list(req.seeds),
        "traces": [trace_to_payload(t) for t in traces],
        "summary": summarize(traces),
    }


def problem_catalog() -> list[dict]:
    out = []
    for key in sorted(PROBLEMS):
        p = make_problem(key)
        out.append(
            {
                "name": key,
                "raw_dim": p.raw_dim,
                "classes": dict(p.default_counts),
                "default_widths": list(p.default_widths),
                "default_lam_cap": p.default_lam_cap,
                "has_exact": p.has_exact,
            }
        )
    return out


def create_app() -> FastAPI:
    app = FastAPI(title="dngd", version=SERVICE_VERSION)
    jobs: dict[str, dict] = {}
    lock = threading.Lock()

    def job_view(record: dict) -> dict:
        return {
            "id": record["id"],
            "status": record["status"],
            "result": record["result"],
            "error": record["error"],
        }

    def execute(record: dict, req: ExperimentRequest) -> None:
        record["status"] = "running"
        try:
            record["result"] = run_experiment_payload(req)
            record["status"] = "done"
        except Exception as exc:
            record["error"] = f"{type(exc).__name__}: {exc}"
            record["status"] = "failed"

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": SERVICE_VERSION}

    @app.get("/problems")
    def problems() -> dict:
        return {"problems": problem_catalog()}

    @app.post("/experiments")
    def experiments(req: ExperimentRequest, wait: bool = Query(default=True)) -> dict:
        try:
            _build_run_inputs(req)  # reject bad configs before creating a job
        except DngdError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        record = {"id": uuid.uuid4().hex, "status": "pending", "result": None, "error": None}
        with lock:
            jobs[record["id"]] = record
        if wait:
            execute(record, req)
            return job_view(record)
        threading.Thread(target=execute, args=(record, req), daemon=True).start()
        return {"id": record["id"], "status": record["status"]}

    @app.get("/jobs/{job_id}")
    def job(job_id: str) -> dict:
        with lock:
            record = jobs.get(job_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        return job_view(record)

    @app.post("/sweeps")
    def sweeps(req: SweepRequest) -> dict:
        rows = timing_sweep(
            [tuple(cell) for cell in req.grid],
            iterations=req.iterations,
            lam=req.lam,
            seed=req.seed,
        )
        return {"rows": rows}

    @app.post("/check")
    def check() -> dict:
        results = run_checks()
        return {
            "results": [asdict(r) for r in results],
            "all_passed": all(r.passed for r in results),
            "text": format_results(results),
        }

    return app


app = create_app()
