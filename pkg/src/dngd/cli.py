"""Command-line front end: a thin client over the HTTP service.

Verbs: ``run`` (experiment from a JSON config, one trace CSV per seed plus a
summary JSON), ``sweep`` (primal-vs-dual regime map CSV), ``check`` (oracle
self-check suite), ``list-problems``, and ``serve`` (host the service).

By default the client talks to an in-process service instance; pass
``--server http://host:port`` to target a remote one. Exit codes: 0 success,
1 runtime failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _apply_thread_cap() -> None:
    """Honor DNGD_THREADS before numpy is imported anywhere below."""
    threads = os.environ.get("DNGD_THREADS")
    if threads and threads.strip().isdigit():
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, threads.strip())


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dngd",
        description="Train PDE / least-squares models with dual natural gradient descent.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_server(p):
        p.add_argument(
            "--server",
            default=None,
            metavar="URL",
            help="remote service URL (default: run the service in-process)",
        )

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True, help="experiment JSON path")
    run.add_argument("--out", default="runs", help="output directory (default: runs)")
    run.add_argument(
        "--seeds", default=None, help="comma-separated seed override, e.g. 0,1,2"
    )
    run.add_argument(
        "--deterministic",
        action="store_true",
        help="single-threaded run with logical timing (byte-identical reruns)",
    )
    add_server(run)

    sweep = sub.add_parser("sweep", help="time primal vs dual solvers over an (m, n) grid")
    sweep.add_argument("--config", required=True, help="sweep JSON path")
    sweep.add_argument("--out", default="runs", help="output directory (default: runs)")
    add_server(sweep)

    check = sub.add_parser("check", help="run the small-instance oracle suite")
    add_server(check)

    lp = sub.add_parser("list-problems", help="list built-in problems")
    add_server(lp)

    serve = sub.add_parser("serve", help="host the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


class ServiceClient:
    """httpx client bound either to a remote URL or an in-process app.

    The in-process path mounts the ASGI app directly (no socket); ASGI
    transports are async-only, so those calls run through asyncio.
    """

    def __init__(self, server: str | None):
        import httpx

        if server:
            self._sync = httpx.Client(base_url=server, timeout=None)
            self._async = None
        else:
            from .service import create_app

            self._sync = None
            self._async = httpx.AsyncClient(
                transport=httpx.ASGITransport(app=create_app()),
                base_url="http://dngd.internal",
                timeout=None,
            )

    @staticmethod
    def _run(coro):
        import asyncio

        return asyncio.run(coro)

    def get(self, path: str, **kw):
        if self._sync is not None:
            return self._sync.get(path, **kw)
        return self._run(self._async.get(path, **kw))

    def post(self, path: str, **kw):
        if self._sync is not None:
            return self._sync.post(path, **kw)
        return self._run(self._async.post(path, **kw))

    def close(self) -> None:
        if self._sync is not None:
            self._sync.close()
        else:
            self._run(self._async.aclose())


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_json(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        return None, f"cannot read config {path!r}: {exc.strerror or exc}"
    try:
        return json.loads(text), None
    except json.JSONDecodeError as exc:
        return None, f"config {path!r} is not valid JSON: line {exc.lineno}: {exc.msg}"


def _parse_seeds(raw: str):
    try:
        return [int(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError:
        return None


def cmd_run(args) -> int:
    payload, err = _load_json(args.config)
    if err:
        return _fail(err, 2)
    if args.seeds is not None:
        seeds = _parse_seeds(args.seeds)
        if not seeds:
            return _fail(f"--seeds must be a comma-separated integer list, got {args.seeds!r}", 2)
        payload["seeds"] = seeds
    if args.deterministic:
        payload["deterministic"] = True

    from pydantic import ValidationError

    from .service import ExperimentRequest

    try:
        request = ExperimentRequest.model_validate(payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or "<root>"
        return _fail(f"invalid config field {field!r}: {first['msg']}", 2)

    client = ServiceClient(args.server)
    try:
        resp = client.post(
            "/experiments", json=request.model_dump(), params={"wait": "true"}
        )
        if resp.status_code in (400, 422):
            return _fail(f"config rejected: {resp.json().get('detail')}", 2)
        if resp.status_code != 200:
            return _fail(f"service error {resp.status_code}: {resp.text}", 1)
        job = resp.json()
    finally:
        client.close()
    if job["status"] != "done":
        return _fail(f"experiment failed: {job.get('error')}", 1)

    from .traceio import trace_from_payload, trace_to_csv, write_summary

    result = job["result"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for payload_trace in result["traces"]:
        trace = trace_from_payload(payload_trace)
        path = out / f"{result['problem']}_{result['method']}_seed{trace.seed}.csv"
        trace_to_csv(trace, path)
        written.append(path)
    summary_path = out / f"{result['problem']}_{result['method']}_summary.json"
    write_summary(result["summary"], summary_path)
    written.append(summary_path)
    for path in written:
        print(path)
    statuses = result["summary"]["statuses"]
    problems = {s: v for s, v in statuses.items() if v != "completed"}
    if problems:
        for seed, status in sorted(problems.items()):
            print(f"warning: seed {seed}: {status}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    payload, err = _load_json(args.config)
    if err:
        return _fail(err, 2)

    from pydantic import ValidationError

    from .service import SweepRequest

    try:
        request = SweepRequest.model_validate(payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or "<root>"
        return _fail(f"invalid config field {field!r}: {first['msg']}", 2)

    client = ServiceClient(args.server)
    try:
        resp = client.post("/sweeps", json=request.model_dump())
        if resp.status_code in (400, 422):
            return _fail(f"config rejected: {resp.text}", 2)
        if resp.status_code != 200:
            return _fail(f"service error {resp.status_code}: {resp.text}", 1)
        rows = resp.json()["rows"]
    finally:
        client.close()

    from .traceio import sweep_to_csv

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    sweep_to_csv(rows, path)
    print(path)
    return 0


def cmd_check(args) -> int:
    client = ServiceClient(args.server)
    try:
        resp = client.post("/check")
        if resp.status_code != 200:
            return _fail(f"service error {resp.status_code}: {resp.text}", 1)
        body = resp.json()
    finally:
        client.close()
    print(body["text"])
    return 0 if body["all_passed"] else 1


def cmd_list_problems(args) -> int:
    client = ServiceClient(args.server)
    try:
        resp = client.get("/problems")
        if resp.status_code != 200:
            return _fail(f"service error {resp.status_code}: {resp.text}", 1)
        problems = resp.json()["problems"]
    finally:
        client.close()
    for p in problems:
        classes = ", ".join(f"{k}={v}" for k, v in p["classes"].items())
        widths = "x".join(str(w) for w in p["default_widths"])
        exact = "exact solution" if p["has_exact"] else "no exact solution"
        print(f"{p['name']}: dim={p['raw_dim']}, net {widths}, points [{classes}], {exact}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    _apply_thread_cap()
    args = _parser().parse_args(argv)
    handler = {
        "run": cmd_run,
        "sweep": cmd_sweep,
        "check": cmd_check,
        "list-problems": cmd_list_problems,
        "serve": cmd_serve,
    }[args.verb]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
