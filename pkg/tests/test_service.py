"""Service tests: endpoint contracts, job lifecycle, validation failures."""

import time

import pytest
from fastapi.testclient import TestClient

from dngd.service import ExperimentRequest, SweepRequest, create_app
from dngd.traceio import TRACE_COLUMNS

ROW_KEYS = {
    "iteration",
    "wall_time_s",
    "loss",
    "rel_l2",
    "lambda",
    "eta",
    "cg_iters",
    "ga_ratio",
}

TINY_RUN = {
    "problem": "poisson2d",
    "widths": [2, 8, 8, 1],
    "counts": {"interior": 30, "boundary": 10},
    "seeds": [0, 1],
    "max_iters": 2,
    "deterministic": True,
}


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert "version" in body


def test_problem_catalog_lists_all_problems(client):
    problems = client.get("/problems").json()["problems"]
    names = {p["name"] for p in problems}
    assert names == {
        "poisson2d",
        "poisson10d",
        "heat2d",
        "heat10d",
        "allen_cahn",
        "poisson_ball_stde",
    }
    for p in problems:
        assert set(p) == {
            "name",
            "raw_dim",
            "classes",
            "default_widths",
            "default_lam_cap",
            "has_exact",
        }


def test_synchronous_experiment_returns_traces_and_summary(client):
    resp = client.post("/experiments", json=TINY_RUN, params={"wait": "true"})
    assert resp.status_code == 200
    job = resp.json()
    assert job["status"] == "done" and job["error"] is None
    result = job["result"]
    assert result["problem"] == "poisson2d"
    assert result["seeds"] == [0, 1]
    assert len(result["traces"]) == 2
    for trace in result["traces"]:
        assert len(trace["rows"]) == 3  # initial row + 2 iterations
        assert set(trace["rows"][0]) == ROW_KEYS
        assert trace["rows"][0]["rel_l2"] is not None  # exact solution known
    summary = result["summary"]
    assert summary["final_loss"]["median"] is not None
    assert set(summary["statuses"]) == {"0", "1"}


def test_background_experiment_job_lifecycle(client):
    resp = client.post("/experiments", json=TINY_RUN, params={"wait": "false"})
    assert resp.status_code == 200
    job_id = resp.json()["id"]
    deadline = time.monotonic() + 60.0
    while time.monotonic() < deadline:
        body = client.get(f"/jobs/{job_id}").json()
        if body["status"] in ("done", "failed"):
            break
        time.sleep(0.05)
    assert body["status"] == "done", body.get("error")
    assert body["result"]["problem"] == "poisson2d"


def test_unknown_job_is_404(client):
    assert client.get("/jobs/feedfacefeedface").status_code == 404


def test_unknown_problem_rejected_with_400(client):
    bad = dict(TINY_RUN, problem="wave9d")
    resp = client.post("/experiments", json=bad)
    assert resp.status_code == 400
    assert "wave9d" in resp.json()["detail"]


def test_schema_violations_rejected_with_422(client):
    assert client.post("/experiments", json=dict(TINY_RUN, bogus=1)).status_code == 422
    assert client.post("/experiments", json=dict(TINY_RUN, seeds=[])).status_code == 422
    assert (
        client.post("/experiments", json=dict(TINY_RUN, method="lbfgs")).status_code
        == 422
    )


def test_budget_and_width_conflicts_rejected_with_400(client):
    both = dict(TINY_RUN, wall_seconds=1.0)
    assert client.post("/experiments", json=both).status_code == 400
    neither = dict(TINY_RUN)
    del neither["max_iters"]
    assert client.post("/experiments", json=neither).status_code == 400
    bad_width = dict(TINY_RUN, widths=[3, 8, 1])
    assert client.post("/experiments", json=bad_width).status_code == 400
    bad_counts = dict(TINY_RUN, counts={"edge": 5})
    assert client.post("/experiments", json=bad_counts).status_code == 400


def test_baseline_method_runs_and_requires_iteration_budget(client):
    ok = dict(TINY_RUN, method="adam")
    resp = client.post("/experiments", json=ok)
    assert resp.status_code == 200
    assert resp.json()["result"]["method"] == "adam"

    timed = dict(TINY_RUN, method="adam")
    del timed["max_iters"]
    timed["wall_seconds"] = 1.0
    assert client.post("/experiments", json=timed).status_code == 400


def test_sweep_endpoint_returns_labeled_rows(client):
    resp = client.post("/sweeps", json={"grid": [[60, 10]], "iterations": 1})
    assert resp.status_code == 200
    rows = resp.json()["rows"]
    assert len(rows) == 1
    assert set(rows[0]) == {"m", "n", "primal_s", "dual_s", "winner"}
    assert rows[0]["winner"] in ("primal", "dual")
    assert client.post("/sweeps", json={"grid": []}).status_code == 422


def test_check_endpoint_reports_all_passed(client):
    body = client.post("/check").json()
    assert body["all_passed"] is True
    assert len(body["results"]) >= 10
    assert all(set(r) == {"name", "passed", "detail"} for r in body["results"])
    assert "checks passed" in body["text"]


def test_experiment_request_round_trips_losslessly():
    req = ExperimentRequest.model_validate(TINY_RUN)
    again = ExperimentRequest.model_validate(req.model_dump())
    assert again == req
    sweep = SweepRequest(grid=[(10, 20)], iterations=2)
    assert SweepRequest.model_validate(sweep.model_dump()) == sweep


def test_trace_row_keys_match_csv_schema():
    assert ROW_KEYS == set(TRACE_COLUMNS)
