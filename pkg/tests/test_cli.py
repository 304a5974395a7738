"""CLI tests: verbs, exit codes, artifact layout, deterministic reruns."""

import json

import pytest

from dngd.cli import main
from dngd.traceio import read_summary, sweep_from_csv, trace_from_csv


def write_config(tmp_path, name="exp.json", **overrides):
    payload = {
        "problem": "poisson2d",
        "widths": [2, 8, 8, 1],
        "counts": {"interior": 30, "boundary": 10},
        "seeds": [0, 1],
        "max_iters": 2,
    }
    payload.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def test_run_writes_one_csv_per_seed_plus_summary(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "artifacts"
    code = main(["run", "--config", str(config), "--out", str(out), "--deterministic"])
    assert code == 0
    for seed in (0, 1):
        rows = trace_from_csv(out / f"poisson2d_dngd_seed{seed}.csv")
        assert len(rows) == 3
        assert rows[0].iteration == 0
    summary = read_summary(out / "poisson2d_dngd_summary.json")
    assert summary["seeds"] == [0, 1]
    assert summary["final_loss"]["median"] is not None


def test_run_rerun_is_byte_identical_in_deterministic_mode(tmp_path):
    config = write_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(config), "--out", str(out1), "--deterministic"]) == 0
    assert main(["run", "--config", str(config), "--out", str(out2), "--deterministic"]) == 0
    for name in ("poisson2d_dngd_seed0.csv", "poisson2d_dngd_seed1.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    assert (out1 / "poisson2d_dngd_summary.json").read_bytes() == (
        out2 / "poisson2d_dngd_summary.json"
    ).read_bytes()


def test_run_seeds_flag_overrides_config(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "o"
    code = main(
        ["run", "--config", str(config), "--out", str(out), "--seeds", "5", "--deterministic"]
    )
    assert code == 0
    assert (out / "poisson2d_dngd_seed5.csv").exists()
    assert not (out / "poisson2d_dngd_seed0.csv").exists()


def test_run_malformed_configs_exit_2_without_output(tmp_path):
    out = tmp_path / "never"

    not_json = tmp_path / "broken.json"
    not_json.write_text("{nope")
    assert main(["run", "--config", str(not_json), "--out", str(out)]) == 2

    missing = tmp_path / "missing.json"
    assert main(["run", "--config", str(missing), "--out", str(out)]) == 2

    bad_schema = write_config(tmp_path, name="schema.json", seeds=[])
    assert main(["run", "--config", str(bad_schema), "--out", str(out)]) == 2

    unknown = write_config(tmp_path, name="unknown.json", problem="wave9d")
    assert main(["run", "--config", str(unknown), "--out", str(out)]) == 2

    extra = write_config(tmp_path, name="extra.json", bogus=True)
    assert main(["run", "--config", str(extra), "--out", str(out)]) == 2

    assert not out.exists()


def test_run_bad_seeds_flag_exits_2(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "never"
    assert main(["run", "--config", str(config), "--out", str(out), "--seeds", "a,b"]) == 2
    assert not out.exists()


def test_sweep_writes_regime_csv(tmp_path):
    config = tmp_path / "sweep.json"
    config.write_text(json.dumps({"grid": [[60, 10], [10, 60]], "iterations": 1}))
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(config), "--out", str(out)]) == 0
    rows = sweep_from_csv(out / "sweep.csv")
    assert [(r["m"], r["n"]) for r in rows] == [(60, 10), (10, 60)]
    assert all(r["winner"] in ("primal", "dual") for r in rows)


def test_sweep_malformed_config_exits_2(tmp_path):
    config = tmp_path / "sweep.json"
    config.write_text(json.dumps({"grid": []}))
    assert main(["sweep", "--config", str(config), "--out", str(tmp_path / "x")]) == 2


def test_check_verb_passes_and_prints_lines(capsys):
    assert main(["check"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert all(l.startswith("PASS") for l in lines[:-1])
    assert "checks passed" in lines[-1]


def test_list_problems_prints_catalog(capsys):
    assert main(["list-problems"]) == 0
    out = capsys.readouterr().out
    for name in ("poisson2d", "heat2d", "allen_cahn", "poisson_ball_stde"):
        assert name in out


def test_unknown_verb_is_rejected():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
