import csv
import json

import numpy as np
import pytest
import yaml

from adamcbo.cli import main, optimizer_params
from adamcbo.config import config_hash, resolve, validate
from adamcbo.exceptions import ConfigError


def write(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def read_csv(path):
    lines = open(path).read().splitlines()
    assert lines[0].startswith("# config_sha256=")
    return lines[0], list(csv.DictReader(lines[1:]))


BENCH = {
    "optimizer": {"kind": "cbo", "t_N": 100},
    "problem": {"kind": "rastrigin", "rows": [{"dim": 2}, {"dim": 3, "optimizer": "adam_cbo", "N": 20, "M": 5, "t_N": 50}]},
    "trials": {"count": 3, "seed": 11},
}


def test_zero_trials_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, {"trials": {"count": 0}})
    assert main(["rastrigin-bench", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "trials.count" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"optimizer": {"lamda": 1.0}}, "optimizer.lamda"),
        ({"problem": {"kind": "rastrigin", "rows": [{"dim": 2, "sigma": 1}]}}, "problem.rows[0].sigma"),
        ({"optimizer": {"kind": "cbo", "beta1": 0.9}}, "optimizer.beta1"),
        ({"problem": {"kind": "fit"}}, "problem.kind"),
        ({"optimizer": {"N": 10, "M": 20}}, "problem.rows[0]"),
        ({"output": {"formats": ["xml"]}}, "output.formats[0]"),
        ({"trials": {"success_radius": 0.7}}, "trials.success_radius"),
        ({"extra": 1}, "extra"),
    ],
)
def test_invalid_fields_name_their_path(tmp_path, capsys, doc, where):
    cfg = write(tmp_path, doc)
    assert main(["rastrigin-bench", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert where in capsys.readouterr().err


def test_unparseable_config(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("optimizer: [unclosed")
    assert main(["stability", "--config", str(path)]) == 2
    assert main(["stability", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_bench_replay_identical_apart_from_timing(tmp_path):
    cfg = write(tmp_path, BENCH)
    for name in ("a", "b"):
        assert main(["rastrigin-bench", "--config", cfg, "--sequential", "--out", str(tmp_path / name)]) == 0
    ha, ra = read_csv(tmp_path / "a" / "rastrigin.csv")
    hb, rb = read_csv(tmp_path / "b" / "rastrigin.csv")
    assert ha == hb and "seed=11" in ha
    for x, y in zip(ra, rb):
        x.pop("seconds"), y.pop("seconds")
    assert ra == rb and len(ra) == 2
    assert ra[1]["optimizer"] == "adam_cbo" and ra[1]["N"] == "20"
    assert (tmp_path / "a" / "trials.jsonl").read_bytes() == (tmp_path / "b" / "trials.jsonl").read_bytes()
    log = [json.loads(s) for s in open(tmp_path / "a" / "trials.jsonl")]
    assert len(log) == 6 and sum(r["success"] for r in log[:3]) == int(ra[0]["successes"])


def test_workers_do_not_change_results(tmp_path):
    cfg = write(tmp_path, BENCH)
    assert main(["rastrigin-bench", "--config", cfg, "--sequential", "--out", str(tmp_path / "a")]) == 0
    assert main(["rastrigin-bench", "--config", cfg, "--workers", "2", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trials.jsonl").read_bytes() == (tmp_path / "b" / "trials.jsonl").read_bytes()


def test_seed_flag_changes_header_and_results(tmp_path):
    cfg = write(tmp_path, BENCH)
    main(["rastrigin-bench", "--config", cfg, "--sequential", "--out", str(tmp_path / "a")])
    main(["rastrigin-bench", "--config", cfg, "--sequential", "--seed", "12", "--out", str(tmp_path / "b")])
    ha, _ = read_csv(tmp_path / "a" / "rastrigin.csv")
    hb, _ = read_csv(tmp_path / "b" / "rastrigin.csv")
    assert ha != hb and "seed=12" in hb


def test_stability_real_parts(tmp_path):
    out = tmp_path / "s"
    assert main(["stability", "--out", str(out)]) == 0
    _, eig = read_csv(out / "eigenvalues.csv")
    for mu in {r["mu"] for r in eig}:
        real = sorted(float(r["real"]) for r in eig if r["mu"] == mu)
        np.testing.assert_allclose(real, [-0.05, -0.05, -0.01], atol=1e-12)
    _, decay = read_csv(out / "decay.csv")
    adam = [float(r["x_rate_fitted"]) for r in decay if r["system"] == "adam_cbo"]
    assert max(adam) / min(adam) < 1.05
    for r in decay:
        if r["system"] == "cbo":
            assert float(r["x_rate_fitted"]) == pytest.approx(float(r["parameter"]), rel=1e-2)


def test_scaling_two_dims(tmp_path):
    doc = {"problem": {"kind": "scaling", "dims": [100, 200], "N": 50, "M": 10, "iterations": 3, "repeats": 1}}
    out = tmp_path / "sc"
    assert main(["scaling", "--config", write(tmp_path, doc), "--out", str(out)]) == 0
    _, timing = read_csv(out / "timing.csv")
    assert [r["d"] for r in timing] == ["100", "200"]
    _, fit = read_csv(out / "fit.csv")
    assert np.isfinite(float(fit[0]["slope"]))


def test_solve_pde_profiles(tmp_path):
    doc = {
        "optimizer": {"N": 20, "phases": [{"start": 0, "end": 5}]},
        "problem": {"kind": "pde", "width": 4, "n_interior": 16, "n_slice": 8, "n_boundary": 8,
                    "grid_per_axis": 5, "n_profile": 11},
    }
    out = tmp_path / "p"
    assert main(["solve-pde", "--config", write(tmp_path, doc), "--out", str(out)]) == 0
    t, exact = np.loadtxt(out / "profile_x1_exact.txt").T
    np.testing.assert_allclose(t, np.linspace(-1, 1, 11))
    np.testing.assert_allclose(exact, np.sqrt(np.abs(t)), atol=1e-15)
    assert np.loadtxt(out / "profile_x2_predicted.txt").shape == (11, 2)
    _, rows = read_csv(out / "pde.csv")
    assert {"l2", "linf", "rel_l2"} <= set(rows[0])


def test_fit_function_artifacts(tmp_path):
    doc = {
        "optimizer": {"N": 20, "phases": [{"start": 0, "end": 6, "M": 5}, {"start": 6, "end": 10, "M": 10, "noise": False}]},
        "problem": {"kind": "fit", "target": "func3", "k": 2, "width": 4, "depth": 2, "n_samples": 11, "n_plot": 21,
                    "record_every": 5},
        "output": {"formats": ["csv", "txt", "jsonl"]},
    }
    out = tmp_path / "f"
    assert main(["fit-function", "--config", write(tmp_path, doc), "--out", str(out)]) == 0
    _, rows = read_csv(out / "fit.csv")
    assert rows[0]["iterations"] == "10" and rows[0]["n_params"] == "13"
    assert np.loadtxt(out / "prediction.txt").shape == (21, 2)
    assert np.loadtxt(out / "loss_curve.txt")[:, 0].tolist() == [5, 10]
    assert json.load(open(out / "model.json"))["format"] == "adamcbo-mlp"


def test_optimize_builtin(tmp_path):
    doc = {
        "optimizer": {"kind": "cbo", "N": 30, "M": 10, "t_N": 300},
        "problem": {"kind": "builtin", "function": "sphere", "dim": 3, "shift": 1.0, "trace_every": 100},
        "output": {"formats": ["csv", "jsonl"]},
    }
    out = tmp_path / "o"
    assert main(["optimize", "--config", write(tmp_path, doc), "--out", str(out)]) == 0
    _, rows = read_csv(out / "result.csv")
    assert float(rows[0]["max_abs_error"]) < 0.1
    assert not (out / "x_star.txt").exists()
    trace = [json.loads(s) for s in open(out / "trace.jsonl")]
    assert [r["iteration"] for r in trace] == [0, 100, 200]


def test_numeric_failure_exit_code(tmp_path, capsys):
    doc = {
        "optimizer": {"kind": "cbo", "N": 4, "M": 2, "t_N": 50, "sigma": 1e200},
        "problem": {"kind": "builtin", "function": "sphere", "dim": 2},
    }
    assert main(["optimize", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 3
    assert "numeric failure" in capsys.readouterr().err


def test_bad_flags():
    assert main(["stability", "--workers", "0"]) == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_hash_ignores_output_only():
    a = resolve("stability", {"output": {"dir": "x"}})
    b = resolve("stability", {"output": {"dir": "y", "formats": ["csv"]}})
    assert config_hash(a) == config_hash(b)
    c = resolve("stability", {"problem": {"horizon": 100.0}})
    assert config_hash(a) != config_hash(c)


def test_resolved_documents_validate():
    for cmd in ("rastrigin-bench", "fit-function", "solve-pde", "stability", "scaling", "optimize"):
        doc = resolve(cmd)
        assert validate(doc) == doc


def test_optimizer_params_mapping():
    p = optimizer_params({"kind": "adam_cbo", "lambda": 0.3, "sigma_schedule": {"base": 0.5, "period": 4}, "t_N": 9})
    assert (p.lam, p.sigma_schedule.base, p.max_iter) == (0.3, 0.5, 9)
    q = optimizer_params({"kind": "adam_cbo", "lambda": 0.3}, "cbo", {"N": 10, "M": 10})
    assert type(q).__name__ == "CboParams" and q.lam == 1.0 and q.n_particles == 10
    with pytest.raises(ConfigError):
        optimizer_params({"kind": "adam_cbo", "gamma": 0.1})
