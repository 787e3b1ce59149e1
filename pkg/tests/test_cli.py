import hashlib
import json
import math
import subprocess
import sys

import jsonschema
import pytest

from levycov.cli import PLAN_SCHEMA, SCHEMAS, main

SQ2 = math.sqrt(2.0)
MODEL = {"brownian": {"sigma1": SQ2, "sigma2": 1.0, "rho": 1 / SQ2},
         "jumps": {"r1": 0.5, "r2": 0.8, "gamma": 0.0}}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def sim_cfg(tmp_path):
    return write(tmp_path / "sim.json", {"model": MODEL, "n": 200, "seed": 1})


class TestSimulate:
    def test_outputs_and_checksums(self, tmp_path, sim_cfg):
        for d in ("a", "b"):
            assert main(["simulate", "--config", sim_cfg, "--out", str(tmp_path / d),
                         "--seed", "7"]) == 0
        for f in ("increments.csv", "jumps.csv", "simulate.json"):
            assert digest(tmp_path / "a" / f) == digest(tmp_path / "b" / f)
        meta = json.loads((tmp_path / "a" / "simulate.json").read_text())
        assert meta["seed_override"] is True and meta["config"]["seed"] == 7
        jsonschema.validate(meta["config"], SCHEMAS["simulate"])

    def test_seed_override_changes_output(self, tmp_path, sim_cfg):
        main(["simulate", "--config", sim_cfg, "--out", str(tmp_path / "a")])
        main(["simulate", "--config", sim_cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
        assert digest(tmp_path / "a" / "increments.csv") != digest(tmp_path / "b" / "increments.csv")
        meta = json.loads((tmp_path / "a" / "simulate.json").read_text())
        assert meta["seed_override"] is False and meta["config"]["seed"] == 1

    def test_writes_only_inside_out(self, tmp_path, sim_cfg):
        before = set(tmp_path.iterdir())
        main(["simulate", "--config", sim_cfg, "--out", str(tmp_path / "o")])
        assert set(tmp_path.iterdir()) - before == {tmp_path / "o"}


class TestEstimate:
    def test_all_zero_increments(self, tmp_path):
        (tmp_path / "z.csv").write_text("j,dx1,dx2\n" + "".join(f"{j},0.0,0.0\n" for j in range(1, 11)))
        cfg = write(tmp_path / "e.json", {"estimator": "spectral", "increments": "z.csv"})
        assert main(["estimate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        res = json.loads((tmp_path / "o" / "estimate.json").read_text())
        assert res["value"] == 0.0 and res["valid"] is True and res["n"] == 10
        assert res["u_used"] == pytest.approx(math.sqrt(10))

    @pytest.mark.parametrize("kind", ["spectral", "trc", "rc"])
    def test_on_simulated_path(self, tmp_path, sim_cfg, kind):
        main(["simulate", "--config", sim_cfg, "--out", str(tmp_path)])
        cfg = write(tmp_path / "e.json", {"estimator": kind, "r": 1.0, "M": 4.229})
        assert main(["estimate", "--config", cfg, "--out", str(tmp_path / "o"),
                     "--input", str(tmp_path / "increments.csv")]) == 0
        res = json.loads((tmp_path / "o" / "estimate.json").read_text())
        assert {"value", "valid", "u_used", "n"} <= set(res) and math.isfinite(res["value"])

    def test_missing_input(self, tmp_path):
        cfg = write(tmp_path / "e.json", {"estimator": "rc", "increments": "nope.csv"})
        assert main(["estimate", "--config", cfg, "--out", str(tmp_path)]) == 1

    def test_malformed_csv(self, tmp_path):
        (tmp_path / "bad.csv").write_text("x,y\n1,2\n")
        cfg = write(tmp_path / "e.json", {"estimator": "rc"})
        assert main(["estimate", "--config", cfg, "--input", str(tmp_path / "bad.csv"),
                     "--out", str(tmp_path)]) == 1


class TestValidation:
    def test_missing_config(self, tmp_path, capsys):
        assert main(["check-class", "--config", str(tmp_path / "none.json")]) == 1
        assert "cannot read" in capsys.readouterr().err

    def test_unparseable_reports_line(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text('{\n  "model": ,\n}')
        assert main(["simulate", "--config", str(tmp_path / "c.json")]) == 1
        assert "c.json:2:" in capsys.readouterr().err

    def test_schema_reports_field(self, tmp_path, capsys):
        cfg = write(tmp_path / "c.json", {"model": MODEL, "n": "many"})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 1
        assert "field 'n'" in capsys.readouterr().err

    def test_model_error(self, tmp_path):
        bad = dict(MODEL, brownian={"sigma1": -1.0, "sigma2": 1.0, "rho": 0.0})
        cfg = write(tmp_path / "c.json", {"model": bad, "n": 10})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 1

    def test_runtime_error_tagged(self, tmp_path, capsys):
        cfg = write(tmp_path / "c.json", {"model": MODEL, "n": 10,
                                          "sim": {"max_series_terms": 1, "jump_truncation_eps": 1e-6}})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
        assert "levycov.simulate" in capsys.readouterr().err


def plan(**kw):
    p = {"model": {"brownian": MODEL["brownian"]},
         "estimators": [{"kind": "spectral", "r": 1.0}, {"kind": "trc"}, {"kind": "rc"}],
         "n_grid": [100, 200, 400], "replications": 20, "master_seed": 5}
    p.update(kw)
    return p


class TestBenchmark:
    def test_report_and_sidecar(self, tmp_path):
        cfg = write(tmp_path / "p.json", plan())
        out = tmp_path / "o"
        assert main(["benchmark", "--config", cfg, "--out", str(out), "--emit-raw",
                     "--threads", "1"]) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0] == "estimator,n,replications,mean,bias,sd,rmse,invalid" and len(lines) == 10
        raw = (out / "raw_estimates.csv").read_text().splitlines()
        assert raw[0] == "estimator,n,rep,value" and len(raw) == 1 + 3 * 3 * 20
        side = json.loads((out / "report.json").read_text())
        jsonschema.validate(side["plan"], PLAN_SCHEMA)
        assert side["seed_override"] is False and side["truth"] == pytest.approx(1.0)
        assert side["rate_fits"]["spectral"]["predictor"] == "log n"

    def test_seed_override_and_determinism(self, tmp_path):
        cfg = write(tmp_path / "p.json", plan())
        for d in ("a", "b"):
            main(["benchmark", "--config", cfg, "--out", str(tmp_path / d), "--seed", "9",
                  "--threads", "1"])
        main(["benchmark", "--config", cfg, "--out", str(tmp_path / "c"), "--threads", "2"])
        assert digest(tmp_path / "a" / "report.csv") == digest(tmp_path / "b" / "report.csv")
        assert digest(tmp_path / "a" / "report.csv") != digest(tmp_path / "c" / "report.csv")
        side = json.loads((tmp_path / "a" / "report.json").read_text())
        assert side["seed_override"] is True and side["plan"]["master_seed"] == 9

    def test_threads_env(self, tmp_path, monkeypatch):
        cfg = write(tmp_path / "p.json", plan())
        main(["benchmark", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
        monkeypatch.setenv("LEVYCOV_THREADS", "2")
        main(["benchmark", "--config", cfg, "--out", str(tmp_path / "b")])
        assert digest(tmp_path / "a" / "report.csv") == digest(tmp_path / "b" / "report.csv")

    def test_class_check_and_force(self, tmp_path):
        p = plan(model=MODEL, estimators=[{"kind": "spectral", "r": 0.7}])
        p["model"]["jumps"] = {"r1": 1.2, "r2": 1.8}
        p["estimators"] = [{"kind": "spectral", "r": 1.5}]
        cfg = write(tmp_path / "p.json", p)
        assert main(["benchmark", "--config", cfg, "--out", str(tmp_path / "a")]) == 1
        assert main(["benchmark", "--config", cfg, "--out", str(tmp_path / "b"), "--force",
                     "--threads", "1"]) == 0
        side = json.loads((tmp_path / "b" / "report.json").read_text())
        assert side["plan"]["force"] is True


class TestRates:
    def test_from_existing_report(self, tmp_path):
        cfg = write(tmp_path / "p.json", plan())
        main(["benchmark", "--config", cfg, "--out", str(tmp_path), "--threads", "1"])
        rc = write(tmp_path / "r.json", {"r": 1.0, "report": "report.csv", "slope_tolerance": 0.5})
        assert main(["rates", "--config", rc, "--out", str(tmp_path / "o")]) == 0
        fit = json.loads((tmp_path / "o" / "rates.json").read_text())["rate_fit"]
        assert fit["predicted"] == -0.5 and -1.0 < fit["slope"] < 0.0

    def test_fresh_plan(self, tmp_path):
        rc = write(tmp_path / "r.json", {"r": 1.0, "plan": plan()})
        assert main(["rates", "--config", rc, "--out", str(tmp_path), "--threads", "1"]) == 0
        assert (tmp_path / "report.csv").exists() and (tmp_path / "rates.json").exists()

    def test_needs_exactly_one_source(self, tmp_path):
        rc = write(tmp_path / "r.json", {"r": 1.0})
        assert main(["rates", "--config", rc, "--out", str(tmp_path)]) == 1

    def test_two_point_grid_is_invalid(self, tmp_path):
        rc = write(tmp_path / "r.json", {"r": 1.0, "plan": plan(n_grid=[100, 200])})
        assert main(["rates", "--config", rc, "--out", str(tmp_path), "--threads", "1"]) == 1


class TestCheckClass:
    def test_pass(self, tmp_path, capsys):
        cfg = write(tmp_path / "c.json", {"model": {"brownian": MODEL["brownian"]},
                                          "M": 4.229, "r": 1.0})
        assert main(["check-class", "--config", cfg, "--out", str(tmp_path)]) == 0
        res = json.loads((tmp_path / "check_class.json").read_text())
        assert res["passed"] is True and res["total"] == pytest.approx(3.0)
        assert "PASS" in capsys.readouterr().out

    def test_divergent_emits_null(self, tmp_path):
        m = dict(MODEL, jumps={"r1": 1.2, "r2": 1.8})
        cfg = write(tmp_path / "c.json", {"model": m, "M": 10.0, "r": 1.0})
        assert main(["check-class", "--config", cfg, "--out", str(tmp_path)]) == 0
        res = json.loads((tmp_path / "check_class.json").read_text())
        assert res["passed"] is False and res["total"] is None


def test_module_entry_point(tmp_path, sim_cfg):
    proc = subprocess.run([sys.executable, "-m", "levycov", "simulate", "--config", sim_cfg,
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m" / "increments.csv").exists()
