import csv
import json

import pytest

from pestab.cli import main
from pestab.scenarios import validate_scenario


def write_scenario(tmp_path, obj, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


DI_SCENARIO = {
    "system": {"preset": "double_integrator"},
    "pe_class": {"T": 1.0, "mu": 0.5},
    "gain": {"kind": "di", "rho": 0.2, "k": 2.0, "lam": 2.0},
    "signal": {"kind": "duty", "pattern": "front"},
    "horizon": 8.0,
    "x0": [[1.0, 0.0]],
    "seed": 7,
}


class TestSimulate:
    def test_decaying_run(self, tmp_path, capsys):
        sc = write_scenario(tmp_path, DI_SCENARIO)
        out = tmp_path / "out"
        assert main(["simulate", "--scenario", sc, "--out-dir", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["runs"][0]["decaying"]
        assert summary["meta"]["version"]
        assert summary["meta"]["seed"] == 7
        assert "scenario_hash" in summary["meta"]
        with open(out / "trajectory_000.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["t", "x1", "x2", "alpha", "V", "r", "theta",
                          "F_theta"]

    def test_zero_gate_flagged_nondecaying(self, tmp_path):
        sc = dict(DI_SCENARIO)
        sc["signal"] = {"kind": "constant", "value": 0.0}
        sc["x0"] = [[0.0, 1.0]]
        path = write_scenario(tmp_path, sc)
        out = tmp_path / "out"
        assert main(["simulate", "--scenario", path,
                     "--out-dir", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert not summary["runs"][0]["decaying"]

    def test_malformed_json_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["simulate", "--scenario", str(bad),
                     "--out-dir", str(tmp_path / "o")]) == 2

    def test_schema_violation_pointered(self, tmp_path, capsys):
        sc = dict(DI_SCENARIO)
        sc["pe_class"] = {"T": 1.0}
        path = write_scenario(tmp_path, sc)
        assert main(["simulate", "--scenario", path,
                     "--out-dir", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert "/pe_class" in err

    def test_unknown_key_rejected(self):
        problems = validate_scenario({"system": {"preset": "rotation"},
                                      "pe_class": {"T": 1, "mu": 0.5},
                                      "bogus": 1})
        assert problems and "bogus" in problems[0]

    def test_deterministic_outputs(self, tmp_path):
        sc = write_scenario(tmp_path, DI_SCENARIO)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--scenario", sc, "--out-dir", str(out1)])
        main(["simulate", "--scenario", sc, "--out-dir", str(out2)])
        assert (out1 / "trajectory_000.csv").read_bytes() == \
            (out2 / "trajectory_000.csv").read_bytes()
        assert (out1 / "summary.json").read_text() == \
            (out2 / "summary.json").read_text()


class TestCertify:
    def test_unknown_selector_exits_2(self, tmp_path, capsys):
        sc = write_scenario(tmp_path, DI_SCENARIO)
        assert main(["certify", "--scenario", sc, "--lemma", "nope",
                     "--out-dir", str(tmp_path / "o")]) == 2
        assert "claim1" in capsys.readouterr().err

    def test_multi_selector_passes(self, tmp_path, capsys):
        sc = write_scenario(tmp_path, DI_SCENARIO)
        out = tmp_path / "o"
        assert main(["certify", "--scenario", sc, "--lemma", "multi",
                     "--out-dir", str(out)]) == 0
        payload = json.loads((out / "certificate_multi.json").read_text())
        assert payload["certificate"]["pass"] is True
        assert "[multi] PASS" in capsys.readouterr().out

    def test_ff00_selector(self, tmp_path):
        sc = dict(DI_SCENARIO)
        sc["battery"] = {"size": 6, "seed": 3}
        sc["params"] = {"rho": 0.2, "k": 4.0, "lam": 8.0}
        path = write_scenario(tmp_path, sc)
        assert main(["certify", "--scenario", path, "--lemma", "ff00",
                     "--out-dir", str(tmp_path / "o")]) == 0

    def test_c2_with_bad_rho_exits_2(self, tmp_path, capsys):
        sc = dict(DI_SCENARIO)
        sc["params"] = {"rho": 0.4, "k": 4.0}
        path = write_scenario(tmp_path, sc)
        assert main(["certify", "--scenario", path, "--lemma", "c2",
                     "--out-dir", str(tmp_path / "o")]) == 2
        assert "rho" in capsys.readouterr().err

    def test_claim1_on_rotation(self, tmp_path):
        sc = {"system": {"preset": "rotation"},
              "pe_class": {"T": 1.0, "mu": 0.5},
              "battery": {"size": 8, "seed": 1},
              "params": {"grid": 6}}
        path = write_scenario(tmp_path, sc)
        assert main(["certify", "--scenario", path, "--lemma", "claim1",
                     "--out-dir", str(tmp_path / "o")]) == 0


class TestThreshold:
    def test_dichotomy_table(self, tmp_path):
        out = tmp_path / "o"
        rc = main(["threshold", "--preset", "double_integrator",
                   "--T", "1.0", "--mu", "0.5",
                   "--t-grid", "0.3,0.5,0.7,1.0",
                   "--battery-size", "10", "--out-dir", str(out)])
        assert rc == 0
        report = json.loads((out / "threshold.json").read_text())
        kinds = {r["t"]: r["evidence"]["kind"] for r in report["results"]}
        assert kinds[0.3] == "adversarial"
        assert kinds[0.5] == "adversarial"  # boundary included below
        assert kinds[0.7] == "battery"
        assert all(r["claim"] for r in report["results"])
        lines = (out / "threshold.csv").read_text().splitlines()
        assert lines[0].startswith("# tool=pestab")


class TestDestabilize:
    def test_growth_report(self, tmp_path):
        out = tmp_path / "o"
        rc = main(["destabilize", "--k1", "1.0", "--k2", "1.0",
                   "--T", "1.0", "--mu", "0.07", "--revolutions", "5",
                   "--out-dir", str(out)])
        assert rc == 0
        rep = json.loads((out / "destabilizer.json").read_text())
        assert rep["nu_hat"] > rep["class"]["mu"] / rep["class"]["T"]
        assert rep["growth_per_rev"] > 1.0
        assert (out / "induced_signal.json").exists()

    def test_saturated_class_warns(self, tmp_path, capsys):
        out = tmp_path / "o"
        rc = main(["destabilize", "--k1", "1.0", "--k2", "1.0",
                   "--T", "1.0", "--mu", "1.0", "--revolutions", "3",
                   "--out-dir", str(out)])
        assert rc == 0
        assert "warning" in capsys.readouterr().out
        rep = json.loads((out / "destabilizer.json").read_text())
        assert rep["ratio_exceeds_nu"]
        assert rep["growth_per_rev"] < 1.0

    def test_wrong_sign_exits_2(self, tmp_path, capsys):
        rc = main(["destabilize", "--k1", "-1.0", "--k2", "1.0",
                   "--T", "1.0", "--mu", "0.5",
                   "--out-dir", str(tmp_path / "o")])
        assert rc == 2
        assert "Hurwitz" in capsys.readouterr().err


class TestSweep:
    def test_grid(self, tmp_path):
        sc = write_scenario(tmp_path, DI_SCENARIO)
        out = tmp_path / "o"
        rc = main(["sweep", "--scenario", sc, "--param", "gain.k=2,4",
                   "--param", "gain.lam=2,4", "--out-dir", str(out)])
        assert rc == 0
        lines = [l for l in (out / "sweep.csv").read_text().splitlines()
                 if not l.startswith("#")]
        assert lines[0] == "gain.k,gain.lam,gamma_hat,C_hat,residual," \
                           "final_norm_ratio"
        assert len(lines) == 5

    def test_empty_range(self, tmp_path):
        sc = write_scenario(tmp_path, DI_SCENARIO)
        out = tmp_path / "o"
        assert main(["sweep", "--scenario", sc, "--out-dir", str(out)]) == 0
        lines = [l for l in (out / "sweep.csv").read_text().splitlines()
                 if not l.startswith("#")]
        assert len(lines) == 1  # header only

    def test_budget_cap_partial(self, tmp_path):
        sc = write_scenario(tmp_path, DI_SCENARIO)
        out = tmp_path / "o"
        rc = main(["sweep", "--scenario", sc, "--param", "gain.k=2,3,4,5",
                   "--max-cells", "2", "--out-dir", str(out)])
        assert rc == 3
        lines = [l for l in (out / "sweep.csv").read_text().splitlines()
                 if not l.startswith("#")]
        assert len(lines) == 3  # header + 2 cells

    def test_deterministic_across_workers(self, tmp_path):
        sc = write_scenario(tmp_path, DI_SCENARIO)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["sweep", "--scenario", sc, "--param", "gain.k=2,3,4",
              "--workers", "1", "--out-dir", str(out1)])
        main(["sweep", "--scenario", sc, "--param", "gain.k=2,3,4",
              "--workers", "2", "--out-dir", str(out2)])
        body1 = [l for l in (out1 / "sweep.csv").read_text().splitlines()
                 if not l.startswith("#")]
        body2 = [l for l in (out2 / "sweep.csv").read_text().splitlines()
                 if not l.startswith("#")]
        assert body1 == body2


class TestVersion:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
