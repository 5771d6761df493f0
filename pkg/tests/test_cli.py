import csv
import json
from importlib import resources

import pytest

from beamfcs import beam, cli, scenario


def scen(name):
    return str(resources.files("beamfcs") / "scenarios" / f"{name}.json")


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


PLANE = {"name": "t", "statistics": "bose", "source": {"type": "plane_wave", "q": 1.0, "E0": 10.0},
         "observable": {"type": "kijowski_1d"}, "windows": [[0.0, 1.0]],
         "outputs": [{"type": "numberdist", "n_max": 10, "detector": "+"}], "seed": 0}


class TestRun:
    def test_fig1_columns(self, capsys, tmp_path):
        code, out, _ = run(capsys, "run", scen("fig1"), "--out", str(tmp_path))
        assert code == 0
        assert json.loads(out)["scenario_hash"] == scenario.scenario_hash(scenario.load(scen("fig1")))
        assert header(tmp_path / "g2.csv") == ["tau", "g2_rate0.5", "g2_rate1.0", "g2_rate1.5", "g2_boltzmann"]
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert all(g == pytest.approx(2.0, abs=1e-3) for g in summary["outputs"][0]["g2_at_zero"])

    def test_fig2_columns(self, capsys, tmp_path):
        assert run(capsys, "run", scen("fig2"), "--out", str(tmp_path))[0] == 0
        assert header(tmp_path / "numberdist.csv") == ["n", "p_quasifree", "p_coherent"]
        assert (tmp_path / "waiting.csv").exists()

    def test_deterministic_bytes(self, capsys, tmp_path):
        for d in ("a", "b"):
            assert run(capsys, "--threads", "2", "run", scen("fig2"), "--out", str(tmp_path / d))[0] == 0
        for f in ("numberdist.csv", "waiting.csv", "summary.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_override(self, capsys, tmp_path):
        doc = json.loads(open(scen("sampling")).read())
        doc["outputs"][0]["n_draws"] = 200
        p = write(tmp_path, doc)
        run(capsys, "run", p, "--out", str(tmp_path / "a"))
        run(capsys, "run", p, "--out", str(tmp_path / "b"), "--seed", "7")
        run(capsys, "run", p, "--out", str(tmp_path / "c"), "--seed", "8")
        a, b, c = (json.loads((tmp_path / d / "summary.json").read_text()) for d in "abc")
        assert a == b
        assert c["seed"] == 8 and c["outputs"] != a["outputs"]

    def test_truncation_scenario(self, capsys, tmp_path):
        assert run(capsys, "run", scen("truncation"), "--out", str(tmp_path))[0] == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["outputs"][0]["final_gap"] < 1e-2


class TestErrors:
    def test_empty_windows(self, capsys, tmp_path):
        code, _, err = run(capsys, "run", write(tmp_path, {**PLANE, "windows": []}), "--out", str(tmp_path / "o"))
        assert code == 2
        doc = json.loads(err.strip().splitlines()[-1])
        assert doc["kind"] == "validation" and doc["exit_code"] == 2

    def test_unknown_key(self, capsys, tmp_path):
        assert run(capsys, "run", write(tmp_path, {**PLANE, "bogus": 1}), "--out", str(tmp_path / "o"))[0] == 2

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "run", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o"))[0] == 2

    def test_numerical(self, capsys, tmp_path):
        doc = {**PLANE, "outputs": [{"type": "waiting", "tau_max": 1.0, "n_tau": 5, "detector": "-"}]}
        code, _, err = run(capsys, "run", write(tmp_path, doc), "--out", str(tmp_path / "o"))
        assert code == 3
        assert json.loads(err.strip().splitlines()[-1])["kind"] == "numerical"

    def test_bad_seed(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["--seed", "-1", "selfcheck"])


class TestSelfcheck:
    def test_all_pass_and_hash_stable(self, capsys):
        code, out, _ = run(capsys, "selfcheck")
        assert code == 0
        code2, out2, _ = run(capsys, "selfcheck")
        last = out.strip().splitlines()[-1]
        assert last.split()[-1] == out2.strip().splitlines()[-1].split()[-1]
        assert "checks passed" in last

    def test_filter(self, capsys):
        code, out, _ = run(capsys, "selfcheck", "--filter", "sign-law")
        assert code == 0 and "1/1 checks passed" in out
        assert run(capsys, "selfcheck", "--filter", "no-such-check")[0] == 2

    def test_mutation_is_caught(self, capsys, monkeypatch):
        orig = beam.g2_xy

        def flipped(S, Gx, Gy, tau, s):
            return 2.0 - orig(S, Gx, Gy, tau, s)  # same as flipping the sign of s

        monkeypatch.setattr(beam, "g2_xy", flipped)
        code, out, _ = run(capsys, "selfcheck", "--filter", "sign-law")
        assert code == 1 and "FAIL" in out
