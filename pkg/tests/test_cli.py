import csv
import io
import json

import pytest

from fracfact.cli import main


@pytest.fixture
def examples(tmp_path, capsys):
    assert main(["example", "all", "--dir", str(tmp_path)]) == 0
    capsys.readouterr()
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestDesign:
    def test_aliases_and_resolution(self, capsys, examples):
        code, out, _ = run(capsys, "design", examples / "windshield.design")
        assert code == 0
        assert "resolution: III" in out
        assert "defining contrast subgroup: I = ACD" in out
        assert "  A = CD" in out

    def test_json(self, capsys, examples):
        code, out, _ = run(capsys, "design", examples / "wavesolder.design", "--format", "json")
        assert code == 0
        res = json.loads(out)
        assert res["runs"] == 16 and res["p"] == 7 and res["q"] == 3
        assert len(res["design_matrix"]) == 16

    def test_csv(self, capsys, examples):
        code, out, _ = run(capsys, "design", examples / "windshield.design", "--format", "csv")
        rows = dict(list(csv.reader(io.StringIO(out)))[1:])
        assert code == 0 and rows["runs"] == "8" and rows["resolution"] == "III"


class TestExitCodes:
    def test_usage(self, capsys):
        assert run(capsys, "test")[0] == 1
        assert run(capsys, "nonsense")[0] == 1

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "design", tmp_path / "nope.design")
        assert code == 2 and "error" in err

    def test_malformed_design(self, capsys, tmp_path):
        bad = tmp_path / "bad.design"
        bad.write_text("4 1\nD=AZ\n")
        assert run(capsys, "design", bad)[0] == 2

    def test_run_count_mismatch(self, capsys, examples, tmp_path):
        data = tmp_path / "short.data"
        data.write_text("1\n2\n3\n")
        code, _, err = run(
            capsys, "enumerate", "--design", examples / "wavesolder.design",
            "--model", examples / "wavesolder.model", "--data", data,
        )
        assert code == 2 and "runs" in err

    def test_budget(self, capsys, examples):
        code, _, err = run(
            capsys, "basis", "--compute", "--max-elements", 5,
            "--design", examples / "wavesolder.design", "--model", examples / "wavesolder.model",
        )
        assert code == 4 and "budget" in err


class TestCommands:
    def test_saturated_enumeration(self, capsys, tmp_path):
        (tmp_path / "full.design").write_text("3 0\n")
        (tmp_path / "full.model").write_text("ABC\n")
        (tmp_path / "full.data").write_text("\n".join(map(str, [3, 1, 4, 1, 5, 9, 2, 6])) + "\n")
        code, out, _ = run(
            capsys, "enumerate", "--design", tmp_path / "full.design", "--model", tmp_path / "full.model",
            "--data", tmp_path / "full.data", "--format", "json",
        )
        res = json.loads(out)
        assert code == 0
        assert res["fiber_size"] == 1 and res["p_exact"] == 1.0 and res["df"] == 0

    def test_model_export(self, capsys, examples, tmp_path):
        target = tmp_path / "x0.mat"
        code, _, _ = run(
            capsys, "model", "--design", examples / "wavesolder.design",
            "--model", examples / "wavesolder.model", "--export", target,
        )
        assert code == 0
        assert target.read_text().splitlines()[0] == "10 16"

    def test_correspond_binomial(self, capsys, examples):
        code, out, _ = run(
            capsys, "correspond", "--family", "binomial",
            "--design", examples / "windshield.design", "--model", examples / "windshield.model",
        )
        assert code == 0 and "ABC/ACD/BD" in out

    def test_imported_basis(self, capsys, examples):
        code, out, _ = run(
            capsys, "basis", "--import", examples / "wavesolder.mar", "--format", "json",
            "--design", examples / "wavesolder.design", "--model", examples / "wavesolder.model",
        )
        assert code == 0 and json.loads(out)["moves"] == 23

    def test_mcmc_report(self, capsys, examples):
        code, out, _ = run(
            capsys, "test", "--design", examples / "wavesolder.design", "--model", examples / "wavesolder.model",
            "--data", examples / "wavesolder.data", "--basis", examples / "wavesolder.mar",
            "--burn-in", 5000, "--samples", 50000, "--batches", 50,
        )
        assert code == 0
        assert "deviance = 19.09" in out
        assert "asymptotic p = 0.0040" in out
        assert "MCMC p = " in out


class TestManifest:
    def test_replay_is_identical(self, capsys, examples, tmp_path):
        out = tmp_path / "run.json"
        hist = tmp_path / "hist.csv"
        code, first, _ = run(
            capsys, "test", "--design", examples / "wavesolder.design", "--model", examples / "wavesolder.model",
            "--data", examples / "wavesolder.data", "--basis", examples / "wavesolder.mar",
            "--burn-in", 1000, "--samples", 20000, "--batches", 20, "--seed", 7,
            "--format", "json", "--out", out, "--histogram", hist,
        )
        assert code == 0
        manifest = json.loads((tmp_path / "run.json.manifest.json").read_text())
        assert manifest["seed"] == 7 and set(manifest["outputs"]) == {"out", "histogram"}
        assert len(manifest["inputs"]) == 4
        code, text, _ = run(capsys, "replay", tmp_path / "run.json.manifest.json", "--outdir", tmp_path / "again")
        assert code == 0 and "2 output(s) hash-identical" in text
        assert (tmp_path / "again" / "run.json").read_text() == first

    def test_replay_detects_changed_input(self, capsys, examples, tmp_path):
        out = tmp_path / "d.txt"
        assert run(capsys, "design", examples / "windshield.design", "--out", out)[0] == 0
        (examples / "windshield.design").write_text("4 1\nD=AB\n")
        code, _, err = run(capsys, "replay", f"{out}.manifest.json")
        assert code == 2 and "changed" in err
