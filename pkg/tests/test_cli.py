import io
import json
import subprocess
import sys

import pytest

from nmm_scalelab import ingest
from nmm_scalelab.cli import main
from nmm_scalelab.core import LossSurfaceFit, PowerLawFit

FIT = LossSurfaceFit(e_irreducible=1.9, a_coef=460.0, b_coef=330.0, alpha=0.3, beta=0.34)


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def fit_file(tmp_path):
    path = tmp_path / "fit.json"
    ingest.save_fit(FIT, path)
    return str(path)


class TestExitCodes:
    def test_help(self):
        assert run("--help")[0] == 0

    def test_usage_errors(self):
        assert run()[0] == 1
        assert run("bogus")[0] == 1
        assert run("predict", "--n", "1e9")[0] == 1
        assert run("flops", "--n", "1e9", "--d", "1e10", "--threads", "0")[0] == 1

    def test_data_errors(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("run_id,arch\n")
        code, _, err = run("fit", "--input", str(bad))
        assert code == 2 and "header" in err
        assert run("fit", "--input", str(tmp_path / "missing.csv"))[0] == 2
        assert run("hull", "--input", "fixture:nope")[0] == 2

    def test_wrong_fit_kind(self, tmp_path):
        path = tmp_path / "law.json"
        ingest.save_fit(PowerLawFit(k=1.0, p=-0.05, x_min=1.0, x_max=2.0, r_squared=1.0), path)
        assert run("predict", "--fit", str(path), "--n", "1e9", "--d", "1e10")[0] == 2


class TestCommands:
    def test_flops(self):
        assert run("flops", "--n", "1e9", "--d", "1e11")[1] == "6e+20\n"
        code, out, _ = run("flops", "--arch", "late", "--n", "1e9", "--d", "1e11", "--n-vision", "3e8",
                           "--vision-frac", "0.5")
        assert float(out) == pytest.approx(6e20 + 9e19)
        assert run("flops", "--arch", "late", "--n", "1e9", "--d", "1e11")[0] == 1

    def test_predict_lists_and_digits(self, fit_file):
        code, out, _ = run("predict", "--fit", fit_file, "--n", "1e9,2e9", "--d", "1e11", "--digits", "4")
        assert code == 0
        vals = out.split()
        assert len(vals) == 2
        assert float(vals[0]) == pytest.approx(float(FIT.predict(1e9, 1e11)), rel=1e-3)
        assert len(vals[0].replace(".", "")) <= 4
        assert run("predict", "--fit", fit_file, "--n", "1,2,3", "--d", "4,5")[0] == 1

    def test_global_options_before_or_after(self, fit_file):
        before = run("--digits", "3", "predict", "--fit", fit_file, "--n", "1e9", "--d", "1e11")[1]
        after = run("predict", "--fit", fit_file, "--n", "1e9", "--d", "1e11", "--digits", "3")[1]
        assert before == after

    def test_fit_and_eval(self, tmp_path):
        out_path = tmp_path / "fit.json"
        code, out, _ = run("fit", "--input", "fixture:early", "--mixture", "45-45-10", "--out", str(out_path))
        assert code == 0 and "alpha=" in out
        fit = ingest.load_fit(out_path)
        code, out, _ = run("eval", "--fit", str(out_path), "--input", "fixture:heldout_8b")
        header, row = out.strip().splitlines()
        assert header == "mse,r2,mae_percent"
        assert float(row.split(",")[2]) < 2.0
        assert isinstance(fit, LossSurfaceFit)

    def test_fit_rejects_mixed_groups(self):
        code, _, err = run("fit", "--input", "fixture:early")
        assert code == 2 and "groups" in err

    def test_out_dash_sends_json_to_stdout(self):
        code, out, err = run("hull", "--input", "fixture:early", "--mixture", "45-45-10", "--out", "-")
        doc = json.loads(out)
        assert doc["kind"] == "power_law" and doc["fields"]["p"] < 0
        assert err.startswith("k=")

    def test_frontier_methods(self, fit_file):
        code, out, _ = run("frontier", "--fit", fit_file, "--method", "closed-form")
        assert code == 0 and out.startswith("a=")
        code, out, _ = run("frontier", "--fit", fit_file, "--flops", "1e19,1e20,1e21,1e22", "--d-min", "1e8",
                           "--d-max", "1e14")
        assert code == 0
        assert run("frontier", "--fit", fit_file)[0] == 1
        assert run("frontier", "--fit", fit_file, "--method", "closed-form", "--relation", "late")[0] == 1

    def test_frontier_late(self, fit_file):
        code, out, _ = run("frontier", "--fit", fit_file, "--relation", "late", "--input", "fixture:late",
                           "--arch", "late", "--d-min", "1e7", "--d-max", "1e14", "--d-points", "400")
        assert code == 0
        assert float(out.split()[0].split("=")[1]) > 0

    def test_bootstrap(self, tmp_path):
        path = tmp_path / "boot.json"
        code, out, _ = run("bootstrap", "--input", "fixture:early", "--mixture", "45-45-10", "--iters", "3",
                           "--seed", "7", "--out", str(path))
        assert code == 0 and out.startswith("coef,mean,std")
        doc = json.loads(path.read_text())
        assert doc["iterations"] == 3 and doc["seed"] == 7

    def test_sparse_fit(self):
        code, out, err = run("sparse-fit", "--input", "fixture:moe", "--fix", "gamma=0.7", "--fix", "delta_s=0.2",
                             "--fix", "lam=0.2")
        assert code == 0, err
        assert "gamma=0.7" in out
        code, _, err = run("sparse-fit", "--input", "fixture:moe", "--fix", "gamma=0.7")
        assert code == 2 and "sparsity level" in err
        assert run("sparse-fit", "--input", "fixture:moe", "--fix", "gamma")[0] == 1

    def test_spec_score(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("layer,expert,text_tokens,image_tokens,source\n0,0,5,0,s\n0,1,0,5,s\n"
                        "1,0,2,2,s\n1,1,2,2,s\n")
        assert run("spec-score", "--assignments", str(path))[1] == "layer,score\n0,1.0\n1,0.0\n"

    def test_config_file(self, tmp_path, fit_file):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"digits": 2}))
        out = run("--config", str(cfg), "predict", "--fit", fit_file, "--n", "1e9", "--d", "1e11")[1]
        assert out == f"{float(FIT.predict(1e9, 1e11)):.2g}\n"
        cfg.write_text(json.dumps({"colour": "red"}))
        assert run("--config", str(cfg), "flops", "--n", "1", "--d", "1")[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nmm_scalelab.cli", "flops", "--n", "1e9", "--d", "1e10"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "6e+19\n"
