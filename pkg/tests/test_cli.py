import io
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from semitail.cli import main, read_values
from semitail.report import REPORT_FIELDS, load_schema, parse_report, to_json
from semitail.study import SimConfig, simulate_dgp

SCHEMA = load_schema()


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], stdout=out)
    return code, out.getvalue()


def write(path, values, header=None):
    lines = ([header] if header else []) + [repr(float(x)) for x in values]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    write(d / "xi05.txt", simulate_dgp(SimConfig(xi=0.5), 21), header="spend")
    write(d / "xi08.txt", simulate_dgp(SimConfig(xi=0.8), 22))
    write(d / "small.txt", simulate_dgp(SimConfig(xi=0.5, n_total=3000), 23))
    return d


class TestInput:
    def test_header_and_blank_lines(self, tmp_path):
        p = tmp_path / "a.txt"
        p.write_text("amount\n1\n\n2.5\n-3\n4\n5\n")
        np.testing.assert_array_equal(read_values(p), [1, 2.5, -3, 4, 5])

    @pytest.mark.parametrize("text", ["1\n2\nx\n4\n5\n", "1\n2\nnan\n4\n5\n", "1\n2\ninf\n4\n5\n", "1\n2\n-3\n", ""])
    def test_bad_input_exits_2(self, tmp_path, text):
        p = tmp_path / "bad.txt"
        p.write_text(text)
        code, out = run("fit", p, "--threshold", "1")
        assert code == 2
        doc = json.loads(out)
        jsonschema.validate(doc, SCHEMA)
        assert doc["type"] == "InputError"

    def test_missing_file(self):
        code, out = run("fit", "/nonexistent/file.txt", "--auto")
        assert code == 2 and json.loads(out)["exit_code"] == 2


class TestFit:
    def test_auto_laplace_covers_truth(self, data_dir):
        code, out = run("fit", data_dir / "xi05.txt", "--auto", "--method", "laplace")
        assert code == 0
        doc = json.loads(out)
        jsonschema.validate(doc, SCHEMA)
        assert abs(doc["posterior"]["estimate"] - 20) < 3 * doc["posterior"]["sd"]
        assert doc["threshold"]["mode"] == "rule"
        assert sum(r["selected"] for r in doc["diagnostics"]) == 1
        assert doc["input"]["count"] == 10**5

    def test_report_round_trips(self, data_dir):
        _, out = run("fit", data_dir / "xi05.txt", "--auto")
        report = parse_report(out)
        assert to_json(report) == out
        assert parse_report(to_json(report)) == report

    def test_schema_covers_report_fields(self):
        analysis = SCHEMA["$defs"]["analysis"]["properties"]
        assert set(REPORT_FIELDS["AnalysisReport"]) == set(analysis)
        assert set(REPORT_FIELDS["TailSummary"]) == set(analysis["tail"]["properties"])
        assert set(REPORT_FIELDS["InputDigest"]) == set(analysis["input"]["properties"])
        assert set(REPORT_FIELDS["ThresholdInfo"]) == set(analysis["threshold"]["properties"])

    def test_threshold_above_max(self, data_dir):
        code, out = run("fit", data_dir / "small.txt", "--threshold", "1e12")
        assert code == 3 and json.loads(out)["type"] == "TooFewExceedances"

    def test_imh_byte_identical(self, data_dir):
        args = ("fit", data_dir / "small.txt", "--threshold", "40", "--method", "imh", "--draws", "150", "--seed", "5")
        a, b = run(*args), run(*args)
        c = run(*args, "--threads", "2")
        assert a == b == c and a[0] == 0
        assert json.loads(a[1])["tail"]["acceptance_rate"] is not None

    def test_csv_format(self, data_dir):
        code, out = run("fit", data_dir / "small.txt", "--threshold", "40", "--format", "csv")
        lines = out.splitlines()
        assert code == 0 and lines[0] == "field,value"
        assert any(line.startswith("posterior.estimate,") for line in lines)

    def test_prior_flags(self, data_dir, tmp_path):
        code, out = run("fit", data_dir / "small.txt", "--threshold", "40", "--prior-xi", "80,80", "--prior-sigma", "1,0.01")
        assert code == 0 and json.loads(out)["prior"] == {"a": 80.0, "b": 80.0, "c": 1.0, "d": 0.01, "source": "flags"}
        est = write(tmp_path / "est.txt", [0.45, 0.5, 0.55, 0.48, 0.52])
        code, out = run("fit", data_dir / "small.txt", "--threshold", "40", "--prior-from-estimates", est)
        assert code == 0 and json.loads(out)["prior"]["source"] == "estimates"

    @pytest.mark.parametrize("flags", [["--prior-xi", "1"], ["--prior-xi", "0,1"], ["--prior-sigma", "a,b"],
                                       ["--threads", "0"], ["--bogus"]])
    def test_config_errors(self, data_dir, flags):
        code, out = run("fit", data_dir / "small.txt", "--threshold", "40", *flags)
        assert code == 4
        jsonschema.validate(json.loads(out), SCHEMA)

    def test_threshold_or_auto_required(self, data_dir):
        assert run("fit", data_dir / "small.txt")[0] == 4


class TestAb:
    def test_identical_groups(self, data_dir):
        f = data_dir / "small.txt"
        code, out = run("ab", f, f, "--threshold", "40")
        doc = json.loads(out)
        jsonschema.validate(doc, SCHEMA)
        assert code == 0 and doc["effect"]["estimate"] == 0

    def test_known_effect(self, data_dir):
        code, out = run("ab", data_dir / "xi08.txt", data_dir / "xi05.txt", "--auto")
        effect = json.loads(out)["effect"]
        assert code == 0 and abs(effect["estimate"] - 15) < 3 * effect["sd"]
        assert parse_report(out).to_dict() == json.loads(out)

    def test_missing_group(self, data_dir):
        assert run("ab", data_dir / "small.txt", "/nope.txt", "--auto")[0] == 2


class TestScan:
    def test_selected_row_follows_rule(self, data_dir):
        code, out = run("scan", data_dir / "xi08.txt")
        rows = json.loads(out)["rows"]
        sel = [r for r in rows if r["selected"]]
        assert code == 0 and len(sel) == 1
        i = sel[0]["index"]
        nxt = next(r for r in rows[i + 1:] if r["ratio"] is not None and not r["boundary"])
        assert abs(sel[0]["ratio"] - 1) <= 0.15 and nxt["ratio"] > sel[0]["ratio"]

    def test_single_point_grid(self, data_dir):
        code, out = run("scan", data_dir / "small.txt", "--grid", "40", "--format", "csv")
        assert code == 0 and len(out.strip().splitlines()) == 2
        assert out.splitlines()[0] == "index,u,n,xi_hat,sigma_hat,ratio,q_n,boundary,error,selected"

    def test_all_fail(self, data_dir):
        code, out = run("scan", data_dir / "small.txt", "--grid", "1e9,2e9")
        assert code == 3 and json.loads(out)["type"] == "NoValidDiagnostics"


class TestStudies:
    def test_default_simulation(self, tmp_path):
        code, _ = run("simulate", "--out", tmp_path / "sim", "--seed", "1")
        assert code == 0
        doc = json.loads((tmp_path / "sim" / "study.json").read_text())
        assert set(doc["targets"]) == {"xi=0.2", "xi=0.5", "xi=0.8"}
        assert len(doc["selections"]) == 60
        assert (tmp_path / "sim" / "study.csv").exists()
        assert len(list((tmp_path / "sim" / "plot_data").iterdir())) == 6

    def test_simulation_files_identical(self, tmp_path):
        args = ["simulate", "--xi", "0.5", "--n-total", "1000", "--replicates", "10", "--levels", "0.8,0.9,0.95"]
        run(*args, "--out", tmp_path / "a")
        run(*args, "--out", tmp_path / "b", "--threads", "2")
        for name in ("study.csv", "study.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    @pytest.mark.parametrize("flags", [["--replicates", "0"], ["--xi", "1.2"], ["--methods", "nope"]])
    def test_simulation_config_errors(self, flags):
        assert run("simulate", *flags)[0] == 4

    def test_validate_synthetic(self, tmp_path):
        args = ["validate", "--synthetic-xi", "0.6", "--synthetic-size", "200000", "--subsample-size", "5000",
                "--replicates", "10", "--prior-from-blocks", "5000", "--prior-blocks", "10",
                "--methods", "semiparametric-laplace,naive,winsorized"]
        code, out = run(*args)
        assert code == 0
        doc = json.loads(out)
        assert {r["method"] for r in doc["rows"]} == {"semiparametric-laplace", "naive", "winsorized"}
        assert run(*args, "--threads", "2") == (code, out)

    def test_validate_needs_input(self):
        assert run("validate")[0] == 4


def test_module_entry_point(tmp_path):
    p = write(tmp_path / "v.txt", [1, 2, 3])
    proc = subprocess.run([sys.executable, "-m", "semitail", "fit", str(p), "--auto"], capture_output=True, text=True)
    assert proc.returncode == 2 and "InputError" in proc.stderr
