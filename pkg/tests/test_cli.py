import json
import subprocess
import sys

import numpy as np
import pytest

from carinfo.cli import main
from carinfo.data import load_counts, write_counts
from carinfo.graph import write_adjacency
from carinfo.harness import multi_state_fixture, oklahoma_like_fixture
from carinfo.reports import verify_manifest

FAST = ["--iterations", "2000", "--thin", "10"]


def _kv(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines() if "=" in line)


@pytest.fixture
def ok_files(tmp_path):
    data, graph = oklahoma_like_fixture()
    counts, adj = tmp_path / "ok.csv", tmp_path / "ok_adj.csv"
    write_counts(counts, data)
    write_adjacency(adj, graph)
    return counts, adj


class TestApprox:
    def test_gamma_to_lognormal(self, capsys):
        assert main(["approx", "--a", "8.75", "--b", "17500"]) == 0
        out = _kv(capsys.readouterr().out)
        assert float(out["sigma2"]) == pytest.approx(np.log1p(1 / 8.75), rel=1e-9)
        assert float(out["mu"]) == pytest.approx(np.log(5e-4) - np.log1p(1 / 8.75) / 2, rel=1e-9)
        assert len(out["mu"].lstrip("-").replace(".", "")) <= 10  # 10 significant digits

    def test_lognormal_to_gamma(self, capsys):
        assert main(["approx", "--mu", "-7.654983", "--sigma2", "0.1081623"]) == 0
        out = _kv(capsys.readouterr().out)
        assert float(out["a"]) == pytest.approx(8.75, rel=1e-3)
        assert float(out["b"]) == pytest.approx(17500, rel=1e-3)

    @pytest.mark.parametrize(
        "args",
        [
            ["approx", "--a", "0"],
            ["approx", "--a", "0", "--b", "1"],
            ["approx"],
            ["approx", "--a", "1", "--b", "1", "--mu", "0"],
            ["approx", "--mu", "0"],
        ],
    )
    def test_usage_errors(self, args, capsys):
        assert main(args) == 2
        assert "error" in capsys.readouterr().err


class TestInfo:
    def test_published_anchor(self, capsys):
        assert main(["info", "--sigma2", "0.1", "--tau2", "0.3", "--m0", "49"]) == 0
        out = _kv(capsys.readouterr().out)
        assert float(out["a_hat"]) == pytest.approx(8.754, abs=5e-4)
        assert float(out["precision"]) == pytest.approx(9.245, abs=5e-4)

    def test_m0_3(self, capsys):
        assert main(["info", "--sigma2", "0.1", "--tau2", "0.3", "--m0", "3"]) == 0
        assert float(_kv(capsys.readouterr().out)["precision"]) == pytest.approx(4.2857, abs=1e-4)

    @pytest.mark.parametrize("args", [["info", "--m0", "0"], ["info", "--sigma2", "0.1", "--tau2", "0.3", "--m0", "0"],
                                      ["info", "--sigma2", "-1", "--tau2", "0.3", "--m0", "3"]])
    def test_invalid(self, args):
        assert main(args) == 2


class TestFit:
    def test_restricted_bym(self, ok_files, tmp_path, capsys):
        counts, adj = ok_files
        out = tmp_path / "fit"
        rc = main(["fit", "--model", "bym", "--counts", str(counts), "--adjacency", str(adj),
                   "--restrict-a", "6", "--restrict-m0", "3", *FAST, "--out", str(out)])
        assert rc == 0
        for name in ("draws.csv", "summary.json", "summary.csv", "informativeness.json", "manifest.json"):
            assert (out / name).exists()
        info = json.loads((out / "informativeness.json").read_text())
        assert info["max"] < 6 and info["restriction"] == {"a_floor": 6.0, "m0": 3}
        header = (out / "draws.csv").read_text().splitlines()[0].split(",")
        a_col = header.index("a_hat")
        vals = [float(l.split(",")[a_col]) for l in (out / "draws.csv").read_text().splitlines()[1:]]
        assert max(vals) < 6
        assert verify_manifest(out / "manifest.json") == []
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 0 and manifest["command"][:2] == ["carinfo", "fit"]
        assert str(counts) in manifest["inputs"]

    def test_pg(self, tmp_path, capsys):
        assert main(["simulate", "--I", "30", "--seed", "2", "--out", str(tmp_path / "sim")]) == 0
        out = tmp_path / "pg"
        assert main(["fit", "--model", "pg", "--counts", str(tmp_path / "sim" / "counts.csv"), *FAST, "--out", str(out)]) == 0
        params = {p["parameter"] for p in json.loads((out / "summary.json").read_text())["parameters"]}
        assert {"a", "lambda0", "b"} <= params

    def test_env_output_root(self, ok_files, tmp_path, monkeypatch):
        counts, _ = ok_files
        monkeypatch.setenv("CARINFO_OUTPUT_ROOT", str(tmp_path / "root"))
        assert main(["fit", "--model", "pln", "--counts", str(counts), *FAST]) == 0
        assert (tmp_path / "root" / "fit" / "draws.csv").exists()

    @pytest.mark.parametrize(
        "extra",
        [
            ["--model", "pg", "--restrict-a", "6"],
            ["--model", "bym"],
            ["--model", "pln", "--adjacency", "x.csv"],
            ["--model", "bym", "--adjacency", "ADJ", "--restrict-m0", "3"],
            ["--model", "nope"],
        ],
    )
    def test_usage_errors(self, ok_files, extra):
        counts, adj = ok_files
        extra = [str(adj) if e == "ADJ" else e for e in extra]
        assert main(["fit", "--counts", str(counts), *extra, *FAST]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["fit", "--model", "pg", "--counts", str(tmp_path / "nope.csv")]) == 2

    def test_validation_error_has_row(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("region_id,y,n\nA,1,10\nB,-3,10\n")
        assert main(["fit", "--model", "pg", "--counts", str(p), *FAST]) == 2
        assert "row 3" in capsys.readouterr().err

    def test_adjacency_mismatch(self, ok_files, tmp_path, capsys):
        counts, _ = ok_files
        adj = tmp_path / "adj.csv"
        adj.write_text("region_a,region_b\nR001,ZZZ\n")
        assert main(["fit", "--model", "bym", "--counts", str(counts), "--adjacency", str(adj), *FAST]) == 2
        assert "ZZZ" in capsys.readouterr().err

    def test_bad_config(self, ok_files):
        counts, _ = ok_files
        assert main(["fit", "--model", "pg", "--counts", str(counts), "--iterations", "100"]) == 2

    def test_sampler_failure_exit_1(self, ok_files, monkeypatch, capsys):
        from carinfo import cli
        from carinfo.errors import SamplerError

        def boom(*a, **k):
            raise SamplerError("truncated draw failed at boundary 0.1")

        monkeypatch.setitem(cli.FITTERS, "pg", boom)
        counts, _ = ok_files
        assert main(["fit", "--model", "pg", "--counts", str(counts), *FAST]) == 1
        assert "boundary" in capsys.readouterr().err


class TestOtherCommands:
    def test_simulate_50_rows(self, tmp_path):
        assert main(["simulate", "--I", "50", "--seed", "1", "--out", str(tmp_path)]) == 0
        assert load_counts(tmp_path / "counts.csv").size == 50
        assert (tmp_path / "manifest.json").exists()

    def test_simulate_lattice(self, tmp_path):
        assert main(["simulate", "--lattice", "3", "4", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "adjacency.csv").exists() and load_counts(tmp_path / "counts.csv").size == 12

    def test_restricted(self, ok_files, tmp_path):
        counts, adj = ok_files
        out = tmp_path / "r"
        assert main(["restricted", "--counts", str(counts), "--adjacency", str(adj), "--a-floor", "4", *FAST, "--out", str(out)]) == 0
        paired = json.loads((out / "paired.json").read_text())
        assert paired["restricted_max_informativeness"] < 4
        assert (out / "comparison_regions.csv").exists() and (out / "draws_restricted.csv").exists()

    def test_states(self, tmp_path):
        args = ["states"]
        for name, (data, graph) in multi_state_fixture().items():
            write_counts(tmp_path / f"{name}.csv", data)
            write_adjacency(tmp_path / f"{name}_adj.csv", graph)
            args += ["--state", name, str(tmp_path / f"{name}.csv"), str(tmp_path / f"{name}_adj.csv")]
        out = tmp_path / "states"
        assert main(args + FAST + ["--out", str(out)]) == 0
        res = json.loads((out / "states.json").read_text())
        assert [s["state"] for s in res["states"]] == ["AA", "BB", "CC"] and res["skipped"] == ["DD"]

    def test_sim_study_quick(self, tmp_path):
        out = tmp_path / "ss"
        assert main(["sim-study", "--quick", "--I", "10", "50", "--seed", "7", "--out", str(out)]) == 0
        report = json.loads((out / "sim_study.json").read_text())
        assert report["spec"]["root_seed"] == 7 and report["spec"]["replicates"] == [1, 1]
        assert len(report["summaries"]) == 4

    def test_quantile_compare_quick(self, tmp_path):
        out = tmp_path / "qc"
        assert main(["quantile-compare", "--quick", "--ymax", "2", "--regions", "5", "--out", str(out)]) == 0
        lines = (out / "quantiles.csv").read_text().splitlines()
        assert len(lines) == 3 and lines[0].startswith("y,n,exact_q2.5")

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "carinfo", "info", "--sigma2", "0.1", "--tau2", "0.3", "--m0", "49"],
                             capture_output=True, text=True)
        assert res.returncode == 0 and "a_hat=8.754" in res.stdout
        res = subprocess.run([sys.executable, "-m", "carinfo", "approx", "--a", "0"], capture_output=True, text=True)
        assert res.returncode == 2

    def test_help(self, capsys):
        assert main(["--help"]) == 0
        assert "sim-study" in capsys.readouterr().out
