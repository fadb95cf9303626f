import json

import numpy as np
import pytest

from carinfo.diagnostics import (
    QUANTILE_PROBS,
    autocorrelation,
    compare_models,
    effective_sample_size,
    percent_change,
    summarize,
    summarize_all,
    summarize_array,
)
from carinfo.errors import ContractError
from carinfo.reports import RunManifest, fmt, verify_manifest, write_chain_draws, write_chain_summary, write_json
from carinfo.samplers import ChainOutput, McmcConfig


def _chain(model, region_ids=("A", "B"), chains=2, draws=200, seed=0, **params):
    cfg = McmcConfig(iterations=draws, burn_in=0, thin=1, chains=chains)
    rng = np.random.default_rng(seed)
    arrays = {}
    for k, v in params.items():
        arrays[k] = np.broadcast_to(np.asarray(v, float), (chains, draws) + np.shape(v)[2:]).copy() if np.ndim(v) else np.full((chains, draws), float(v))
    if "lambda" not in arrays:
        arrays["lambda"] = np.exp(rng.normal(-7, 0.1, (chains, draws, len(region_ids))))
    return ChainOutput(model, tuple(region_ids), arrays, {}, cfg, m0=3)


class TestSummaries:
    def test_constant(self):
        s = summarize_array("c", np.full((2, 300), 4.2))
        assert all(q == 4.2 for q in s.quantiles)
        assert s.sd == 0.0 and s.mean == 4.2
        assert 0 < s.ess <= 600

    def test_quantiles_type7(self):
        x = np.arange(1.0, 11.0)
        s = summarize_array("x", x)
        assert s.quantiles == tuple(np.quantile(x, QUANTILE_PROBS, method="linear"))
        assert s.median == 5.5
        assert s.interval95 == (s.quantiles[0], s.quantiles[-1])

    def test_non_decreasing(self):
        s = summarize_array("x", np.random.default_rng(1).standard_cauchy((2, 1000)))
        assert all(np.diff(s.quantiles) >= 0)

    def test_permutation_invariance(self):
        x = np.random.default_rng(2).gamma(2.0, size=(2, 500))
        y = np.random.default_rng(3).permutation(x.ravel()).reshape(2, 500)
        a, b = summarize_array("x", x), summarize_array("x", y)
        assert a.quantiles == b.quantiles
        assert a.mean == pytest.approx(b.mean, rel=1e-14) and a.sd == pytest.approx(b.sd, rel=1e-14)

    def test_empty(self):
        with pytest.raises(ContractError):
            summarize_array("x", np.empty((1, 0)))

    def test_summarize_selectors(self):
        chain = _chain("pg", a=5.0)
        assert summarize(chain, "a").median == 5.0
        assert summarize(chain, "informativeness").median == 5.0
        s = summarize(chain, "lambda", "B")
        assert s.name == "lambda[B]"
        with pytest.raises(ContractError):
            summarize(chain, "lambda")
        with pytest.raises(ContractError):
            summarize(chain, "a", "A")
        with pytest.raises(ContractError):
            summarize(chain, "missing")

    def test_summarize_all(self):
        names = [s.name for s in summarize_all(_chain("pg", a=5.0))]
        assert names == ["a", "lambda[A]", "lambda[B]"]


class TestEss:
    def test_iid_within_20pct(self):
        rng = np.random.default_rng(10)
        ratios = [effective_sample_size(rng.standard_normal(2000)) / 2000 for _ in range(50)]
        assert abs(np.mean(ratios) - 1) < 0.2

    def test_ar1(self):
        rng = np.random.default_rng(11)
        phi, n = 0.9, 200_000
        e = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = e[0] / np.sqrt(1 - phi**2)
        for t in range(1, n):
            x[t] = phi * x[t - 1] + e[t]
        want = (1 - phi) / (1 + phi)
        assert effective_sample_size(x) / n == pytest.approx(want, rel=0.3)

    def test_bounds(self):
        x = np.random.default_rng(12).standard_normal((3, 400))
        ess = effective_sample_size(x)
        assert 0 < ess <= 1200

    def test_autocorrelation_lag0(self):
        r = autocorrelation(np.random.default_rng(0).standard_normal(100))
        assert r[0] == pytest.approx(1.0)


class TestCompare:
    def test_closed_form_medians(self):
        t = compare_models([_chain("pg", a=5.0), _chain("pln", gamma=10.0)])
        meds = [row["median"] for row in t.informativeness_rows()]
        assert meds[0] == 5.0
        assert meds[1] == pytest.approx(9.5083, abs=1e-4)

    def test_identical_chains_zero_change(self):
        c = _chain("bym", sigma2=0.1, tau2=0.3)
        t = compare_models([c, c], labels=("x", "y"))
        assert np.all(t.percent_change == 0.0)
        assert all(r["pct_change_x_vs_y"] == 0.0 for r in t.region_rows())

    def test_antisymmetric(self):
        a = _chain("bym", sigma2=0.1, tau2=0.3, seed=1)
        b = _chain("bym", sigma2=0.2, tau2=0.3, seed=2)
        ab = compare_models([a, b], labels=("a", "b")).percent_change
        ba = compare_models([b, a], labels=("b", "a")).percent_change
        assert np.allclose(ab, -ba, rtol=0, atol=1e-12)
        assert np.allclose(percent_change(2.0, 1.0), -percent_change(1.0, 2.0))

    def test_sign_convention(self):
        assert percent_change(1.1, 1.0) > 0

    def test_region_order_independent(self):
        a = _chain("bym", sigma2=0.1, tau2=0.3, seed=1)
        b = ChainOutput("bym", ("B", "A"), {**a.draws, "lambda": a["lambda"][:, :, ::-1].copy()}, {}, a.config, m0=3)
        t = compare_models([a, b], labels=("a", "b"))
        assert np.allclose(t.percent_change, 0.0)

    def test_incompatible_regions(self):
        with pytest.raises(ContractError):
            compare_models([_chain("pg", a=5.0), _chain("pg", region_ids=("A", "C"), a=5.0)])

    def test_duplicate_labels(self):
        c = _chain("pg", a=5.0)
        with pytest.raises(ContractError):
            compare_models([c, c])


class TestReports:
    def test_fmt_roundtrip(self):
        for v in (0.1, 1 / 3, 5e-324, 1.7976931348623157e308, -2.5e-10):
            assert float(fmt(v)) == v
        assert fmt(3) == "3" and fmt(True) == "true"

    def test_draw_file_roundtrip(self, tmp_path):
        c = _chain("pg", a=5.0, seed=4)
        write_chain_draws(tmp_path / "d.csv", c)
        lines = (tmp_path / "d.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header[:2] == ["chain", "draw"] and "lambda[B]" in header
        assert len(lines) == 1 + c.n_chains * c.n_draws
        col = header.index("lambda[A]")
        back = np.array([float(l.split(",")[col]) for l in lines[1:]])
        assert np.array_equal(back, c.pooled("lambda")[:, 0])

    def test_summary_files(self, tmp_path):
        rows = write_chain_summary(tmp_path, _chain("pg", a=5.0))
        data = json.loads((tmp_path / "summary.json").read_text())
        assert data["model"] == "pg" and len(data["parameters"]) == len(rows) == 3
        assert (tmp_path / "summary.csv").read_text().startswith("parameter,mean,sd,q2.5,q25,q50,q75,q97.5,ess")

    def test_json_non_finite(self, tmp_path):
        write_json(tmp_path / "x.json", {"a": float("nan"), "b": np.float64(1.5), "c": np.arange(2)})
        assert json.loads((tmp_path / "x.json").read_text()) == {"a": None, "b": 1.5, "c": [0, 1]}

    def test_manifest_verifies(self, tmp_path):
        src = tmp_path / "in.csv"
        src.write_text("x\n")
        out = tmp_path / "out"
        out.mkdir()
        (out / "r.txt").write_text("result")
        m = RunManifest.build(["carinfo", "fit"], [src], {"k": 1}, 7)
        m.record_outputs(out)
        path = m.write(out)
        assert verify_manifest(path) == []
        src.write_text("changed\n")
        (out / "r.txt").write_text("tampered")
        assert sorted(verify_manifest(path)) == sorted([str(src), "r.txt"])
