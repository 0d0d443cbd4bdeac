import csv
import json
import math

import numpy as np
import pytest
from scipy import integrate

from catoni_erm import harness
from catoni_erm.datagen import ParetoSpec
from catoni_erm.errors import BadTailIndex, CatoniError
from catoni_erm.harness import (
    CSV_COLUMNS,
    ExperimentGrid,
    RepResult,
    _cell_variance,
    _summarise,
    choose_alpha,
    oracle_is_finite,
    oracle_variance,
    run_cell,
    run_grid,
    run_replication,
)
from catoni_erm.robust_mean import alpha_fixed_confidence, alpha_simple


def tiny(task="regression", **kw):
    base = dict(task=task, betas=(3.0, 6.01), ns=(30,), reps=3, holdout_m=500)
    base.update(kw)
    return ExperimentGrid(**base)


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentGrid(task="svm")
        with pytest.raises(ValueError):
            ExperimentGrid(reps=0)
        with pytest.raises(ValueError):
            ExperimentGrid(alpha_rule="bogus")
        with pytest.raises(ValueError):
            ExperimentGrid(variance_bound="lots")
        assert ExperimentGrid(variance_bound="2.5").variance_bound == 2.5

    def test_cells_sorted(self):
        g = ExperimentGrid(betas=(4.0, 2.5), ns=(100, 50))
        assert g.cells() == [(2.5, 50), (2.5, 100), (4.0, 50), (4.0, 100)]

    def test_infinite_variance_warns(self):
        with pytest.warns(UserWarning):
            ExperimentGrid(betas=(1.5, 3.0))


class TestVariance:
    def test_regression_closed_form(self):
        beta = 6.01
        spec = ParetoSpec(beta)
        mean = beta / (beta - 1)

        def moment(k):
            f = lambda x: (x - mean) ** k * beta * x ** (-beta - 1)  # noqa: E731
            return integrate.quad(f, 1, np.inf, limit=200)[0]

        oracle = moment(4) - moment(2) ** 2
        assert oracle_variance("regression", beta) == pytest.approx(oracle, rel=1e-8)
        assert spec.variance == pytest.approx(moment(2), rel=1e-8)

    def test_kmeans_trace(self):
        assert oracle_variance("kmeans", 3.0) == pytest.approx(1.5)
        with pytest.raises(BadTailIndex):
            oracle_variance("kmeans", 2.0)

    def test_finiteness(self):
        assert not oracle_is_finite("regression", 4.0)
        assert oracle_is_finite("regression", 4.01)
        assert not oracle_is_finite("kmeans", 2.0)
        assert oracle_is_finite("kmeans", 2.01)

    def test_auto_resolution(self):
        g = ExperimentGrid(task="regression")
        assert _cell_variance(g, 3.0) is None
        assert _cell_variance(g, 6.01) == pytest.approx(oracle_variance("regression", 6.01))
        gk = ExperimentGrid(task="kmeans")
        assert _cell_variance(gk, 2.5) == pytest.approx(2 * ParetoSpec(2.5).variance)

    def test_explicit_modes(self):
        assert _cell_variance(ExperimentGrid(variance_bound="plugin"), 6.01) is None
        assert _cell_variance(ExperimentGrid(variance_bound=3.5), 6.01) == 3.5
        scaled = ExperimentGrid(variance_bound="oracle", noise_scale=2.0)
        assert _cell_variance(scaled, 6.01) == pytest.approx(
            16 * oracle_variance("regression", 6.01)
        )
        assert _cell_variance(ExperimentGrid(variance_bound="oracle", noise_scale=0.0), 6.01) == 1.0

    def test_choose_alpha(self):
        assert choose_alpha("simple", 2.0, 100, 0.05) == alpha_simple(2.0, 100)
        assert choose_alpha("fixed", 2.0, 100, 0.05) == alpha_fixed_confidence(2.0, 100, 0.05)
        with pytest.raises(ValueError):
            choose_alpha("nope", 2.0, 100, 0.05)


class TestReplication:
    def test_noiseless_regression_zero_excess(self):
        g = tiny(noise_scale=0.0, variance_bound="oracle")
        r = run_replication(g, 6.01, 40, 0, _cell_variance(g, 6.01))
        assert not r.failed
        assert abs(r.excess_vanilla) < 1e-10
        assert abs(r.excess_catoni) < 1e-10
        assert r.risk_optimal == 0.0

    def test_paired_hashes(self):
        for task in ("regression", "kmeans"):
            r = run_replication(tiny(task), 3.0, 40, 1)
            assert r.hashes["catoni_train"] == r.hashes["vanilla_train"]
            assert r.hashes["catoni_holdout"] == r.hashes["vanilla_holdout"]

    def test_deterministic(self):
        g = tiny("kmeans")
        a = run_replication(g, 3.0, 40, 2, 1.5)
        b = run_replication(g, 3.0, 40, 2, 1.5)
        assert (a.risk_catoni, a.risk_vanilla, a.seed) == (b.risk_catoni, b.risk_vanilla, b.seed)

    def test_failures_captured(self, monkeypatch):
        real = harness._regression_rep

        def flaky(grid, beta, n, rep, v):
            if rep == 1:
                raise CatoniError("boom")
            if rep == 2:
                out = real(grid, beta, n, rep, v)
                out.risk_catoni = math.inf
                return out
            return real(grid, beta, n, rep, v)

        monkeypatch.setattr(harness, "_regression_rep", flaky)
        cell = run_cell(tiny(reps=4), 3.0, 30)
        assert cell.failed_reps == 2
        assert cell.reps == 2
        assert "boom" in cell.replications[1].error
        assert cell.replications[2].error == "non-finite holdout risk"


class TestSummary:
    def test_improvement_formula(self):
        reps = [
            RepResult(rep=i, seed=i, risk_catoni=c, risk_vanilla=v, risk_optimal=1.0)
            for i, (c, v) in enumerate([(1.1, 1.5), (1.3, 1.7), (1.2, 1.2)])
        ]
        reps.append(RepResult(rep=3, seed=3, failed=True))
        cell = _summarise(tiny(), 3.0, 30, reps)
        ec = np.array([0.1, 0.3, 0.2])
        ev = np.array([0.5, 0.7, 0.2])
        assert cell.excess_catoni == pytest.approx(ec.mean())
        assert cell.se_catoni == pytest.approx(ec.std(ddof=1) / math.sqrt(3))
        assert cell.improvement_pct == pytest.approx((ev.mean() - ec.mean()) / ec.mean() * 100)
        assert (cell.reps, cell.failed_reps) == (3, 1)

    def test_zero_catoni_excess_is_inf(self):
        reps = [RepResult(rep=0, seed=0, risk_catoni=1.0, risk_vanilla=2.0, risk_optimal=1.0)]
        cell = _summarise(tiny(), 3.0, 30, reps)
        assert cell.improvement_pct == math.inf
        assert cell.se_catoni == 0.0

    def test_row_format(self):
        reps = [RepResult(rep=0, seed=0, risk_catoni=0.1, risk_vanilla=0.3, risk_optimal=0.0)]
        row = _summarise(tiny(), 3.0, 30, reps).row()
        assert len(row) == len(CSV_COLUMNS)
        assert row[4] == format(0.1, ".17g")
        assert float(row[8]) == (0.3 - 0.1) / 0.1 * 100


class TestRunGrid:
    def test_outputs(self, tmp_path):
        g = tiny()
        cells = run_grid(g, tmp_path)
        assert len(cells) == 2
        with open(tmp_path / "results.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert [(float(r[1]), int(r[2])) for r in rows[1:]] == g.cells()
        events = [json.loads(l)["event"] for l in open(tmp_path / "manifest.jsonl")]
        assert events == ["start", "cell", "cell", "done"]
        reps = [json.loads(l) for l in open(tmp_path / "replications.jsonl")]
        assert len(reps) == 6
        assert not (tmp_path / "results.partial.csv").exists()
        assert b"\r" not in (tmp_path / "results.csv").read_bytes()

    def test_rerun_byte_identical(self, tmp_path):
        g = tiny("kmeans")
        run_grid(g, tmp_path / "a")
        run_grid(g, tmp_path / "b")
        assert (tmp_path / "a/results.csv").read_bytes() == (tmp_path / "b/results.csv").read_bytes()

    def test_resume_skips_done_cells(self, tmp_path):
        g = tiny()
        run_grid(g, tmp_path / "full")
        full = (tmp_path / "full/results.csv").read_text().splitlines()
        part = tmp_path / "part"
        part.mkdir()
        (part / "results.partial.csv").write_text("\n".join(full[:2]) + "\n")
        cells = run_grid(g, part, resume=True)
        assert [(c.beta, c.n) for c in cells] == [(6.01, 30)]
        assert (part / "results.csv").read_text().splitlines() == full
        start = json.loads(open(part / "manifest.jsonl").readline())
        assert start["skipped_cells"] == [[3.0, 30]]
