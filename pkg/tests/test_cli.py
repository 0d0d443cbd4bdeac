import csv
import io

import numpy as np
import pytest

from catoni_erm.cli import main
from catoni_erm.datagen import read_points_csv, read_regression_csv


def table(text):
    return list(csv.reader(io.StringIO(text)))


def test_mean_simulated(capsys):
    assert main(["mean", "--beta", "3", "--n", "200"]) == 0
    rows = dict(table(capsys.readouterr().out)[1:])
    assert set(rows) == {"catoni", "median_of_means", "sample_mean", "alpha", "n"}
    assert rows["n"] == "200"
    assert abs(float(rows["catoni"])) < 0.5


def test_mean_from_file(tmp_path, capsys):
    path = tmp_path / "x.txt"
    path.write_text("value\n1\n2\n3\n4\n5\n")
    assert main(["mean", "--input", str(path), "--alpha", "0.1", "--blocks", "5"]) == 0
    rows = dict(table(capsys.readouterr().out)[1:])
    assert float(rows["catoni"]) == pytest.approx(3.0, abs=1e-9)
    assert float(rows["median_of_means"]) == 3.0


def test_regress_roundtrip(tmp_path, capsys):
    data = tmp_path / "reg.csv"
    assert main(["regress", "--n", "80", "--restarts", "0", "--holdout-m", "1000",
                 "--save-data", str(data)]) == 0
    rows = table(capsys.readouterr().out)
    assert rows[0] == ["quantity", "catoni", "vanilla", "truth"]
    assert [r[0] for r in rows[1:6]] == [f"theta{j}" for j in range(1, 6)]
    assert "holdout_risk" in [r[0] for r in rows]
    assert read_regression_csv(data).n == 80
    assert main(["regress", "--input", str(data), "--loss", "1", "--restarts", "0"]) == 0
    assert table(capsys.readouterr().out)[1][3] == "nan"


def test_kmeans(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    out = tmp_path / "centers.csv"
    assert main(["kmeans", "--n", "120", "--n-init", "2", "--holdout-m", "500",
                 "--save-data", str(pts), "--out", str(out)]) == 0
    assert "holdout excess" in capsys.readouterr().err
    rows = table(out.read_text())
    assert rows[0] == ["arm", "center", "x1", "x2"]
    assert len(rows) == 9
    assert read_points_csv(pts).shape == (120, 2)


def test_bounds(capsys):
    assert main(["bounds", "--variance", "1", "--n", "1000", "--rho", "2", "--dim", "2",
                 "--k", "4"]) == 0
    rows = dict(table(capsys.readouterr().out)[1:])
    assert float(rows["alpha"]) == pytest.approx(np.sqrt(2 / 1000))
    assert float(rows["theorem1_bound"]) > 0
    assert float(rows["gamma2_entropy_integral"]) > 0


def test_experiment_and_plot(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["experiment", "regression", "--beta", "3.01", "--n", "30", "--reps", "2",
                 "--holdout-m", "200", "--out", str(out)]) == 0
    printed = capsys.readouterr().out.split()
    assert str(out / "results.csv") in printed
    assert (out / "regression_n30.svg").exists()
    assert main(["plot", str(out / "results.csv"), "--out", str(tmp_path / "figs")]) == 0
    assert (tmp_path / "figs/regression_n30.svg").exists()


def test_error_exit_code(capsys):
    assert main(["mean", "--beta", "0.5"]) == 2
    assert "error" in capsys.readouterr().err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip()
