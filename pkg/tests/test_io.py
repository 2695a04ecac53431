import json

import numpy as np
import pytest

from semicp.dataio import (RESULT_FIELDS, load_dataset, load_threshold,
                           save_dataset, save_threshold, write_results)
from semicp.datagen import SyntheticConfig, generate_synthetic
from semicp.dataset import ProbabilityDataset
from semicp.calibration import conformal_quantile
from semicp.errors import DataError


def toy_dataset():
    return ProbabilityDataset(
        probs=[[0.25, 0.5, 0.25], [0.125, 0.125, 0.75]],
        labels=[1, -1],
        logits=[[np.log(0.25), np.log(0.5), np.log(0.25)],
                [np.log(0.125), np.log(0.125), np.log(0.75)]],
        features=[[1.5, -2.0], [0.0, 3.25]],
    )


def test_roundtrip_bit_identical(tmp_path):
    ds = toy_dataset()
    path = tmp_path / "toy.csv"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert np.array_equal(back.probs, ds.probs)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.logits, ds.logits)
    assert np.array_equal(back.features, ds.features)


def test_roundtrip_synthetic_exact(tmp_path):
    ds = generate_synthetic(SyntheticConfig(n_classes=4, n_samples=50, seed=8))
    path = tmp_path / "synth.csv"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert np.array_equal(back.probs, ds.probs)
    assert np.array_equal(back.logits, ds.logits)
    assert np.array_equal(back.features, ds.features)


def test_bad_probability_row_reports_index(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("#semicp,v1,K=2,features=0\n"
                    "label,p_0,p_1\n"
                    "0,0.5,0.5\n"
                    "1,0.4,0.5\n")
    with pytest.raises(DataError, match="row 2"):
        load_dataset(path)


def test_header_and_row_validation(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("not a header\n")
    with pytest.raises(DataError, match="magic"):
        load_dataset(path)

    path.write_text("#semicp,v1,K=2,features=0\nlabel,p_0\n0,1.0\n")
    with pytest.raises(DataError, match="header"):
        load_dataset(path)

    path.write_text("#semicp,v1,K=2,features=0\nlabel,p_0,p_1\n0,0.5\n")
    with pytest.raises(DataError, match="columns"):
        load_dataset(path)

    path.write_text("#semicp,v1,K=2,features=0\nlabel,p_0,p_1\n0,nan,1.0\n")
    with pytest.raises(DataError, match="non-finite"):
        load_dataset(path)

    path.write_text("#semicp,v1,K=2,features=0\nlabel,p_0,p_1\n2,0.5,0.5\n")
    with pytest.raises(DataError, match="label"):
        load_dataset(path)

    path.write_text("#semicp,v1,K=2,features=0\nlabel,p_0,p_1\n")
    with pytest.raises(DataError, match="no data rows"):
        load_dataset(path)


def test_logits_only_softmax(tmp_path):
    path = tmp_path / "z.csv"
    path.write_text("#semicp,v1,K=3,features=0\n"
                    "label,z_0,z_1,z_2\n"
                    "0,1.0,2.0,3.0\n"
                    "-1,0.0,0.0,0.0\n")
    ds = load_dataset(path)
    z = np.array([1.0, 2.0, 3.0])
    expected = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    assert np.allclose(ds.probs[0], expected, atol=1e-15)
    assert np.allclose(ds.probs[1], [1 / 3] * 3)


def test_unlabeled_rows_roundtrip(tmp_path):
    ds = ProbabilityDataset(probs=[[0.5, 0.5]], labels=[-1])
    path = tmp_path / "u.csv"
    save_dataset(ds, path)
    assert load_dataset(path).labels[0] == -1


def test_write_results_json_and_csv(tmp_path):
    record = {
        "method": "semicp", "score": "thr", "n": 20, "N": 4000, "alpha": 0.1,
        "trials": 10, "cov_gap": 1.25, "over_cov_gap": 1.0,
        "under_cov_gap": 0.25, "avg_size": 2.5, "improvement": None,
        "histogram": [0, 10], "mean_coverage": 0.9,
    }
    jpath = tmp_path / "r.json"
    write_results([record], jpath, "json")
    loaded = json.loads(jpath.read_text())
    assert loaded["schema"] == "semicp-results-v1"
    assert list(loaded["results"][0].keys()) == [
        "method", "score", "n", "N", "alpha", "trials", "cov_gap",
        "over_cov_gap", "under_cov_gap", "avg_size", "improvement",
        "histogram", "mean_coverage"]
    assert loaded["results"][0]["cov_gap"] == 1.25

    cpath = tmp_path / "r.csv"
    write_results([record], cpath, "csv")
    lines = cpath.read_text().splitlines()
    assert lines[0] == ",".join(RESULT_FIELDS)
    cells = lines[1].split(",")
    assert cells[0] == "semicp"
    assert cells[RESULT_FIELDS.index("improvement")] == ""
    assert cells[RESULT_FIELDS.index("histogram")] == "0|10"

    # empty results still produce a valid file
    write_results([], tmp_path / "empty.csv", "csv")
    assert (tmp_path / "empty.csv").read_text().splitlines() == [
        ",".join(RESULT_FIELDS)]
    write_results([], tmp_path / "empty.json", "json")
    assert json.loads((tmp_path / "empty.json").read_text())["results"] == []


def test_threshold_file_roundtrip(tmp_path):
    t = conformal_quantile([0.3, 0.9, 0.5], 0.25)
    path = tmp_path / "t.json"
    save_threshold(t, path, extra={"n": 3, "N": 0, "epsilon": 0.0})
    assert load_threshold(path) == t
    t_all = conformal_quantile([0.3], 0.25)
    save_threshold(t_all, path)
    assert load_threshold(path) == t_all


def test_missing_file_is_data_error():
    with pytest.raises(DataError):
        load_dataset("/nonexistent/nope.csv")
