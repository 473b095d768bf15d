import os
import subprocess

import numpy as np
import pytest

import negmem


def test_normalize():
    assert np.allclose(negmem.normalize([3.0, 4.0]), [0.6, 0.8])
    with pytest.raises(negmem.Error):
        negmem.normalize([0.0, 0.0])


def test_two_point_svm():
    clf = negmem.train_svm(np.array([[2.0]]), np.array([[-2.0]]), c=1.0)
    assert abs(clf.weights[0] - 0.5) < 1e-3
    assert abs(clf.bias) < 1e-3
    assert abs(clf.score([2.0]) - 1.0) < 1e-3
    # 10 * tol * (1 + P) with the default tolerance.
    assert negmem.dual_gap(clf, np.array([[2.0]]), np.array([[-2.0]])) < 1e-3 * 1.125


def test_greedy_and_quota():
    items = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]], dtype=np.float32)
    assert negmem.greedy_diversify(items, 2) == [1, 0]
    assert negmem.compute_quota({0: 5, 1: 5, 2: 5}, 10) == {0: 4, 1: 3, 2: 3}


def test_feature_round_trip(tmp_path):
    data = negmem.generate_synthetic(4, 8, train_per_class=10, test_per_class=2, seed=1)
    labels, rows = data["train"]
    path = str(tmp_path / "train.dsf")
    negmem.save_features(path, labels, rows)
    back_labels, back_rows = negmem.load_features(path)
    assert np.array_equal(labels, back_labels)
    assert np.array_equal(rows, back_rows)


def test_run_experiment():
    data = negmem.generate_synthetic(12, 16, train_per_class=40, test_per_class=10, seed=2)
    out = negmem.run_experiment(
        *data["train"], *data["test"], strategy="div", memory_budget=60, batch_size=4,
        c_grid=[1.0], validation_per_class=5, seed=3)
    reports = out["reports"]
    assert [r["classes"] for r in reports] == [4, 8, 12]
    assert reports[-1]["top1"] > 0.8
    assert len(out["classifiers"]) == 12


def test_cli_exit_codes(tmp_path):
    assert negmem.cli(["gen-synthetic", "--classes", "0"]) == 1
    exe = os.environ.get("NEGMEM_CLI")
    if exe:
        r = subprocess.run([exe, "gen-synthetic", "--classes", "3", "--dim", "4",
                            "--train-out", str(tmp_path / "a.dsf"), "--test-out", str(tmp_path / "b.dsf")])
        assert r.returncode == 0
        labels, rows = negmem.load_features(str(tmp_path / "a.dsf"))
        assert rows.shape == (300, 4)
