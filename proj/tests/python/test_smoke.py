import json

import numpy as np
import pytest

import dquag


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("dquag")
    csv, schema, graph = dquag.synth(rows=600, seed=42)
    (root / "clean.csv").write_text(csv)
    (root / "schema.json").write_text(json.dumps(schema))
    (root / "graph.json").write_text(json.dumps(graph))
    bundle = dquag.train(
        str(root / "clean.csv"),
        str(root / "schema.json"),
        graph=str(root / "graph.json"),
        hyperparams={"seed": 7, "epochs": 3, "hidden_dim": 8},
    )
    return root, bundle


def test_numeric_helpers():
    assert dquag.calibrate_threshold(list(range(1, 101)), 0.95) == 95
    w = dquag.sample_weights([0.1, 0.3])
    assert w == pytest.approx([1.5, 0.5], rel=1e-4)
    assert dquag.flag_features([1, 1, 1, 1, 100]) == []
    errors = [1.0] * 36
    errors[4] = 100.0
    assert dquag.flag_features(errors) == [4]


def test_train_and_score(workspace):
    root, bundle = workspace
    assert bundle.threshold > 0
    assert bundle.hyperparams["seed"] == 7
    assert len(bundle.feature_names) == 8
    scores = dquag.score(bundle, str(root / "clean.csv"))
    errors = scores["instance_errors"]
    assert isinstance(errors, np.ndarray) and errors.shape == (600,)
    assert scores["feature_errors"].shape == (600, 8)
    assert np.mean(errors > bundle.threshold) == pytest.approx(0.05)
    assert dquag.validate(bundle, str(root / "clean.csv"))["verdict"] == "clean"


def test_round_trip(workspace):
    root, bundle = workspace
    bundle.save(str(root / "model.json"))
    again = dquag.Bundle.load(str(root / "model.json"))
    assert again.to_json() == bundle.to_json()


def test_inject_validate_repair(workspace):
    root, bundle = workspace
    plan = {"targets": ["x3", "x5", "c0"], "rate": 0.2, "kinds": ["missing", "numeric_anomaly", "typo"], "seed": 43}
    dirty, mask = dquag.inject(str(root / "clean.csv"), str(root / "schema.json"), plan)
    assert mask.startswith("row,column,kind\n")
    assert dquag.inject(str(root / "clean.csv"), str(root / "schema.json"), plan)[0] == dirty
    (root / "dirty.csv").write_text(dirty)
    report = dquag.validate(bundle, str(root / "dirty.csv"))
    assert report["verdict"] == "problematic"
    fixed, changes = dquag.repair(bundle, str(root / "dirty.csv"))
    assert fixed.splitlines()[0] == "x0,x1,x2,x3,x4,x5,c0,c1"
    assert changes.startswith("instance,feature,old,new\n")


def test_errors_surface(workspace):
    root, _ = workspace
    with pytest.raises(dquag.DquagError):
        dquag.Bundle.load(str(root / "missing.json"))
    with pytest.raises(dquag.DquagError, match="unknown hyperparameter"):
        dquag.train(str(root / "clean.csv"), str(root / "schema.json"), hyperparams={"hidden": 8})
