import math

import numpy as np
import pytest

import biascorr

SMALL = {
    "data": {"prevalence": 0.3, "train_n": 300, "eval_n": 300, "seed": 3},
    "train": {"steps": 150, "eval_every": 50},
}


def test_synthesize_follows_ptilde():
    x, y = biascorr.synthesize("binary-overlap", 400, ptilde=[0.5, 0.5], prevalence=0.001, seed=2)
    assert x.shape == (400, 2)
    assert np.bincount(y).tolist() == [200, 200]
    x2, y2 = biascorr.synthesize("binary-overlap", 400, ptilde=[0.5, 0.5], prevalence=0.001, seed=2)
    assert np.array_equal(x, x2) and np.array_equal(y, y2)


def test_run_and_predict():
    out = biascorr.run(SMALL)
    rep = out["report"]
    assert 0.5 < rep["auc"] <= 1.0
    assert math.isclose(rep["w_acc"], 0.3 * rep["tpr"] + 0.7 * rep["tnr"], rel_tol=1e-12)
    assert len(out["trace"]) == 3
    assert sum(out["tracked_marginal"]) == pytest.approx(1.0)
    x, _ = biascorr.synthesize("binary-overlap", 50, prevalence=0.3, seed=9)
    p = biascorr.predict(SMALL, out["params"], x)
    assert p.shape == (50, 2)
    assert np.allclose(p.sum(axis=1), 1.0)
    with pytest.raises(biascorr.Error):
        biascorr.predict(SMALL, out["params"][:-1], x)


def test_runs_are_deterministic():
    assert biascorr.run(SMALL)["params"] == biascorr.run(SMALL)["params"]


def test_config_errors_name_the_field():
    with pytest.raises(biascorr.ConfigError, match="train.lr"):
        biascorr.run({"train": {"lr": 0.1}})


def test_published_rows():
    n = 1_000_000
    r = biascorr.binary_report(tp=712_000, fp=n - 941_000, tn=941_000, fn=n - 712_000, prevalence=0.3)
    assert abs(r["w_acc"] - 0.872) <= 1e-3 and abs(r["ba"] - 0.826) <= 1e-3
    r = biascorr.binary_report(tp=0, fp=0, tn=1000, fn=1000, prevalence=0.001)
    assert r["ba"] == 0.5 and r["ppv"] == 0.0


def test_roc_auc_is_mann_whitney():
    rng = np.random.default_rng(0)
    s = rng.random(200)
    y = (rng.random(200) < 0.4).astype(np.int64)
    _, auc = biascorr.roc_auc(s, y)
    pos, neg = s[y == 1], s[y == 0]
    ref = ((pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()) / (len(pos) * len(neg))
    assert auc == pytest.approx(ref, abs=1e-12)


def test_oracle_check():
    r = biascorr.oracle_check(20)
    assert r["all_passed"] and r["passed"] == 20
    assert not biascorr.oracle_check(3, tolerance=0.0)["all_passed"]
