"""Metrics tests: confusion counts, the exact trapezoid/pairwise AUC
equality, and the single evaluation path shared by live and cached flows."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protoforge.metrics import (
    confusion_matrix,
    evaluate,
    pairwise_auc,
    report_from_maxsims,
    roc_auc,
)
from protoforge.model import maxsims_matrix
from protoforge.refinery import build_cache


def test_confusion_perfect_pair():
    probs = [(0.1, 0.9), (0.8, 0.2)]
    conf, acc = confusion_matrix(probs, ["manipulated", "pristine"])
    assert conf == {"tp": 1, "fp": 0, "tn": 1, "fn": 0}
    assert acc == 1.0


def test_confusion_all_wrong():
    n = 5
    probs = [(0.2, 0.8)] * n
    conf, acc = confusion_matrix(probs, ["pristine"] * n)
    assert conf == {"tp": 0, "fp": n, "tn": 0, "fn": 0}
    assert acc == 0.0


def test_confusion_threshold_zero_predicts_all_manipulated():
    probs = [(1.0, 0.0), (0.5, 0.5), (0.0, 1.0)]
    labels = ["pristine", "manipulated", "manipulated"]
    conf, _ = confusion_matrix(probs, labels, threshold=0.0)
    assert conf["tp"] + conf["fp"] == 3
    assert conf["tn"] == conf["fn"] == 0


def test_confusion_tie_goes_to_manipulated():
    conf, _ = confusion_matrix([(0.5, 0.5)], ["pristine"])
    assert conf == {"tp": 0, "fp": 1, "tn": 0, "fn": 0}


def test_confusion_rejects_empty_and_mismatch():
    with pytest.raises(ValueError):
        confusion_matrix([], [])
    with pytest.raises(ValueError):
        confusion_matrix([(0.5, 0.5)], ["pristine", "manipulated"])


def test_auc_perfect_separation():
    scores = [0.9, 0.8, 0.2, 0.1]
    labels = ["manipulated", "manipulated", "pristine", "pristine"]
    points, auc = roc_auc(scores, labels)
    assert auc == 1.0
    assert points[0] == (0.0, 0.0)
    assert points[-1] == (1.0, 1.0)


def test_auc_all_tied_scores():
    scores = [0.5] * 6
    labels = ["manipulated", "pristine"] * 3
    points, auc = roc_auc(scores, labels)
    assert auc == 0.5
    assert points == [(0.0, 0.0), (1.0, 1.0)]


def test_auc_requires_both_labels():
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], ["pristine", "pristine"])
    with pytest.raises(ValueError):
        pairwise_auc([0.1, 0.2], ["pristine", "pristine"])


def test_auc_equals_pairwise_on_random_sets(rng):
    for _ in range(20):
        n = int(rng.integers(4, 40))
        # coarse grid forces plenty of ties
        scores = rng.integers(0, 6, size=n) / 5.0
        labels = ["manipulated" if v else "pristine" for v in rng.integers(0, 2, size=n)]
        if len(set(labels)) < 2:
            continue
        _, auc = roc_auc(scores, labels)
        assert auc == pairwise_auc(scores, labels)


@given(st.lists(st.tuples(st.integers(0, 10), st.booleans()), min_size=4, max_size=60))
@settings(max_examples=150)
def test_auc_pairwise_property(pairs):
    labels = ["manipulated" if b else "pristine" for _, b in pairs]
    if len(set(labels)) < 2:
        return
    scores = [v / 10.0 for v, _ in pairs]
    points, auc = roc_auc(scores, labels)
    assert auc == pairwise_auc(scores, labels)
    assert points[0] == (0.0, 0.0)
    assert points[-1] == (1.0, 1.0)
    # monotone staircase
    for (a0, b0), (a1, b1) in zip(points, points[1:]):
        assert a1 >= a0 and b1 >= b0


def test_evaluate_is_deterministic(mini_model, mini_encoded):
    _, enc_test = mini_encoded
    a = evaluate(mini_model, enc_test)
    b = evaluate(mini_model, enc_test)
    assert a.as_dict() == b.as_dict()


def test_evaluate_cache_equals_live(mini_model, mini_encoded):
    _, enc_test = mini_encoded
    cache = build_cache(mini_model, enc_test, "test")
    live = evaluate(mini_model, enc_test)
    cached = evaluate(mini_model, cache)
    assert live.as_dict() == cached.as_dict()


def test_all_zero_weights_forced_outcome(mini_model, mini_encoded):
    _, enc_test = mini_encoded
    zero = type(mini_model)(
        id="zero",
        parent_id=None,
        recipe_version=mini_model.recipe_version,
        sim_cfg=mini_model.sim_cfg,
        prototypes=mini_model.prototypes,
        weights=np.zeros_like(mini_model.weights),
        train_config=mini_model.train_config,
    )
    report = evaluate(zero, enc_test)
    # p = (0.5, 0.5) everywhere; ties predict manipulated
    manip_frac = np.mean([es.label == "manipulated" for es in enc_test])
    assert report.accuracy == pytest.approx(manip_frac)
    assert report.confusion["tn"] == 0 and report.confusion["fn"] == 0


def test_report_width_mismatch_rejected(mini_model, mini_encoded):
    _, enc_test = mini_encoded
    S, _ = maxsims_matrix(mini_model, enc_test)
    with pytest.raises(ValueError):
        report_from_maxsims(S[:, :-1], [es.label for es in enc_test], mini_model)


def test_report_fields_consistent(mini_model, mini_encoded):
    _, enc_test = mini_encoded
    r = evaluate(mini_model, enc_test)
    c = r.confusion
    assert c["tp"] + c["fp"] + c["tn"] + c["fn"] == r.n_samples == len(enc_test)
    assert r.accuracy == (c["tp"] + c["tn"]) / r.n_samples
    assert r.prototype_count == len(mini_model.prototypes)
    assert 0.0 <= r.auc <= 1.0
    d = r.as_dict()
    assert set(d) == {
        "accuracy", "confusion", "roc", "auc", "loss", "n_samples", "prototype_count"
    }
