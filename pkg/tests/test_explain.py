"""Attribution correctness: local accuracy, brute-force Shapley agreement,
stability reports, dependence data, and display labels."""

import itertools

import numpy as np
import pytest

from ecgfusion import gbt
from ecgfusion.errors import (DimensionMismatch, EmptyMatrix,
                              FewerThanTwoPoints)
from ecgfusion.explain import (ShapMatrix, dependence_data, display_label,
                               global_importance, label_map, shap_matrix,
                               shap_values_single_tree, stability_analysis,
                               tree_expected_value, tree_shap)


def _cond_expectation(tree, x, coalition):
    """Cover-weighted conditional expectation of one tree.

    Features in ``coalition`` follow the decision path; all others
    marginalize over the training distribution encoded by node covers.
    """
    def walk(node):
        if tree.feature[node] < 0:
            return tree.weight[node]
        f = int(tree.feature[node])
        left, right = int(tree.left[node]), int(tree.right[node])
        if f in coalition:
            v = x[f]
            if np.isnan(v):
                child = left if tree.miss_left[node] else right
            elif v < tree.threshold[node]:
                child = left
            else:
                child = right
            return walk(child)
        wl = tree.cover[left] / tree.cover[node]
        wr = tree.cover[right] / tree.cover[node]
        return wl * walk(left) + wr * walk(right)

    return walk(0)


def _brute_shapley(tree, x, n_features):
    """Exact Shapley values by full coalition enumeration (2^F terms)."""
    import math
    feats = list(range(n_features))
    phi = np.zeros(n_features)
    for i in feats:
        rest = [f for f in feats if f != i]
        for r in range(len(rest) + 1):
            for subset in itertools.combinations(rest, r):
                s = set(subset)
                weight = (math.factorial(len(s))
                          * math.factorial(n_features - len(s) - 1)
                          / math.factorial(n_features))
                phi[i] += weight * (_cond_expectation(tree, x, s | {i})
                                    - _cond_expectation(tree, x, s))
    return phi


def _small_model(seed, n=80, n_feat=5, depth=3, rounds=2, nan_frac=0.0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n_feat))
    if nan_frac:
        X[rng.random(X.shape) < nan_frac] = np.nan
    y = (np.nan_to_num(X[:, 0]) + 0.5 * np.nan_to_num(X[:, 1]) > 0).astype(int)
    params = gbt.GbtParams(n_rounds=rounds, max_depth=depth,
                           min_child_weight=1.0, n_classes=2)
    return gbt.train(X, y, params), X


def test_local_accuracy_exact():
    model, X = _small_model(0, n=200, n_feat=8, depth=4, rounds=5)
    margins = gbt.predict_margin(model, X)
    for i in range(50):
        for k in range(2):
            phi, base = tree_shap(model, X[i], k)
            assert abs(phi.sum() + base - margins[i, k]) < 1e-6


def test_local_accuracy_with_missing_values():
    model, X = _small_model(1, n=150, n_feat=6, rounds=4, nan_frac=0.15)
    margins = gbt.predict_margin(model, X)
    for i in range(40):
        phi, base = tree_shap(model, X[i], 0)
        assert abs(phi.sum() + base - margins[i, 0]) < 1e-6


def test_single_tree_matches_brute_force_shapley():
    matched = 0
    for seed in range(50):
        model, X = _small_model(seed, n=60, n_feat=5, depth=3, rounds=1)
        tree = model.trees[0][0]
        for i in range(3):
            fast = shap_values_single_tree(tree, X[i], 5)
            brute = _brute_shapley(tree, X[i], 5)
            np.testing.assert_allclose(fast, brute, atol=1e-8)
            matched += 1
    assert matched == 150


def test_brute_force_agreement_with_missing_values():
    for seed in (0, 1, 2):
        model, X = _small_model(100 + seed, n=80, n_feat=4, depth=3,
                                rounds=1, nan_frac=0.2)
        tree = model.trees[0][0]
        row = X[0].copy()
        row[1] = np.nan
        np.testing.assert_allclose(shap_values_single_tree(tree, row, 4),
                                   _brute_shapley(tree, row, 4), atol=1e-8)


def test_depth_one_tree_closed_form():
    # a single split: phi of the split feature is the full deviation from
    # the cover-weighted mean, all other features get exactly zero
    model, X = _small_model(7, n=100, n_feat=3, depth=1, rounds=1)
    tree = model.trees[0][0]
    assert tree.n_nodes == 3
    f = int(tree.feature[0])
    x = X[0]
    phi = shap_values_single_tree(tree, x, 3)
    leaf = int(tree.left[0] if x[f] < tree.threshold[0] else tree.right[0])
    expected = tree.weight[leaf] - tree_expected_value(tree)
    assert phi[f] == pytest.approx(expected, abs=1e-12)
    for j in range(3):
        if j != f:
            assert phi[j] == 0.0


def test_null_player_gets_zero():
    # features the ensemble never splits on must receive zero attribution
    model, X = _small_model(9, n=150, n_feat=6, depth=2, rounds=3)
    used = set()
    for rnd in model.trees:
        for tree in rnd:
            used |= set(tree.feature[tree.feature >= 0].tolist())
    unused = set(range(6)) - used
    assert unused  # the toy label depends on two features only
    for i in range(10):
        phi, _ = tree_shap(model, X[i], 0)
        for j in unused:
            assert phi[j] == 0.0


def test_tree_shap_wrong_length_raises():
    model, X = _small_model(3)
    with pytest.raises(DimensionMismatch):
        tree_shap(model, X[0][:-1], 0)


def test_shap_matrix_and_global_importance():
    model, X = _small_model(4, n=120, n_feat=5, rounds=3)
    sm = shap_matrix(model, X, k=1, row_ids=[f"r{i}" for i in range(len(X))])
    assert sm.values.shape == (120, 5)
    assert sm.class_index == 1
    ranked = global_importance(sm)
    assert len(ranked) == 5
    vals = [v for _, v in ranked]
    assert vals == sorted(vals, reverse=True)
    expected = np.mean(np.abs(sm.values), axis=0)
    by_name = dict(ranked)
    for j, name in enumerate(model.feature_names):
        assert by_name[name] == pytest.approx(expected[j])


def test_global_importance_empty_raises():
    sm = ShapMatrix(0, 0.0, np.zeros((0, 3)), ["a", "b", "c"])
    with pytest.raises(EmptyMatrix):
        global_importance(sm)


def test_stability_no_resampling_is_all_ones():
    model, X = _small_model(5, n=100, rounds=3)
    sm = shap_matrix(model, X, k=0)
    rep = stability_analysis(sm, B=20, topk=3, seed=1, resample=False)
    assert np.all(rep.jaccard_matrix == 1.0)
    assert rep.mean_jaccard == 1.0
    assert rep.min_jaccard == 1.0
    assert all(s == rep.top_sets[0] for s in rep.top_sets)


def test_stability_report_deterministic():
    model, X = _small_model(6, n=100, rounds=3)
    sm = shap_matrix(model, X, k=0)
    a = stability_analysis(sm, B=20, topk=10, seed=3).to_dict()
    b = stability_analysis(sm, B=20, topk=10, seed=3).to_dict()
    assert a == b


def test_stability_selection_frequency_sums():
    model, X = _small_model(8, n=100, rounds=3)
    sm = shap_matrix(model, X, k=0)
    rep = stability_analysis(sm, B=10, topk=2, seed=0)
    assert sum(rep.selection_frequency.values()) == pytest.approx(2.0)
    assert all(0 < v <= 1.0 for v in rep.selection_frequency.values())


def test_dependence_data_exact_line():
    xs = np.array([0.0, 1.0, 2.0])
    ys = np.array([1.0, 3.0, 5.0])  # y = 2x + 1
    d = dependence_data(xs, ys)
    assert d["slope"] == pytest.approx(2.0)
    assert d["intercept"] == pytest.approx(1.0)
    assert d["r2"] == pytest.approx(1.0)
    assert d["pairs"] == [(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]
    assert d["n_missing_excluded"] == 0


def test_dependence_data_excludes_missing():
    xs = np.array([0.0, np.nan, 1.0, 2.0, np.nan])
    ys = np.array([1.0, 9.0, 3.0, 5.0, 9.0])
    d = dependence_data(xs, ys)
    assert d["n_missing_excluded"] == 2
    assert d["slope"] == pytest.approx(2.0)


def test_dependence_data_too_few_points():
    with pytest.raises(FewerThanTwoPoints):
        dependence_data(np.array([1.0, np.nan]), np.array([1.0, 2.0]))


def test_display_labels_cover_grammar():
    label, mapped = display_label("I__qr_interval_amplitude__mean")
    assert label == "Lead I QR-interval average amplitude"
    assert mapped
    label, mapped = display_label("I__qr_interval_amplitude__median")
    assert label == "Lead I QR-interval median amplitude"
    assert mapped
    assert display_label("heart_rate__bpm") == ("Heart rate (bpm)", True)
    assert display_label("ehr__dx__I42")[1]
    assert display_label("ehr__med__FUROSEMIDE")[1]
    assert display_label("ehr__bmi") == ("Body mass index", True)
    assert display_label("ehr__bmi_observed")[1]
    assert display_label("V3__ts__spectral_entropy")[1]


def test_display_label_unmapped_passes_through():
    assert display_label("made_up_feature") == ("made_up_feature", False)


def test_label_map_is_total_over_pipeline_names():
    from ecgfusion.ecg_features import clinical_feature_names
    from ecgfusion.ts_features import ts_feature_names
    names = clinical_feature_names() + ts_feature_names()
    rows = label_map(names)
    assert len(rows) == len(names)
    assert all(mapped for _, _, mapped in rows)
    # labels never leak back into raw names
    assert [raw for raw, _, _ in rows] == names
