"""Release gate: oracle-equivalence and qualitative-structure checks for the
whole pipeline, each with an explicit runtime budget.

These tests are intentionally self-contained (oracles are re-derived here
rather than imported from the unit suites) so a failure localizes to the
library, not to shared test scaffolding.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest
import yaml

from ecgfusion import cli, gbt, pipeline, synth
from ecgfusion.cohort import EcgMeta, pair_ecg_echo, stratified_patient_split
from ecgfusion.ehr_features import chi_square_test, kruskal_wallis
from ecgfusion.evaluation import auroc_ovr, select_f1_threshold
from ecgfusion.explain import (shap_matrix, shap_values_single_tree,
                               stability_analysis, tree_shap)
from ecgfusion.signal import (ALL_LEADS, MEASURED_LEADS, EcgRecord,
                              PreprocessConfig, derive_limb_leads,
                              preprocess_record)


class _Budget:
    """Asserts wall-clock runtime on exit."""

    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, exc_type, *rest):
        self.elapsed = time.monotonic() - self.t0
        if exc_type is None:
            assert self.elapsed < self.seconds, \
                f"runtime {self.elapsed:.1f}s exceeds {self.seconds}s budget"


def _random_record(rng, n=1000, fs=500.0):
    return EcgRecord(record_id="r", patient_id="p",
                     acquired_at="2024-01-01T00:00:00", sampling_rate=fs,
                     duration=n / fs,
                     leads={name: rng.standard_normal(n)
                            for name in MEASURED_LEADS})


def test_limb_lead_identities_hold_to_machine_precision():
    rng = np.random.default_rng(0)
    with _Budget(5.0):
        for _ in range(1000):
            rec = _random_record(rng, n=500)
            twelve = derive_limb_leads(rec)
            lead = twelve.leads
            scale = max(np.abs(lead[n]).max() for n in ALL_LEADS)
            einthoven = np.abs(lead["I"] + lead["III"] - lead["II"]).max()
            goldberger = np.abs(lead["aVR"] + lead["aVL"]
                                + lead["aVF"]).max()
            assert einthoven <= 1e-12 * scale
            assert goldberger <= 1e-12 * scale


def _probe_gain(freq, cfg, fs=500.0, n=60000):
    t = np.arange(n) / fs
    x = np.sin(2 * np.pi * freq * t)
    rec = EcgRecord(record_id="r", patient_id="p",
                    acquired_at="2024-01-01T00:00:00", sampling_rate=fs,
                    duration=n / fs,
                    leads={name: x.copy() for name in MEASURED_LEADS})
    out = preprocess_record(derive_limb_leads(rec), cfg)
    y = out.leads["I"][n // 4: -n // 4]
    ref = x[n // 4: -n // 4]
    return np.sqrt(np.mean(y ** 2) / np.mean(ref ** 2))


def test_filter_frequency_response():
    # forward-backward filtering applies the magnitude response twice, so
    # the analytic oracle is the squared order-5 Butterworth gain
    cfg = PreprocessConfig(standardize=False)
    with _Budget(10.0):
        assert _probe_gain(0.0001, cfg) < 0.01
        analytic_10hz = (1.0 / np.sqrt(1.0 + (0.5 / 10.0) ** 10)) ** 2
        assert _probe_gain(10.0, cfg) == pytest.approx(analytic_10hz,
                                                       rel=0.02)
        notch_gain = _probe_gain(60.0, cfg)
        assert -20.0 * np.log10(notch_gain) >= 20.0


def test_auroc_equals_exhaustive_pair_counting():
    rng = np.random.default_rng(1)
    with _Budget(30.0):
        checked = 0
        while checked < 200:
            n = int(rng.integers(4, 501))
            scores = np.round(rng.random(n), 1)  # heavy ties
            positives = rng.random(n) < rng.uniform(0.1, 0.9)
            if positives.all() or not positives.any():
                continue
            pos, neg = scores[positives], scores[~positives]
            wins = (pos[:, None] > neg).sum() \
                + 0.5 * (pos[:, None] == neg).sum()
            oracle = wins / (len(pos) * len(neg))
            labels = positives.astype(int)
            assert auroc_ovr(scores, labels, 1) == oracle  # |delta| = 0
            checked += 1


def _f1_at(scores, positives, t):
    pred = scores >= t
    tp = np.sum(pred & positives)
    denom = 2 * tp + np.sum(pred & ~positives) + np.sum(~pred & positives)
    return 2 * tp / denom if denom else 0.0


def test_f1_threshold_equals_exhaustive_search():
    rng = np.random.default_rng(2)
    with _Budget(30.0):
        checked = 0
        while checked < 200:
            n = int(rng.integers(5, 1001))
            scores = np.round(rng.random(n), 2)
            labels = (rng.random(n) < 0.3).astype(int)
            if labels.all() or not labels.any():
                continue
            positives = labels == 1
            candidates = np.r_[np.unique(scores), scores.max() + 1.0]
            best = max(_f1_at(scores, positives, t) for t in candidates)
            chosen = select_f1_threshold(scores, labels, 1)
            assert _f1_at(scores, positives, chosen) == pytest.approx(best)
            checked += 1


def _cond_expectation(tree, x, coalition):
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
    feats = list(range(n_features))
    phi = np.zeros(n_features)
    for i in feats:
        rest = [f for f in feats if f != i]
        for r in range(len(rest) + 1):
            for subset in itertools.combinations(rest, r):
                s = set(subset)
                w = (math.factorial(len(s))
                     * math.factorial(n_features - len(s) - 1)
                     / math.factorial(n_features))
                phi[i] += w * (_cond_expectation(tree, x, s | {i})
                               - _cond_expectation(tree, x, s))
    return phi


def test_treeshap_local_accuracy_and_brute_force_agreement():
    with _Budget(120.0):
        # local accuracy on every (row, class) of a 1,000-row problem
        rng = np.random.default_rng(3)
        X = rng.standard_normal((1000, 10))
        X[rng.random(X.shape) < 0.1] = np.nan
        y = ((np.nan_to_num(X[:, 0]) > 0).astype(int)
             + 2 * (np.nan_to_num(X[:, 1]) > 0.2).astype(int))
        model = gbt.train(X, y, gbt.GbtParams(n_rounds=3, max_depth=3,
                                              n_classes=4))
        margins = gbt.predict_margin(model, X)
        for i in range(1000):
            for k in range(4):
                phi, base = tree_shap(model, X[i], k)
                assert abs(phi.sum() + base - margins[i, k]) < 1e-6

        # coalition-enumeration agreement on small random ensembles
        for seed in range(50):
            rng = np.random.default_rng(100 + seed)
            n_feat = int(rng.integers(3, 7))
            depth = int(rng.integers(1, 4))
            Xs = rng.standard_normal((60, n_feat))
            if seed % 3 == 0:
                Xs[rng.random(Xs.shape) < 0.15] = np.nan
            ys = (np.nan_to_num(Xs[:, 0]) > 0).astype(int)
            small = gbt.train(Xs, ys, gbt.GbtParams(
                n_rounds=2, max_depth=depth, min_child_weight=1.0,
                n_classes=2))
            for row in Xs[:2]:
                fast, _ = tree_shap(small, row, 0)
                brute = np.zeros(n_feat)
                for round_trees in small.trees:
                    brute += _brute_shapley(round_trees[0], row, n_feat)
                np.testing.assert_allclose(fast, brute, atol=1e-8)


def test_gbt_optimization_properties():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((500, 10))
    y = ((X[:, 0] + 0.4 * X[:, 1] > 0).astype(int)
         + 2 * (X[:, 2] > 0.3).astype(int))
    with _Budget(60.0):
        model = gbt.train(X, y, gbt.GbtParams(n_rounds=50,
                                              min_child_weight=5.0))
        losses = model.history["train_mlogloss"]
        assert len(losses) == 50
        assert all(b <= a for a, b in zip(losses, losses[1:]))

        for round_trees in model.trees:
            for tree in round_trees:
                if tree.n_nodes == 1:
                    continue
                assert tree.cover[tree.feature < 0].min() >= 5.0 - 1e-9

        # analytic g = p - 1[y=k] against central differences of the
        # per-example loss -log softmax(m)[y]
        eps = 1e-5
        for _ in range(30):
            m = rng.standard_normal(4)
            target = int(rng.integers(0, 4))
            p = gbt.softmax(m)
            for k in range(4):
                e = np.zeros(4)
                e[k] = eps

                def loss(margins):
                    return -np.log(gbt.softmax(margins)[target])

                numeric = (loss(m + e) - loss(m - e)) / (2 * eps)
                analytic = p[k] - (1.0 if k == target else 0.0)
                assert numeric == pytest.approx(analytic, rel=1e-5,
                                                abs=1e-7)


def test_association_statistics_hand_derived_values():
    stat, dof, _p = chi_square_test(np.array([[10, 20], [20, 10]]))
    assert dof == 1
    assert stat == pytest.approx(20.0 / 3.0, abs=1e-3)
    h, _p = kruskal_wallis([np.array([1.0, 2.0, 3.0]),
                            np.array([4.0, 5.0, 6.0])])
    assert h == pytest.approx(27.0 / 7.0, abs=1e-3)


def test_multimodal_gain_structure_on_synthetic_cohort():
    # held-out severe-class ranking across three split seeds; the point is
    # the direction (fusion never loses to either single modality), not
    # the absolute magnitudes
    prevalences = [0.0226, 0.0347, 0.0593, 0.8835]
    with _Budget(600.0):
        records, snaps, echos = synth.generate_cohort(
            5000, prevalences, synth.default_profiles(), seed=11)
        recs = [r for r, _ in records]
        del records
        metas = [EcgMeta(r.record_id, r.patient_id, r.acquired_at)
                 for r in recs]
        examples, _excl = pair_ecg_echo(metas, echos)
        snapshots = {s.patient_id: s for s in snaps}

        # stream extraction in chunks so waveforms never all coexist with
        # the preprocessed array (the container has ~6 GB of memory)
        parts = []
        while recs:
            batch, recs = recs[:250], recs[250:]
            ids, arr, fs = pipeline.preprocess_records(batch)
            parts.append(pipeline.ecg_feature_matrix(ids, arr, fs))
        from ecgfusion.matrix import FeatureMatrix
        ecg_fm = FeatureMatrix(
            [rid for p in parts for rid in p.ids], parts[0].names,
            np.concatenate([p.values for p in parts]), parts[0].metadata)

        for seed in (0, 1, 2):
            for ex in examples:
                ex.split = ""
            stratified_patient_split(examples, seed=seed)
            vocab_dx, vocab_med = pipeline.build_vocabularies(examples,
                                                              snapshots)
            ehr_fm = pipeline.ehr_feature_matrix(examples, snapshots,
                                                 vocab_dx, vocab_med)
            features = pipeline.assemble_features(ecg_fm, ehr_fm, examples)
            severe_auroc = {}
            for modality in pipeline.MODALITIES:
                params = gbt.GbtParams(n_classes=4, n_rounds=8, seed=0,
                                       early_stopping_rounds=0)
                model = pipeline.train_modality(features, examples,
                                                modality, params)
                X_te, y_te, _ = pipeline.split_xy(features, examples,
                                                  "test",
                                                  model.feature_names)
                proba = gbt.predict_proba(model, X_te)
                severe_auroc[modality] = auroc_ovr(proba[:, 0], y_te, 0)
            assert severe_auroc["multimodal"] >= severe_auroc["ecg_only"]
            assert severe_auroc["multimodal"] >= severe_auroc["ehr_only"]
            assert severe_auroc["multimodal"] > 0.8


def test_stability_degenerate_case_and_byte_identical_report():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((150, 8))
    y = (X[:, 0] > 0).astype(int)
    model = gbt.train(X, y, gbt.GbtParams(n_rounds=4, n_classes=2))
    sm = shap_matrix(model, X, k=1)

    frozen = stability_analysis(sm, B=20, topk=8, seed=9, resample=False)
    assert np.all(frozen.jaccard_matrix == 1.0)
    assert frozen.mean_jaccard == 1.0

    blob_a = json.dumps(stability_analysis(sm, B=20, topk=10,
                                           seed=9).to_dict(),
                        sort_keys=True).encode()
    blob_b = json.dumps(stability_analysis(sm, B=20, topk=10,
                                           seed=9).to_dict(),
                        sort_keys=True).encode()
    assert blob_a == blob_b


def test_end_to_end_cli_determinism(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "seed": 3,
        "synth": {"n": 60, "prevalences": [0.25] * 4},
        "gbt": {"n_rounds": 4, "early_stopping_rounds": 0},
        "eval": {"bootstrap_B": 20},
        "explain": {"classes": ["severe"], "B": 5, "topk": 5,
                    "n_dependence": 0},
    }))
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        for cmd in ("synth", "preprocess", "cohort", "extract", "train",
                    "evaluate", "explain"):
            assert cli.main([cmd, "--config", str(cfg_path),
                             "--out-dir", str(out)]) == 0
        outputs.append(out)
    a, b = outputs
    for rel in sorted(p.relative_to(a) for p in (a / "eval").glob("*")):
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    assert (a / "explain" / "shap_multimodal_severe.csv").read_bytes() == \
        (b / "explain" / "shap_multimodal_severe.csv").read_bytes()


def test_feature_extraction_throughput():
    profile = synth.default_profiles()["normal"]
    records = [synth.generate_record(profile, seed=s)[0]
               for s in range(1000)]
    ids, arr, fs = pipeline.preprocess_records(records)
    with _Budget(60.0):
        features = pipeline.ecg_feature_matrix(ids, arr, fs, threads=1)
    assert features.values.shape == (1000, 954)
