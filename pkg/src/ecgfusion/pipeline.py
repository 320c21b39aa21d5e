"""End-to-end orchestration shared by the CLI and the library API.

Stages operate on in-memory objects; the CLI wraps them with the on-disk
artifact formats. All randomness derives from one root seed via fixed
per-stage offsets.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import gbt
from .cohort import CLASS_NAMES, CohortExample
from .ecg_features import (clinical_catalog, clinical_feature_names,
                           extract_clinical_features)
from .ehr_features import (DEFAULT_EXCLUSIONS, CodeVocabulary, EhrSnapshot,
                           build_ehr_vector, build_vocabulary,
                           ehr_feature_names, snapshot_keys)
from .errors import UpstreamArtifactMissing
from .evaluation import (auroc_ovr, binary_auc_at_cutoff, bootstrap_ci,
                         roc_curve, select_f1_threshold, threshold_metrics)
from .matrix import FeatureMatrix
from .signal import (ALL_LEADS, EcgRecord, PreprocessConfig, TwelveLeadEcg,
                     derive_limb_leads, preprocess_record)
from .ts_features import TS_CATALOG_VERSION, TsDescriptorCatalog, \
    extract_ts_features

MODALITIES = ("ehr_only", "ecg_only", "multimodal")

# fixed per-stage seed offsets off the root seed
SEED_SYNTH = 11
SEED_SPLIT = 23
SEED_EVAL = 37
SEED_EXPLAIN = 53


def stage_seed(root_seed: int, offset: int) -> int:
    return root_seed * 1009 + offset


def config_hash(config: dict) -> str:
    """Hash of the canonical config, excluding location-only keys."""
    scrubbed = {k: v for k, v in config.items()
                if k not in ("out_dir", "threads")}
    blob = json.dumps(scrubbed, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --- preprocessing ----------------------------------------------------------


def preprocess_records(records: list[EcgRecord],
                       cfg: PreprocessConfig | None = None
                       ) -> tuple[list[str], np.ndarray, float]:
    """Derive 12 leads and preprocess; returns (ids, (n, 12, L) array, fs)."""
    cfg = cfg or PreprocessConfig()
    ids, rows = [], []
    fs = records[0].sampling_rate if records else 500.0
    for rec in sorted(records, key=lambda r: r.record_id):
        rec.validate()
        twelve = derive_limb_leads(rec)
        processed = preprocess_record(twelve, cfg)
        ids.append(rec.record_id)
        rows.append(processed.lead_array())
        fs = rec.sampling_rate
    arr = np.stack(rows) if rows else np.zeros((0, 12, 0))
    return ids, arr, fs


def _ecg_row(args) -> list[float]:
    signals, fs = args
    ecg = TwelveLeadEcg(record_id="", patient_id="", acquired_at="",
                        sampling_rate=fs, duration=signals.shape[1] / fs,
                        leads=dict(zip(ALL_LEADS, signals)),
                        provenance={})
    clinical = extract_clinical_features(ecg)
    ts = extract_ts_features(ecg)
    return list(clinical.values()) + list(ts.values())


def ecg_feature_matrix(ids: list[str], signals: np.ndarray, fs: float,
                       threads: int = 1) -> FeatureMatrix:
    """Clinical + time-series features per preprocessed record."""
    catalog = TsDescriptorCatalog()
    names = clinical_feature_names() + [
        f"{lead}__ts__{d}" for lead in ALL_LEADS for d in catalog.names]
    jobs = [(signals[i], fs) for i in range(len(ids))]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_ecg_row, jobs, chunksize=16))
    else:
        rows = [_ecg_row(job) for job in jobs]
    values = np.asarray(rows, dtype=np.float64).reshape(len(ids), len(names))
    meta = {"clinical_catalog": clinical_catalog()["version"],
            "ts_catalog": TS_CATALOG_VERSION}
    return FeatureMatrix(list(ids), names, values, meta)


# --- EHR block --------------------------------------------------------------


def build_vocabularies(examples: list[CohortExample],
                       snapshots: dict[str, EhrSnapshot], k: int = 50,
                       exclusions=DEFAULT_EXCLUSIONS
                       ) -> tuple[CodeVocabulary, CodeVocabulary]:
    """Vocabularies counted on the training split only."""
    train = [ex for ex in examples if ex.split == "train"]
    if not train:
        raise UpstreamArtifactMissing("no training examples for vocabulary")
    dx_sets, med_sets = [], []
    for ex in train:
        snap = snapshots[ex.patient_id]
        dx_sets.append(snapshot_keys(snap, ex.index_date, "diagnosis"))
        med_sets.append(snapshot_keys(snap, ex.index_date, "medication"))
    vocab_dx = build_vocabulary(dx_sets, "diagnosis", k, exclusions)
    vocab_med = build_vocabulary(med_sets, "medication", k, exclusions)
    return vocab_dx, vocab_med


def ehr_feature_matrix(examples: list[CohortExample],
                       snapshots: dict[str, EhrSnapshot],
                       vocab_dx: CodeVocabulary,
                       vocab_med: CodeVocabulary) -> FeatureMatrix:
    names = ehr_feature_names(vocab_dx, vocab_med)
    rows = [build_ehr_vector(snapshots[ex.patient_id], vocab_dx, vocab_med,
                             ex.index_date) for ex in examples]
    values = np.asarray(rows).reshape(len(examples), len(names))
    return FeatureMatrix([ex.echo_id for ex in examples], names, values)


def assemble_features(ecg_features: FeatureMatrix,
                      ehr_features: FeatureMatrix,
                      examples: list[CohortExample]) -> FeatureMatrix:
    """One row per cohort example (keyed by echo id): ECG block + EHR block."""
    ecg_rows = ecg_features.select_rows([ex.record_id for ex in examples])
    ecg_rows.ids = [ex.echo_id for ex in examples]
    combined = FeatureMatrix.hstack([ecg_rows, ehr_features])
    modality = {name: "ecg" for name in ecg_features.names}
    modality.update({name: "ehr" for name in ehr_features.names})
    combined.metadata = dict(ecg_features.metadata)
    combined.metadata["modality"] = modality
    return combined


def modality_columns(features: FeatureMatrix, modality: str) -> list[str]:
    tags = features.metadata["modality"]
    if modality == "multimodal":
        return list(features.names)
    tag = {"ehr_only": "ehr", "ecg_only": "ecg"}[modality]
    return [n for n in features.names if tags[n] == tag]


# --- training and evaluation ------------------------------------------------


def split_xy(features: FeatureMatrix, examples: list[CohortExample],
             split: str, columns: list[str]
             ) -> tuple[np.ndarray, np.ndarray, list[CohortExample]]:
    subset = [ex for ex in examples if ex.split == split]
    mat = features.select_rows([ex.echo_id for ex in subset]) \
                  .select_columns(columns)
    y = np.asarray([CLASS_NAMES.index(ex.label) for ex in subset])
    return mat.values, y, subset


def train_modality(features: FeatureMatrix, examples: list[CohortExample],
                   modality: str, params: gbt.GbtParams) -> gbt.GbtModel:
    columns = modality_columns(features, modality)
    X_tr, y_tr, _ = split_xy(features, examples, "train", columns)
    X_val, y_val, _ = split_xy(features, examples, "val", columns)
    val = (X_val, y_val) if len(y_val) else None
    return gbt.train(X_tr, y_tr, params, feature_names=columns, val=val)


def evaluate_model(model: gbt.GbtModel, features: FeatureMatrix,
                   examples: list[CohortExample], cohort_tag: str,
                   modality: str, bootstrap_b: int = 1000,
                   alpha: float = 0.05, seed: int = 0
                   ) -> tuple[dict, list[dict]]:
    """EvalReport dict plus plot-ready ROC rows for one model/cohort."""
    split = "test" if cohort_tag == "internal_test" else "external"
    columns = model.feature_names
    X_te, y_te, subset = split_xy(features, examples, split, columns)
    X_val, y_val, _ = split_xy(features, examples, "val", columns)
    proba = gbt.predict_proba(model, X_te)
    proba_val = gbt.predict_proba(model, X_val) if len(y_val) else None
    lvef = np.asarray([ex.lvef for ex in subset])

    report = {"modality": modality, "cohort": cohort_tag,
              "n_examples": len(subset), "classes": {}}
    roc_rows: list[dict] = []
    for k, cname in enumerate(CLASS_NAMES):
        scores = proba[:, k]
        entry: dict = {}
        if not (np.any(y_te == k) and np.any(y_te != k)):
            report["classes"][cname] = {"auroc": None,
                                        "note": "one class only"}
            continue
        point = auroc_ovr(scores, y_te, k)
        lo, hi = bootstrap_ci(
            lambda idx: auroc_ovr(scores[idx], y_te[idx], k),
            n=len(y_te), B=bootstrap_b, alpha=alpha,
            seed=stage_seed(seed, SEED_EVAL) + k)
        entry["auroc"] = point
        entry["auroc_ci"] = [lo, hi]
        entry["auroc_in_ci"] = bool(lo <= point <= hi)
        if proba_val is not None and np.any(y_val == k):
            threshold = select_f1_threshold(proba_val[:, k], y_val, k)
        else:
            threshold = 0.5
        entry["threshold"] = threshold
        f1, sens, spec = threshold_metrics(scores, y_te, k, threshold)
        entry["f1"] = f1
        entry["sensitivity"] = sens
        entry["specificity"] = spec

        def thr_metric(which):
            def metric(idx):
                vals = threshold_metrics(scores[idx], y_te[idx], k, threshold)
                v = vals[which]
                if np.isnan(v):
                    from .errors import OneClassOnly
                    raise OneClassOnly("degenerate resample")
                return v
            return metric
        for which, name in enumerate(("f1", "sensitivity", "specificity")):
            lo_m, hi_m = bootstrap_ci(
                thr_metric(which), n=len(y_te), B=bootstrap_b, alpha=alpha,
                seed=stage_seed(seed, SEED_EVAL) + 100 + 10 * k + which)
            entry[f"{name}_ci"] = [lo_m, hi_m]
        report["classes"][cname] = entry
        for fpr, tpr, thr in roc_curve(scores, y_te == k):
            roc_rows.append({"class": cname, "threshold": thr,
                             "fpr": fpr, "tpr": tpr})
    try:
        report["binary_auc_lvef50"] = binary_auc_at_cutoff(proba, lvef, 50.0)
    except Exception:
        report["binary_auc_lvef50"] = None
    return report, roc_rows
