"""Batch bindings over the core pipeline.

Every number returned here is produced by the core library; the bindings
only marshal arrays and dataclasses across the boundary, so results are
element-wise identical to the command-line pipeline run on equivalent
on-disk inputs. Heavy compute happens inside the core's numba kernels,
which release the interpreter lock.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ecgfusion import gbt, pipeline
from ecgfusion.cohort import CohortExample
from ecgfusion.ehr_features import DEFAULT_EXCLUSIONS, EhrSnapshot
from ecgfusion.errors import DimensionMismatch, MissingLead
from ecgfusion.explain import ShapMatrix, shap_matrix
from ecgfusion.matrix import FeatureMatrix
from ecgfusion.signal import (ALL_LEADS, MEASURED_LEADS, EcgRecord,
                              PreprocessConfig)
from ecgfusion.ts_features import TsDescriptorCatalog


def _ecg_names() -> list[str]:
    from ecgfusion.ecg_features import clinical_feature_names
    catalog = TsDescriptorCatalog()
    return clinical_feature_names() + [
        f"{lead}__ts__{d}" for lead in ALL_LEADS for d in catalog.names]


def extract(signals: np.ndarray, lead_names: list[str], sampling_rate: float,
            record_ids: list[str], examples: list[CohortExample],
            snapshots: dict[str, EhrSnapshot], *, vocab_k: int = 50,
            exclusions=DEFAULT_EXCLUSIONS,
            preprocess: PreprocessConfig | None = None,
            threads: int = 1) -> FeatureMatrix:
    """Raw measured-lead arrays -> combined per-example feature table.

    ``signals`` is (n_records, n_leads, n_samples) in the order given by
    ``lead_names``; preprocessing, the ECG feature catalogs, training-split
    vocabularies, and the EHR block all run through the same core code
    paths as the CLI ``extract`` step.
    """
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 3:
        raise DimensionMismatch("signals must be (n_records, n_leads, "
                                "n_samples)")
    if list(lead_names) != list(MEASURED_LEADS):
        raise MissingLead(
            f"lead_names must be {list(MEASURED_LEADS)}, got "
            f"{list(lead_names)}")
    if signals.shape[1] != len(lead_names):
        raise DimensionMismatch("signals second axis must match lead_names")
    if len(record_ids) != signals.shape[0]:
        raise DimensionMismatch("one record_id per signal row required")

    if signals.shape[0] == 0:
        names = _ecg_names()
        return FeatureMatrix([], names, np.zeros((0, len(names))))

    n_samples = signals.shape[2]
    records = [
        EcgRecord(record_id=rid, patient_id="", acquired_at="",
                  sampling_rate=sampling_rate,
                  duration=n_samples / sampling_rate,
                  leads={name: signals[i, j]
                         for j, name in enumerate(lead_names)})
        for i, rid in enumerate(record_ids)]
    ids, arr, fs = pipeline.preprocess_records(records, preprocess)
    ecg_features = pipeline.ecg_feature_matrix(ids, arr, fs, threads=threads)
    vocab_dx, vocab_med = pipeline.build_vocabularies(
        examples, snapshots, k=vocab_k, exclusions=frozenset(exclusions))
    ehr_features = pipeline.ehr_feature_matrix(examples, snapshots,
                                               vocab_dx, vocab_med)
    return pipeline.assemble_features(ecg_features, ehr_features, examples)


@dataclass
class TrainEvalResult:
    model: gbt.GbtModel
    report: dict
    shap: ShapMatrix


def train_eval(features: FeatureMatrix, examples: list[CohortExample], *,
               params: gbt.GbtParams | None = None,
               modality: str = "multimodal", cohort: str = "internal_test",
               explain_class: str = "severe", bootstrap_B: int = 1000,
               alpha: float = 0.05, seed: int = 0) -> TrainEvalResult:
    """Train one modality, evaluate held-out, and attribute predictions.

    Uses the same stage-seed derivation as the CLI, so a shared root
    ``seed`` reproduces the CLI's reports exactly.
    """
    from ecgfusion.cohort import CLASS_NAMES
    params = params or gbt.GbtParams(n_classes=4, seed=seed)
    model = pipeline.train_modality(features, examples, modality, params)
    report, _roc = pipeline.evaluate_model(
        model, features, examples, cohort, modality,
        bootstrap_b=bootstrap_B, alpha=alpha, seed=seed)
    split = "test" if cohort == "internal_test" else "external"
    X, _y, subset = pipeline.split_xy(features, examples, split,
                                      model.feature_names)
    sm = shap_matrix(model, X, CLASS_NAMES.index(explain_class),
                     row_ids=[ex.echo_id for ex in subset])
    return TrainEvalResult(model=model, report=report, shap=sm)


# model persistence and prediction pass straight through to the core
save_model = gbt.save_model
load_model = gbt.load_model
predict_proba = gbt.predict_proba
predict_margin = gbt.predict_margin
