"""Multimodal ECG + EHR feature extraction, gradient-boosted training,
evaluation, and attribution for four-class LVEF assessment."""

from . import (cohort, dataio, ecg_features, ehr_features, errors, evaluation,
               explain, gbt, matrix, pipeline, signal, synth, ts_features)
from .cohort import CLASS_NAMES, CohortExample, map_lvef_class
from .matrix import FeatureMatrix
from .signal import EcgRecord, PreprocessConfig, TwelveLeadEcg

__all__ = [
    "cohort", "dataio", "ecg_features", "ehr_features", "errors",
    "evaluation", "explain", "gbt", "matrix", "pipeline", "signal", "synth",
    "ts_features", "CLASS_NAMES", "CohortExample", "map_lvef_class",
    "FeatureMatrix", "EcgRecord", "PreprocessConfig", "TwelveLeadEcg",
]

__version__ = "0.1.0"
