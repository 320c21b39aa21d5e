"""Scripting bindings for the ecgfusion pipeline (batch API only)."""

from .api import (TrainEvalResult, extract, load_model, predict_margin,
                  predict_proba, save_model, train_eval)

__all__ = ["TrainEvalResult", "extract", "load_model", "predict_margin",
           "predict_proba", "save_model", "train_eval"]

__version__ = "0.1.0"
