"""12-lead reconstruction and the three-stage preprocessing chain.

Eight measured leads (I, II, V1-V6) are completed to twelve using the
limb-lead identities (III from Einthoven, augmented leads from Goldberger's
central terminal). Preprocessing applies, in fixed order: high-pass
Butterworth, powerline notch, z-score standardization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as sps

from .errors import LengthMismatch, MissingLead

MEASURED_LEADS = ("I", "II", "V1", "V2", "V3", "V4", "V5", "V6")
DERIVED_LEADS = ("III", "aVR", "aVL", "aVF")
ALL_LEADS = ("I", "II", "III", "aVR", "aVL", "aVF",
             "V1", "V2", "V3", "V4", "V5", "V6")


@dataclass
class EcgRecord:
    record_id: str
    patient_id: str
    acquired_at: str  # ISO-8601
    sampling_rate: float = 500.0
    duration: float = 10.0
    leads: dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self) -> None:
        if self.sampling_rate <= 0:
            raise ValueError("sampling_rate must be positive")
        expected = int(round(self.sampling_rate * self.duration))
        lengths = {name: len(x) for name, x in self.leads.items()}
        if len(set(lengths.values())) > 1:
            raise LengthMismatch(f"unequal lead lengths: {lengths}")
        for name, n in lengths.items():
            if n != expected:
                raise LengthMismatch(
                    f"lead {name} has {n} samples, expected {expected}")


@dataclass
class TwelveLeadEcg:
    record_id: str
    patient_id: str
    acquired_at: str
    sampling_rate: float
    duration: float
    leads: dict[str, np.ndarray]
    provenance: dict[str, str]  # lead -> "measured" | "derived"

    def lead_array(self, order: tuple[str, ...] = ALL_LEADS) -> np.ndarray:
        return np.stack([self.leads[name] for name in order])


@dataclass
class PreprocessConfig:
    highpass_cutoff: float = 0.5
    filter_order: int = 5
    powerline_freq: float = 60.0
    notch_bandwidth: float = 1.0
    standardize: bool = True
    zero_phase: bool = True

    def validate(self, fs: float) -> None:
        if not (0 < self.highpass_cutoff < self.powerline_freq < fs / 2):
            raise ValueError(
                "require 0 < highpass_cutoff < powerline_freq < fs/2")
        if self.filter_order < 1:
            raise ValueError("filter_order must be >= 1")


def derive_limb_leads(ecg: EcgRecord) -> TwelveLeadEcg:
    """Complete the 12-lead set from measured leads I and II.

    III = II - I; aVR = -(I+II)/2; aVL = I - II/2; aVF = II - I/2.
    """
    for required in ("I", "II"):
        if required not in ecg.leads:
            raise MissingLead(f"lead {required} is required")
    lead_i = np.asarray(ecg.leads["I"], dtype=np.float64)
    lead_ii = np.asarray(ecg.leads["II"], dtype=np.float64)
    if len(lead_i) != len(lead_ii):
        raise LengthMismatch("leads I and II have different lengths")
    lengths = {len(np.asarray(v)) for v in ecg.leads.values()}
    if len(lengths) > 1:
        raise LengthMismatch("measured leads have unequal lengths")

    leads = {name: np.asarray(x, dtype=np.float64).copy()
             for name, x in ecg.leads.items()}
    leads["III"] = lead_ii - lead_i
    leads["aVR"] = -(lead_i + lead_ii) / 2.0
    leads["aVL"] = lead_i - lead_ii / 2.0
    leads["aVF"] = lead_ii - lead_i / 2.0
    provenance = {name: ("derived" if name in DERIVED_LEADS else "measured")
                  for name in leads}
    return TwelveLeadEcg(
        record_id=ecg.record_id,
        patient_id=ecg.patient_id,
        acquired_at=ecg.acquired_at,
        sampling_rate=ecg.sampling_rate,
        duration=ecg.duration,
        leads=leads,
        provenance=provenance,
    )


def _highpass_sos(fs: float, cfg: PreprocessConfig):
    return sps.butter(cfg.filter_order, cfg.highpass_cutoff, btype="highpass",
                      fs=fs, output="sos")


def _notch_ba(fs: float, cfg: PreprocessConfig):
    q = cfg.powerline_freq / cfg.notch_bandwidth
    return sps.iirnotch(cfg.powerline_freq, q, fs=fs)


def _apply(stage_filter, x: np.ndarray, zero_phase: bool, sos: bool) -> np.ndarray:
    if sos:
        if zero_phase:
            return sps.sosfiltfilt(stage_filter, x, padtype="even")
        return sps.sosfilt(stage_filter, x)
    b, a = stage_filter
    if zero_phase:
        return sps.filtfilt(b, a, x, padtype="even")
    return sps.lfilter(b, a, x)


def preprocess_lead(x: np.ndarray, fs: float,
                    cfg: PreprocessConfig | None = None
                    ) -> tuple[np.ndarray, bool]:
    """High-pass, notch, then optional z-score. Returns (signal, degenerate).

    ``degenerate`` is True when the post-filter signal is constant and
    standardization was requested; the output is then a zero vector.
    """
    cfg = cfg or PreprocessConfig()
    cfg.validate(fs)
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 10 * cfg.filter_order:
        raise LengthMismatch(
            f"need at least {10 * cfg.filter_order} samples, got {len(x)}")

    y = _apply(_highpass_sos(fs, cfg), x, cfg.zero_phase, sos=True)
    y = _apply(_notch_ba(fs, cfg), y, cfg.zero_phase, sos=False)

    if not cfg.standardize:
        return y, False
    sd = float(np.std(y))  # population convention
    if sd == 0.0:
        return np.zeros_like(y), True
    return (y - np.mean(y)) / sd, False


def preprocess_record(ecg: TwelveLeadEcg,
                      cfg: PreprocessConfig | None = None) -> TwelveLeadEcg:
    """Apply preprocess_lead to every lead; degenerate leads become zeros."""
    cfg = cfg or PreprocessConfig()
    out = {}
    for name, x in ecg.leads.items():
        out[name], _ = preprocess_lead(x, ecg.sampling_rate, cfg)
    return replace(ecg, leads=out)
