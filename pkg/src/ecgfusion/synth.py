"""Seeded synthetic ECG + EHR cohort generator for desk-scale verification.

Beats are sums of Gaussian bumps (P, Q, R, S, T) repeated at drawn RR
intervals; EHR snapshots are drawn from class-conditional priors. All
outputs are deterministic given (profile, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .cohort import CLASS_NAMES, EchoResult, map_lvef_class
from .ehr_features import DxEvent, EhrSnapshot, MedEvent
from .errors import InvalidPrevalence, InvalidProfile
from .signal import MEASURED_LEADS, EcgRecord

# Gaussian bump parameters: (offset_ms from R, width_ms, relative amplitude)
_WAVE_TEMPLATE = {
    "P": (-170.0, 22.0, 0.15),
    "Q": (-35.0, 8.0, -0.12),
    "R": (0.0, 11.0, 1.0),
    "S": (32.0, 9.0, -0.25),
    "T": (260.0, 55.0, 0.35),
}

# relative projection of the template onto each measured lead
_LEAD_SCALES = {
    "I": 0.65, "II": 1.0, "V1": 0.35, "V2": 0.55, "V3": 0.75,
    "V4": 0.95, "V5": 0.9, "V6": 0.7,
}

_LVEF_BANDS = {
    "severe": (10.0, 30.0),
    "moderate": (30.0, 40.0),
    "mild": (40.0, 50.0),
    "normal": (50.0, 75.0),
}


@dataclass
class SynthProfile:
    label: str
    hr_mean_bpm: float = 70.0
    hr_sd_bpm: float = 4.0
    amplitude_scale: float = 1.0  # global multiplier on lead scales
    qrs_width_scale: float = 1.0  # multiplier on Q/R/S bump widths
    t_amplitude_scale: float = 1.0
    noise_sd: float = 0.03
    powerline_amplitude: float = 0.0
    powerline_freq: float = 60.0
    dx_priors: dict[str, float] = field(default_factory=dict)  # code -> P(event)
    med_priors: dict[str, float] = field(default_factory=dict)
    systolic_bp_mean: float = 125.0
    systolic_bp_sd: float = 12.0
    pulse_mean: float = 72.0
    pulse_sd: float = 8.0
    bmi_mean: float = 28.0
    bmi_sd: float = 4.0
    male_fraction: float = 0.5
    vital_missing_prob: float = 0.1

    def validate(self) -> None:
        if self.label not in CLASS_NAMES:
            raise InvalidProfile(f"unknown class label {self.label!r}")
        if self.hr_mean_bpm <= 0 or self.hr_sd_bpm < 0:
            raise InvalidProfile("heart-rate parameters must be positive")
        if self.amplitude_scale <= 0 or self.qrs_width_scale <= 0:
            raise InvalidProfile("scales must be positive")
        if self.noise_sd < 0 or self.powerline_amplitude < 0:
            raise InvalidProfile("noise parameters must be nonnegative")
        for p in list(self.dx_priors.values()) + list(self.med_priors.values()):
            if not 0.0 <= p <= 1.0:
                raise InvalidProfile("event priors must lie in [0, 1]")


def default_profiles() -> dict[str, SynthProfile]:
    """Class-conditional profiles with qualitative reduced-EF effects:
    lower lateral amplitudes, faster resting rate, wider QRS, and elevated
    diuretic / cardiomyopathy-code priors. Synthetic assumptions only."""
    base_dx = {"I10": 0.45, "E78": 0.40, "E11": 0.13, "I25": 0.18,
               "I48": 0.22, "N18": 0.07, "K21": 0.11, "J45": 0.05,
               "F41": 0.08, "M54": 0.08, "R07": 0.14, "Z00": 0.11}
    base_med = {"ATORVASTATIN": 0.30, "LISINOPRIL": 0.22, "METFORMIN": 0.12,
                "FUROSEMIDE": 0.06, "CARVEDILOL": 0.05, "ASPIRIN": 0.25,
                "OMEPRAZOLE": 0.15, "LEVOTHYROXINE": 0.10}

    def shifted(dx_up: dict, med_up: dict):
        dx = dict(base_dx)
        dx.update(dx_up)
        med = dict(base_med)
        med.update(med_up)
        return dx, med

    dx_sev, med_sev = shifted(
        {"I25": 0.50, "I42": 0.45, "I48": 0.45, "N18": 0.17, "I21": 0.12},
        {"FUROSEMIDE": 0.55, "CARVEDILOL": 0.50, "SACUBITRIL": 0.30})
    dx_mod, med_mod = shifted(
        {"I25": 0.42, "I42": 0.30, "I48": 0.40, "N18": 0.14},
        {"FUROSEMIDE": 0.40, "CARVEDILOL": 0.35, "SACUBITRIL": 0.15})
    dx_mild, med_mild = shifted(
        {"I25": 0.35, "I42": 0.15, "I48": 0.35},
        {"FUROSEMIDE": 0.22, "CARVEDILOL": 0.20})

    return {
        "severe": SynthProfile(
            "severe", hr_mean_bpm=88.0, hr_sd_bpm=7.0, amplitude_scale=0.62,
            qrs_width_scale=1.5, t_amplitude_scale=0.45, noise_sd=0.05,
            dx_priors=dx_sev, med_priors=med_sev,
            systolic_bp_mean=112.0, pulse_mean=88.0, male_fraction=0.65),
        "moderate": SynthProfile(
            "moderate", hr_mean_bpm=82.0, hr_sd_bpm=6.0, amplitude_scale=0.75,
            qrs_width_scale=1.3, t_amplitude_scale=0.6, noise_sd=0.045,
            dx_priors=dx_mod, med_priors=med_mod,
            systolic_bp_mean=118.0, pulse_mean=82.0, male_fraction=0.60),
        "mild": SynthProfile(
            "mild", hr_mean_bpm=76.0, hr_sd_bpm=5.0, amplitude_scale=0.88,
            qrs_width_scale=1.12, t_amplitude_scale=0.8, noise_sd=0.04,
            dx_priors=dx_mild, med_priors=med_mild,
            systolic_bp_mean=122.0, pulse_mean=76.0, male_fraction=0.55),
        "normal": SynthProfile(
            "normal", hr_mean_bpm=70.0, hr_sd_bpm=5.0, amplitude_scale=1.0,
            qrs_width_scale=1.0, t_amplitude_scale=1.0, noise_sd=0.035,
            dx_priors=base_dx, med_priors=base_med),
    }


def beat_template_times(profile: SynthProfile) -> dict[str, float]:
    """Ground-truth fiducial offsets (ms from R) for the template."""
    return {name: off for name, (off, _, _) in _WAVE_TEMPLATE.items()}


def generate_record(profile: SynthProfile, seed: int,
                    record_id: str = "rec0", patient_id: str = "pat0",
                    acquired_at: str = "2024-01-01T00:00:00",
                    fs: float = 500.0, duration: float = 10.0
                    ) -> tuple[EcgRecord, np.ndarray]:
    """Generate one 8-lead record; returns (record, ground-truth R times in s)."""
    profile.validate()
    rng = np.random.default_rng(seed)
    n = int(round(fs * duration))
    t = np.arange(n) / fs

    # beat placement
    r_times = []
    tpos = 0.35
    while tpos < duration - 0.05:
        r_times.append(tpos)
        rr = 60.0 / profile.hr_mean_bpm
        if profile.hr_sd_bpm > 0:
            hr = profile.hr_mean_bpm + profile.hr_sd_bpm * rng.standard_normal()
            rr = 60.0 / max(hr, 20.0)
        tpos += rr
    r_times = np.asarray(r_times)

    # one-lead-unit template signal evaluated on the full grid
    base = np.zeros(n)
    for name, (off_ms, width_ms, amp) in _WAVE_TEMPLATE.items():
        width = width_ms / 1000.0
        if name in ("Q", "R", "S"):
            width *= profile.qrs_width_scale
        if name == "T":
            amp *= profile.t_amplitude_scale
        for rt in r_times:
            center = rt + off_ms / 1000.0
            base += amp * np.exp(-0.5 * ((t - center) / width) ** 2)

    leads = {}
    for lead in MEASURED_LEADS:
        y = base * (_LEAD_SCALES[lead] * profile.amplitude_scale)
        if profile.noise_sd > 0:
            y = y + profile.noise_sd * rng.standard_normal(n)
        if profile.powerline_amplitude > 0:
            phase = rng.uniform(0, 2 * np.pi)
            y = y + profile.powerline_amplitude * np.sin(
                2 * np.pi * profile.powerline_freq * t + phase)
        leads[lead] = y

    rec = EcgRecord(record_id=record_id, patient_id=patient_id,
                    acquired_at=acquired_at, sampling_rate=fs,
                    duration=duration, leads=leads)
    return rec, r_times


def _largest_remainder_counts(n: int, prevalences: np.ndarray) -> np.ndarray:
    raw = n * prevalences
    counts = np.floor(raw).astype(int)
    remainder = raw - counts
    short = n - counts.sum()
    # distribute leftover units to the largest remainders (ties: first class)
    order = np.argsort(-remainder, kind="stable")
    for i in range(short):
        counts[order[i]] += 1
    return counts


def generate_cohort(n: int, prevalences, profiles: dict[str, SynthProfile],
                    seed: int, start_date: str = "2024-01-01",
                    period_days: int = 365, id_prefix: str = "",
                    ) -> tuple[list[tuple[EcgRecord, np.ndarray]],
                               list[EhrSnapshot], list[EchoResult]]:
    """Generate a paired cohort of ECG records, EHR snapshots, and echos.

    ``prevalences`` orders classes (severe, moderate, mild, normal).
    """
    prevalences = np.asarray(prevalences, dtype=np.float64)
    # Published prevalence tables are rounded to two decimals, so allow a
    # small slack and renormalize rather than rejecting e.g. a 100.01% sum.
    if prevalences.shape != (4,) or abs(prevalences.sum() - 1.0) > 1e-2 \
            or np.any(prevalences < 0):
        raise InvalidPrevalence("prevalences must be a 4-vector summing to 1")
    prevalences = prevalences / prevalences.sum()
    counts = _largest_remainder_counts(n, prevalences)
    labels = [lab for lab, c in zip(CLASS_NAMES, counts) for _ in range(c)]

    root = np.random.SeedSequence(seed)
    order_rng = np.random.default_rng(root.spawn(1)[0])
    order = order_rng.permutation(n)
    labels = [labels[i] for i in order]

    start = datetime.fromisoformat(start_date)
    records, snapshots, echos = [], [], []
    child_seeds = root.spawn(n + 1)
    for i, label in enumerate(labels):
        profile = profiles[label]
        rng = np.random.default_rng(child_seeds[i])
        pid = f"{id_prefix}P{i:06d}"
        rid = f"{id_prefix}E{i:06d}"

        echo_time = start + timedelta(
            days=float(rng.uniform(0, period_days)))
        gap_days = float(rng.uniform(-10.0, 10.0))
        ecg_time = echo_time + timedelta(days=gap_days)
        lo, hi = _LVEF_BANDS[label]
        lvef = float(rng.uniform(lo, hi))
        # rng state is position-dependent; derive the record seed from it
        rec_seed = int(rng.integers(0, 2**31 - 1))
        rec, r_times = generate_record(
            profile, rec_seed, record_id=rid, patient_id=pid,
            acquired_at=ecg_time.isoformat())
        records.append((rec, r_times))
        echos.append(EchoResult(echo_id=f"{id_prefix}C{i:06d}", patient_id=pid,
                                performed_at=echo_time.isoformat(),
                                lvef=lvef, quality_flags=frozenset()))

        # EHR events in the six months before the echo
        dx_events, med_events = [], []
        for code, p in sorted(profile.dx_priors.items()):
            if rng.random() < p:
                when = echo_time - timedelta(days=float(rng.uniform(1, 180)))
                dx_events.append(DxEvent(code=code, date=when.isoformat()))
        for name, p in sorted(profile.med_priors.items()):
            if rng.random() < p:
                when = echo_time - timedelta(days=float(rng.uniform(1, 180)))
                med_events.append(MedEvent(name=name, date=when.isoformat()))

        def vital(mean, sd):
            if rng.random() < profile.vital_missing_prob:
                return None
            return float(mean + sd * rng.standard_normal())

        sex = "Male" if rng.random() < profile.male_fraction else "Female"
        snapshots.append(EhrSnapshot(
            patient_id=pid,
            age=float(np.clip(62 + 12 * rng.standard_normal(), 20, 95)),
            sex=sex,
            race=str(rng.choice(["White", "Black", "Asian", "Hispanic", "Other"])),
            smoking_status=str(rng.choice(["Never", "Former", "Current"])),
            bmi=vital(profile.bmi_mean, profile.bmi_sd),
            systolic_bp=vital(profile.systolic_bp_mean, profile.systolic_bp_sd),
            diastolic_bp=vital(78.0, 8.0),
            temperature_f=vital(98.2, 0.4),
            pulse=vital(profile.pulse_mean, profile.pulse_sd),
            dx_events=dx_events,
            med_events=med_events,
        ))

    assert all(map_lvef_class(e.lvef) == lab
               for e, lab in zip(echos, labels))
    return records, snapshots, echos
