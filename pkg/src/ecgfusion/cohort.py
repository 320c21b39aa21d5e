"""ECG-echo pairing, LVEF class mapping, and patient-level stratified splits."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .errors import InsufficientData, OutOfRange

# ordered most to least severe; class index is the model's label index
CLASS_NAMES = ("severe", "moderate", "mild", "normal")
SPLIT_NAMES = ("train", "val", "test", "external")

# echo quality flags that exclude the study
_BAD_QUALITY = {"poor quality", "artifact"}


@dataclass(frozen=True)
class EchoResult:
    echo_id: str
    patient_id: str
    performed_at: str  # ISO-8601
    lvef: float
    quality_flags: frozenset = frozenset()


@dataclass(frozen=True)
class EcgMeta:
    """Metadata-only view of an ECG record used for pairing."""
    record_id: str
    patient_id: str
    acquired_at: str


@dataclass
class CohortExample:
    record_id: str
    echo_id: str
    patient_id: str
    index_date: str  # echo time, ISO-8601
    lvef: float
    label: str
    pairing_gap_days: float  # signed, ecg minus echo
    split: str = ""


def map_lvef_class(lvef: float) -> str:
    """severe < 30 <= moderate < 40 <= mild < 50 <= normal."""
    if not 0.0 <= lvef <= 100.0:
        raise OutOfRange(f"LVEF {lvef} outside [0, 100]")
    if lvef < 30.0:
        return "severe"
    if lvef < 40.0:
        return "moderate"
    if lvef < 50.0:
        return "mild"
    return "normal"


def _parse(ts: str) -> datetime:
    return datetime.fromisoformat(ts)


def pair_ecg_echo(ecgs: list[EcgMeta], echos: list[EchoResult],
                  window_days: float = 14.0
                  ) -> tuple[list[CohortExample], list[dict]]:
    """Pair each eligible echo with the temporally closest same-patient ECG.

    Ties at equal |gap| prefer the ECG preceding the echo. Returns the
    examples plus an exclusion ledger with one row per dropped echo.
    """
    by_patient: dict[str, list[EcgMeta]] = {}
    for ecg in ecgs:
        by_patient.setdefault(ecg.patient_id, []).append(ecg)

    examples: list[CohortExample] = []
    exclusions: list[dict] = []
    for echo in echos:
        if set(echo.quality_flags) & _BAD_QUALITY:
            exclusions.append({"echo_id": echo.echo_id,
                               "reason": "quality_flag"})
            continue
        candidates = by_patient.get(echo.patient_id, [])
        if not candidates:
            exclusions.append({"echo_id": echo.echo_id, "reason": "no_ecg"})
            continue
        echo_time = _parse(echo.performed_at)
        best = None
        best_key = None
        for ecg in candidates:
            gap = (_parse(ecg.acquired_at) - echo_time).total_seconds() / 86400.0
            if abs(gap) > window_days:
                continue
            # prefer smaller |gap|; on ties prefer gap < 0 (pre-echo ECG),
            # then record_id for full determinism
            key = (abs(gap), 0 if gap < 0 else 1, ecg.record_id)
            if best_key is None or key < best_key:
                best, best_key, best_gap = ecg, key, gap
        if best is None:
            exclusions.append({"echo_id": echo.echo_id,
                               "reason": "outside_window"})
            continue
        examples.append(CohortExample(
            record_id=best.record_id,
            echo_id=echo.echo_id,
            patient_id=echo.patient_id,
            index_date=echo.performed_at,
            lvef=echo.lvef,
            label=map_lvef_class(echo.lvef),
            pairing_gap_days=best_gap,
        ))
    return examples, exclusions


def stratified_patient_split(examples: list[CohortExample],
                             fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
                             seed: int = 0) -> None:
    """Assign train/val/test in place, keeping each patient in one split.

    Patients are stratified by their most severe class, shuffled per
    stratum, then placed greedily on the split with the largest remaining
    example-count deficit.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    severity = {name: i for i, name in enumerate(CLASS_NAMES)}

    by_patient: dict[str, list[CohortExample]] = {}
    for ex in examples:
        by_patient.setdefault(ex.patient_id, []).append(ex)

    strata: dict[str, list[str]] = {name: [] for name in CLASS_NAMES}
    for pid in sorted(by_patient):
        dominant = min((ex.label for ex in by_patient[pid]),
                       key=lambda lab: severity[lab])
        strata[dominant].append(pid)

    for name in CLASS_NAMES:
        if 0 < len(strata[name]) < 3:
            raise InsufficientData(
                f"class {name} has only {len(strata[name])} patients")

    rng = np.random.default_rng(seed)
    splits = ("train", "val", "test")
    assigned = {s: 0 for s in splits}
    targets = {s: 0.0 for s in splits}
    for name in CLASS_NAMES:
        pids = strata[name]
        if not pids:
            continue
        order = rng.permutation(len(pids))
        stratum_examples = sum(len(by_patient[p]) for p in pids)
        for s, f in zip(splits, fractions):
            targets[s] += f * stratum_examples
        for i in order:
            pid = pids[i]
            # largest remaining deficit wins; ties resolve train > val > test
            split = max(splits, key=lambda s: (targets[s] - assigned[s],
                                               -splits.index(s)))
            for ex in by_patient[pid]:
                ex.split = split
            assigned[split] += len(by_patient[pid])
