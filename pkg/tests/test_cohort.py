"""Pairing rules, class mapping, and the patient-level stratified split."""

import numpy as np
import pytest

from ecgfusion.cohort import (CLASS_NAMES, CohortExample, EchoResult, EcgMeta,
                              map_lvef_class, pair_ecg_echo,
                              stratified_patient_split)
from ecgfusion.errors import InsufficientData, OutOfRange


def test_class_boundaries_are_half_open():
    assert map_lvef_class(55.0) == "normal"
    assert map_lvef_class(50.0) == "normal"
    assert map_lvef_class(49.999) == "mild"
    assert map_lvef_class(40.0) == "mild"
    assert map_lvef_class(39.999) == "moderate"
    assert map_lvef_class(30.0) == "moderate"
    assert map_lvef_class(29.999) == "severe"
    assert map_lvef_class(0.0) == "severe"
    assert map_lvef_class(100.0) == "normal"


def test_lvef_out_of_range():
    with pytest.raises(OutOfRange):
        map_lvef_class(-1.0)
    with pytest.raises(OutOfRange):
        map_lvef_class(101.0)


def _ecg(rid, pid, when):
    return EcgMeta(record_id=rid, patient_id=pid, acquired_at=when)


def _echo(eid, pid, when, lvef=55.0, flags=frozenset()):
    return EchoResult(echo_id=eid, patient_id=pid, performed_at=when,
                      lvef=lvef, quality_flags=flags)


def test_pairing_picks_temporally_closest():
    ecgs = [_ecg("e1", "p1", "2024-01-01T00:00:00"),
            _ecg("e2", "p1", "2024-01-09T00:00:00")]
    echos = [_echo("c1", "p1", "2024-01-10T00:00:00")]
    examples, exclusions = pair_ecg_echo(ecgs, echos)
    assert not exclusions
    assert examples[0].record_id == "e2"
    assert examples[0].pairing_gap_days == pytest.approx(-1.0)
    assert examples[0].index_date == "2024-01-10T00:00:00"


def test_pairing_tie_prefers_pre_echo_ecg():
    ecgs = [_ecg("after", "p1", "2024-01-12T00:00:00"),
            _ecg("before", "p1", "2024-01-08T00:00:00")]
    echos = [_echo("c1", "p1", "2024-01-10T00:00:00")]
    examples, _ = pair_ecg_echo(ecgs, echos)
    assert examples[0].record_id == "before"


def test_pairing_window_excludes_beyond_14_days():
    ecgs = [_ecg("e1", "p1", "2024-01-16T00:00:00")]
    echos = [_echo("c1", "p1", "2024-01-01T00:00:00")]
    examples, exclusions = pair_ecg_echo(ecgs, echos)
    assert not examples
    assert exclusions == [{"echo_id": "c1", "reason": "outside_window"}]
    # exactly 14 days is still inside
    ecgs = [_ecg("e1", "p1", "2024-01-15T00:00:00")]
    examples, exclusions = pair_ecg_echo(ecgs, echos)
    assert examples and not exclusions


def test_pairing_quality_flags_and_missing_ecg():
    echos = [_echo("bad", "p1", "2024-01-01T00:00:00",
                   flags=frozenset({"poor quality"})),
             _echo("art", "p1", "2024-01-01T00:00:00",
                   flags=frozenset({"artifact"})),
             _echo("lost", "p9", "2024-01-01T00:00:00")]
    ecgs = [_ecg("e1", "p1", "2024-01-02T00:00:00")]
    examples, exclusions = pair_ecg_echo(ecgs, echos)
    assert not examples
    reasons = {row["echo_id"]: row["reason"] for row in exclusions}
    assert reasons == {"bad": "quality_flag", "art": "quality_flag",
                       "lost": "no_ecg"}


def test_pairing_label_consistency():
    ecgs = [_ecg("e1", "p1", "2024-01-02T00:00:00")]
    echos = [_echo("c1", "p1", "2024-01-01T00:00:00", lvef=33.0)]
    examples, _ = pair_ecg_echo(ecgs, echos)
    assert examples[0].label == "moderate"
    assert examples[0].lvef == 33.0


def _synthetic_examples(rng, n_patients, labels_per_patient=1):
    examples = []
    for i in range(n_patients):
        label = CLASS_NAMES[rng.integers(0, 4)]
        lvef = {"severe": 25.0, "moderate": 35.0, "mild": 45.0,
                "normal": 60.0}[label]
        for j in range(labels_per_patient):
            examples.append(CohortExample(
                record_id=f"e{i}_{j}", echo_id=f"c{i}_{j}",
                patient_id=f"p{i}", index_date="2024-01-01T00:00:00",
                lvef=lvef, label=label, pairing_gap_days=0.0))
    return examples


def test_split_patient_exclusivity_and_coverage():
    rng = np.random.default_rng(0)
    examples = _synthetic_examples(rng, 200, labels_per_patient=2)
    stratified_patient_split(examples, seed=1)
    by_patient = {}
    for ex in examples:
        assert ex.split in ("train", "val", "test")
        by_patient.setdefault(ex.patient_id, set()).add(ex.split)
    assert all(len(s) == 1 for s in by_patient.values())


def test_split_proportions_on_large_cohort():
    rng = np.random.default_rng(1)
    examples = _synthetic_examples(rng, 10000)
    stratified_patient_split(examples, seed=2)
    n = len(examples)
    fractions = {s: sum(ex.split == s for ex in examples) / n
                 for s in ("train", "val", "test")}
    assert abs(fractions["train"] - 0.8) < 0.02
    assert abs(fractions["val"] - 0.1) < 0.02
    assert abs(fractions["test"] - 0.1) < 0.02


def test_split_stratification_within_classes():
    rng = np.random.default_rng(2)
    examples = _synthetic_examples(rng, 8000)
    stratified_patient_split(examples, seed=3)
    for label in CLASS_NAMES:
        sub = [ex for ex in examples if ex.label == label]
        frac_test = sum(ex.split == "test" for ex in sub) / len(sub)
        assert abs(frac_test - 0.1) < 0.03


def test_split_determinism():
    rng = np.random.default_rng(3)
    a = _synthetic_examples(rng, 300)
    b = [CohortExample(**vars(ex)) for ex in a]
    stratified_patient_split(a, seed=9)
    stratified_patient_split(b, seed=9)
    assert [ex.split for ex in a] == [ex.split for ex in b]
    c = [CohortExample(**vars(ex)) for ex in a]
    stratified_patient_split(c, seed=10)
    assert [ex.split for ex in a] != [ex.split for ex in c]


def test_split_insufficient_stratum_raises():
    rng = np.random.default_rng(4)
    examples = _synthetic_examples(rng, 50)
    examples = [ex for ex in examples if ex.label != "severe"]
    examples.append(CohortExample(
        record_id="es", echo_id="cs", patient_id="lone",
        index_date="2024-01-01T00:00:00", lvef=25.0, label="severe",
        pairing_gap_days=0.0))
    with pytest.raises(InsufficientData):
        stratified_patient_split(examples, seed=0)


def test_split_dominant_label_is_most_severe():
    # a patient with normal and severe studies strata as severe
    examples = _synthetic_examples(np.random.default_rng(5), 40)
    examples = [ex for ex in examples if ex.label != "severe"]
    for i in range(3):
        examples.append(CohortExample(
            record_id=f"sv{i}", echo_id=f"svc{i}", patient_id=f"svp{i}",
            index_date="2024-01-01T00:00:00", lvef=25.0, label="severe",
            pairing_gap_days=0.0))
        examples.append(CohortExample(
            record_id=f"nm{i}", echo_id=f"nmc{i}", patient_id=f"svp{i}",
            index_date="2024-01-02T00:00:00", lvef=60.0, label="normal",
            pairing_gap_days=0.0))
    stratified_patient_split(examples, seed=0)  # no InsufficientData
    for i in range(3):
        splits = {ex.split for ex in examples
                  if ex.patient_id == f"svp{i}"}
        assert len(splits) == 1
