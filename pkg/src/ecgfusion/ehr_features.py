"""Structured EHR feature block: code vocabularies, lookback windows,
one-hot encoding, and cohort descriptive statistics."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
from scipy.stats import chi2 as chi2_dist
from scipy.stats import rankdata

from .errors import DegenerateTable, EmptyCorpus

ICD10_RE = re.compile(r"^[A-Z][0-9][0-9A-Z](\..*)?$")

LOOKBACK_DAYS = 183  # six months, half-open window ending at the index date
DEFAULT_EXCLUSIONS = frozenset({"I50"})  # LVEF-proximal heart-failure codes

SEX_CATEGORIES = ("Male", "Female", "Unknown")
RACE_CATEGORIES = ("White", "Black", "Asian", "Hispanic", "Other", "Unknown")
SMOKING_CATEGORIES = ("Never", "Former", "Current", "Unknown")
VITALS = ("bmi", "systolic_bp", "diastolic_bp", "temperature_f", "pulse")


@dataclass(frozen=True)
class DxEvent:
    code: str  # ICD-10
    date: str  # ISO-8601


@dataclass(frozen=True)
class MedEvent:
    name: str  # generic medication name
    date: str


@dataclass
class EhrSnapshot:
    patient_id: str
    age: float | None = None
    sex: str = "Unknown"
    race: str = "Unknown"
    smoking_status: str = "Unknown"
    bmi: float | None = None
    systolic_bp: float | None = None
    diastolic_bp: float | None = None
    temperature_f: float | None = None
    pulse: float | None = None
    dx_events: list[DxEvent] = field(default_factory=list)
    med_events: list[MedEvent] = field(default_factory=list)


@dataclass
class CodeVocabulary:
    kind: str  # "diagnosis" | "medication"
    k: int
    exclusions: frozenset
    keys: list[str]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k,
                "exclusions": sorted(self.exclusions), "keys": list(self.keys)}

    @classmethod
    def from_dict(cls, d: dict) -> "CodeVocabulary":
        return cls(kind=d["kind"], k=int(d["k"]),
                   exclusions=frozenset(d["exclusions"]), keys=list(d["keys"]))


def dx_group_key(code: str) -> str:
    """ICD-10 three-character grouping prefix."""
    return code.split(".")[0][:3].upper()


def med_group_key(name: str) -> str:
    return name.strip().upper()


def build_vocabulary(example_keys: list[set[str]], kind: str, k: int = 50,
                     exclusions: frozenset = DEFAULT_EXCLUSIONS
                     ) -> CodeVocabulary:
    """Top-k grouping keys by example-level frequency, exclusions removed.

    ``example_keys`` holds one key set per training example (a key counts
    once per example). Ties at rank k break lexicographically ascending.
    """
    if not example_keys:
        raise EmptyCorpus("no training examples to build a vocabulary from")
    counts: dict[str, int] = {}
    for keys in example_keys:
        for key in keys:
            counts[key] = counts.get(key, 0) + 1
    for key in exclusions:
        counts.pop(key, None)
    ranked = sorted(counts, key=lambda key: (-counts[key], key))
    return CodeVocabulary(kind=kind, k=k, exclusions=frozenset(exclusions),
                          keys=ranked[:k])


def snapshot_keys(snapshot: EhrSnapshot, index_date: str,
                  kind: str) -> set[str]:
    """Grouping keys with an event inside the half-open lookback window."""
    end = datetime.fromisoformat(index_date)
    start = end - timedelta(days=LOOKBACK_DAYS)
    keys = set()
    if kind == "diagnosis":
        for ev in snapshot.dx_events:
            when = datetime.fromisoformat(ev.date)
            if start <= when < end:
                keys.add(dx_group_key(ev.code))
    else:
        for ev in snapshot.med_events:
            when = datetime.fromisoformat(ev.date)
            if start <= when < end:
                keys.add(med_group_key(ev.name))
    return keys


def ehr_feature_names(vocab_dx: CodeVocabulary,
                      vocab_med: CodeVocabulary) -> list[str]:
    names = [f"ehr__dx__{key}" for key in vocab_dx.keys]
    names += [f"ehr__med__{key}" for key in vocab_med.keys]
    names.append("ehr__age_years")
    names += [f"ehr__sex__{c}" for c in SEX_CATEGORIES]
    names += [f"ehr__race__{c}" for c in RACE_CATEGORIES]
    names += [f"ehr__smoking__{c}" for c in SMOKING_CATEGORIES]
    for v in VITALS:
        names.append(f"ehr__{v}")
        names.append(f"ehr__{v}_observed")
    return names


def build_ehr_vector(snapshot: EhrSnapshot, vocab_dx: CodeVocabulary,
                     vocab_med: CodeVocabulary, index_date: str) -> np.ndarray:
    """Feature vector in ehr_feature_names order for one snapshot."""
    dx_keys = snapshot_keys(snapshot, index_date, "diagnosis")
    med_keys = snapshot_keys(snapshot, index_date, "medication")
    out = []
    out += [1.0 if key in dx_keys else 0.0 for key in vocab_dx.keys]
    out += [1.0 if key in med_keys else 0.0 for key in vocab_med.keys]
    out.append(float(snapshot.age) if snapshot.age is not None else 0.0)

    def onehot(value, categories):
        v = value if value in categories else "Unknown"
        return [1.0 if c == v else 0.0 for c in categories]

    out += onehot(snapshot.sex, SEX_CATEGORIES)
    out += onehot(snapshot.race, RACE_CATEGORIES)
    out += onehot(snapshot.smoking_status, SMOKING_CATEGORIES)
    for v in VITALS:
        value = getattr(snapshot, v)
        if value is None:
            out += [0.0, 0.0]
        else:
            out += [float(value), 1.0]
    return np.asarray(out, dtype=np.float64)


# --- descriptive statistics -------------------------------------------------

def chi_square_test(table: np.ndarray) -> tuple[float, int, float]:
    """Pearson chi-square on a contingency table (no continuity correction).

    Returns (statistic, dof, p). Raises DegenerateTable when an expected
    cell count is zero.
    """
    table = np.asarray(table, dtype=np.float64)
    row = table.sum(axis=1, keepdims=True)
    col = table.sum(axis=0, keepdims=True)
    total = table.sum()
    if total == 0:
        raise DegenerateTable("empty contingency table")
    expected = row @ col / total
    if np.any(expected == 0):
        raise DegenerateTable("expected cell count of zero")
    stat = float(((table - expected) ** 2 / expected).sum())
    dof = (table.shape[0] - 1) * (table.shape[1] - 1)
    p = float(chi2_dist.sf(stat, dof)) if dof > 0 else 1.0
    return stat, dof, p


def kruskal_wallis(groups: list[np.ndarray]) -> tuple[float, float]:
    """Kruskal-Wallis H with tie correction and chi-square approximation."""
    groups = [np.asarray(v, dtype=np.float64) for v in groups if len(v) > 0]
    if len(groups) < 2:
        raise DegenerateTable("need at least two nonempty groups")
    pooled = np.concatenate(groups)
    n = len(pooled)
    ranks = rankdata(pooled)
    h = 0.0
    start = 0
    for grp in groups:
        r = ranks[start:start + len(grp)]
        h += r.sum() ** 2 / len(grp)
        start += len(grp)
    h = 12.0 / (n * (n + 1)) * h - 3 * (n + 1)
    # tie correction
    _, tie_counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - (tie_counts ** 3 - tie_counts).sum() / (n ** 3 - n)
    if correction == 0:
        raise DegenerateTable("all pooled values identical")
    h /= correction
    p = float(chi2_dist.sf(h, len(groups) - 1))
    return float(h), p


def cohort_summary_stats(features: dict[str, np.ndarray],
                         feature_kinds: dict[str, str],
                         group_labels: np.ndarray,
                         class_names=None) -> list[dict]:
    """Per-feature class summaries with p-values.

    ``feature_kinds`` maps name to "binary" or "continuous". Binary and
    categorical features use the chi-square test on the class contingency
    table; continuous features use Kruskal-Wallis. Degenerate tables are
    skipped with a flag.
    """
    group_labels = np.asarray(group_labels)
    classes = list(class_names) if class_names is not None \
        else sorted(set(group_labels.tolist()))
    if sum(np.any(group_labels == c) for c in classes) < 2:
        raise DegenerateTable("need at least two nonempty groups")
    masks = [group_labels == c for c in classes]
    rows = []
    for name, values in features.items():
        kind = feature_kinds[name]
        values = np.asarray(values, dtype=np.float64)
        row = {"feature": name, "kind": kind, "flag": ""}
        if kind == "binary":
            table = np.array([[np.nansum(values[m] == 1),
                               np.nansum(values[m] == 0)] for m in masks],
                             dtype=np.float64)
            for c, m in zip(classes, masks):
                pos = int(np.nansum(values[m] == 1))
                denom = int(m.sum())
                pct = 100.0 * pos / denom if denom else 0.0
                row[f"{c}"] = f"{pos} ({pct:.1f}%)"
            try:
                stat, _, p = chi_square_test(table)
                row["p_value"] = p
            except DegenerateTable:
                row["p_value"] = float("nan")
                row["flag"] = "degenerate_table"
        else:
            groups = [values[m][~np.isnan(values[m])] for m in masks]
            for c, grp in zip(classes, groups):
                if len(grp):
                    q1, med, q3 = np.percentile(grp, [25, 50, 75])
                    row[f"{c}"] = (f"{grp.mean():.1f}±{grp.std():.1f}; "
                                   f"median {med:.1f} [{q1:.1f}-{q3:.1f}]")
                else:
                    row[f"{c}"] = ""
            try:
                stat, p = kruskal_wallis([g for g in groups if len(g)])
                row["p_value"] = p
            except DegenerateTable:
                row["p_value"] = float("nan")
                row["flag"] = "degenerate_table"
        rows.append(row)
    return rows
