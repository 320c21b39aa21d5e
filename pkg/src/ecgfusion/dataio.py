"""On-disk formats: ECG CSV + JSON sidecars, EHR NDJSON, cohort CSVs,
and deterministic JSON emission."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from .cohort import CohortExample, EchoResult, EcgMeta
from .ehr_features import DxEvent, EhrSnapshot, MedEvent
from .signal import MEASURED_LEADS, EcgRecord


def dump_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, no whitespace variation."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# --- ECG records ------------------------------------------------------------


def write_ecg_record(rec: EcgRecord, directory) -> None:
    """One record = <record_id>.csv (lead columns) + <record_id>.json."""
    directory = Path(directory)
    leads = list(rec.leads)
    arr = np.column_stack([rec.leads[name] for name in leads])
    with open(directory / f"{rec.record_id}.csv", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(",".join(leads) + "\n")
        np.savetxt(fh, arr, fmt="%.6f", delimiter=",")
    dump_json({
        "record_id": rec.record_id,
        "patient_id": rec.patient_id,
        "acquired_at": rec.acquired_at,
        "sampling_rate": rec.sampling_rate,
    }, directory / f"{rec.record_id}.json")


def read_ecg_record(directory, record_id: str) -> EcgRecord:
    directory = Path(directory)
    meta = load_json(directory / f"{record_id}.json")
    df = pd.read_csv(directory / f"{record_id}.csv")
    leads = {name: df[name].to_numpy(dtype=np.float64) for name in df.columns}
    n = len(df)
    fs = float(meta["sampling_rate"])
    return EcgRecord(record_id=meta["record_id"],
                     patient_id=meta["patient_id"],
                     acquired_at=meta["acquired_at"],
                     sampling_rate=fs, duration=n / fs, leads=leads)


def list_record_ids(directory) -> list[str]:
    # a record is a CSV with a JSON sidecar; this skips echos.csv/ehr.ndjson
    directory = Path(directory)
    return sorted(p.stem for p in directory.glob("*.csv")
                  if (directory / f"{p.stem}.json").exists())


def read_ecg_metadata(directory) -> list[EcgMeta]:
    metas = []
    for path in sorted(Path(directory).glob("*.json")):
        d = load_json(path)
        metas.append(EcgMeta(record_id=d["record_id"],
                             patient_id=d["patient_id"],
                             acquired_at=d["acquired_at"]))
    return metas


# --- EHR snapshots ----------------------------------------------------------


def write_ehr_snapshots(snapshots: list[EhrSnapshot], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for snap in snapshots:
            fh.write(json.dumps(asdict(snap), sort_keys=True) + "\n")


def read_ehr_snapshots(path) -> list[EhrSnapshot]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            d["dx_events"] = [DxEvent(**e) for e in d["dx_events"]]
            d["med_events"] = [MedEvent(**e) for e in d["med_events"]]
            out.append(EhrSnapshot(**d))
    return out


# --- echos and cohort -------------------------------------------------------


def write_echos(echos: list[EchoResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(["echo_id", "patient_id", "performed_at", "lvef",
                         "quality_flags"])
        for e in echos:
            writer.writerow([e.echo_id, e.patient_id, e.performed_at,
                             repr(e.lvef), ";".join(sorted(e.quality_flags))])


def read_echos(path) -> list[EchoResult]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            flags = frozenset(f for f in row["quality_flags"].split(";") if f)
            out.append(EchoResult(echo_id=row["echo_id"],
                                  patient_id=row["patient_id"],
                                  performed_at=row["performed_at"],
                                  lvef=float(row["lvef"]),
                                  quality_flags=flags))
    return out


def write_cohort(examples: list[CohortExample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "patient_id", "echo_id", "index_date",
                         "lvef", "label", "split", "pairing_gap_days"])
        for ex in examples:
            writer.writerow([ex.record_id, ex.patient_id, ex.echo_id,
                             ex.index_date, repr(ex.lvef), ex.label, ex.split,
                             repr(ex.pairing_gap_days)])


def read_cohort(path) -> list[CohortExample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(CohortExample(
                record_id=row["record_id"], patient_id=row["patient_id"],
                echo_id=row["echo_id"], index_date=row["index_date"],
                lvef=float(row["lvef"]), label=row["label"],
                split=row["split"],
                pairing_gap_days=float(row["pairing_gap_days"])))
    return out


def write_exclusions(exclusions: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(["echo_id", "reason"])
        for row in exclusions:
            writer.writerow([row["echo_id"], row["reason"]])


# --- preprocessed signals ---------------------------------------------------


def write_preprocessed(path, record_ids: list[str],
                       arrays: np.ndarray, lead_names: list[str],
                       fs: float) -> None:
    """All preprocessed records in one NPZ: (n_records, n_leads, n_samples)."""
    np.savez_compressed(path, signals=arrays.astype(np.float64),
                        record_ids=np.asarray(record_ids),
                        lead_names=np.asarray(lead_names),
                        sampling_rate=np.float64(fs))


def read_preprocessed(path):
    with np.load(path, allow_pickle=False) as z:
        return ([str(x) for x in z["record_ids"]],
                z["signals"].astype(np.float64),
                [str(x) for x in z["lead_names"]], float(z["sampling_rate"]))
