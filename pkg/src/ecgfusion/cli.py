"""Command-line front end: synth, preprocess, cohort, extract, train,
evaluate, explain, report.

Exit codes: 0 success, 2 config/validation error, 3 runtime error. Logs go
to stderr; a machine-readable summary is printed to stdout as JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import dataio, explain, gbt, pipeline, synth
from .cohort import CLASS_NAMES, pair_ecg_echo, stratified_patient_split
from .ecg_features import clinical_catalog
from .ehr_features import CodeVocabulary
from .errors import ConfigInvalid, PipelineError, UpstreamArtifactMissing
from .matrix import FeatureMatrix
from .signal import PreprocessConfig
from .ts_features import TsDescriptorCatalog

# --- config schema: nested allowed keys with defaults ------------------------

_SCHEMA = {
    "seed": 0,
    "out_dir": None,
    "threads": 1,
    "synth": {
        "n": 500,
        "external_n": 0,
        "prevalences": [0.0226, 0.0347, 0.0593, 0.8835],  # severe..normal
        "start_date": "2024-01-01",
        "external_start_date": "2025-06-01",
        "period_days": 365,
    },
    "preprocess": {
        "highpass_cutoff": 0.5,
        "filter_order": 5,
        "powerline_freq": 60.0,
        "notch_bandwidth": 1.0,
        "standardize": True,
        "zero_phase": True,
    },
    "cohort": {
        "window_days": 14.0,
        "fractions": [0.8, 0.1, 0.1],
    },
    "ehr": {
        "vocab_k": 50,
        "exclusions": ["I50"],
    },
    "gbt": {
        "learning_rate": 0.08,
        "max_depth": 7,
        "min_child_weight": 5.0,
        "n_rounds": 200,
        "l2_lambda": 1.0,
        "early_stopping_rounds": 20,
        "class_weights": None,
    },
    "eval": {
        "bootstrap_B": 1000,
        "alpha": 0.05,
    },
    "explain": {
        "classes": list(CLASS_NAMES),
        "B": 20,
        "topk": 10,
        "n_dependence": 2,
    },
}


def _merge_validate(user: dict, schema: dict, path: str = "") -> dict:
    out = {}
    for key, value in user.items():
        if key not in schema:
            raise ConfigInvalid(f"unknown config key: {path}{key}")
    for key, default in schema.items():
        if isinstance(default, dict):
            sub = user.get(key, {})
            if not isinstance(sub, dict):
                raise ConfigInvalid(f"{path}{key} must be a mapping")
            out[key] = _merge_validate(sub, default, f"{path}{key}.")
        else:
            out[key] = user.get(key, default)
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    user = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigInvalid("config root must be a mapping")
    config = _merge_validate(user, _SCHEMA)
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    if config["out_dir"] is None:
        raise ConfigInvalid("out_dir must be set (config or --out-dir)")
    return config


# --- artifact paths ----------------------------------------------------------


class Workspace:
    def __init__(self, config: dict):
        self.config = config
        self.root = Path(config["out_dir"])
        self.hash = pipeline.config_hash(config)

    def dir(self, *parts, create=False) -> Path:
        p = self.root.joinpath(*parts)
        if create:
            p.mkdir(parents=True, exist_ok=True)
        return p

    def require(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        if not p.exists():
            raise UpstreamArtifactMissing(
                f"missing artifact {p}; run the upstream step first")
        return p

    def provenance(self) -> dict:
        return {"config_hash": self.hash,
                "clinical_catalog": clinical_catalog()["version"],
                "ts_catalog": TsDescriptorCatalog().version}


def _preprocess_cfg(config: dict) -> PreprocessConfig:
    return PreprocessConfig(**config["preprocess"])


# --- subcommands -------------------------------------------------------------


def cmd_synth(ws: Workspace) -> dict:
    cfg = ws.config["synth"]
    seed = pipeline.stage_seed(ws.config["seed"], pipeline.SEED_SYNTH)
    profiles = synth.default_profiles()
    summary = {}
    jobs = [("internal", cfg["n"], cfg["start_date"], seed, "")]
    if cfg["external_n"] > 0:
        jobs.append(("external", cfg["external_n"],
                     cfg["external_start_date"], seed + 1, "X"))
    for tag, n, start, s, prefix in jobs:
        records, snapshots, echos = synth.generate_cohort(
            n, cfg["prevalences"], profiles, seed=s, start_date=start,
            period_days=cfg["period_days"], id_prefix=prefix)
        raw = ws.dir("raw", tag, create=True)
        for rec, _truth in records:
            dataio.write_ecg_record(rec, raw)
        dataio.write_ehr_snapshots(snapshots, raw / "ehr.ndjson")
        dataio.write_echos(echos, raw / "echos.csv")
        summary[tag] = n
    return summary


def _cohort_tags(ws: Workspace) -> list[str]:
    tags = ["internal"]
    if ws.dir("raw", "external").exists():
        tags.append("external")
    return tags


def cmd_preprocess(ws: Workspace) -> dict:
    cfg = _preprocess_cfg(ws.config)
    out = ws.dir("preprocessed", create=True)
    summary = {}
    for tag in _cohort_tags(ws):
        raw = ws.require("raw", tag)
        records = [dataio.read_ecg_record(raw, rid)
                   for rid in dataio.list_record_ids(raw)]
        ids, arr, fs = pipeline.preprocess_records(records, cfg)
        from .signal import ALL_LEADS
        dataio.write_preprocessed(out / f"{tag}.npz", ids, arr,
                                  list(ALL_LEADS), fs)
        summary[tag] = len(ids)
    return summary


def cmd_cohort(ws: Workspace) -> dict:
    cfg = ws.config["cohort"]
    examples_all, exclusions_all = [], []
    for tag in _cohort_tags(ws):
        raw = ws.require("raw", tag)
        ecgs = dataio.read_ecg_metadata(raw)
        echos = dataio.read_echos(raw / "echos.csv")
        examples, exclusions = pair_ecg_echo(ecgs, echos,
                                             window_days=cfg["window_days"])
        if tag == "internal":
            stratified_patient_split(
                examples, fractions=tuple(cfg["fractions"]),
                seed=pipeline.stage_seed(ws.config["seed"],
                                         pipeline.SEED_SPLIT))
        else:
            for ex in examples:
                ex.split = "external"
        examples_all += examples
        exclusions_all += exclusions
    out = ws.dir("cohort", create=True)
    dataio.write_cohort(examples_all, out / "cohort.csv")
    dataio.write_exclusions(exclusions_all, out / "exclusions.csv")
    return {"examples": len(examples_all), "excluded": len(exclusions_all)}


def cmd_extract(ws: Workspace) -> dict:
    examples = dataio.read_cohort(ws.require("cohort", "cohort.csv"))
    threads = int(ws.config["threads"])
    ecg_parts, snapshots = [], {}
    for tag in _cohort_tags(ws):
        ids, arr, _leads, fs = dataio.read_preprocessed(
            ws.require("preprocessed", f"{tag}.npz"))
        ecg_parts.append(pipeline.ecg_feature_matrix(ids, arr, fs,
                                                     threads=threads))
        for snap in dataio.read_ehr_snapshots(
                ws.require("raw", tag) / "ehr.ndjson"):
            snapshots[snap.patient_id] = snap
    ecg_features = ecg_parts[0]
    for part in ecg_parts[1:]:
        ecg_features = FeatureMatrix(
            ecg_features.ids + part.ids, ecg_features.names,
            np.concatenate([ecg_features.values, part.values]),
            ecg_features.metadata)

    vocab_dx, vocab_med = pipeline.build_vocabularies(
        examples, snapshots, k=ws.config["ehr"]["vocab_k"],
        exclusions=frozenset(ws.config["ehr"]["exclusions"]))
    ehr_features = pipeline.ehr_feature_matrix(examples, snapshots,
                                               vocab_dx, vocab_med)
    combined = pipeline.assemble_features(ecg_features, ehr_features,
                                          examples)
    out = ws.dir("features", create=True)
    combined.to_csv(out / "features.csv")
    meta = dict(combined.metadata)
    meta.update(ws.provenance())
    dataio.dump_json(meta, out / "features.meta.json")
    dataio.dump_json(vocab_dx.to_dict(), out / "vocab_dx.json")
    dataio.dump_json(vocab_med.to_dict(), out / "vocab_med.json")
    dataio.dump_json(clinical_catalog(), out / "clinical_catalog.json")
    dataio.dump_json(TsDescriptorCatalog().manifest(), out / "ts_catalog.json")
    return {"rows": combined.n_rows, "columns": combined.n_cols}


def _load_features(ws: Workspace):
    features = FeatureMatrix.from_csv(
        ws.require("features", "features.csv"),
        metadata=dataio.load_json(ws.require("features",
                                             "features.meta.json")))
    examples = dataio.read_cohort(ws.require("cohort", "cohort.csv"))
    return features, examples


def cmd_train(ws: Workspace, modality: str | None) -> dict:
    features, examples = _load_features(ws)
    params_cfg = dict(ws.config["gbt"])
    out = ws.dir("models", create=True)
    summary = {}
    for mod in ([modality] if modality else pipeline.MODALITIES):
        params = gbt.GbtParams(n_classes=4, seed=ws.config["seed"],
                               **params_cfg)
        model = pipeline.train_modality(features, examples, mod, params)
        gbt.save_model(model, out / f"model_{mod}.json")
        summary[mod] = {"rounds": model.n_rounds,
                        "train_mlogloss":
                            model.history["train_mlogloss"][-1]}
    return summary


def cmd_evaluate(ws: Workspace, modality: str | None, cohort_tag: str,
                 model_path: str | None) -> dict:
    features, examples = _load_features(ws)
    out = ws.dir("eval", create=True)
    tag = "internal_test" if cohort_tag == "internal" else "temporal_external"
    summary = {}
    for mod in ([modality] if modality else pipeline.MODALITIES):
        path = model_path or ws.require("models", f"model_{mod}.json")
        model = gbt.load_model(path)
        report, roc_rows = pipeline.evaluate_model(
            model, features, examples, tag, mod,
            bootstrap_b=ws.config["eval"]["bootstrap_B"],
            alpha=ws.config["eval"]["alpha"], seed=ws.config["seed"])
        report.update(ws.provenance())
        dataio.dump_json(report, out / f"eval_{mod}_{cohort_tag}.json")
        with open(out / f"roc_{mod}_{cohort_tag}.csv", "w",
                  encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "threshold", "fpr", "tpr"])
            for row in roc_rows:
                writer.writerow([row["class"], repr(row["threshold"]),
                                 repr(row["fpr"]), repr(row["tpr"])])
        summary[mod] = {c: report["classes"][c].get("auroc")
                        for c in CLASS_NAMES}
    return summary


def cmd_explain(ws: Workspace, modality: str | None) -> dict:
    mod = modality or "multimodal"
    features, examples = _load_features(ws)
    cfg = ws.config["explain"]
    model = gbt.load_model(ws.require("models", f"model_{mod}.json"))
    columns = model.feature_names
    X_te, _y, subset = pipeline.split_xy(features, examples, "test", columns)
    out = ws.dir("explain", create=True)
    seed = pipeline.stage_seed(ws.config["seed"], pipeline.SEED_EXPLAIN)
    modality_tags = features.metadata["modality"]
    summary = {}
    for cname in cfg["classes"]:
        k = CLASS_NAMES.index(cname)
        sm = explain.shap_matrix(model, X_te, k,
                                 row_ids=[ex.echo_id for ex in subset])
        shap_fm = FeatureMatrix(sm.row_ids, sm.feature_names, sm.values)
        shap_fm.to_csv(out / f"shap_{mod}_{cname}.csv")
        dataio.dump_json({"class": cname, "class_index": k,
                          "base_value": sm.base_value, **ws.provenance()},
                         out / f"shap_{mod}_{cname}.json")
        importance = explain.global_importance(sm)
        dataio.dump_json([{"feature": n, "mean_abs_shap": v}
                          for n, v in importance],
                         out / f"importance_{mod}_{cname}.json")
        stability = explain.stability_analysis(sm, B=cfg["B"],
                                               topk=cfg["topk"], seed=seed + k)
        dataio.dump_json(stability.to_dict(),
                         out / f"stability_{mod}_{cname}.json")
        # dependence data for the top ECG-derived features
        ecg_top = [n for n, _ in importance
                   if modality_tags.get(n) == "ecg"][:cfg["n_dependence"]]
        for name in ecg_top:
            col = sm.feature_names.index(name)
            dep = explain.dependence_data(
                np.asarray([features.column(name)[features.ids.index(r)]
                            for r in sm.row_ids]), sm.values[:, col])
            dataio.dump_json({"feature": name, "class": cname,
                              "slope": dep["slope"],
                              "intercept": dep["intercept"], "r2": dep["r2"],
                              "n_missing_excluded": dep["n_missing_excluded"],
                              "pairs": dep["pairs"]},
                             out / f"dependence_{mod}_{cname}_{name}.json")
        summary[cname] = {"mean_jaccard": stability.mean_jaccard,
                          "top_feature": importance[0][0]}
    with open(out / "label_map.csv", "w", encoding="utf-8",
              newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(["raw_name", "display_label", "mapped"])
        for raw, label, mapped in explain.label_map(model.feature_names):
            writer.writerow([raw, label, int(mapped)])
    return summary


def cmd_report(ws: Workspace) -> dict:
    out = ws.dir("report", create=True)
    eval_dir = ws.require("eval")
    tables: dict = {"auroc": {}, "operating_point": {}}
    for path in sorted(Path(eval_dir).glob("eval_*.json")):
        report = dataio.load_json(path)
        key = f"{report['modality']}/{report['cohort']}"
        tables["auroc"][key] = {
            c: {"point": report["classes"][c].get("auroc"),
                "ci": report["classes"][c].get("auroc_ci")}
            for c in CLASS_NAMES}
        tables["operating_point"][key] = {
            c: {m: report["classes"][c].get(m)
                for m in ("threshold", "f1", "f1_ci", "sensitivity",
                          "sensitivity_ci", "specificity", "specificity_ci")}
            for c in CLASS_NAMES}
        tables.setdefault("binary_auc_lvef50", {})[key] = \
            report.get("binary_auc_lvef50")
    tables.update(ws.provenance())
    dataio.dump_json(tables, out / "summary.json")
    return {"evaluations": len(tables["auroc"])}


# --- entry point --------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ecgfusion",
        description="Multimodal ECG + EHR LVEF stratification pipeline")
    parser.add_argument("command",
                        choices=["synth", "preprocess", "cohort", "extract",
                                 "train", "evaluate", "explain", "report"])
    parser.add_argument("--config", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out-dir", default=None)
    parser.add_argument("--cohort", choices=["internal", "external"],
                        default="internal")
    parser.add_argument("--modality", choices=list(pipeline.MODALITIES),
                        default=None)
    parser.add_argument("--model", default=None,
                        help="saved model file for evaluate")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config, {"seed": args.seed,
                                           "threads": args.threads,
                                           "out_dir": args.out_dir})
    except (ConfigInvalid, OSError, yaml.YAMLError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    ws = Workspace(config)
    try:
        if args.command == "synth":
            summary = cmd_synth(ws)
        elif args.command == "preprocess":
            summary = cmd_preprocess(ws)
        elif args.command == "cohort":
            summary = cmd_cohort(ws)
        elif args.command == "extract":
            summary = cmd_extract(ws)
        elif args.command == "train":
            summary = cmd_train(ws, args.modality)
        elif args.command == "evaluate":
            summary = cmd_evaluate(ws, args.modality, args.cohort, args.model)
        elif args.command == "explain":
            summary = cmd_explain(ws, args.modality)
        else:
            summary = cmd_report(ws)
    except PipelineError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    print(json.dumps({"command": args.command, "ok": True,
                      "config_hash": ws.hash, "summary": summary},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
