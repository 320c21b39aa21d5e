"""Exact Shapley attribution for the boosted ensemble's per-class margins,
plus global importance, bootstrap stability, and dependence-plot data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyMatrix, FewerThanTwoPoints
from .gbt import GbtModel, Tree

# --- path-dependent tree Shapley values ------------------------------------


def _extend(d, z, o, w, depth, pz, po, pi):
    d[depth] = pi
    z[depth] = pz
    o[depth] = po
    w[depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        w[i + 1] += po * w[i] * (i + 1) / (depth + 1)
        w[i] = pz * w[i] * (depth - i) / (depth + 1)


def _unwind(d, z, o, w, depth, path_index):
    po = o[path_index]
    pz = z[path_index]
    next_one = w[depth]
    for i in range(depth - 1, -1, -1):
        if po != 0:
            tmp = w[i]
            w[i] = next_one * (depth + 1) / ((i + 1) * po)
            next_one = tmp - w[i] * pz * (depth - i) / (depth + 1)
        else:
            w[i] = w[i] * (depth + 1) / (pz * (depth - i))
    for i in range(path_index, depth):
        d[i] = d[i + 1]
        z[i] = z[i + 1]
        o[i] = o[i + 1]


def _unwound_sum(d, z, o, w, depth, path_index):
    po = o[path_index]
    pz = z[path_index]
    next_one = w[depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if po != 0:
            tmp = next_one * (depth + 1) / ((i + 1) * po)
            total += tmp
            next_one = w[i] - tmp * pz * (depth - i) / (depth + 1)
        else:
            total += (w[i] / pz) / ((depth - i) / (depth + 1))
    return total


def _shap_recurse(tree: Tree, x: np.ndarray, phi: np.ndarray, node: int,
                  depth: int, pd, pz_arr, po_arr, pw, pz, po, pi):
    d = pd.copy()
    z = pz_arr.copy()
    o = po_arr.copy()
    w = pw.copy()
    _extend(d, z, o, w, depth, pz, po, pi)

    if tree.feature[node] < 0:
        value = tree.weight[node]
        for i in range(1, depth + 1):
            s = _unwound_sum(d, z, o, w, depth, i)
            phi[int(d[i])] += s * (o[i] - z[i]) * value
        return

    f = int(tree.feature[node])
    v = x[f]
    if np.isnan(v):
        hot = tree.left[node] if tree.miss_left[node] else tree.right[node]
    elif v < tree.threshold[node]:
        hot = tree.left[node]
    else:
        hot = tree.right[node]
    cold = tree.right[node] if hot == tree.left[node] else tree.left[node]
    cover = tree.cover[node]
    hot_frac = tree.cover[hot] / cover
    cold_frac = tree.cover[cold] / cover

    incoming_z = 1.0
    incoming_o = 1.0
    new_depth = depth + 1
    path_index = -1
    for i in range(new_depth):
        if d[i] == f:
            path_index = i
            break
    if path_index >= 0:
        incoming_z = z[path_index]
        incoming_o = o[path_index]
        _unwind(d, z, o, w, new_depth - 1, path_index)
        new_depth -= 1
    _shap_recurse(tree, x, phi, int(hot), new_depth, d, z, o, w,
                  hot_frac * incoming_z, incoming_o, f)
    _shap_recurse(tree, x, phi, int(cold), new_depth, d, z, o, w,
                  cold_frac * incoming_z, 0.0, f)


def tree_expected_value(tree: Tree) -> float:
    """Cover-weighted mean leaf value (the tree's background output)."""
    leaves = tree.feature < 0
    return float(np.sum(tree.weight[leaves] * tree.cover[leaves])
                 / tree.cover[0])


def shap_values_single_tree(tree: Tree, x: np.ndarray,
                            n_features: int) -> np.ndarray:
    phi = np.zeros(n_features)
    size = tree.n_nodes + 2
    _shap_recurse(tree, np.asarray(x, dtype=np.float64), phi, 0, 0,
                  np.full(size, -1, dtype=np.int64), np.zeros(size),
                  np.zeros(size), np.zeros(size), 1.0, 1.0, -1)
    return phi


def tree_shap(model: GbtModel, x: np.ndarray,
              k: int) -> tuple[np.ndarray, float]:
    """Exact Shapley attributions of the class-k margin for one row.

    Uses node covers as the background distribution, so no background
    dataset is needed. Returns (attributions, base value) with
    sum(attributions) + base == predict_margin(x)[k].
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    n_features = len(model.feature_names)
    if len(x) != n_features:
        raise DimensionMismatch(
            f"expected {n_features} features, got {len(x)}")
    phi = np.zeros(n_features)
    base = float(model.base_score[k])
    for round_trees in model.trees:
        tree = round_trees[k]
        phi += shap_values_single_tree(tree, x, n_features)
        base += tree_expected_value(tree)
    return phi, base


@dataclass
class ShapMatrix:
    class_index: int
    base_value: float
    values: np.ndarray  # (n_rows, n_features)
    feature_names: list[str]
    row_ids: list[str] = field(default_factory=list)
    display_labels_applied: bool = False


def shap_matrix(model: GbtModel, X: np.ndarray, k: int,
                row_ids: list[str] | None = None) -> ShapMatrix:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.size == 0:
        raise EmptyMatrix("no rows to attribute")
    values = np.empty((len(X), len(model.feature_names)))
    base = 0.0
    for i in range(len(X)):
        values[i], base = tree_shap(model, X[i], k)
    return ShapMatrix(class_index=k, base_value=base, values=values,
                      feature_names=list(model.feature_names),
                      row_ids=row_ids or [str(i) for i in range(len(X))])


# --- global importance and stability ---------------------------------------


def global_importance(shap: ShapMatrix) -> list[tuple[str, float]]:
    """Features ranked by mean |SHAP| descending; ties lexicographic."""
    if shap.values.size == 0:
        raise EmptyMatrix("empty attribution matrix")
    mean_abs = np.mean(np.abs(shap.values), axis=0)
    ranked = sorted(zip(shap.feature_names, mean_abs),
                    key=lambda t: (-t[1], t[0]))
    return [(name, float(v)) for name, v in ranked]


@dataclass
class StabilityReport:
    B: int
    topk: int
    seed: int
    top_sets: list[list[str]]            # per-resample top-k (ranked order)
    jaccard_matrix: np.ndarray           # (B, B)
    mean_jaccard: float
    min_jaccard: float
    selection_frequency: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "B": self.B, "topk": self.topk, "seed": self.seed,
            "top_sets": self.top_sets,
            "jaccard_matrix": [[float(v) for v in row]
                               for row in self.jaccard_matrix],
            "mean_jaccard": self.mean_jaccard,
            "min_jaccard": self.min_jaccard,
            "selection_frequency": self.selection_frequency,
        }


def _jaccard(a: set, b: set) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def stability_analysis(shap: ShapMatrix, B: int = 20, topk: int = 10,
                       seed: int = 0, resample: bool = True
                       ) -> StabilityReport:
    """Bootstrap stability of the top-k mean-|SHAP| feature sets.

    Attributions are row-local, so resampling reweights precomputed rows
    rather than recomputing them. ``resample=False`` uses the full set for
    every replicate (all pairwise Jaccard similarities are then 1).
    """
    if shap.values.size == 0:
        raise EmptyMatrix("empty attribution matrix")
    n = len(shap.values)
    abs_vals = np.abs(shap.values)
    children = np.random.SeedSequence(seed).spawn(B)
    top_sets: list[list[str]] = []
    for b in range(B):
        if resample:
            rng = np.random.default_rng(children[b])
            counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
        else:
            counts = np.ones(n)
        mean_abs = counts @ abs_vals / n
        ranked = sorted(zip(shap.feature_names, mean_abs),
                        key=lambda t: (-t[1], t[0]))
        top_sets.append([name for name, _ in ranked[:topk]])

    jac = np.ones((B, B))
    for i in range(B):
        for j in range(i + 1, B):
            jac[i, j] = jac[j, i] = _jaccard(set(top_sets[i]),
                                             set(top_sets[j]))
    off_diag = jac[~np.eye(B, dtype=bool)]
    freq: dict[str, float] = {}
    for s in top_sets:
        for name in s:
            freq[name] = freq.get(name, 0.0) + 1.0 / B
    return StabilityReport(
        B=B, topk=topk, seed=seed, top_sets=top_sets, jaccard_matrix=jac,
        mean_jaccard=float(off_diag.mean()), min_jaccard=float(off_diag.min()),
        selection_frequency={k: round(v, 12) for k, v in sorted(freq.items())})


# --- dependence data --------------------------------------------------------


def dependence_data(feature_values: np.ndarray,
                    attributions: np.ndarray) -> dict:
    """Scatter pairs plus an OLS linear trend (slope, intercept, r2).

    Rows with a missing feature value are excluded and counted."""
    feature_values = np.asarray(feature_values, dtype=np.float64)
    attributions = np.asarray(attributions, dtype=np.float64)
    if len(feature_values) != len(attributions):
        raise DimensionMismatch("value and attribution lengths differ")
    keep = ~np.isnan(feature_values)
    n_missing = int((~keep).sum())
    xv = feature_values[keep]
    yv = attributions[keep]
    if len(xv) < 2:
        raise FewerThanTwoPoints("need at least two non-missing points")
    xc = xv - xv.mean()
    denom = float(np.sum(xc ** 2))
    if denom == 0:
        slope, intercept, r2 = float("nan"), float("nan"), float("nan")
    else:
        slope = float(np.sum(xc * (yv - yv.mean())) / denom)
        intercept = float(yv.mean() - slope * xv.mean())
        ss_tot = float(np.sum((yv - yv.mean()) ** 2))
        ss_res = float(np.sum((yv - slope * xv - intercept) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return {"pairs": list(zip(xv.tolist(), yv.tolist())),
            "n_missing_excluded": n_missing,
            "slope": slope, "intercept": intercept, "r2": r2}


# --- display labels ---------------------------------------------------------

_STAT_WORDS = {"mean": "average", "median": "median"}
_COMPONENT_WORDS = {
    "qr_interval_amplitude": "QR-interval {stat} amplitude",
    "rs_interval_voltage": "RS-interval {stat} voltage",
    "st_segment_voltage": "ST-segment {stat} voltage",
}
_GLOBAL_LABELS = {
    "rr__mean_ms": "Mean R-R interval (ms)",
    "rr__std_ms": "R-R interval standard deviation (ms)",
    "rr__min_ms": "Minimum R-R interval (ms)",
    "rr__max_ms": "Maximum R-R interval (ms)",
    "heart_rate__bpm": "Heart rate (bpm)",
    "beats__count": "Detected beat count",
    "ehr__age_years": "Age (years)",
}
_VITAL_LABELS = {
    "bmi": "Body mass index",
    "systolic_bp": "Systolic blood pressure",
    "diastolic_bp": "Diastolic blood pressure",
    "temperature_f": "Body temperature (F)",
    "pulse": "Pulse rate",
}


def _label_for(name: str) -> str | None:
    if name in _GLOBAL_LABELS:
        return _GLOBAL_LABELS[name]
    parts = name.split("__")
    if len(parts) == 3:
        lead, mid, last = parts
        if mid in _COMPONENT_WORDS and last in _STAT_WORDS:
            return (f"Lead {lead} "
                    + _COMPONENT_WORDS[mid].format(stat=_STAT_WORDS[last]))
        if mid == "amp_band":
            return f"Lead {lead} amplitude-band {last} occupancy"
        if mid == "ts":
            from .ts_features import _DEFINITIONS
            if last in _DEFINITIONS:
                return f"Lead {lead} time-series {_DEFINITIONS[last]}"
        if lead == "ehr" and mid == "dx":
            return f"Diagnosis group {last} (6-month history)"
        if lead == "ehr" and mid == "med":
            return f"Medication {last.title()} (6-month history)"
        if lead == "ehr" and mid in ("sex", "race", "smoking"):
            return f"{mid.title()}: {last}"
    if len(parts) == 2 and parts[0] == "ehr":
        vital = parts[1]
        if vital in _VITAL_LABELS:
            return _VITAL_LABELS[vital]
        if vital.endswith("_observed") and vital[:-9] in _VITAL_LABELS:
            return f"{_VITAL_LABELS[vital[:-9]]} observed indicator"
    return None


def display_label(raw_name: str) -> tuple[str, bool]:
    """Human-readable label for a raw feature name.

    Presentation only; never applied to feature matrices or attributions.
    Returns (label, mapped); unmapped names pass through verbatim."""
    label = _label_for(raw_name)
    if label is None:
        return raw_name, False
    return label, True


def label_map(feature_names: list[str]) -> list[tuple[str, str, bool]]:
    """(raw_name, display_label, mapped) for every feature name."""
    return [(name, *display_label(name)) for name in feature_names]
