"""Beat detection, fiducial delineation, and the clinical feature catalog."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .signal import ALL_LEADS, TwelveLeadEcg

CLINICAL_CATALOG_VERSION = "clinical-1"

GLOBAL_FEATURES = ("rr__mean_ms", "rr__std_ms", "rr__min_ms", "rr__max_ms",
                   "heart_rate__bpm", "beats__count")
BEAT_COMPONENTS = ("qr_interval_amplitude", "rs_interval_voltage",
                   "st_segment_voltage")
BEAT_STATS = ("mean", "median")
N_AMP_BANDS = 8
AMP_BAND_EDGES = np.linspace(-2.0, 2.0, N_AMP_BANDS + 1)

REFRACTORY_S = 0.2  # minimum R-R separation
DETECTION_LEAD = "II"


@dataclass
class BeatFiducials:
    """Sample indices of one beat's landmarks; None when undetectable."""
    r: int
    p_onset: int | None = None
    p_peak: int | None = None
    q: int | None = None
    s: int | None = None
    t_peak: int | None = None
    t_offset: int | None = None


def clinical_feature_names() -> list[str]:
    names = list(GLOBAL_FEATURES)
    for lead in ALL_LEADS:
        for comp in BEAT_COMPONENTS:
            for stat in BEAT_STATS:
                names.append(f"{lead}__{comp}__{stat}")
        for k in range(N_AMP_BANDS):
            names.append(f"{lead}__amp_band__{k}")
    return names


def clinical_catalog() -> dict:
    """Feature catalog manifest for provenance."""
    entries = []

    def add(name, unit, definition):
        entries.append({"name": name, "unit": unit, "definition": definition})

    add("rr__mean_ms", "ms", "mean R-R interval")
    add("rr__std_ms", "ms", "population standard deviation of R-R intervals")
    add("rr__min_ms", "ms", "minimum R-R interval")
    add("rr__max_ms", "ms", "maximum R-R interval")
    add("heart_rate__bpm", "bpm", "60000 / mean R-R interval")
    add("beats__count", "count", "number of detected R peaks")
    comp_defs = {
        "qr_interval_amplitude":
            "mean voltage over the Q-to-R segment, aggregated across beats",
        "rs_interval_voltage":
            "mean voltage over the R-to-S segment, aggregated across beats",
        "st_segment_voltage":
            "mean voltage over S+20 ms to S+80 ms, aggregated across beats",
    }
    for lead in ALL_LEADS:
        for comp in BEAT_COMPONENTS:
            for stat in BEAT_STATS:
                add(f"{lead}__{comp}__{stat}", "z-units",
                    f"{stat} across beats of: {comp_defs[comp]} (lead {lead})")
        for k in range(N_AMP_BANDS):
            lo, hi = AMP_BAND_EDGES[k], AMP_BAND_EDGES[k + 1]
            add(f"{lead}__amp_band__{k}", "fraction",
                f"fraction of lead-{lead} samples with value in "
                f"[{lo:g}, {hi:g})")
    return {"version": CLINICAL_CATALOG_VERSION, "features": entries}


def detect_r_peaks(x: np.ndarray, fs: float) -> tuple[np.ndarray, bool]:
    """Derivative-energy R-peak detector.

    Squares the differentiated signal, integrates over a 150 ms window,
    keeps integrated peaks above 0.5x the median peak height with a 200 ms
    refractory, then snaps each to the largest |x| nearby. Returns
    (indices, undetectable_flag).
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    empty = np.array([], dtype=np.int64)
    if n < 3 or np.all(x == x[0]):
        return empty, True
    energy = np.diff(x) ** 2
    win = max(int(0.15 * fs), 1)
    kernel = np.ones(win) / win
    integrated = np.convolve(energy, kernel, mode="same")
    if not np.any(integrated > 0):
        return empty, True

    distance = max(int(REFRACTORY_S * fs), 1)
    cand, props = find_peaks(integrated, distance=distance,
                             height=1e-12 * integrated.max())
    if len(cand) == 0:
        return empty, True
    heights = props["peak_heights"]
    threshold = 0.5 * np.median(heights)
    cand = cand[heights >= threshold]
    if len(cand) == 0:
        return empty, True

    # snap to the local extremum of the raw signal
    half = max(int(0.1 * fs), 1)
    peaks = []
    for c in cand:
        lo, hi = max(c - half, 0), min(c + half + 1, n)
        peaks.append(lo + int(np.argmax(np.abs(x[lo:hi]))))
    peaks = np.asarray(sorted(set(peaks)), dtype=np.int64)

    # enforce refractory after snapping: keep the larger |x| of close pairs
    kept: list[int] = []
    for p in peaks:
        if kept and p - kept[-1] < distance:
            if abs(x[p]) > abs(x[kept[-1]]):
                kept[-1] = int(p)
        else:
            kept.append(int(p))
    return np.asarray(kept, dtype=np.int64), False


def _slope_edge(x: np.ndarray, peak: int, direction: int, fs: float,
                max_reach_s: float = 0.1) -> int | None:
    """Walk from a wave peak until the slope magnitude collapses."""
    reach = max(int(max_reach_s * fs), 2)
    lo = max(peak - reach, 1) if direction < 0 else peak
    hi = peak if direction < 0 else min(peak + reach, len(x) - 1)
    if hi <= lo:
        return None
    slopes = np.abs(np.diff(x[lo:hi + 1]))
    if slopes.max() == 0:
        return None
    thresh = 0.1 * slopes.max()
    idx = peak
    steps = range(peak - 1, lo - 1, -1) if direction < 0 \
        else range(peak + 1, hi + 1)
    for i in steps:
        s = abs(x[i] - x[i + 1]) if direction < 0 else abs(x[i] - x[i - 1])
        idx = i
        if s < thresh:
            break
    return idx


def _batch_extrema(x: np.ndarray, starts: np.ndarray, width: int,
                   mode: str) -> np.ndarray:
    """Extremum index inside [start, start+width) for each window.

    Windows clipped by the record boundary or flat yield -1. The fixed
    width lets all windows evaluate as one 2D slice.
    """
    n = len(x)
    out = np.full(len(starts), -1, dtype=np.int64)
    valid = (starts >= 0) & (starts + width <= n) & (width > 0)
    if not valid.any():
        return out
    idx = starts[valid, None] + np.arange(width)
    seg = x[idx]
    flat = seg.max(axis=1) == seg.min(axis=1)
    if mode == "min":
        off = np.argmin(seg, axis=1)
    elif mode == "max":
        off = np.argmax(seg, axis=1)
    else:
        off = np.argmax(np.abs(seg), axis=1)
    res = starts[valid] + off
    res[flat] = -1
    out[valid] = res
    return out


def delineate_beats(x: np.ndarray, r_peaks: np.ndarray,
                    fs: float) -> list[BeatFiducials]:
    """Locate P/Q/S/T landmarks in fixed windows around each R peak."""
    x = np.asarray(x, dtype=np.float64)
    ms = fs / 1000.0

    def at(offset_ms: float) -> int:
        return int(round(offset_ms * ms))

    r = np.asarray(r_peaks, dtype=np.int64)
    q_idx = _batch_extrema(x, r - at(80), at(80), "min")
    s_idx = _batch_extrema(x, r + 1, at(80), "min")
    t_idx = _batch_extrema(x, r + at(100), at(400) - at(100), "abs")
    p_idx = _batch_extrema(x, r - at(300), at(300) - at(100), "max")

    beats = []
    for i, ri in enumerate(r):
        fid = BeatFiducials(r=int(ri))
        if q_idx[i] >= 0:
            fid.q = int(q_idx[i])
        if s_idx[i] >= 0:
            fid.s = int(s_idx[i])
        if t_idx[i] >= 0:
            fid.t_peak = int(t_idx[i])
            fid.t_offset = _slope_edge(x, fid.t_peak, +1, fs)
        if p_idx[i] >= 0:
            fid.p_peak = int(p_idx[i])
            fid.p_onset = _slope_edge(x, fid.p_peak, -1, fs)
        beats.append(fid)
    return beats


def _segment_mean(x: np.ndarray, lo: int | None, hi: int | None) -> float:
    if lo is None or hi is None or hi < lo or lo < 0 or hi >= len(x):
        return np.nan
    return float(np.mean(x[lo:hi + 1]))


def _agg(values: list[float]) -> tuple[float, float]:
    arr = np.asarray([v for v in values if not np.isnan(v)])
    if len(arr) == 0:
        return np.nan, np.nan
    return float(np.mean(arr)), float(np.median(arr))


def extract_clinical_features(ecg: TwelveLeadEcg) -> dict[str, float]:
    """Full fixed clinical catalog for one preprocessed record.

    Missing or undetectable values are NaN, never silently zero.
    """
    fs = ecg.sampling_rate
    out: dict[str, float] = {}

    r_peaks, _bad = detect_r_peaks(ecg.leads[DETECTION_LEAD], fs)
    if len(r_peaks) >= 2:
        rr_ms = np.diff(r_peaks) / fs * 1000.0
        out["rr__mean_ms"] = float(np.mean(rr_ms))
        out["rr__std_ms"] = float(np.std(rr_ms))
        out["rr__min_ms"] = float(np.min(rr_ms))
        out["rr__max_ms"] = float(np.max(rr_ms))
        out["heart_rate__bpm"] = 60000.0 / out["rr__mean_ms"]
    else:
        for name in ("rr__mean_ms", "rr__std_ms", "rr__min_ms", "rr__max_ms",
                     "heart_rate__bpm"):
            out[name] = np.nan
    out["beats__count"] = float(len(r_peaks))

    ms = fs / 1000.0
    for lead in ALL_LEADS:
        x = ecg.leads[lead]
        beats = delineate_beats(x, r_peaks, fs) if len(r_peaks) else []
        qr, rs, st = [], [], []
        for b in beats:
            qr.append(_segment_mean(x, b.q, b.r))
            rs.append(_segment_mean(x, b.r, b.s))
            if b.s is not None:
                st.append(_segment_mean(x, b.s + int(round(20 * ms)),
                                        b.s + int(round(80 * ms))))
            else:
                st.append(np.nan)
        for comp, vals in zip(BEAT_COMPONENTS, (qr, rs, st)):
            mean, median = _agg(vals)
            out[f"{lead}__{comp}__mean"] = mean
            out[f"{lead}__{comp}__median"] = median
        counts, _ = np.histogram(x, bins=AMP_BAND_EDGES)
        frac = counts / len(x)
        for k in range(N_AMP_BANDS):
            out[f"{lead}__amp_band__{k}"] = float(frac[k])

    ordered = clinical_feature_names()
    assert list(out.keys()) == ordered or set(out) == set(ordered)
    return {name: out[name] for name in ordered}
