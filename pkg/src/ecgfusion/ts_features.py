"""Automated time-series descriptor bank computed per preprocessed lead.

65 descriptors per lead (780 over 12 leads): statistical moments,
autocorrelation, stationarity proxies, information-theoretic measures,
model-based summaries, frequency-domain characteristics, counting
statistics, and chunked energy ratios. Undefined descriptors (e.g.
autocorrelation of a constant) are NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroPower
from .signal import ALL_LEADS, TwelveLeadEcg

TS_CATALOG_VERSION = "ts-1"

AUTOCORR_LAGS = (1, 2, 3, 5, 10)
N_ENTROPY_BINS = 10
N_FFT_COEFS = 10
N_ENERGY_CHUNKS = 10
# band edges as fractions of the Nyquist frequency; tiles [0, fs/2]
BAND_EDGES_FRAC = (0.0, 0.02, 0.06, 0.16, 0.4, 1.0)


@dataclass
class TsDescriptorCatalog:
    version: str = TS_CATALOG_VERSION
    names: list[str] = field(default_factory=lambda: ts_descriptor_names())

    def manifest(self) -> dict:
        return {"version": self.version,
                "features": [{"name": n, "definition": _DEFINITIONS[n]}
                             for n in self.names]}


def ts_descriptor_names() -> list[str]:
    names = ["mean", "variance", "std", "skewness", "kurtosis", "median",
             "minimum", "maximum", "rms", "abs_energy", "mean_abs",
             "quantile_05", "quantile_25", "quantile_75", "quantile_95",
             "value_range"]
    names += [f"autocorr_lag_{k}" for k in AUTOCORR_LAGS]
    names += ["first_diff_variance", "mean_abs_change",
              "variance_ratio_halves", "diff_variance_ratio"]
    names += ["binned_entropy_10", "spectral_entropy"]
    names += ["trend_slope", "trend_intercept", "trend_r2", "ar1_coeff"]
    names += [f"fft_coef_mag_{k}" for k in range(N_FFT_COEFS)]
    names += ["spectral_centroid"]
    names += [f"band_energy_{b}" for b in range(len(BAND_EDGES_FRAC) - 1)]
    names += ["dominant_freq"]
    names += ["count_above_mean", "count_below_mean",
              "longest_strike_above_mean", "longest_strike_below_mean",
              "zero_crossings", "first_location_of_max",
              "first_location_of_min"]
    names += [f"energy_chunk_ratio_{c}" for c in range(N_ENERGY_CHUNKS)]
    return names


_DEFINITIONS = {
    "mean": "arithmetic mean",
    "variance": "population variance",
    "std": "population standard deviation",
    "skewness": "third standardized population moment",
    "kurtosis": "excess kurtosis (fourth standardized moment minus 3)",
    "median": "median",
    "minimum": "minimum value",
    "maximum": "maximum value",
    "rms": "root mean square",
    "abs_energy": "sum of squared values",
    "mean_abs": "mean absolute value",
    "quantile_05": "5th percentile",
    "quantile_25": "25th percentile",
    "quantile_75": "75th percentile",
    "quantile_95": "95th percentile",
    "value_range": "maximum minus minimum",
    "first_diff_variance": "population variance of first differences",
    "mean_abs_change": "mean absolute first difference",
    "variance_ratio_halves":
        "variance of the second half over variance of the first half",
    "diff_variance_ratio": "variance of first differences over variance",
    "binned_entropy_10": "Shannon entropy (nats) of a 10-bin histogram",
    "spectral_entropy":
        "entropy of the Hann-window periodogram normalized by log(#bins)",
    "trend_slope": "least-squares linear trend slope per sample",
    "trend_intercept": "least-squares linear trend intercept",
    "trend_r2": "coefficient of determination of the linear trend",
    "ar1_coeff": "lag-1 autoregression coefficient on centered values",
    "spectral_centroid": "power-weighted mean frequency (Hz)",
    "dominant_freq": "frequency of the largest periodogram bin (Hz)",
    "count_above_mean": "number of samples strictly above the mean",
    "count_below_mean": "number of samples strictly below the mean",
    "longest_strike_above_mean": "longest run of samples above the mean",
    "longest_strike_below_mean": "longest run of samples below the mean",
    "zero_crossings": "number of strict sign changes",
    "first_location_of_max": "relative index of the first maximum",
    "first_location_of_min": "relative index of the first minimum",
}
for _k in AUTOCORR_LAGS:
    _DEFINITIONS[f"autocorr_lag_{_k}"] = \
        f"autocorrelation at lag {_k}, normalized by lag-0"
for _k in range(N_FFT_COEFS):
    _DEFINITIONS[f"fft_coef_mag_{_k}"] = f"magnitude of FFT coefficient {_k}"
for _b in range(len(BAND_EDGES_FRAC) - 1):
    _DEFINITIONS[f"band_energy_{_b}"] = (
        f"signal energy in the band [{BAND_EDGES_FRAC[_b]:g}, "
        f"{BAND_EDGES_FRAC[_b + 1]:g}] of Nyquist (Parseval-normalized)")
for _c in range(N_ENERGY_CHUNKS):
    _DEFINITIONS[f"energy_chunk_ratio_{_c}"] = \
        f"fraction of total energy in chunk {_c} of {N_ENERGY_CHUNKS}"


def periodogram_psd(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """Single-segment Hann-window periodogram (freqs, power)."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    window = np.hanning(n)
    spectrum = np.fft.rfft(x * window)
    power = np.abs(spectrum) ** 2
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    return freqs, power


def entropy_of_distribution(p: np.ndarray) -> float:
    """Shannon entropy of a normalized distribution, scaled to [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    n_bins = len(p)
    if n_bins <= 1:
        return 0.0
    p = p[p > 0]
    h = float(-(p * np.log(p)).sum())
    return h / np.log(n_bins)


def spectral_entropy(x: np.ndarray, fs: float) -> float:
    """Normalized spectral entropy of the Hann periodogram, in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 64:
        raise ValueError("need at least 64 samples")
    _, power = periodogram_psd(x, fs)
    total = power.sum()
    if total == 0:
        raise ZeroPower("signal has no spectral power")
    p = power / total
    p = p[p > 0]
    h = float(-(p * np.log(p)).sum())
    return h / np.log(len(power))


def _longest_run(mask: np.ndarray) -> int:
    edges = np.flatnonzero(np.diff(np.r_[0, mask.astype(np.int8), 0]))
    if len(edges) == 0:
        return 0
    return int((edges[1::2] - edges[::2]).max())


def compute_descriptors(x: np.ndarray, fs: float) -> dict[str, float]:
    """All catalog descriptors for one lead vector."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    out: dict[str, float] = {}
    mu = float(np.mean(x))
    var = float(np.var(x))
    sd = float(np.sqrt(var))
    constant = var == 0.0
    centered = x - mu

    out["mean"] = mu
    out["variance"] = var
    out["std"] = sd
    if constant:
        out["skewness"] = np.nan
        out["kurtosis"] = np.nan
    else:
        out["skewness"] = float(np.mean(centered ** 3) / sd ** 3)
        out["kurtosis"] = float(np.mean(centered ** 4) / var ** 2 - 3.0)
    out["median"] = float(np.median(x))
    out["minimum"] = float(np.min(x))
    out["maximum"] = float(np.max(x))
    out["rms"] = float(np.sqrt(np.mean(x ** 2)))
    energy = float(np.sum(x ** 2))
    out["abs_energy"] = energy
    out["mean_abs"] = float(np.mean(np.abs(x)))
    q05, q25, q75, q95 = np.percentile(x, [5, 25, 75, 95])
    out["quantile_05"] = float(q05)
    out["quantile_25"] = float(q25)
    out["quantile_75"] = float(q75)
    out["quantile_95"] = float(q95)
    out["value_range"] = out["maximum"] - out["minimum"]

    c0 = float(np.sum(centered ** 2))
    for k in AUTOCORR_LAGS:
        if constant or k >= n:
            out[f"autocorr_lag_{k}"] = np.nan
        else:
            out[f"autocorr_lag_{k}"] = \
                float(np.sum(centered[:-k] * centered[k:]) / c0)

    diff = np.diff(x)
    dvar = float(np.var(diff)) if n > 1 else np.nan
    out["first_diff_variance"] = dvar
    out["mean_abs_change"] = float(np.mean(np.abs(diff))) if n > 1 else np.nan
    half = n // 2
    v1, v2 = float(np.var(x[:half])), float(np.var(x[half:]))
    out["variance_ratio_halves"] = v2 / v1 if v1 > 0 else np.nan
    out["diff_variance_ratio"] = dvar / var if not constant else np.nan

    counts, _ = np.histogram(x, bins=N_ENTROPY_BINS)
    p = counts[counts > 0] / n
    out["binned_entropy_10"] = float(-(p * np.log(p)).sum())
    try:
        out["spectral_entropy"] = spectral_entropy(x, fs)
    except (ZeroPower, ValueError):
        out["spectral_entropy"] = np.nan

    t = np.arange(n, dtype=np.float64)
    if constant:
        out["trend_slope"] = 0.0
        out["trend_intercept"] = mu
        out["trend_r2"] = np.nan
        out["ar1_coeff"] = np.nan
    else:
        tc = t - t.mean()
        slope = float(np.sum(tc * centered) / np.sum(tc ** 2))
        intercept = mu - slope * t.mean()
        resid = centered - slope * tc
        out["trend_slope"] = slope
        out["trend_intercept"] = intercept
        out["trend_r2"] = 1.0 - float(np.sum(resid ** 2) / c0)
        denom = float(np.sum(centered[:-1] ** 2))
        out["ar1_coeff"] = (float(np.sum(centered[:-1] * centered[1:]) / denom)
                            if denom > 0 else np.nan)

    spectrum = np.fft.rfft(x)
    mags = np.abs(spectrum)
    for k in range(N_FFT_COEFS):
        out[f"fft_coef_mag_{k}"] = float(mags[k]) if k < len(mags) else np.nan

    # one-sided Parseval normalization: sum of band energies == abs_energy
    power = mags ** 2
    scale = np.full(len(power), 2.0)
    scale[0] = 1.0
    if n % 2 == 0:
        scale[-1] = 1.0
    binned = power * scale / n
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    nyq = fs / 2.0
    total_power = float(binned.sum())
    if total_power > 0:
        out["spectral_centroid"] = float(np.sum(freqs * binned) / total_power)
        out["dominant_freq"] = float(freqs[int(np.argmax(binned))])
    else:
        out["spectral_centroid"] = np.nan
        out["dominant_freq"] = np.nan
    edges = np.asarray(BAND_EDGES_FRAC) * nyq
    for b in range(len(edges) - 1):
        if b == len(edges) - 2:
            mask = (freqs >= edges[b]) & (freqs <= edges[b + 1])
        else:
            mask = (freqs >= edges[b]) & (freqs < edges[b + 1])
        out[f"band_energy_{b}"] = float(binned[mask].sum())

    above = x > mu
    below = x < mu
    out["count_above_mean"] = float(above.sum())
    out["count_below_mean"] = float(below.sum())
    out["longest_strike_above_mean"] = float(_longest_run(above))
    out["longest_strike_below_mean"] = float(_longest_run(below))
    out["zero_crossings"] = float(np.sum(x[:-1] * x[1:] < 0))
    out["first_location_of_max"] = float(np.argmax(x) / n)
    out["first_location_of_min"] = float(np.argmin(x) / n)

    chunks = np.array_split(x, N_ENERGY_CHUNKS)
    for c, chunk in enumerate(chunks):
        out[f"energy_chunk_ratio_{c}"] = \
            float(np.sum(chunk ** 2) / energy) if energy > 0 else np.nan
    return out


def extract_ts_features(ecg: TwelveLeadEcg,
                        catalog: TsDescriptorCatalog | None = None
                        ) -> dict[str, float]:
    """Per lead x per descriptor values named `<lead>__ts__<descriptor>`."""
    catalog = catalog or TsDescriptorCatalog()
    out: dict[str, float] = {}
    for lead in ALL_LEADS:
        desc = compute_descriptors(ecg.leads[lead], ecg.sampling_rate)
        for name in catalog.names:
            out[f"{lead}__ts__{name}"] = desc[name]
    return out


def ts_feature_names(catalog: TsDescriptorCatalog | None = None) -> list[str]:
    catalog = catalog or TsDescriptorCatalog()
    return [f"{lead}__ts__{name}" for lead in ALL_LEADS
            for name in catalog.names]
