"""Descriptor-bank oracles: closed-form values on crafted signals."""

import numpy as np
import pytest

from ecgfusion.errors import ZeroPower
from ecgfusion.signal import ALL_LEADS, TwelveLeadEcg
from ecgfusion.ts_features import (BAND_EDGES_FRAC, TsDescriptorCatalog,
                                   compute_descriptors,
                                   entropy_of_distribution, extract_ts_features,
                                   periodogram_psd, spectral_entropy,
                                   ts_descriptor_names, ts_feature_names)

FS = 500.0


def test_catalog_has_65_descriptors_per_lead():
    names = ts_descriptor_names()
    assert len(names) == 65
    assert len(set(names)) == 65
    assert len(ts_feature_names()) == 65 * 12
    manifest = TsDescriptorCatalog().manifest()
    assert manifest["version"] == "ts-1"
    assert [e["name"] for e in manifest["features"]] == names
    assert all(e["definition"] for e in manifest["features"])


def test_moment_descriptors_on_known_vector():
    x = np.array([1.0, 2.0, 3.0])
    d = compute_descriptors(x, FS)
    assert d["mean"] == 2.0
    assert d["variance"] == pytest.approx(2.0 / 3.0)
    assert d["median"] == 2.0
    assert d["minimum"] == 1.0
    assert d["maximum"] == 3.0
    assert d["abs_energy"] == 14.0
    assert d["rms"] == pytest.approx(np.sqrt(14.0 / 3.0))
    assert d["value_range"] == 2.0
    assert d["mean_abs_change"] == 1.0
    assert d["skewness"] == pytest.approx(0.0, abs=1e-12)
    assert d["count_above_mean"] == 1.0
    assert d["count_below_mean"] == 1.0
    assert d["zero_crossings"] == 0.0


def test_ramp_trend_is_exact():
    x = np.arange(100, dtype=float) * 1.0 + 5.0
    d = compute_descriptors(x, FS)
    assert d["trend_slope"] == pytest.approx(1.0)
    assert d["trend_intercept"] == pytest.approx(5.0)
    assert d["trend_r2"] == pytest.approx(1.0)
    assert d["first_location_of_max"] == pytest.approx(0.99)
    assert d["first_location_of_min"] == 0.0


def test_constant_vector_descriptors():
    d = compute_descriptors(np.full(200, 3.0), FS)
    assert d["variance"] == 0.0
    assert np.isnan(d["skewness"])
    assert np.isnan(d["autocorr_lag_1"])
    assert np.isnan(d["diff_variance_ratio"])
    assert d["trend_slope"] == 0.0
    assert d["binned_entropy_10"] == 0.0
    # Hann-windowed constant concentrates power at DC: low but defined
    assert d["spectral_entropy"] < 0.2
    assert np.isnan(compute_descriptors(np.zeros(200), FS)
                    ["spectral_entropy"])


def test_autocorrelation_oracle():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(2000)
    d = compute_descriptors(x, FS)
    mu = x.mean()
    c = x - mu
    for k in (1, 2, 3, 5, 10):
        expected = np.sum(c[:-k] * c[k:]) / np.sum(c ** 2)
        assert d[f"autocorr_lag_{k}"] == pytest.approx(expected)
    # white noise: small autocorrelation at every lag
    assert abs(d["autocorr_lag_1"]) < 0.1


def test_alternating_sequence_autocorr():
    x = np.tile([1.0, -1.0], 500)
    d = compute_descriptors(x, FS)
    assert d["autocorr_lag_1"] == pytest.approx(-999.0 / 1000.0)
    assert d["autocorr_lag_2"] == pytest.approx(998.0 / 1000.0)


def test_entropy_of_distribution_bounds():
    assert entropy_of_distribution(np.full(10, 0.1)) == pytest.approx(1.0)
    one_hot = np.zeros(10)
    one_hot[3] = 1.0
    assert entropy_of_distribution(one_hot) == 0.0
    assert entropy_of_distribution(np.array([1.0])) == 0.0


def test_spectral_entropy_flat_spectrum_is_exactly_one():
    # a unit impulse has a flat magnitude spectrum even after windowing
    x = np.zeros(256)
    x[128] = 1.0
    w = np.hanning(256)
    _, power = periodogram_psd(x, FS)
    assert np.allclose(power, power[0])
    assert spectral_entropy(x, FS) == pytest.approx(1.0, abs=1e-12)
    assert w[128] != 0  # the impulse survives the window


def test_spectral_entropy_tone_is_low_noise_is_high():
    t = np.arange(4096) / FS
    tone = np.sin(2 * np.pi * 25.0 * t)
    assert spectral_entropy(tone, FS) <= 0.3
    for seed in range(20):
        noise = np.random.default_rng(seed).standard_normal(4096)
        assert spectral_entropy(noise, FS) >= 0.9


def test_spectral_entropy_errors():
    with pytest.raises(ValueError):
        spectral_entropy(np.ones(32), FS)
    with pytest.raises(ZeroPower):
        spectral_entropy(np.zeros(256), FS)


def test_band_energies_tile_parseval():
    rng = np.random.default_rng(3)
    for n in (999, 1000):  # odd and even lengths hit both scale paths
        x = rng.standard_normal(n)
        d = compute_descriptors(x, FS)
        total = sum(d[f"band_energy_{b}"]
                    for b in range(len(BAND_EDGES_FRAC) - 1))
        assert total == pytest.approx(d["abs_energy"], rel=1e-9)


def test_dominant_freq_and_centroid_of_tone():
    t = np.arange(5000) / FS
    x = np.sin(2 * np.pi * 40.0 * t)
    d = compute_descriptors(x, FS)
    assert d["dominant_freq"] == pytest.approx(40.0, abs=0.2)
    assert d["spectral_centroid"] == pytest.approx(40.0, abs=1.0)
    # 40 Hz sits in band [0.16, 0.4) x 250 Hz = [40, 100) Hz
    assert d["band_energy_3"] > 0.95 * d["abs_energy"]


def test_energy_chunk_ratios_sum_to_one():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(1003)  # non-divisible length
    d = compute_descriptors(x, FS)
    total = sum(d[f"energy_chunk_ratio_{c}"] for c in range(10))
    assert total == pytest.approx(1.0)
    front = np.zeros(1000)
    front[:100] = 1.0
    d = compute_descriptors(front, FS)
    assert d["energy_chunk_ratio_0"] == pytest.approx(1.0)
    assert d["energy_chunk_ratio_5"] == 0.0


def test_counting_descriptors():
    x = np.array([1.0, 1.0, 1.0, -3.0, 1.0, -1.0, -1.0, 1.0])
    d = compute_descriptors(x, FS)
    assert d["count_above_mean"] == 5.0
    assert d["count_below_mean"] == 3.0
    assert d["longest_strike_above_mean"] == 3.0
    assert d["longest_strike_below_mean"] == 2.0
    assert d["zero_crossings"] == 4.0


def test_fft_coef_zero_is_sum():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    d = compute_descriptors(x, FS)
    assert d["fft_coef_mag_0"] == pytest.approx(10.0)


def test_extract_ts_features_naming_and_count():
    rng = np.random.default_rng(5)
    leads = {name: rng.standard_normal(5000) for name in ALL_LEADS}
    ecg = TwelveLeadEcg("r", "p", "2024-01-01T00:00:00", FS, 10.0, leads,
                        {name: "measured" for name in ALL_LEADS})
    feats = extract_ts_features(ecg)
    assert len(feats) == 780
    assert list(feats) == ts_feature_names()
    assert feats["II__ts__mean"] == pytest.approx(leads["II"].mean())


def test_zscored_input_compatibility():
    # standardized leads: mean 0, variance 1 recovered exactly
    rng = np.random.default_rng(6)
    x = rng.standard_normal(5000)
    x = (x - x.mean()) / x.std()
    d = compute_descriptors(x, FS)
    assert d["mean"] == pytest.approx(0.0, abs=1e-12)
    assert d["variance"] == pytest.approx(1.0, abs=1e-12)
    assert d["abs_energy"] == pytest.approx(5000.0, rel=1e-12)
