import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_autocorr, brute_circular_acf, naive_dft_power
from pdet.errors import BadNfft, BinMismatch, EmptyBand, ZeroBandPower, ZeroTotalPower, ZeroVariance
from pdet.signal_core import FrequencyBand, TimeSeries
from pdet.spectral import (
    NormalizedSpectrum,
    PowerSpectrum,
    autocorr_normalized,
    band_bins,
    circular_acf_via_spectrum,
    dft_power,
    normalize_band,
    out_of_band_power,
    spectral_entropy,
    spectral_kl,
)


def ns(probs, lo=0):
    probs = np.asarray(probs, dtype=float)
    return NormalizedSpectrum(probs, lo, lo + probs.size - 1, 64, 64.0)


class TestDftPower:
    def test_cosine_line(self):
        n = np.arange(64)
        x = np.cos(2 * np.pi * 8 * n / 64)
        p = dft_power(TimeSeries(x, 64.0), 64).power
        oracle = naive_dft_power(x, 64)
        assert oracle[8] == pytest.approx(1024.0, rel=1e-12)
        assert p[8] == pytest.approx(1024.0, rel=1e-12)
        others = np.delete(p, 8)
        assert others.max() <= 1e-18 * 1e6  # float rounding of a 1e3 peak
        np.testing.assert_allclose(p, oracle, atol=1e-9 * 1024)

    def test_zero(self):
        assert not dft_power(TimeSeries(np.zeros(16), 1.0), 16).power.any()

    def test_matches_naive_random(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 65))
            nfft = 1 << max(0, math.ceil(math.log2(n)))
            nfft *= int(rng.choice([1, 2]))
            x = rng.normal(size=n)
            got = dft_power(TimeSeries(x, 10.0), nfft).power
            want = naive_dft_power(x, nfft)
            assert np.abs(got - want).max() <= 1e-9 * max(want.max(), 1e-300)

    def test_parseval(self, rng):
        for _ in range(100):
            nfft = 1 << int(rng.integers(1, 8))
            x = rng.normal(size=int(rng.integers(1, nfft + 1)))
            p = dft_power(TimeSeries(x, 1.0), nfft).power
            rhs = (p[0] + p[-1] + 2 * p[1:-1].sum()) / nfft
            assert rhs == pytest.approx(np.sum(x * x), rel=1e-9)

    @pytest.mark.parametrize("nfft", [48, 8])
    def test_bad_nfft(self, nfft):
        with pytest.raises(BadNfft):
            dft_power(TimeSeries(np.ones(10), 1.0), nfft)

    def test_bins_and_frequencies(self):
        spec = dft_power(TimeSeries(np.ones(10), 25.0), 512)
        assert spec.power.size == 257
        assert spec.freq_of(256) == pytest.approx(12.5)


class TestBandBins:
    def test_example(self):
        spec = PowerSpectrum(np.zeros(257), 512, 25.0)
        # 0.5 * 512 / 25 = 10.24 -> 11 ; 4 * 512 / 25 = 81.92 -> 81
        assert band_bins(spec, FrequencyBand(0.5, 4.0)) == (11, 81)

    def test_full_range(self):
        spec = PowerSpectrum(np.zeros(257), 512, 25.0)
        assert band_bins(spec, FrequencyBand(0.0, 12.5)) == (0, 256)

    def test_between_bins(self):
        spec = PowerSpectrum(np.zeros(257), 512, 25.0)
        with pytest.raises(EmptyBand):
            band_bins(spec, FrequencyBand(1.01, 1.02))

    def test_edges_are_inclusive(self):
        spec = PowerSpectrum(np.zeros(33), 64, 64.0)
        assert band_bins(spec, FrequencyBand(2.0, 5.0)) == (2, 5)


class TestNormalizeBand:
    def test_example(self):
        spec = PowerSpectrum(np.array([1.0, 3.0, 4.0, 2.0, 0.0]), 8, 8.0)
        p = normalize_band(spec, FrequencyBand(1.0, 2.0))
        np.testing.assert_allclose(p.probs, [3 / 7, 4 / 7])
        assert (p.bin_lo, p.bin_hi) == (1, 2)

    def test_delta(self):
        spec = PowerSpectrum(np.array([0.0, 0.0, 5.0, 0.0, 0.0]), 8, 8.0)
        np.testing.assert_array_equal(normalize_band(spec, FrequencyBand(2.0, 2.0 + 1e-12)).probs, [1.0])

    def test_zero(self):
        spec = PowerSpectrum(np.array([1.0, 0.0, 0.0, 0.0, 1.0]), 8, 8.0)
        with pytest.raises(ZeroBandPower):
            normalize_band(spec, FrequencyBand(1.0, 3.0))


class TestEntropy:
    def test_uniform(self):
        assert spectral_entropy(ns([0.25] * 4)) == pytest.approx(math.log(4))

    def test_delta(self):
        assert spectral_entropy(ns([0, 0, 1, 0])) == 0.0

    def test_two_point(self):
        assert spectral_entropy(ns([0.5, 0.5, 0, 0])) == pytest.approx(math.log(2))

    def test_bounds_fuzz(self, rng):
        for _ in range(10_000):
            k = int(rng.integers(1, 100))
            w = rng.exponential(size=k) ** rng.uniform(0.2, 8)
            w[rng.random(k) < 0.3] = 0
            if w.sum() == 0:
                w[0] = 1.0
            h = spectral_entropy(ns(w / w.sum()))
            assert -1e-12 <= h <= math.log(k) + 1e-12

    def test_noise_vs_sinusoid(self, rng):
        band = FrequencyBand(0.5, 4.0)
        n, fs = 512, 25.0
        k_bins = None
        noise_h = []
        for _ in range(100):
            p = normalize_band(dft_power(TimeSeries(rng.normal(size=n), fs), n), band)
            k_bins = p.n_bins
            noise_h.append(spectral_entropy(p))
        assert np.mean(noise_h) >= 0.8 * math.log(k_bins)
        # 2.0 Hz sits exactly on bin 2.0 * 512 / 25 = 40.96 ~ use an on-grid frequency
        f = 41 * fs / n
        x = np.sin(2 * np.pi * f * np.arange(n) / fs)
        h = spectral_entropy(normalize_band(dft_power(TimeSeries(x, fs), n), band))
        assert h <= 0.2 * math.log(k_bins)


class TestKL:
    def test_identical(self):
        p = ns([0.2, 0.3, 0.5])
        assert spectral_kl(p, p) == 0.0

    def test_example(self):
        got = spectral_kl(ns([0.5, 0.5]), ns([0.25, 0.75]))
        want = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(0.143841, abs=1e-6)

    def test_clamped(self):
        got = spectral_kl(ns([0.5, 0.5]), ns([1.0, 0.0]), eps=1e-8)
        want = 0.5 * math.log(0.5) + 0.5 * math.log(0.5 / 1e-8)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(8.517, abs=1e-3)

    def test_mismatch(self):
        with pytest.raises(BinMismatch):
            spectral_kl(ns([0.5, 0.5], lo=0), ns([0.5, 0.5], lo=1))

    def test_nonnegative_fuzz(self, rng):
        for _ in range(5000):
            k = int(rng.integers(1, 60))
            a = rng.exponential(size=k) * (rng.random(k) > 0.2)
            b = rng.exponential(size=k) * (rng.random(k) > 0.2)
            a[0] += 1e-3
            b[-1] += 1e-3
            assert spectral_kl(ns(a / a.sum()), ns(b / b.sum()), 1e-8) >= -1e-9


class TestOutOfBand:
    band = FrequencyBand(2.0, 4.0)

    def _spec(self, power):
        return PowerSpectrum(np.asarray(power, float), 16, 16.0)

    def test_inside(self):
        assert out_of_band_power(self._spec([0, 0, 1, 2, 3, 0, 0, 0, 0]), self.band) == 0.0

    def test_outside(self):
        assert out_of_band_power(self._spec([0, 0, 0, 0, 0, 0, 7, 0, 0]), self.band) == 1.0

    def test_split(self):
        assert out_of_band_power(self._spec([0, 0, 0, 5, 0, 0, 0, 5, 0]), self.band) == 0.5

    def test_zero(self):
        with pytest.raises(ZeroTotalPower):
            out_of_band_power(self._spec(np.zeros(9)), self.band)


class TestAutocorr:
    def test_unit_lag_zero(self, rng):
        r = autocorr_normalized(TimeSeries(rng.normal(size=50), 1.0), 20)
        assert r[0] == 1.0

    def test_matches_formula(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 80))
            x = rng.normal(size=n)
            lag = int(rng.integers(1, n))
            np.testing.assert_allclose(autocorr_normalized(TimeSeries(x, 1.0), lag), brute_autocorr(x, lag), atol=1e-12)

    def test_square_wave_period(self):
        x = np.tile(np.r_[np.ones(10), -np.ones(10)], 10)
        oracle = brute_autocorr(x, 60)
        assert 1 + int(np.argmax(oracle[1:])) == 20
        r = autocorr_normalized(TimeSeries(x, 1.0), 60)
        assert 1 + int(np.argmax(r[1:])) == 20

    def test_constant(self):
        with pytest.raises(ZeroVariance):
            autocorr_normalized(TimeSeries(np.ones(10), 1.0), 3)


class TestCircularAcf:
    def test_impulse(self):
        np.testing.assert_allclose(circular_acf_via_spectrum(TimeSeries([1.0, 0, 0, 0], 1.0)), [1, 0, 0, 0], atol=1e-15)

    def test_constant(self):
        np.testing.assert_allclose(circular_acf_via_spectrum(TimeSeries(np.full(6, 3.0), 1.0)), np.full(6, 6 * 9.0))

    def test_brute_force(self, rng):
        x = rng.normal(size=32)
        want = brute_circular_acf(x)
        got = circular_acf_via_spectrum(TimeSeries(x, 1.0))
        assert np.abs(got - want).max() <= 1e-9 * np.abs(want).max()

    def test_wiener_khinchin(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 65))
            x = rng.normal(size=n)
            acf = circular_acf_via_spectrum(TimeSeries(x, 1.0))
            lhs = np.fft.fft(acf)
            rhs = np.abs(np.fft.fft(x)) ** 2
            assert np.abs(lhs - rhs).max() <= 1e-9 * max(rhs.max(), 1e-300)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 64), elements=st.floats(-100, 100)))
def test_dft_power_property(x):
    nfft = 1 << max(0, math.ceil(math.log2(x.size)))
    got = dft_power(TimeSeries(x, 1.0), nfft).power
    want = naive_dft_power(x, nfft)
    assert np.abs(got - want).max() <= 1e-9 * max(want.max(), 1.0)
