"""Frequency estimators: Fourier argmax, autocorrelation peak, their hybrid, and the neural detector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBand, ZeroBandPower
from .spectral import autocorr_normalized, band_bins, dft_power
from .signal_core import TimeSeries

__all__ = ["DetectionResult", "detect_fourier", "detect_acf", "detect_hybrid", "detect_neural", "acf_lag_range"]

HYBRID_CANDIDATES = 3
HYBRID_MIN_CONFIDENCE = 0.1
HYBRID_MIN_SUPPORT = 0.1


@dataclass(frozen=True)
class DetectionResult:
    freq_hz: float
    confidence: float
    method: str


def detect_fourier(x, band, nfft=512):
    """Frequency of the strongest one-sided DFT bin inside ``band``.

    Ties go to the lower frequency. ``confidence`` is the peak bin's share
    of the total in-band power.
    """
    spec = dft_power(x, nfft)
    lo, hi = band_bins(spec, band)
    seg = spec.power[lo:hi + 1]
    total = seg.sum()
    if not total > 0:
        raise ZeroBandPower("no power inside the band")
    k = int(np.argmax(seg))
    return DetectionResult(spec.freq_of(lo + k), float(seg[k] / total), "fourier")


def acf_lag_range(n, fs, band):
    """Inclusive lag range ``[ceil(fs/hi), floor(fs/lo)]`` capped at ``n // 2``."""
    if band.lo > fs / 2:
        raise EmptyBand("band lies above Nyquist")
    band.check(fs)
    lag_lo = max(1, math.ceil(fs / band.hi - 1e-9))
    lag_hi = n // 2 if band.lo == 0 else min(n // 2, math.floor(fs / band.lo + 1e-9))
    if lag_lo > lag_hi:
        raise EmptyBand(f"no lag between {lag_lo} and {lag_hi} samples fits a {n}-sample window")
    return lag_lo, lag_hi


def detect_acf(x, band):
    """Frequency ``fs / tau`` of the autocorrelation peak over lags implied by ``band``.

    Ties go to the smaller lag. ``confidence`` is the peak correlation
    clipped to ``[0, 1]``.
    """
    lag_lo, lag_hi = acf_lag_range(len(x), x.fs, band)
    r = autocorr_normalized(x, lag_hi)
    seg = r[lag_lo:lag_hi + 1]
    i = int(np.argmax(seg))
    tau = lag_lo + i
    return DetectionResult(x.fs / tau, float(np.clip(seg[i], 0.0, 1.0)), "acf")


def _acf_peaks(seg):
    """Indices of local maxima in ``seg``, strongest first; the global max if there are none."""
    inner = np.flatnonzero((seg[1:-1] >= seg[:-2]) & (seg[1:-1] > seg[2:])) + 1
    if inner.size == 0:
        return np.array([int(np.argmax(seg))])
    order = np.lexsort((inner, -seg[inner]))
    return inner[order]


def detect_hybrid(x, band, nfft=512):
    """Autocorrelation candidates cross-checked against the periodogram.

    The strongest autocorrelation peaks (up to three) are proposed in
    order of correlation. A candidate is accepted when the periodogram
    holds at least 10% of the in-band peak power within one bin of its
    frequency; the first accepted candidate wins. Falls back to
    :func:`detect_fourier` when the autocorrelation is weak (peak below
    0.1) or no candidate has spectral support.
    """
    fourier = detect_fourier(x, band, nfft)
    lag_lo, lag_hi = acf_lag_range(len(x), x.fs, band)
    r = autocorr_normalized(x, lag_hi)
    seg = r[lag_lo:lag_hi + 1]
    if seg.max() < HYBRID_MIN_CONFIDENCE:
        return DetectionResult(fourier.freq_hz, fourier.confidence, "hybrid:fourier")

    spec = dft_power(x, nfft)
    lo, hi = band_bins(spec, band)
    band_peak = spec.power[lo:hi + 1].max()
    for i in _acf_peaks(seg)[:HYBRID_CANDIDATES]:
        tau = lag_lo + int(i)
        f = x.fs / tau
        k = int(round(f * nfft / x.fs))
        support = spec.power[max(lo, k - 1):min(hi, k + 1) + 1]
        if support.size and support.max() >= HYBRID_MIN_SUPPORT * band_peak:
            return DetectionResult(f, float(np.clip(seg[i], 0.0, 1.0)), "hybrid")
    return DetectionResult(fourier.freq_hz, fourier.confidence, "hybrid:fourier")


def detect_neural(model, x, band, nfft=512):
    """Fourier argmax of the model output ``z = model(x)``.

    ``model`` is anything mapping a ``(batch, 1, T)`` array to an array of
    the same shape, typically a :class:`~pdet.model.UNet1D`. ``x`` must
    already be prepared the way the training windows were.
    """
    z = np.asarray(model(np.asarray(x.samples)[None, None, :]), dtype=np.float64).reshape(-1)
    res = detect_fourier(TimeSeries(z, x.fs), band, nfft)
    return DetectionResult(res.freq_hz, res.confidence, "neural")
