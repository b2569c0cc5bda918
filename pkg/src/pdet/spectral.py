"""One-sided power spectra, band-normalized distributions and the quantities built on them.

Conventions used throughout:

* bin ``k`` of an ``nfft``-point spectrum sits at ``k * fs / nfft`` Hz and
  only bins ``0 .. nfft // 2`` are kept (real input);
* DC and Nyquist bins carry no factor-2 correction, since every consumer
  works with ratios over fixed bin sets;
* logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadNfft, BinMismatch, EmptyBand, ZeroBandPower, ZeroTotalPower, ZeroVariance
from .signal_core import FrequencyBand, TimeSeries

__all__ = [
    "PowerSpectrum",
    "NormalizedSpectrum",
    "dft_power",
    "band_bins",
    "normalize_band",
    "spectral_entropy",
    "spectral_kl",
    "out_of_band_power",
    "autocorr_normalized",
    "circular_acf_via_spectrum",
    "is_power_of_two",
    "KL_EPS",
]

KL_EPS = 1e-8


def is_power_of_two(n):
    n = int(n)
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    power: np.ndarray
    nfft: int
    fs: float

    def __post_init__(self):
        p = np.asarray(self.power, dtype=np.float64)
        if p.shape != (self.nfft // 2 + 1,):
            raise ValueError(f"expected {self.nfft // 2 + 1} bins, got shape {p.shape}")
        if not (np.all(np.isfinite(p)) and np.all(p >= 0)):
            raise ValueError("power must be finite and non-negative")
        object.__setattr__(self, "power", p)

    @property
    def freqs(self):
        return np.arange(self.power.size) * self.fs / self.nfft

    def freq_of(self, k):
        return k * self.fs / self.nfft


@dataclass(frozen=True, eq=False)
class NormalizedSpectrum:
    """Probability mass over the inclusive bin range ``bin_lo .. bin_hi``."""

    probs: np.ndarray
    bin_lo: int
    bin_hi: int
    nfft: int
    fs: float

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (self.bin_hi - self.bin_lo + 1,):
            raise ValueError("probs length does not match the bin range")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def n_bins(self):
        return self.probs.size


def dft_power(ts, nfft):
    """``|X_k|^2`` for ``k = 0 .. nfft/2`` of the zero-padded DFT of ``ts``.

    Parameters
    ----------
    ts : TimeSeries
    nfft : int
        Transform length; a power of two no shorter than ``ts``.

    Returns
    -------
    PowerSpectrum
    """
    nfft = int(nfft)
    if not is_power_of_two(nfft) or nfft < len(ts):
        raise BadNfft(f"nfft={nfft} must be a power of two >= signal length {len(ts)}")
    X = np.fft.rfft(ts.samples, n=nfft)
    return PowerSpectrum(X.real ** 2 + X.imag ** 2, nfft, ts.fs)


def band_bins_for(nfft, fs, band):
    """Inclusive bin range ``(lo, hi)`` whose centre frequencies lie in ``band``."""
    if band.lo > fs / 2:
        raise EmptyBand(f"band {band.lo}..{band.hi} Hz lies above Nyquist ({fs / 2} Hz)")
    band.check(fs)
    # tolerance keeps edges that sit exactly on a bin from being lost to rounding
    k_lo = max(0, math.ceil(band.lo * nfft / fs - 1e-9))
    k_hi = min(nfft // 2, math.floor(band.hi * nfft / fs + 1e-9))
    if k_lo > k_hi:
        raise EmptyBand(f"no {nfft}-point DFT bin falls inside {band.lo}..{band.hi} Hz")
    return k_lo, k_hi


def band_bins(spec, band):
    return band_bins_for(spec.nfft, spec.fs, band)


def normalize_band(spec, band):
    lo, hi = band_bins(spec, band)
    seg = spec.power[lo:hi + 1]
    total = seg.sum()
    if not total > 0:
        raise ZeroBandPower(f"no power in bins {lo}..{hi}")
    return NormalizedSpectrum(seg / total, lo, hi, spec.nfft, spec.fs)


def spectral_entropy(p):
    """Shannon entropy (nats) of a normalized spectrum, with ``0 log 0 = 0``.

    Bounded by ``0 <= H <= log(K)`` for ``K`` bins: zero for a single
    spectral line, maximal for a flat spectrum.
    """
    q = p.probs[p.probs > 0]
    return float(-np.sum(q * np.log(q)))


def spectral_kl(p, q, eps=KL_EPS):
    """Relative entropy ``sum p log(p / max(q, eps))`` over bins where ``p > 0``.

    The clamp keeps the value finite when ``q`` vanishes where ``p`` does
    not, so a collapsed output shows up as a large but finite number
    (about ``log(1/eps)``) instead of infinity.
    """
    if (p.bin_lo, p.bin_hi, p.nfft) != (q.bin_lo, q.bin_hi, q.nfft) or p.fs != q.fs:
        raise BinMismatch("spectra cover different bin ranges")
    if not eps > 0:
        raise ValueError("eps must be > 0")
    mask = p.probs > 0
    pp = p.probs[mask]
    qq = np.maximum(q.probs[mask], eps)
    return float(np.sum(pp * np.log(pp / qq)))


def out_of_band_power(spec, band):
    """Fraction of one-sided power in bins outside ``band``."""
    total = spec.power.sum()
    if not total > 0:
        raise ZeroTotalPower("spectrum has no power")
    inside = spec.freqs
    inside = (inside >= band.lo) & (inside <= band.hi)
    return float(spec.power[~inside].sum() / total)


def autocorr_normalized(ts, max_lag):
    """Autocorrelation normalized by the series' total squared deviation.

    ``r[tau] = sum_{n < N - tau} d[n] d[n + tau] / sum_n d[n]^2`` with
    ``d = x - mean(x)``, for ``tau = 0 .. max_lag``. Larger lags sum over
    fewer products and so are tapered towards zero.
    """
    x = ts.samples
    n = x.size
    max_lag = int(max_lag)
    if not 1 <= max_lag < n:
        raise ValueError(f"max_lag must be in [1, {n - 1}]")
    d = x - x.mean()
    denom = np.dot(d, d)
    if not denom > 0:
        raise ZeroVariance("autocorrelation of a constant series is undefined")
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    D = np.fft.rfft(d, n=nfft)
    acov = np.fft.irfft(D.real ** 2 + D.imag ** 2, n=nfft)[:max_lag + 1]
    r = acov / denom
    r[0] = 1.0
    return r


def circular_acf_via_spectrum(ts):
    """Circular autocorrelation ``sum_n x[n] x[(n + tau) mod N]`` via the power spectrum."""
    x = ts.samples
    X = np.fft.fft(x)
    return np.fft.ifft(X.real ** 2 + X.imag ** 2).real
