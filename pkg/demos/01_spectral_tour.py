"""A walk through the spectral quantities the training loss is built from.

Run: python demos/01_spectral_tour.py
"""

import numpy as np

from pdet.signal_core import FrequencyBand, TimeSeries
from pdet.spectral import (
    band_bins,
    circular_acf_via_spectrum,
    dft_power,
    normalize_band,
    spectral_entropy,
    spectral_kl,
)

fs, nfft = 25.0, 512
band = FrequencyBand(0.5, 4.0)
t = np.arange(200) / fs
rng = np.random.default_rng(0)

# a clean 1.5 Hz sine and a white-noise window
sine = TimeSeries(np.sin(2 * np.pi * 1.5 * t), fs)
noise = TimeSeries(rng.normal(size=t.size), fs)

spec = dft_power(sine, nfft)
lo, hi = band_bins(spec, band)
k = hi - lo + 1
print(f"band {band.lo}-{band.hi} Hz covers bins {lo}..{hi} ({k} bins), ln K = {np.log(k):.3f}")

# entropy is low for a line spectrum and close to ln K for noise
for name, x in (("sine", sine), ("noise", noise)):
    q = normalize_band(dft_power(x, nfft), band)
    print(f"{name:>5}: in-band entropy {spectral_entropy(q):.3f} nats")

# KL(p || q) compares the input's band spectrum with an output's;
# an output that keeps the input's peak scores far lower than one that moves it
p = normalize_band(dft_power(sine, nfft), band)
kept = normalize_band(dft_power(TimeSeries(np.sin(2 * np.pi * 1.5 * t + 0.4), fs), nfft), band)
moved = normalize_band(dft_power(TimeSeries(np.sin(2 * np.pi * 3.0 * t), fs), nfft), band)
print(f"KL to a phase-shifted copy {spectral_kl(p, kept):.4f}, to a 3 Hz sine {spectral_kl(p, moved):.2f}")

# the power spectrum is the DFT of the circular autocorrelation
x = rng.normal(size=64)
acf = circular_acf_via_spectrum(TimeSeries(x, 1.0))
err = np.abs(np.fft.fft(acf) - np.abs(np.fft.fft(x)) ** 2).max()
print(f"Wiener-Khinchin residual on 64 samples: {err:.1e}")
