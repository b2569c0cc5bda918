"""Uniformly sampled series and the preprocessing applied before detection.

Every function here is pure: inputs are never mutated and a new
:class:`TimeSeries` is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import BandOutOfRange, SignalTooShort, ZeroVariance

__all__ = [
    "TimeSeries",
    "FrequencyBand",
    "WindowSpec",
    "segment",
    "zscore",
    "minmax01",
    "bandpass_butterworth4",
    "diff_square",
    "resample_linear",
]


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A real sequence sampled uniformly at ``fs`` Hz."""

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if x.size == 0:
            raise ValueError("samples must be non-empty")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        fs = float(self.fs)
        if not (np.isfinite(fs) and fs > 0):
            raise ValueError(f"fs must be positive, got {self.fs!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "fs", fs)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.fs

    def with_samples(self, samples):
        return TimeSeries(samples, self.fs)


@dataclass(frozen=True)
class FrequencyBand:
    """Closed frequency interval ``[lo, hi]`` in Hz."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("band edges must be finite")
        if lo < 0:
            raise ValueError("lo must be >= 0")
        if not lo < hi:
            raise ValueError("lo must be < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def check(self, fs):
        """Raise :class:`BandOutOfRange` unless ``hi <= fs/2``."""
        if self.hi > fs / 2:
            raise BandOutOfRange(f"band upper edge {self.hi} Hz exceeds Nyquist {fs / 2} Hz")
        return self

    def contains(self, f):
        return self.lo <= f <= self.hi


@dataclass(frozen=True)
class WindowSpec:
    win_sec: float
    shift_sec: float

    def __post_init__(self):
        if not self.win_sec > 0:
            raise ValueError("win_sec must be > 0")
        if not 0 < self.shift_sec <= self.win_sec:
            raise ValueError("shift_sec must be in (0, win_sec]")


def segment(ts, spec):
    """Cut ``ts`` into overlapping fixed-length windows.

    The window length is ``W = round(win_sec * fs)`` and the stride
    ``S = round(shift_sec * fs)``. The tail that does not fill a whole
    window is dropped, giving ``(L - W) // S + 1`` windows.
    """
    n = len(ts)
    w = int(round(spec.win_sec * ts.fs))
    s = max(1, int(round(spec.shift_sec * ts.fs)))
    if w < 1 or n < w:
        raise SignalTooShort(f"series of {n} samples is shorter than the {w}-sample window")
    count = (n - w) // s + 1
    x = ts.samples
    return [TimeSeries(x[i * s:i * s + w], ts.fs) for i in range(count)]


def zscore(ts):
    x = ts.samples
    sd = x.std()
    if not sd > 0:
        raise ZeroVariance("cannot z-score a constant series")
    return ts.with_samples((x - x.mean()) / sd)


def minmax01(ts):
    x = ts.samples
    lo, hi = x.min(), x.max()
    if not hi > lo:
        raise ZeroVariance("cannot min-max scale a constant series")
    return ts.with_samples((x - lo) / (hi - lo))


def butterworth4_sos(band, fs):
    """Second-order sections of the 4th-order Butterworth bandpass.

    A 2nd-order lowpass prototype is transformed to a bandpass, which
    doubles the order to 4 and yields two biquads. The bilinear transform
    pre-warps both band edges.
    """
    band.check(fs)
    if band.hi >= fs / 2:
        raise BandOutOfRange("bandpass upper edge must be strictly below Nyquist")
    if band.lo <= 0:
        raise BandOutOfRange("bandpass lower edge must be > 0")
    return sps.butter(2, [band.lo, band.hi], btype="bandpass", fs=fs, output="sos")


def bandpass_butterworth4(ts, band):
    """Causal (forward-only) 4th-order Butterworth bandpass of ``ts``.

    Examples
    --------
    >>> import numpy as np
    >>> t = np.arange(2000) / 25.0
    >>> ts = TimeSeries(np.sin(2 * np.pi * 10 * t), 25.0)
    >>> y = bandpass_butterworth4(ts, FrequencyBand(0.5, 4.0))
    >>> float(np.abs(y.samples[-500:]).max()) < 0.05
    True
    """
    sos = butterworth4_sos(band, ts.fs)
    return ts.with_samples(sps.sosfilt(sos, ts.samples))


def diff_square(ts):
    x = ts.samples
    if x.size < 2:
        raise SignalTooShort("need at least 2 samples to differentiate")
    return ts.with_samples(np.diff(x) ** 2)


def resample_linear(ts, fs_out):
    """Linearly interpolate ``ts`` onto a grid at ``fs_out`` Hz.

    Both the first and the last input sample are kept as grid anchors,
    so the output covers the same time span as the input.
    """
    fs_out = float(fs_out)
    if not fs_out > 0:
        raise ValueError("fs_out must be > 0")
    x = ts.samples
    if fs_out == ts.fs:
        return TimeSeries(x, fs_out)
    span = (x.size - 1) / ts.fs
    n_out = int(np.floor(span * fs_out + 1e-9)) + 1
    t_out = np.arange(n_out) / fs_out
    t_in = np.arange(x.size) / ts.fs
    return TimeSeries(np.interp(t_out, t_in, x), fs_out)
