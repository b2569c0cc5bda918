"""Synthetic quasi-periodic benchmark and dataset file I/O.

A sample is a train of Gaussian-derivative pulses at the target rate
``f0`` plus a pure sinusoidal interferer elsewhere in the band plus white
noise. The pulse train is harmonic-rich and the interferer is a single
spectral line, so at ``interferer_amp_ratio > 1`` the plain Fourier
argmax lands on the interferer while the target stays identifiable by
its morphology.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadFrequency, BadMagic, EmptyFile, ParseError, Truncated, UnsupportedVersion
from .signal_core import FrequencyBand, TimeSeries, zscore

__all__ = [
    "SyntheticConfig",
    "LabeledDataset",
    "gen_pulse_train",
    "gen_sample",
    "gen_dataset",
    "prepare_window",
    "infer_pipeline",
    "save_dataset",
    "load_dataset",
    "dataset_bytes",
    "load_csv",
]

PDTS_MAGIC = b"PDTS"
PDTS_VERSION = 1
_HEADER = struct.Struct("<4sHfIIffB")


@dataclass(frozen=True)
class SyntheticConfig:
    fs: float = 25.0
    win_sec: float = 8.0
    model_len: int = 256
    band: FrequencyBand = field(default_factory=lambda: FrequencyBand(0.5, 4.0))
    f0_range: tuple = (0.75, 2.5)
    width_frac: float = 0.12
    interferer_amp_ratio: float = 2.0
    interferer_margin: float = 0.3
    noise_sigma: float = 0.5
    n_samples: int = 1024
    seed: int = 0

    def __post_init__(self):
        lo, hi = (float(v) for v in self.f0_range)
        object.__setattr__(self, "f0_range", (lo, hi))
        values = (self.fs, self.win_sec, lo, hi, self.width_frac, self.interferer_amp_ratio, self.noise_sigma)
        if not all(np.isfinite(v) for v in values):
            raise ValueError("config values must be finite")
        self.band.check(self.fs)
        if not (self.band.lo <= lo <= hi <= self.band.hi):
            raise ValueError(f"f0_range {self.f0_range} must lie inside the band {self.band}")
        if not 0 < self.width_frac < 0.5:
            raise ValueError("width_frac must be in (0, 0.5)")
        if self.interferer_amp_ratio < 0 or self.noise_sigma < 0:
            raise ValueError("amplitudes must be >= 0")
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if self.window_len > self.model_len or self.model_len % 8:
            raise ValueError("model_len must be a multiple of 8 no shorter than the window")
        if self.band.hi - self.band.lo < self.interferer_margin:
            raise ValueError("band is too narrow for the interferer margin")

    @property
    def window_len(self):
        return int(round(self.win_sec * self.fs))


@dataclass(eq=False)
class LabeledDataset:
    """Equal-length windows with optional per-window target frequency (Hz).

    Labels are for evaluation only; training reads :attr:`windows` alone.
    """

    windows: np.ndarray
    labels: np.ndarray | None
    fs: float
    band: FrequencyBand
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.windows = np.atleast_2d(np.asarray(self.windows, dtype=np.float64))
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
            if self.labels.size != self.windows.shape[0]:
                raise ValueError("one label per window is required")

    def __len__(self):
        return self.windows.shape[0]

    @property
    def window_len(self):
        return self.windows.shape[1]

    def series(self, i):
        return TimeSeries(self.windows[i], self.fs)

    def __iter__(self):
        for i in range(len(self)):
            yield self.series(i)


def gen_pulse_train(f0, fs, dur_sec, width_frac, phase=0.0):
    """Zero-mean train of Gaussian-derivative pulses, peak magnitude 1.

    Each pulse is ``-u exp(-u^2 / 2)`` with ``u = (t - t_k) / sigma`` and
    ``sigma = width_frac / f0``; pulse centres sit at
    ``t_k = (k + phase) / f0``.
    """
    if not 0 < f0 <= fs / 4:
        raise BadFrequency(f"f0={f0} Hz must be in (0, fs/4 = {fs / 4}]")
    if not 0 < width_frac < 0.5:
        raise ValueError("width_frac must be in (0, 0.5)")
    n = int(round(dur_sec * fs))
    t = np.arange(n) / fs
    period = 1.0 / f0
    sigma = width_frac * period
    # pulses whose +-5 sigma tails reach into the window
    k_first = int(np.floor(-phase - 5 * width_frac)) - 1
    k_last = int(np.ceil(dur_sec * f0 - phase + 5 * width_frac)) + 1
    centres = (np.arange(k_first, k_last + 1) + phase) * period
    u = (t[None, :] - centres[:, None]) / sigma
    x = (-u * np.exp(-0.5 * u * u)).sum(axis=0)
    x -= x.mean()
    peak = np.abs(x).max()
    if peak > 0:
        x /= peak
    return TimeSeries(x, fs)


def _draw_interferer(rng, cfg, f0):
    lo, hi = cfg.band.lo, cfg.band.hi
    while True:
        fi = rng.uniform(lo, hi)
        if abs(fi - f0) >= cfg.interferer_margin:
            return fi


def gen_sample(cfg, rng=None, index=0, return_interferer=False):
    """One raw window and its label.

    With ``rng=None`` the draw is keyed on ``(cfg.seed, index)`` so any
    index can be regenerated independently of the others.
    """
    if rng is None:
        rng = np.random.default_rng([cfg.seed, index])
    f0 = rng.uniform(*cfg.f0_range)
    fi = _draw_interferer(rng, cfg, f0)
    phase = rng.uniform()
    phi = rng.uniform(0, 2 * np.pi)
    target = gen_pulse_train(f0, cfg.fs, cfg.win_sec, cfg.width_frac, phase).samples
    t = np.arange(target.size) / cfg.fs
    x = target + cfg.interferer_amp_ratio * np.sin(2 * np.pi * fi * t + phi)
    x = x + cfg.noise_sigma * rng.standard_normal(target.size)
    ts = TimeSeries(x, cfg.fs)
    if return_interferer:
        return ts, f0, fi
    return ts, f0


def prepare_window(ts, model_len):
    """Z-score a window and zero-pad it symmetrically to ``model_len`` samples."""
    z = zscore(ts).samples
    extra = model_len - z.size
    if extra < 0:
        raise ValueError(f"window of {z.size} samples exceeds model length {model_len}")
    left = extra // 2
    return TimeSeries(np.pad(z, (left, extra - left)), ts.fs)


def gen_dataset(cfg, with_interferers=False):
    """Generate ``cfg.n_samples`` prepared windows (z-scored, padded to ``cfg.model_len``)."""
    windows = np.zeros((cfg.n_samples, cfg.model_len))
    labels = np.zeros(cfg.n_samples)
    interferers = np.zeros(cfg.n_samples)
    for i in range(cfg.n_samples):
        ts, f0, fi = gen_sample(cfg, index=i, return_interferer=True)
        windows[i] = prepare_window(ts, cfg.model_len).samples
        labels[i] = f0
        interferers[i] = fi
    prov = {"generator": "pulse+sinusoid+noise", "seed": cfg.seed, "pipeline": pipeline_descriptor(cfg)}
    if with_interferers:
        prov["interferer_hz"] = interferers
    return LabeledDataset(windows, labels, cfg.fs, cfg.band, prov)


def pipeline_descriptor(cfg):
    return {"zscore": True, "pad_to": cfg.model_len, "window_len": cfg.window_len}


def infer_pipeline(ds):
    """Recover the preparation applied to a stored dataset from its zero padding."""
    nz = np.flatnonzero(np.any(ds.windows != 0, axis=0))
    span = int(nz[-1] - nz[0] + 1) if nz.size else ds.window_len
    return {"zscore": True, "pad_to": ds.window_len, "window_len": span}


def dataset_bytes(ds):
    n, length = ds.windows.shape
    has_labels = ds.labels is not None
    head = _HEADER.pack(
        PDTS_MAGIC, PDTS_VERSION, ds.fs, length, n, ds.band.lo, ds.band.hi, int(has_labels)
    )
    body = np.ascontiguousarray(ds.windows, dtype="<f4").tobytes()
    if has_labels:
        body += np.ascontiguousarray(ds.labels, dtype="<f4").tobytes()
    return head + body


def save_dataset(ds, path):
    """Write ``ds`` as a PDTS container.

    Header (little-endian): ``b"PDTS"``, u16 version, f32 fs, u32 window
    length, u32 count, f32 band lo, f32 band hi, u8 has_labels. Then the
    windows as row-major float32, then one float32 label per window.
    """
    with open(path, "wb") as f:
        f.write(dataset_bytes(ds))


def load_dataset(path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[:4] != PDTS_MAGIC:
        raise BadMagic(f"{path}: not a PDTS dataset")
    if len(data) < _HEADER.size:
        raise Truncated(f"{path}: header is incomplete")
    _, version, fs, length, n, lo, hi, has_labels = _HEADER.unpack_from(data)
    if version != PDTS_VERSION:
        raise UnsupportedVersion(f"dataset version {version} is not supported")
    need = _HEADER.size + 4 * n * length + (4 * n if has_labels else 0)
    if len(data) < need:
        raise Truncated(f"{path}: {len(data)} bytes, header implies {need}")
    off = _HEADER.size
    windows = np.frombuffer(data, dtype="<f4", count=n * length, offset=off).reshape(n, length)
    labels = None
    if has_labels:
        labels = np.frombuffer(data, dtype="<f4", count=n, offset=off + 4 * n * length)
    return LabeledDataset(windows.astype(np.float64), labels, float(fs), FrequencyBand(lo, hi))


def load_csv(path, fs, has_header=False):
    """Read one value per row, or ``time,value`` rows (the value column is used)."""
    with open(path, newline="") as f:
        text = f.read()
    rows = list(csv.reader(io.StringIO(text)))
    if has_header and rows:
        rows = rows[1:]
        first = 2
    else:
        first = 1
    values = []
    for i, row in enumerate(rows, start=first):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        cell = cells[1] if len(cells) >= 2 else cells[0]
        try:
            values.append(float(cell))
        except ValueError:
            raise ParseError(f"{path}: row {i}: cannot parse {cell!r} as a number", row=i) from None
    if not values:
        raise EmptyFile(f"{path}: no samples")
    return TimeSeries(np.array(values), fs)
