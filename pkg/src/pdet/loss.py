"""Training objective: in-band spectral entropy + input/output spectral KL + out-of-band power.

For a model output ``y`` and its input window ``x`` (same length), with
``q`` and ``p`` their power spectra normalized over the band of interest::

    se  = -sum_band q log q
    ds  =  sum_band p log(p / q)
    bw  =  (power of y outside the band) / (total power of y)
    total = lambda_se * se + nu_ds * ds + w_bw * bw

Every term depends on ``y`` only through normalized spectra, so the loss
is invariant to rescaling ``y``. The gradient with respect to ``y`` is
computed analytically by pulling ``dL/dP_k`` back through the power
spectrum, ``dP_k/dy_n = 2 Re(conj(Y_k) exp(-2j pi k n / nfft))``, which
is one forward FFT per sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadNfft, DegenerateOutput, ShapeMismatch
from .spectral import KL_EPS, band_bins_for, is_power_of_two

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "periodicity_loss",
    "periodicity_loss_grad",
    "batch_loss_and_grad",
    "POWER_FLOOR",
]

# added to every in-band bin before normalization so log and 1/q stay finite
POWER_FLOOR = 1e-8


@dataclass(frozen=True)
class LossWeights:
    lambda_se: float = 1.0
    nu_ds: float = 1.0
    w_bw: float = 1.0

    def __post_init__(self):
        for name in ("lambda_se", "nu_ds", "w_bw"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class LossBreakdown:
    se: float
    ds: float
    bw: float
    total: float


def _as_batch(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim == 3 and a.shape[1] == 1:
        a = a[:, 0, :]
    if a.ndim != 2:
        raise ShapeMismatch(f"expected (batch, length) array, got shape {a.shape}")
    return a


def batch_loss_and_grad(y, x, fs, band, nfft, weights=LossWeights(), need_grad=True, strict=True):
    """Per-sample loss terms and ``d total / d y`` for a batch of windows.

    Parameters
    ----------
    y, x : array_like, shape (batch, length)
        Model outputs and the windows they were computed from.
    fs : float
    band : FrequencyBand
    nfft : int
    weights : LossWeights
    need_grad : bool
    strict : bool
        Raise :class:`DegenerateOutput` when an output has exactly zero
        in-band or total power. With ``strict=False`` the power floor is
        the only guard and a silent output yields a large ``ds``.

    Returns
    -------
    terms : ndarray, shape (batch, 4)
        Columns ``se, ds, bw, total``.
    grad : ndarray, shape (batch, length) or None
    """
    y = _as_batch(y)
    x = _as_batch(x)
    if y.shape != x.shape:
        raise ShapeMismatch(f"output shape {y.shape} differs from input shape {x.shape}")
    n = y.shape[1]
    nfft = int(nfft)
    if not is_power_of_two(nfft) or nfft < n:
        raise BadNfft(f"nfft={nfft} must be a power of two >= window length {n}")
    lo, hi = band_bins_for(nfft, fs, band)
    sl = slice(lo, hi + 1)

    FY = np.fft.rfft(y, n=nfft, axis=1)
    PY = FY.real ** 2 + FY.imag ** 2
    FX = np.fft.rfft(x, n=nfft, axis=1)
    PX = FX.real ** 2 + FX.imag ** 2

    band_raw = PY[:, sl].sum(axis=1)
    total_pow = PY.sum(axis=1)
    if strict and np.any(band_raw <= 0):
        bad = int(np.flatnonzero(band_raw <= 0)[0])
        raise DegenerateOutput(f"output {bad} has no power inside the band")
    if np.any(total_pow <= 0):
        bad = int(np.flatnonzero(total_pow <= 0)[0])
        raise DegenerateOutput(f"output {bad} is identically zero")

    Qf = PY[:, sl] + POWER_FLOOR
    s = Qf.sum(axis=1, keepdims=True)
    q = Qf / s
    Pf = PX[:, sl] + POWER_FLOOR
    p = Pf / Pf.sum(axis=1, keepdims=True)

    logq = np.log(q)
    se = -np.sum(q * logq, axis=1)
    qc = np.maximum(q, KL_EPS)
    ds = np.sum(p * (np.log(p) - np.log(qc)), axis=1)
    bw = (total_pow - band_raw) / total_pow
    total = weights.lambda_se * se + weights.nu_ds * ds + weights.w_bw * bw
    terms = np.stack([se, ds, bw, total], axis=1)
    if not need_grad:
        return terms, None

    G = np.empty_like(PY)
    # bw: d/dP_k of (outside / total)
    G[:] = (weights.w_bw / total_pow)[:, None]
    G *= 1.0 - bw[:, None]
    G[:, sl] = -(weights.w_bw * bw / total_pow)[:, None]
    # se through the band normalization
    dq_se = -(logq + se[:, None]) / s
    # ds: dds/dq_j = -p_j / q_j, except where the clamp is active
    a = np.where(q > KL_EPS, -p / q, 0.0)
    dq_ds = (a - np.sum(q * a, axis=1, keepdims=True)) / s
    G[:, sl] += weights.lambda_se * dq_se + weights.nu_ds * dq_ds

    grad = 2.0 * np.fft.fft(G * np.conj(FY), n=nfft, axis=1).real[:, :n]
    return terms, grad


def _check_pair(y, x):
    if len(y) != len(x):
        raise ShapeMismatch(f"output length {len(y)} differs from input length {len(x)}")
    if y.fs != x.fs:
        raise ShapeMismatch("output and input sample rates differ")


def periodicity_loss(y, x, band, nfft, w=LossWeights()):
    """Loss terms for a single output/input pair of :class:`TimeSeries`."""
    _check_pair(y, x)
    terms, _ = batch_loss_and_grad(y.samples, x.samples, y.fs, band, nfft, w, need_grad=False)
    se, ds, bw, total = (float(v) for v in terms[0])
    return LossBreakdown(se, ds, bw, total)


def periodicity_loss_grad(y, x, band, nfft, w=LossWeights()):
    """``d total / d y[n]`` for a single output/input pair."""
    _check_pair(y, x)
    _, grad = batch_loss_and_grad(y.samples, x.samples, y.fs, band, nfft, w)
    return grad[0]
