"""Label-free training loop and the rate-error metrics used for evaluation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff_nn as nn
from .errors import (
    AllSamplesFailed,
    ConstantSequence,
    DegenerateOutput,
    LengthMismatch,
    NonFiniteLoss,
    PdetError,
    ZeroTruth,
)
from .loss import LossWeights, batch_loss_and_grad
from .signal_core import FrequencyBand

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "Metrics",
    "PlateauSchedule",
    "train",
    "write_history_csv",
    "mae",
    "rmse",
    "pearson",
    "mape",
    "hz_to_rate",
    "evaluate",
    "RATE_UNITS",
]

log = logging.getLogger(__name__)

RATE_UNITS = ("hz", "bpm", "rpm", "spm")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    plateau_patience: int = 15
    lr_halving_factor: float = 0.5
    min_lr: float = 1e-5
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    nfft: int = 512
    band: FrequencyBand = field(default_factory=lambda: FrequencyBand(0.5, 4.0))

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.plateau_patience < 1:
            raise ValueError("plateau_patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    se: float
    ds: float
    bw: float
    total: float
    lr: float


class PlateauSchedule:
    """Halve the learning rate after ``patience`` epochs without a new best loss.

    "Best" is a strict improvement on the running minimum of the epoch-mean
    loss; any improvement resets the streak.
    """

    def __init__(self, lr, patience=15, factor=0.5, min_lr=1e-5):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.best = math.inf
        self.streak = 0
        self.halvings = 0

    def step(self, loss):
        """Record one epoch's loss; return True if it is a new best."""
        if loss < self.best:
            self.best = loss
            self.streak = 0
            return True
        self.streak += 1
        if self.streak >= self.patience:
            self.lr = max(self.lr * self.factor, self.min_lr)
            self.halvings += 1
            self.streak = 0
        return False


def train(model, windows, cfg, fs, log_every=1):
    """Fit ``model`` to unlabeled windows with the periodicity loss.

    Parameters
    ----------
    model : UNet1D
        Updated in place; on return it holds the parameters of the epoch
        with the lowest mean training loss.
    windows : ndarray, shape (n, T)
        Training inputs. Labels are never passed in.
    cfg : TrainConfig
    fs : float
        Sample rate of the windows.

    Returns
    -------
    model, history : UNet1D, list of EpochRecord
    """
    windows = np.asarray(windows)
    if windows.ndim != 2:
        raise ValueError("windows must be a (n, T) array")
    n = windows.shape[0]
    xs32 = windows.astype(model.dtype)
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = nn.AdamState(lr=cfg.lr)
    sched = PlateauSchedule(cfg.lr, cfg.plateau_patience, cfg.lr_halving_factor, cfg.min_lr)
    history = []
    best_state = model.state_dict()

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        sums = np.zeros(4)
        for b0 in range(0, n, cfg.batch_size):
            idx = perm[b0:b0 + cfg.batch_size]
            xb = xs32[idx][:, None, :]
            out = model.forward(xb, mode="train")
            y = out.data[:, 0, :].astype(np.float64)
            try:
                terms, grad = batch_loss_and_grad(
                    y, windows[idx], fs, cfg.band, cfg.nfft, cfg.weights
                )
            except DegenerateOutput as e:
                raise DegenerateOutput(f"epoch {epoch}, batch {b0 // cfg.batch_size}: {e}") from e
            if not np.all(np.isfinite(terms)):
                raise NonFiniteLoss(
                    f"epoch {epoch}, batch {b0 // cfg.batch_size}: loss terms {terms.mean(axis=0)}"
                )
            sums += terms.sum(axis=0)
            nn.zero_grad(params)
            nn.backward(out, (grad / len(idx))[:, None, :])
            opt.lr = sched.lr
            nn.adam_step(params, opt)
        se, ds, bw, total = sums / n
        history.append(EpochRecord(epoch, se, ds, bw, total, sched.lr))
        if sched.step(total):
            best_state = model.state_dict()
        if log_every and epoch % log_every == 0:
            log.info("epoch %d: se=%.4f ds=%.4f bw=%.4f total=%.4f lr=%.2g", epoch, se, ds, bw, total, sched.lr)
        if sched.lr <= cfg.min_lr and sched.halvings and cfg.min_lr > 0:
            log.info("learning rate reached its floor; stopping after epoch %d", epoch)
            break

    model.load_state_dict(best_state)
    return model, history


def write_history_csv(history, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "se", "ds", "bw", "total", "lr"])
        for h in history:
            w.writerow([h.epoch, repr(h.se), repr(h.ds), repr(h.bw), repr(h.total), repr(h.lr)])


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.size != truth.size:
        raise LengthMismatch(f"{pred.size} predictions vs {truth.size} ground-truth values")
    if pred.size == 0:
        raise LengthMismatch("metrics need at least one value")
    return pred, truth


def mae(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def pearson(pred, truth):
    pred, truth = _pair(pred, truth)
    dp = pred - pred.mean()
    dt = truth - truth.mean()
    spp, stt = np.dot(dp, dp), np.dot(dt, dt)
    if spp == 0 or stt == 0:
        raise ConstantSequence("correlation is undefined for a constant sequence")
    # one square root of the product keeps rho(x, x) exactly 1
    return float(np.clip(np.dot(dp, dt) / np.sqrt(spp * stt), -1.0, 1.0))


def mape(pred, truth):
    """Mean absolute percentage error, in percent."""
    pred, truth = _pair(pred, truth)
    if np.any(truth == 0):
        raise ZeroTruth("MAPE is undefined when a ground-truth value is 0")
    return float(100.0 * np.mean(np.abs((truth - pred) / truth)))


def hz_to_rate(freq_hz, unit="bpm"):
    if unit not in RATE_UNITS:
        raise ValueError(f"unit must be one of {RATE_UNITS}")
    if np.any(np.asarray(freq_hz) < 0):
        raise ValueError("frequency must be >= 0")
    return freq_hz if unit == "hz" else freq_hz * 60.0


@dataclass(frozen=True)
class Metrics:
    mae: float
    rmse: float
    pearson_rho: float
    mape_percent: float
    n: int
    excluded: int = 0

    def to_json(self):
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "rho_percent": None if math.isnan(self.pearson_rho) else 100.0 * self.pearson_rho,
            "mape": self.mape_percent,
            "n": self.n,
            "excluded": self.excluded,
        }


def evaluate(detector, dataset, unit="hz", map_fn=map):
    """Run ``detector`` on every window and score it against the labels.

    ``detector`` maps a :class:`TimeSeries` to a ``DetectionResult``.
    Windows on which it raises are kept in the records with their error
    and left out of the metrics. Pearson's rho is NaN when either side is
    constant.

    Returns
    -------
    metrics : Metrics
    records : list of dict
    """
    if dataset.labels is None or len(dataset) == 0:
        raise ValueError("evaluation needs a non-empty labeled dataset")

    def run(i):
        try:
            return i, detector(dataset.series(i)), None
        except PdetError as e:
            return i, None, f"{type(e).__name__}: {e}"

    records = []
    pred, truth = [], []
    for i, res, err in map_fn(run, range(len(dataset))):
        t = float(hz_to_rate(dataset.labels[i], unit))
        rec = {"index": i, "truth": t, "pred": None, "freq_hz": None, "confidence": None, "error": err}
        if res is not None:
            p = float(hz_to_rate(res.freq_hz, unit))
            rec.update(pred=p, freq_hz=res.freq_hz, confidence=res.confidence)
            pred.append(p)
            truth.append(t)
        records.append(rec)
    if not pred:
        raise AllSamplesFailed("the detector failed on every window")
    try:
        rho = pearson(pred, truth)
    except ConstantSequence:
        rho = float("nan")
    try:
        mp = mape(pred, truth)
    except ZeroTruth:
        mp = float("nan")
    metrics = Metrics(mae(pred, truth), rmse(pred, truth), rho, mp, len(pred), len(dataset) - len(pred))
    return metrics, records
