"""``pdet`` command line: synth, train, detect, baseline, eval, spectrum.

Machine-readable JSON goes to stdout, everything else to stderr. Exit
codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .datagen import SyntheticConfig, gen_dataset, infer_pipeline, load_csv, load_dataset, save_dataset
from .detectors import DetectionResult, detect_acf, detect_fourier, detect_hybrid, detect_neural
from .errors import PdetError
from .loss import LossWeights
from .model import UNet1D, UNetConfig, load_checkpoint, save_checkpoint
from .signal_core import FrequencyBand, TimeSeries, zscore
from .spectral import dft_power
from .train_eval import RATE_UNITS, TrainConfig, evaluate, hz_to_rate, train, write_history_csv

log = logging.getLogger("pdet")

# band (Hz), nfft, unit, mirroring the per-task ranges used by the Fourier baseline
PRESETS = {
    "hr-ppg": ((30 / 60, 210 / 60), 512, "bpm"),
    "hr-ecg": ((30 / 60, 210 / 60), 2048, "bpm"),
    "resp": ((5 / 60, 40 / 60), 512, "rpm"),
    "steps": ((40 / 60, 140 / 60), 512, "spm"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _band(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must look like LO:HI, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("lo must be < hi")
    if lo < 0:
        raise argparse.ArgumentTypeError("lo must be >= 0")
    return FrequencyBand(lo, hi)


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text!r}")
        return v

    return parse


def _nonneg(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a value >= 0, got {text!r}")
    return v


def _emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def _seed(args):
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2 ** 31))
        sys.stderr.write(f"pdet: no --seed given, using {args.seed}\n")
    return args.seed


def _resolve(args, default_band=None, default_nfft=512, default_unit="hz"):
    band, nfft, unit = default_band, default_nfft, default_unit
    if getattr(args, "preset", None):
        (lo, hi), nfft, unit = PRESETS[args.preset]
        band = FrequencyBand(lo, hi)
    if getattr(args, "band", None) is not None:
        band = args.band
    if getattr(args, "nfft", None) is not None:
        nfft = args.nfft
    if getattr(args, "unit", None) is not None:
        unit = args.unit
    if band is None:
        raise UsageError("a frequency band is required (--band LO:HI or --preset)")
    return band, nfft, unit


def _add_band_opts(p, unit=True):
    p.add_argument("--band", type=_band, help="band of interest in Hz, LO:HI")
    p.add_argument("--nfft", type=_positive(int))
    p.add_argument("--preset", choices=sorted(PRESETS))
    if unit:
        p.add_argument("--unit", choices=RATE_UNITS)


def cmd_synth(args):
    seed = _seed(args)
    cfg_kw = dict(
        fs=args.fs,
        win_sec=args.win_sec,
        interferer_amp_ratio=args.interferer_ratio,
        noise_sigma=args.noise_sigma,
        n_samples=args.n,
        seed=seed,
        width_frac=args.width_frac,
    )
    if args.band is not None:
        cfg_kw["band"] = args.band
    if args.f0_range is not None:
        cfg_kw["f0_range"] = (args.f0_range.lo, args.f0_range.hi)
    window_len = int(round(args.win_sec * args.fs))
    # next power of two keeps the 3-level U-Net happy; 200 samples -> 256
    cfg_kw["model_len"] = max(16, _pow2_at_least(window_len)) if args.model_len is None else args.model_len
    try:
        cfg = SyntheticConfig(**cfg_kw)
    except (ValueError, PdetError) as e:
        raise UsageError(str(e)) from e
    out = Path(args.out)
    if not out.parent.exists():
        raise OSError(f"directory {out.parent} does not exist")
    ds = gen_dataset(cfg)
    save_dataset(ds, out)
    return {
        "command": "synth",
        "out": str(out),
        "count": len(ds),
        "window_len": ds.window_len,
        "fs": cfg.fs,
        "band": [cfg.band.lo, cfg.band.hi],
        "seed": seed,
    }


def _history_path(model_path):
    p = Path(model_path)
    return p.with_name(p.name + ".history.csv")


def cmd_train(args):
    seed = _seed(args)
    t0 = time.time()
    ds = load_dataset(args.data)
    band, nfft, _ = _resolve(args, default_band=ds.band)
    try:
        weights = LossWeights(args.lam, args.nu, args.bw)
        cfg = TrainConfig(
            lr=args.lr, batch_size=args.batch, max_epochs=args.epochs, weights=weights,
            seed=seed, nfft=nfft, band=band,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e
    model = UNet1D(UNetConfig(base_channels=args.base_channels), seed=seed)
    model, history = train(model, ds.windows, cfg, ds.fs)
    best = min(history, key=lambda h: h.total)
    meta = {
        "epochs": len(history),
        "best_epoch": best.epoch,
        "final_loss": best.total,
        "seed": seed,
        "fs": ds.fs,
        "band": [band.lo, band.hi],
        "nfft": nfft,
        "weights": [weights.lambda_se, weights.nu_ds, weights.w_bw],
        "pipeline": infer_pipeline(ds),
    }
    save_checkpoint(model, args.out, meta)
    hist_path = _history_path(args.out)
    write_history_csv(history, hist_path)
    return {
        "command": "train",
        "config": {
            "data": str(args.data), "lr": args.lr, "batch": args.batch, "epochs": args.epochs,
            "lambda": args.lam, "nu": args.nu, "bw": args.bw, "base_channels": args.base_channels,
            "band": [band.lo, band.hi], "nfft": nfft,
        },
        "checkpoint": str(args.out),
        "history": str(hist_path),
        "epochs_run": len(history),
        "best_epoch": best.epoch,
        "best_loss": {"se": best.se, "ds": best.ds, "bw": best.bw, "total": best.total},
        "wall_time_sec": round(time.time() - t0, 3),
        "seed": seed,
    }


def _prepare_for_model(ts, pipeline):
    """Apply the checkpoint's stored window pipeline to an arbitrary-length series."""
    pad_to = int(pipeline.get("pad_to", len(ts)))
    win = int(pipeline.get("window_len", pad_to))
    x = ts.samples
    if x.size > win:
        start = (x.size - win) // 2
        x = x[start:start + win]
    if pipeline.get("zscore", True):
        x = zscore(TimeSeries(x, ts.fs)).samples
    extra = pad_to - x.size
    if extra < 0:
        raise UsageError(f"input of {x.size} samples exceeds model length {pad_to}")
    left = extra // 2
    return TimeSeries(np.pad(x, (left, extra - left)), ts.fs)


def _result_json(res, unit):
    return {
        "freq_hz": res.freq_hz,
        "rate": float(hz_to_rate(res.freq_hz, unit)),
        "unit": unit,
        "confidence": res.confidence,
        "method": res.method,
    }


def cmd_detect(args):
    model, meta = load_checkpoint(args.model, with_metadata=True)
    mband = FrequencyBand(*meta["band"]) if "band" in meta else None
    band, nfft, unit = _resolve(args, default_band=mband, default_nfft=meta.get("nfft", 512), default_unit="bpm")
    ts = load_csv(args.input, args.fs, args.has_header)
    x = _prepare_for_model(ts, meta.get("pipeline", {}))
    res = detect_neural(model, x, band, max(nfft, _pow2_at_least(len(x))))
    return _result_json(res, unit)


def _pow2_at_least(n):
    return 1 << max(0, int(np.ceil(np.log2(n))))


BASELINES = {
    "fourier": lambda x, band, nfft: detect_fourier(x, band, nfft),
    "acf": lambda x, band, nfft: detect_acf(x, band),
    "hybrid": lambda x, band, nfft: detect_hybrid(x, band, nfft),
}


def cmd_baseline(args):
    band, nfft, unit = _resolve(args, default_unit="bpm")
    ts = load_csv(args.input, args.fs, args.has_header)
    nfft = max(nfft, _pow2_at_least(len(ts)))
    res = BASELINES[args.method](ts, band, nfft)
    return _result_json(res, unit)


def _workers():
    try:
        return max(1, int(os.environ.get("PDET_THREADS", "1")))
    except ValueError:
        return 1


def cmd_eval(args):
    t0 = time.time()
    ds = load_dataset(args.data)
    if ds.labels is None:
        raise UsageError("eval needs a dataset with labels")
    band, nfft, unit = _resolve(args, default_band=ds.band, default_unit="hz")
    nfft = max(nfft, _pow2_at_least(ds.window_len))
    workers = _workers()
    if args.method == "neural":
        if args.model is None:
            raise UsageError("--model is required for --method neural")
        model = load_checkpoint(args.model)

        def detector(x):
            return detect_neural(model, x, band, nfft)
    elif args.method == "oracle":
        # echoes the labels back; windows are visited in order when run serially
        answers = iter(ds.labels.tolist())
        workers = 1

        def detector(x):
            return DetectionResult(next(answers), 1.0, "oracle")
    else:
        method = BASELINES[args.method]

        def detector(x):
            return method(x, band, nfft)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            metrics, records = evaluate(detector, ds, unit, map_fn=pool.map)
    else:
        metrics, records = evaluate(detector, ds, unit)

    per_sample = None
    if args.per_sample is not None:
        per_sample = str(args.per_sample)
        with open(per_sample, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "truth", "pred", "freq_hz", "confidence", "error"])
            for r in records:
                w.writerow([r["index"], r["truth"], r["pred"], r["freq_hz"], r["confidence"], r["error"] or ""])
    return {
        "command": "eval",
        "config": {"data": str(args.data), "method": args.method, "band": [band.lo, band.hi], "nfft": nfft, "unit": unit},
        "metrics": metrics.to_json(),
        "per_sample_csv": per_sample,
        "wall_time_sec": round(time.time() - t0, 3),
        "seed": None,
    }


def cmd_spectrum(args):
    ts = load_csv(args.input, args.fs, args.has_header)
    nfft = args.nfft or _pow2_at_least(len(ts))
    spec = dft_power(ts, nfft)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["freq", "power"])
        for fr, p in zip(spec.freqs, spec.power):
            w.writerow([repr(float(fr)), repr(float(p))])
    return {"command": "spectrum", "out": str(args.out), "nfft": nfft, "bins": int(spec.power.size)}


def build_parser():
    p = _Parser(prog="pdet", description="Unsupervised periodicity detection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=_positive(int), default=1024)
    s.add_argument("--fs", type=_positive(float), default=25.0)
    s.add_argument("--win-sec", type=_positive(float), default=8.0)
    s.add_argument("--band", type=_band)
    s.add_argument("--f0-range", type=_band)
    s.add_argument("--width-frac", type=_positive(float), default=0.12)
    s.add_argument("--interferer-ratio", type=_nonneg, default=2.0)
    s.add_argument("--noise-sigma", type=_nonneg, default=0.5)
    s.add_argument("--model-len", type=_positive(int))
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train the U-Net without labels")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--lr", type=_positive(float), default=1e-3)
    t.add_argument("--batch", type=_positive(int), default=64)
    t.add_argument("--epochs", type=_positive(int), default=100)
    t.add_argument("--lambda", dest="lam", type=_nonneg, default=1.0)
    t.add_argument("--nu", type=_nonneg, default=1.0)
    t.add_argument("--bw", type=_nonneg, default=1.0)
    t.add_argument("--base-channels", type=_positive(int), default=32)
    t.add_argument("--seed", type=int)
    _add_band_opts(t, unit=False)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("detect", help="neural detection on a CSV signal")
    d.add_argument("--model", required=True)
    d.add_argument("--input", required=True)
    d.add_argument("--fs", type=_positive(float), required=True)
    d.add_argument("--has-header", action="store_true")
    _add_band_opts(d)
    d.set_defaults(func=cmd_detect)

    b = sub.add_parser("baseline", help="rule-based detection on a CSV signal")
    b.add_argument("--method", choices=sorted(BASELINES), default="fourier")
    b.add_argument("--input", required=True)
    b.add_argument("--fs", type=_positive(float), required=True)
    b.add_argument("--has-header", action="store_true")
    _add_band_opts(b)
    b.set_defaults(func=cmd_baseline)

    e = sub.add_parser("eval", help="score a detector on a labeled dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--method", choices=sorted(BASELINES) + ["neural", "oracle"], default="fourier")
    e.add_argument("--model")
    e.add_argument("--per-sample", help="write per-window results to this CSV")
    _add_band_opts(e)
    e.set_defaults(func=cmd_eval)

    sp = sub.add_parser("spectrum", help="write the power spectrum of a CSV signal")
    sp.add_argument("--input", required=True)
    sp.add_argument("--fs", type=_positive(float), required=True)
    sp.add_argument("--nfft", type=_positive(int))
    sp.add_argument("--out", required=True)
    sp.add_argument("--has-header", action="store_true")
    sp.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"pdet: error: {e}\n")
        return 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _emit(args.func(args))
    except UsageError as e:
        sys.stderr.write(f"pdet {args.command}: error: {e}\n")
        return 2
    except (PdetError, OSError, ValueError) as e:
        sys.stderr.write(f"pdet {args.command}: {type(e).__name__}: {e}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
