"""Train the U-Net on unlabeled windows, then compare it with the Fourier baseline.

Kept small so it finishes in about a minute on a laptop; raise EPOCHS and
N_TRAIN for a fuller run (the CLI ``pdet train`` does the same thing).

Run: python demos/03_train_and_detect.py
"""

import logging
import tempfile
from pathlib import Path

import numpy as np

from pdet.datagen import SyntheticConfig, gen_dataset
from pdet.detectors import detect_fourier, detect_neural
from pdet.model import UNet1D, UNetConfig, load_checkpoint, save_checkpoint
from pdet.train_eval import TrainConfig, evaluate, train

EPOCHS = 10
N_TRAIN = 512

logging.basicConfig(level=logging.INFO, format="%(message)s")

# labels are generated but never shown to train()
train_ds = gen_dataset(SyntheticConfig(n_samples=N_TRAIN, seed=1))
test_ds = gen_dataset(SyntheticConfig(n_samples=256, seed=2))
clean_ds = gen_dataset(SyntheticConfig(n_samples=256, seed=3, interferer_amp_ratio=0.0))

model = UNet1D(UNetConfig(base_channels=8), seed=0)
model, history = train(model, train_ds.windows, TrainConfig(max_epochs=EPOCHS, seed=0), train_ds.fs, log_every=2)
best = min(history, key=lambda h: h.total)
print(f"best epoch {best.epoch}: se={best.se:.3f} ds={best.ds:.3f} bw={best.bw:.3f}")

# a checkpoint round trip gives back the same function
path = Path(tempfile.mkdtemp()) / "unet.pdm"
save_checkpoint(model, path, {"epochs": len(history)})
model = load_checkpoint(path)

band = train_ds.band
for name, ds in (("interferer", test_ds), ("clean target", clean_ds)):
    neural, _ = evaluate(lambda x: detect_neural(model, x, band), ds, "bpm")
    fourier, _ = evaluate(lambda x: detect_fourier(x, band), ds, "bpm")
    print(f"{name:>12}: neural MAE {neural.mae:5.1f} bpm, fourier MAE {fourier.mae:5.1f} bpm")

# how much of the output's power stays inside the band
out = model(test_ds.windows[:, None, :])[:, 0, :].astype(np.float64)
P = np.abs(np.fft.rfft(out, n=512, axis=1)) ** 2
f = np.fft.rfftfreq(512, 1 / train_ds.fs)
inside = (f >= band.lo) & (f <= band.hi)
print(f"median in-band power fraction of the output: {np.median(P[:, inside].sum(1) / P.sum(1)):.3f}")
