"""Unsupervised periodicity detection with a spectrally regularised 1D U-Net."""

from .datagen import LabeledDataset, SyntheticConfig, gen_dataset, gen_sample, load_csv, load_dataset, save_dataset
from .detectors import DetectionResult, detect_acf, detect_fourier, detect_hybrid, detect_neural
from .errors import PdetError
from .loss import LossBreakdown, LossWeights, periodicity_loss, periodicity_loss_grad
from .model import UNet1D, UNetConfig, load_checkpoint, save_checkpoint
from .signal_core import FrequencyBand, TimeSeries
from .train_eval import Metrics, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "DetectionResult",
    "FrequencyBand",
    "LabeledDataset",
    "LossBreakdown",
    "LossWeights",
    "Metrics",
    "PdetError",
    "SyntheticConfig",
    "TimeSeries",
    "TrainConfig",
    "UNet1D",
    "UNetConfig",
    "detect_acf",
    "detect_fourier",
    "detect_hybrid",
    "detect_neural",
    "evaluate",
    "gen_dataset",
    "gen_sample",
    "load_checkpoint",
    "load_csv",
    "load_dataset",
    "periodicity_loss",
    "periodicity_loss_grad",
    "save_checkpoint",
    "save_dataset",
    "train",
]
