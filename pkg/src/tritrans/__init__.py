"""TriTransNet RGB-D salient object detection on a small numpy autodiff engine."""

from .config import ModelConfig, TrainConfig, preset
from .model import Prediction, TriTransNet

__all__ = ["ModelConfig", "Prediction", "TrainConfig", "TriTransNet", "preset"]
__version__ = "0.1.0"
