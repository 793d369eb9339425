"""Instance-segmentation adapter emitting ridgekit predictions JSON."""

from .adapter import ARCHITECTURES, AdapterConfig, AdapterError, infer_and_export, infer_image, load_model
from .interchange import Prediction, rle_encode, write_predictions

__version__ = "0.1.0"
