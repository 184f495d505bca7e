"""Lesion-aware encoder-decoder segmentation and screening for diabetic retinopathy."""

from lanet.config import LESIONS, SCREEN_CLASSES, ExperimentConfig, ModelVariant

__version__ = "0.1.0"
