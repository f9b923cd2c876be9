"""VGG-19 activation dumper with fully-convolutional fc layers."""

from .extract import dump_activations, extract_batch
from .fmap import write_fmap
from .model import LAYERS, FullyConvVGG, load_model, transform_network
from .preprocess import ResizePolicy, resize_image

__version__ = "0.1.0"

__all__ = [
    "FullyConvVGG",
    "LAYERS",
    "ResizePolicy",
    "dump_activations",
    "extract_batch",
    "load_model",
    "resize_image",
    "transform_network",
    "write_fmap",
]
