from .layers import BatchNorm2D, Conv2D, ConvTranspose2D, LeakyReLU
from .loss import LossConfig, PixelPyramidExtractor, perceptual_color_loss
from .net import FillerNet
from .optim import AdamOptimizer, AdamState, adam_step
from .train import (
    identity_residual,
    images_to_nchw,
    nchw_to_images,
    stochastic_identity_init,
    train_filler,
    train_joint,
)

__all__ = [
    "AdamOptimizer",
    "AdamState",
    "BatchNorm2D",
    "Conv2D",
    "ConvTranspose2D",
    "FillerNet",
    "LeakyReLU",
    "LossConfig",
    "PixelPyramidExtractor",
    "adam_step",
    "identity_residual",
    "images_to_nchw",
    "nchw_to_images",
    "perceptual_color_loss",
    "stochastic_identity_init",
    "train_filler",
    "train_joint",
]
