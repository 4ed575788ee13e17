"""Dual-conditional latent diffusion style transfer at desk scale.

Thin wrapper over the C++ core. Images cross the boundary either as HxWx3
uint8 arrays (file I/O, corpus, distances) or as 3xHxW float arrays in
[-1, 1] (model inputs and outputs); ``image_to_tensor`` / ``tensor_to_image``
convert between the two.
"""

from ._dualfusion import (
    ConfigError,
    InvalidArgument,
    IoError,
    Model,
    NumericError,
    alpha_bars,
    cfg2d,
    config_keys,
    default_config,
    image_to_tensor,
    normalize_config,
    read_ppm,
    sampling_timesteps,
    style_stat_distance,
    tensor_to_image,
    toy_corpus,
    train,
    write_ppm,
)

__all__ = [
    "ConfigError",
    "InvalidArgument",
    "IoError",
    "Model",
    "NumericError",
    "alpha_bars",
    "cfg2d",
    "config_keys",
    "default_config",
    "image_to_tensor",
    "normalize_config",
    "read_ppm",
    "sampling_timesteps",
    "style_stat_distance",
    "tensor_to_image",
    "toy_corpus",
    "train",
    "write_ppm",
]
