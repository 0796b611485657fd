"""Shared-manifold alignment of heterogeneous sensor data.

Trains one autoencoder per sensor so that co-registered samples from
different sensors land close together in a common latent space, then
classifies, fuses, or translates across sensors in that space.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DataError,
    DimensionError,
    MalnError,
    MiningError,
    NumericError,
    ParseError,
)
