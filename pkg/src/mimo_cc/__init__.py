"""Cache-aided MIMO delivery: plan construction, decodability verification,
and finite-SNR rate simulation."""

from __future__ import annotations

from .errors import MimoCcError
from .model import NetworkConfig, StreamId, SubpacketId, CodewordId, validate_config

__all__ = [
    "MimoCcError",
    "NetworkConfig",
    "StreamId",
    "SubpacketId",
    "CodewordId",
    "validate_config",
]

__version__ = "0.1.0"
