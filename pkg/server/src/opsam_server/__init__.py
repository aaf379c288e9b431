"""HTTP model server speaking the opsam wire protocol (version 1)."""

from .app import create_app
from .models import ServerConfig, StubEncoder, StubSegmenter, load_models
from .protocol import PROTOCOL_VERSION

__all__ = [
    "PROTOCOL_VERSION",
    "ServerConfig",
    "StubEncoder",
    "StubSegmenter",
    "create_app",
    "load_models",
]
