"""Pluggable model backends: the encoder/segmenter interfaces plus the
synthetic encoder, the oracle segmenter, and the HTTP remote client."""
from .base import (
    EncoderBackend,
    EncoderInfo,
    SegmenterBackend,
    SegmenterResult,
    SegmenterSession,
)
from .oracle import OracleSegmenter
from .remote import Letterbox, RemoteEncoder, RemoteSegmenter, echo_roundtrip
from .synthetic import SyntheticEncoder, SyntheticScene, make_scene

__all__ = [
    "EncoderBackend",
    "EncoderInfo",
    "SegmenterBackend",
    "SegmenterResult",
    "SegmenterSession",
    "SyntheticEncoder",
    "SyntheticScene",
    "make_scene",
    "OracleSegmenter",
    "Letterbox",
    "RemoteEncoder",
    "RemoteSegmenter",
    "echo_roundtrip",
]
