"""Training-free one-shot segmentation prompting.

Given one annotated support image, the engine builds a correlation
prior on each query, fuses priors from rescaled support variants, and
iteratively places point prompts for a promptable segmenter until the
prediction covers the prior. Model access goes through pluggable
encoder/segmenter backends (synthetic + oracle for tests, HTTP client
for real models).
"""
from .backends import (
    EncoderBackend,
    OracleSegmenter,
    RemoteEncoder,
    RemoteSegmenter,
    SegmenterBackend,
    SegmenterResult,
    SyntheticEncoder,
    SyntheticScene,
    make_scene,
)
from .config import RunConfig
from .exceptions import (
    BackendError,
    ConfigError,
    OpsamError,
    PayloadShapeError,
    ProtocolError,
    ProtocolMismatchError,
    TransportError,
)
from .fusion import FusionConfig, ReverseTransferReport, fuse_scale_priors
from .grids import FeatureMap, ImageRGB, MaskGrid, Prior
from .metrics import EvalRecord, EvalSummary, eval_run, iou_dice
from .pipeline import prepare_support, run_batch, run_query
from .priors import PriorConfig, generate_prior
from .prompting import EvolutionConfig, EvolutionTrace, PromptPoint, evolve_prompts
from .scaling import SupportBundle, build_support_bundle

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ImageRGB",
    "MaskGrid",
    "FeatureMap",
    "Prior",
    "PriorConfig",
    "generate_prior",
    "SupportBundle",
    "build_support_bundle",
    "FusionConfig",
    "ReverseTransferReport",
    "fuse_scale_priors",
    "EvolutionConfig",
    "EvolutionTrace",
    "PromptPoint",
    "evolve_prompts",
    "EncoderBackend",
    "SegmenterBackend",
    "SegmenterResult",
    "SyntheticEncoder",
    "SyntheticScene",
    "make_scene",
    "OracleSegmenter",
    "RemoteEncoder",
    "RemoteSegmenter",
    "RunConfig",
    "EvalRecord",
    "EvalSummary",
    "eval_run",
    "iou_dice",
    "prepare_support",
    "run_query",
    "run_batch",
    "OpsamError",
    "ConfigError",
    "BackendError",
    "TransportError",
    "ProtocolError",
    "ProtocolMismatchError",
    "PayloadShapeError",
]
