"""Correlation-based location priors.

The support mask is transferred to the query image through two matrix
products: a query/support cross-correlation that matches patches across
images, and a Sinkhorn-normalized query self-correlation that diffuses
the transferred evidence across similar query patches. The raw prior is

    prior = self_corr^rho @ cross_corr @ mask_vec

followed by min-max normalization onto [0, 1]. The self-correlation is
built from one of the encoder's attention embeddings (value by default)
rather than the output features; the embedding choice is a config knob.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .grids import FeatureMap, Prior, matmul, minmax_normalize

__all__ = [
    "CorrelationMatrix",
    "PriorConfig",
    "EMBEDDING_KINDS",
    "cross_correlation",
    "sinkhorn_normalize",
    "self_correlation_from_attention",
    "generate_prior",
]

EMBEDDING_KINDS = ("value", "query", "key", "feats")


@dataclass(frozen=True)
class CorrelationMatrix:
    """Patch-to-patch similarity scores (rows index the first image)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        a = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if a.ndim != 2 or min(a.shape) < 1:
            raise ValueError(f"correlation matrix must be 2-D, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("correlation matrix contains non-finite values")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def is_square(self) -> bool:
        return self.data.shape[0] == self.data.shape[1]


@dataclass(frozen=True)
class PriorConfig:
    """Knobs for prior generation.

    rho            how many times the self-correlation re-diffuses the
                   transferred mask (0 disables self-refinement)
    sinkhorn_iters alternating row/column normalization sweeps
    embedding_kind which encoder embedding feeds both correlations
    """

    rho: int = 2
    sinkhorn_iters: int = 50
    embedding_kind: str = "value"

    def __post_init__(self) -> None:
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if self.sinkhorn_iters < 1:
            raise ValueError(f"sinkhorn_iters must be >= 1, got {self.sinkhorn_iters}")
        if self.embedding_kind not in EMBEDDING_KINDS:
            raise ValueError(
                f"unknown embedding kind {self.embedding_kind!r}; "
                f"expected one of {EMBEDDING_KINDS}"
            )


def cross_correlation(fq: FeatureMap, fs: FeatureMap) -> CorrelationMatrix:
    """Scaled dot products between all patch pairs, shape (fq.hw, fs.hw).

    Entry (i, j) is <fq_i, fs_j> / sqrt(D); the scaling keeps magnitudes
    comparable across embedding widths. Swapping the arguments transposes
    the result exactly.
    """
    if fq.dim != fs.dim:
        raise ValueError(f"feature dims differ: {fq.dim} vs {fs.dim}")
    return CorrelationMatrix(matmul(fq.data, fs.data.T) / np.sqrt(float(fq.dim)))


def sinkhorn_normalize(
    scores: CorrelationMatrix | np.ndarray, iters: int = 50
) -> CorrelationMatrix:
    """Drive a square score matrix toward doubly stochastic, then symmetrize.

    Negative entries are clamped to zero first (the scaling needs a
    nonnegative matrix). Each sweep divides rows by their sums, then
    columns by theirs; after the final sweep the matrix is symmetrized as
    (M + M^T) / 2 so downstream diffusion treats patch pairs the same in
    both directions. A row or column with no positive entry after
    clamping cannot be normalized and raises with its index.
    """
    a = scores.data if isinstance(scores, CorrelationMatrix) else np.asarray(scores)
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"sinkhorn expects a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("sinkhorn input must be finite")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    a = np.maximum(a, 0.0)
    row_dead = np.nonzero(a.sum(axis=1) == 0.0)[0]
    if row_dead.size:
        raise ValueError(
            f"row {int(row_dead[0])} has no positive entry after clamping"
        )
    col_dead = np.nonzero(a.sum(axis=0) == 0.0)[0]
    if col_dead.size:
        raise ValueError(
            f"column {int(col_dead[0])} has no positive entry after clamping"
        )
    for _ in range(iters):
        a = a / a.sum(axis=1, keepdims=True)
        a = a / a.sum(axis=0, keepdims=True)
    return CorrelationMatrix((a + a.T) / 2.0)


def self_correlation_from_attention(
    embeddings: Mapping[str, FeatureMap],
    config: PriorConfig = PriorConfig(),
) -> CorrelationMatrix:
    """Normalized query self-correlation from a chosen attention embedding.

    `embeddings` maps kind names ("value", "query", "key", "feats") to
    the encoder's per-patch embeddings for one image. The configured kind
    is correlated against itself, clamped at zero, Sinkhorn-normalized,
    and symmetrized.
    """
    kind = config.embedding_kind
    emb = embeddings.get(kind)
    if emb is None:
        have = sorted(k for k, v in embeddings.items() if v is not None)
        raise ValueError(f"encoder did not supply {kind!r} embeddings (have {have})")
    return sinkhorn_normalize(cross_correlation(emb, emb), iters=config.sinkhorn_iters)


def generate_prior(
    fq: FeatureMap,
    fs: FeatureMap,
    ms_r: Prior,
    s_self: CorrelationMatrix,
    config: PriorConfig = PriorConfig(),
) -> Prior:
    """Transfer the pooled support mask onto the query patch grid.

    The (possibly fractional) support mask weights the cross-correlation
    columns, then the normalized self-correlation re-diffuses the result
    rho times. Output is min-max normalized over the query grid.
    """
    if ms_r.h != fs.h or ms_r.w != fs.w:
        raise ValueError(
            f"support mask grid ({ms_r.h}, {ms_r.w}) does not match "
            f"support feature grid ({fs.h}, {fs.w})"
        )
    if not s_self.is_square or s_self.n != fq.hw:
        raise ValueError(
            f"self-correlation shape {s_self.data.shape} does not match "
            f"query patch count {fq.hw}"
        )
    s_corr = cross_correlation(fq, fs)
    vec = matmul(s_corr.data, ms_r.flat()[:, None])
    for _ in range(config.rho):
        vec = matmul(s_self.data, vec)
    return minmax_normalize(vec.reshape(fq.h, fq.w))
