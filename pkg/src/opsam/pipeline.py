"""End-to-end orchestration: support preparation, per-query runs, batch
execution, and result persistence.

A run encodes the three support variants once, then for each query
builds one prior per variant, fuses them by reverse-transfer score, and
drives the prompt-evolution loop against the segmenter. Queries execute
on a worker pool; all files are written by the main thread in sorted
query order so reruns with the same seed produce byte-identical masks,
CSVs, and traces. Wall-clock timings are kept out of those files (they
land in timings.txt, the one output that is allowed to differ between
reruns).
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .backends.base import EncoderBackend, SegmenterBackend
from .config import RunConfig
from .exceptions import BackendError, ConfigError
from .fusion import ReverseTransferReport, fuse_scale_priors
from .grids import FeatureMap, ImageRGB, MaskGrid, Prior
from .imgio import load_image, load_mask, save_mask_png, save_prior_pgm
from .priors import generate_prior, self_correlation_from_attention
from .prompting import EvolutionTrace, evolve_prompts
from .scaling import SIZE_TAGS, build_support_bundle, SupportBundle

__all__ = [
    "PreparedSupport",
    "QueryResult",
    "BatchResult",
    "prepare_support",
    "run_query",
    "run_batch",
    "load_queries",
    "find_query_gt",
]

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class PreparedSupport:
    """Support-side state reused across every query: the scale variants,
    their encoded features (one embedding kind), and their pooled masks."""

    bundle: SupportBundle
    features: Mapping[str, FeatureMap]
    pooled: Mapping[str, Prior]


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    mask: MaskGrid
    trace: EvolutionTrace
    reports: tuple[ReverseTransferReport, ...]
    priors: Mapping[str, Prior]  # per size tag plus "fused"
    wall_ms: float


@dataclass(frozen=True)
class BatchResult:
    results: tuple[QueryResult, ...]
    out_dir: Path


def prepare_support(
    image: ImageRGB,
    mask: MaskGrid,
    encoder: EncoderBackend,
    config: RunConfig = RunConfig(),
) -> PreparedSupport:
    if image.data.shape[:2] != mask.data.shape:
        raise ConfigError("support image and mask shapes differ")
    if mask.area == 0:
        raise ConfigError("support mask is empty; nothing to transfer")
    bundle = build_support_bundle(image, mask, config.scale_xl, config.scale_xs)
    kind = config.embedding_kind
    features: dict[str, FeatureMap] = {}
    pooled: dict[str, Prior] = {}
    for tag in SIZE_TAGS:
        variant_img, variant_mask = bundle.pair(tag)
        features[tag] = encoder.encode(variant_img, kinds=(kind,))[kind]
        pooled[tag] = encoder.pool_mask(variant_mask)
    return PreparedSupport(bundle=bundle, features=features, pooled=pooled)


def run_query(
    support: PreparedSupport,
    query: ImageRGB,
    encoder: EncoderBackend,
    segmenter: SegmenterBackend,
    config: RunConfig = RunConfig(),
    query_id: str = "query",
) -> QueryResult:
    """Prior generation, fusion, and prompt evolution for one image."""
    started = time.perf_counter()
    prior_cfg = config.prior_config()
    try:
        embeddings = encoder.encode(query, kinds=(config.embedding_kind,))
        fq = embeddings[config.embedding_kind]
        s_self = self_correlation_from_attention(embeddings, prior_cfg)
        priors = {
            tag: generate_prior(fq, support.features[tag], support.pooled[tag], s_self, prior_cfg)
            for tag in SIZE_TAGS
        }
        fused, reports = fuse_scale_priors(
            priors, fq, support.features["ori"], support.pooled["ori"], config.fusion_config()
        )
        trace = evolve_prompts(query, fused, segmenter, config.evolution_config())
    except BackendError as exc:
        raise type(exc)(f"query {query_id}: {exc}") from exc
    priors["fused"] = fused
    return QueryResult(
        query_id=query_id,
        mask=trace.final_mask,
        trace=trace,
        reports=reports,
        priors=priors,
        wall_ms=(time.perf_counter() - started) * 1000.0,
    )


def run_batch(
    support_image: ImageRGB,
    support_mask: MaskGrid,
    queries: Sequence[tuple[str, ImageRGB]],
    encoder: EncoderBackend,
    segmenter: SegmenterBackend,
    out_dir: str | Path,
    config: RunConfig = RunConfig(),
    dump_priors: bool = False,
) -> BatchResult:
    """Run every query and persist results under out_dir.

    Layout: masks/<query_id> (PNG), traces/<stem>.jsonl, run.csv
    (query_id, rounds, prompts, retained_rounds), fusion.csv (per-scale
    score and weight), summary.json, timings.txt, and priors/*.pgm when
    dump_priors is set.
    """
    if not queries:
        raise ConfigError("no query images to process")
    ids = [qid for qid, _ in queries]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate query ids in batch")
    support = prepare_support(support_image, support_mask, encoder, config)
    ordered = sorted(queries, key=lambda pair: pair[0])

    def one(pair: tuple[str, ImageRGB]) -> QueryResult:
        qid, image = pair
        return run_query(support, image, encoder, segmenter, config, query_id=qid)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = tuple(pool.map(one, ordered))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_outputs(out_dir, results, config, encoder, dump_priors)
    return BatchResult(results=results, out_dir=out_dir)


def _write_outputs(
    out_dir: Path,
    results: tuple[QueryResult, ...],
    config: RunConfig,
    encoder: EncoderBackend,
    dump_priors: bool,
) -> None:
    run_rows = ["query_id,rounds,prompts,retained_rounds"]
    fusion_rows = ["query_id,size_tag,c_iou,weight"]
    timing_rows = []
    for r in results:
        stem = Path(r.query_id).stem
        save_mask_png(out_dir / "masks" / r.query_id, r.mask)
        trace_path = out_dir / "traces" / f"{stem}.jsonl"
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        trace_path.write_text(r.trace.to_jsonl())
        retained = sum(1 for rec in r.trace.rounds if rec.retained)
        run_rows.append(
            f"{r.query_id},{len(r.trace.rounds)},{r.trace.n_prompts()},{retained}"
        )
        for rep in r.reports:
            fusion_rows.append(
                f"{r.query_id},{rep.size_tag},{rep.c_iou:.6f},{rep.weight:.6f}"
            )
        timing_rows.append(f"{r.query_id} {r.wall_ms:.1f} ms")
        if dump_priors:
            for tag, prior in sorted(r.priors.items()):
                save_prior_pgm(out_dir / "priors" / f"{stem}.{tag}.pgm", prior)
            for rep in r.reports:
                save_prior_pgm(out_dir / "priors" / f"{stem}.rev_{rep.size_tag}.pgm", rep.p_rev)

    (out_dir / "run.csv").write_text("\n".join(run_rows) + "\n")
    (out_dir / "fusion.csv").write_text("\n".join(fusion_rows) + "\n")
    (out_dir / "timings.txt").write_text("\n".join(timing_rows) + "\n")

    info = encoder.info()
    mean_rounds = sum(len(r.trace.rounds) for r in results) / len(results)
    summary = {
        "n_queries": len(results),
        "mean_rounds": round(mean_rounds, 4),
        "encoder": {
            "name": info.name,
            "patch": info.patch,
            "input_size": info.input_size,
            "dim": info.dim,
            "kinds": list(info.kinds),
            "meta": dict(info.meta),
        },
        "geometry": "letterbox top-left, nearest-neighbor",
        "config": {k: ("auto" if v is None else v) for k, v in _config_items(config)},
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _config_items(config: RunConfig):
    from dataclasses import fields

    return [(f.name, getattr(config, f.name)) for f in fields(config)]


def load_queries(queries_dir: str | Path) -> list[tuple[str, ImageRGB]]:
    """Query images from DIR/images/ if present, else DIR itself, sorted
    by filename."""
    root = Path(queries_dir)
    if not root.is_dir():
        raise ConfigError(f"queries directory not found: {root}")
    image_dir = root / "images" if (root / "images").is_dir() else root
    out = []
    for path in sorted(image_dir.iterdir()):
        if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES:
            out.append((path.name, load_image(path)))
    if not out:
        raise ConfigError(f"no query images found under {image_dir}")
    return out


def find_query_gt(queries_dir: str | Path, query_name: str) -> MaskGrid | None:
    """Ground-truth mask for a query, if the dataset ships one: a file
    of the same stem under DIR/masks/. Used only to prime the oracle
    segmenter; the engine itself never reads these."""
    mask_dir = Path(queries_dir) / "masks"
    if not mask_dir.is_dir():
        return None
    stem = Path(query_name).stem
    for suffix in (".png", ".jpg", ".jpeg", ".pgm"):
        candidate = mask_dir / f"{stem}{suffix}"
        if candidate.is_file():
            return load_mask(candidate)
    return None
