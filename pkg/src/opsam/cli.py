"""Command-line interface.

Subcommands: `run` segments a query directory from one annotated
support image, `eval` scores predicted masks against ground truth, and
`synth` generates reproducible test scenes. Exit codes: 0 success, 1
configuration problem, 2 backend failure, 3 evaluation had unmatched
files.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backends import OracleSegmenter, RemoteEncoder, RemoteSegmenter, SyntheticEncoder, make_scene
from .config import RunConfig
from .exceptions import BackendError, ConfigError
from .imgio import load_image, load_mask, save_image_png, save_mask_png
from .metrics import eval_run, records_to_csv
from .pipeline import find_query_gt, load_queries, run_batch

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BACKEND = 2
EXIT_EVAL_MISMATCH = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opsam",
        description="Training-free one-shot segmentation prompting engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="segment a directory of query images")
    run.add_argument("--support-image", required=True, help="annotated example image")
    run.add_argument("--support-mask", required=True, help="its binary mask (nonzero = object)")
    run.add_argument("--queries", required=True, help="directory of query images (images/ + masks/ layout or flat)")
    run.add_argument("--encoder", default="synthetic", help="'synthetic' or a server URL")
    run.add_argument("--segmenter", default="oracle", help="'oracle' or a server URL")
    run.add_argument("--config", default=None, help="key=value config file (defaults when omitted)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=0, help="seed for the synthetic encoder")
    run.add_argument("--dump-priors", action="store_true", help="write per-scale prior PGMs")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score predicted masks against ground truth")
    ev.add_argument("--pred", required=True, help="directory of predicted masks")
    ev.add_argument("--gt", required=True, help="directory of ground-truth masks")
    ev.add_argument("--out", required=True, help="per-image CSV to write")
    ev.set_defaults(func=cmd_eval)

    synth = sub.add_parser("synth", help="generate synthetic scenes with ground truth")
    synth.add_argument("--scenes", type=int, required=True, help="number of scenes")
    synth.add_argument("--out", required=True, help="output directory (images/ + masks/)")
    synth.add_argument("--seed", type=int, default=0, help="base seed; scene i uses seed+i")
    synth.add_argument("--blobs", type=int, default=1, choices=(1, 2), help="regions per scene")
    synth.set_defaults(func=cmd_synth)
    return parser


def _is_url(value: str) -> bool:
    return value.startswith("http://") or value.startswith("https://")


def _pick_encoder(name: str, config: RunConfig, seed: int):
    if name == "synthetic":
        return SyntheticEncoder(
            dim=config.encoder_dim, noise_sigma=config.encoder_noise_sigma, seed=seed
        )
    if _is_url(name):
        return RemoteEncoder(name)
    raise ConfigError(f"--encoder must be 'synthetic' or an http(s) URL, got {name!r}")


def _pick_segmenter(name: str, queries_dir: str, queries):
    if name == "oracle":
        oracle = OracleSegmenter()
        for qid, image in queries:
            gt = find_query_gt(queries_dir, qid)
            if gt is None:
                raise ConfigError(
                    f"oracle segmenter needs masks/<stem>.png for every query; "
                    f"none found for {qid}"
                )
            oracle.register(image, gt)
        return oracle
    if _is_url(name):
        return RemoteSegmenter(name)
    raise ConfigError(f"--segmenter must be 'oracle' or an http(s) URL, got {name!r}")


def cmd_run(args: argparse.Namespace) -> int:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    support_image = load_image(args.support_image)
    support_mask = load_mask(args.support_mask)
    queries = load_queries(args.queries)
    encoder = _pick_encoder(args.encoder, config, args.seed)
    segmenter = _pick_segmenter(args.segmenter, args.queries, queries)
    batch = run_batch(
        support_image,
        support_mask,
        queries,
        encoder,
        segmenter,
        out_dir=args.out,
        config=config,
        dump_priors=args.dump_priors,
    )
    print(f"segmented {len(batch.results)} queries -> {batch.out_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    summary = eval_run(args.pred, args.gt)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(records_to_csv(summary.records))
    print(
        json.dumps(
            {
                "count": len(summary.records),
                "mean_iou_pct": f"{summary.mean_iou * 100.0:.2f}",
                "mean_dice_pct": f"{summary.mean_dice * 100.0:.2f}",
                "unmatched": list(summary.unmatched),
            },
            sort_keys=True,
        )
    )
    if summary.unmatched:
        for name in summary.unmatched:
            print(f"unmatched: {name}", file=sys.stderr)
        return EXIT_EVAL_MISMATCH
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    if args.scenes < 1:
        raise ConfigError(f"--scenes must be >= 1, got {args.scenes}")
    out = Path(args.out)
    for i in range(args.scenes):
        scene = make_scene(args.seed + i, blobs=args.blobs)
        name = f"scene_{i:04d}.png"
        save_image_png(out / "images" / name, scene.image)
        save_mask_png(out / "masks" / name, scene.gt_mask)
    print(f"wrote {args.scenes} scenes under {out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
