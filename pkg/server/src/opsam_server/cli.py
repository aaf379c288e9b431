"""Command line entry point: configure models and serve."""
from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import create_app
from .models import STUB_ID, ServerConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opsam-server",
        description="Serve encode/segment endpoints for the opsam client.",
    )
    parser.add_argument(
        "--encoder", default=STUB_ID,
        help=f"'{STUB_ID}' or a DINOv2 model id (e.g. facebook/dinov2-large)",
    )
    parser.add_argument(
        "--segmenter", default=STUB_ID,
        help=f"'{STUB_ID}' or a SAM2 model id (e.g. facebook/sam2-hiera-large)",
    )
    parser.add_argument("--device", default="cpu", help="torch device for real models")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9000)
    parser.add_argument(
        "--encoder-input", type=int, default=560,
        help="square side images are letterboxed to before encoding",
    )
    parser.add_argument(
        "--segmenter-input", type=int, default=1024,
        help="square side images are letterboxed to before segmenting",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ServerConfig(
            encoder_model=args.encoder,
            segmenter_model=args.segmenter,
            device=args.device,
            host=args.host,
            port=args.port,
            encoder_input=args.encoder_input,
            segmenter_input=args.segmenter_input,
        )
        app = create_app(config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
