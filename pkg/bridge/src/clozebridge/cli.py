"""cloze-bridge entry point."""

from __future__ import annotations

import argparse
import sys

from .config import FAMILIES, BridgeConfig
from .scoring import BridgeScorer
from .server import serve_http, serve_stdio


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloze-bridge",
        description="Expose a pretrained model behind the cloze scoring wire protocol.",
    )
    parser.add_argument("--model", required=True, help="model directory or hub id")
    parser.add_argument("--family", required=True, choices=FAMILIES)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--mask-marker", default="[MASK]")
    parser.add_argument("--sentinel", default="<extra_id_0>", help="seq2seq answer-slot token")
    parser.add_argument("--length-normalize", action="store_true")
    parser.add_argument("--passages", default=None, help="JSONL passage lookup table")
    parser.add_argument("--passages-as-context", action="store_true")
    parser.add_argument("--max-length", type=int, default=64)
    parser.add_argument("--http", default=None, metavar="HOST:PORT", help="serve HTTP instead of stdio")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = BridgeConfig(
        model_path=args.model,
        family=args.family,
        device=args.device,
        mask_marker=args.mask_marker,
        sentinel=args.sentinel,
        length_normalize=args.length_normalize,
        passages_path=args.passages,
        passages_as_context=args.passages_as_context,
        max_length=args.max_length,
    )
    try:
        scorer = BridgeScorer(config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.http:
        host, _, port = args.http.rpartition(":")
        serve_http(scorer, host or "127.0.0.1", int(port))
    else:
        serve_stdio(scorer)
    return 0


if __name__ == "__main__":
    sys.exit(main())
