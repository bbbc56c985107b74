"""Serve a causal LM behind the completion wire protocol.

Usage::

    chaitea-adapter --model gpt2 --port 8400 --device cpu
"""
from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .server import AdapterConfig, InferenceEngine, build_app, load_model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaitea-adapter",
                                     description="Completion server for the evaluation harness")
    parser.add_argument("--model", required=True, help="model id or local path")
    parser.add_argument("--port", type=int, default=8400)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-context-tokens", type=int, default=2048)
    parser.add_argument("--max-batch", type=int, default=8,
                        help="samples decoded per forward batch")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = AdapterConfig(
        model_id=args.model,
        device=args.device,
        max_context_tokens=args.max_context_tokens,
        port=args.port,
        max_batch=args.max_batch,
    )
    try:
        model, tokenizer = load_model(config)
    except Exception as exc:  # surface load failures as a clean exit
        print(f"error: could not load model {config.model_id!r}: {exc}", file=sys.stderr)
        return 1
    engine = InferenceEngine(model, tokenizer, config)
    app = build_app(engine)

    import uvicorn

    uvicorn.run(app, host=args.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
