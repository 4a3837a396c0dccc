"""Run the sidecar: qurious-sidecar [--model lexical] [--port 8900] ...

Environment overrides: MODEL_ID for --model, PORT for --port.
"""

from __future__ import annotations

import argparse
import os
import sys

from .encoders import SidecarConfig
from .service import create_app


def build_config(argv=None) -> SidecarConfig:
    parser = argparse.ArgumentParser(prog="qurious-sidecar", description=__doc__)
    parser.add_argument("--model", default=os.environ.get("MODEL_ID", "lexical"),
                        help='"lexical" or a transformers model id/path')
    parser.add_argument("--port", type=int, default=int(os.environ.get("PORT", "8900")))
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--max-batch", type=int, default=256)
    parser.add_argument("--pooling", choices=["mean", "cls"], default="mean")
    parser.add_argument("--dim", type=int, default=768, help="lexical backend dimension")
    parser.add_argument("--max-tokens", type=int, default=35)
    args = parser.parse_args(argv)
    config = SidecarConfig(
        model=args.model,
        port=args.port,
        max_batch=args.max_batch,
        pooling=args.pooling,
        dim=args.dim,
        max_tokens=args.max_tokens,
    )
    config.host = args.host  # transport detail, not part of the dataclass contract
    return config


def main(argv=None) -> int:
    import uvicorn

    config = build_config(argv)
    app = create_app(config)
    uvicorn.run(app, host=getattr(config, "host", "127.0.0.1"), port=config.port,
                log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
