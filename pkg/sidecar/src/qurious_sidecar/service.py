"""HTTP service implementing the /embed wire protocol.

POST /embed  {"texts": [str, ...]} -> 200 {"dim": int, "embeddings":
[[float, ...], ...], "truncated": [bool, ...]}; rows are unit-norm and in
request order. GET /health -> {"status": "ok", "dim": int} plus pooling
and model metadata. Errors: 400 malformed request, 413 batch larger than
max_batch, 500 encoder failure, all with {"error": str}.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .encoders import SidecarConfig, load_encoder


def create_app(config: SidecarConfig | None = None, encoder=None) -> FastAPI:
    config = config or SidecarConfig()
    encoder = encoder or load_encoder(config)
    app = FastAPI(title="qurious-sidecar", docs_url=None, redoc_url=None)
    app.state.encoder = encoder
    app.state.max_batch = config.max_batch

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "dim": encoder.dim,
            "pooling": encoder.pooling,
            "model": encoder.name,
        }

    @app.post("/embed")
    async def embed(request: Request):
        try:
            payload = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError):
            return JSONResponse({"error": "request body is not valid JSON"}, status_code=400)
        if not isinstance(payload, dict) or "texts" not in payload:
            return JSONResponse({"error": 'request needs a "texts" field'}, status_code=400)
        texts = payload["texts"]
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            return JSONResponse({"error": '"texts" must be a list of strings'}, status_code=400)
        if len(texts) > app.state.max_batch:
            return JSONResponse(
                {"error": f"batch of {len(texts)} exceeds max_batch {app.state.max_batch}"},
                status_code=413,
            )
        try:
            rows, truncated = encoder.encode(texts)
        except Exception as exc:  # surfaced, never silent
            return JSONResponse({"error": str(exc)}, status_code=500)
        return {
            "dim": encoder.dim,
            "embeddings": [[float(x) for x in row] for row in rows],
            "truncated": truncated,
        }

    return app
