"""HTTP surface for interactive guided generation.

POST /api/generate runs the toy generator for a guidance request and
returns the rendered image (base64 PPM) together with oracle detections
and per-box consistency records, so a client can draw feedback without a
second call. Requests are validated by hand at the boundary so errors
carry a precise field path; responses for identical requests are cached
and replayed byte-for-byte.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles

from .evaluation import match_guidance
from .generator import (
    MASK_MODES,
    ConceptVocabulary,
    GenerationConfig,
    default_vocabulary,
    generate,
    oracle_detect,
)
from .geometry import BoundingBox
from .masks import GuidanceEntry, GuidanceSet

MAX_STEPS = 200
_CACHE_LIMIT = 128


class _BadRequest(Exception):
    """Validation failure carrying the offending field's path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def _require_number(payload: dict, field: str, default: float) -> float:
    value = payload.get(field, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _BadRequest(field, "must be a number")
    return float(value)


def _require_int(payload: dict, field: str, default: int) -> int:
    value = payload.get(field, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise _BadRequest(field, "must be an integer")
    return value


def _normalize_request(payload: object, vocab: ConceptVocabulary) -> dict:
    """Validate a generate request and fill defaults.

    Returns a canonical dict (also the cache key source). Raises
    _BadRequest with a field path like ``objects[0].bbox`` on the first
    problem found.
    """
    if not isinstance(payload, dict):
        raise _BadRequest("body", "request body must be a JSON object")
    tokens = payload.get("prompt_tokens")
    if not isinstance(tokens, list) or not tokens:
        raise _BadRequest("prompt_tokens", "must be a non-empty list of strings")
    for i, token in enumerate(tokens):
        if not isinstance(token, str) or not token:
            raise _BadRequest(f"prompt_tokens[{i}]", "must be a non-empty string")
        if token not in vocab.names:
            raise _BadRequest(
                f"prompt_tokens[{i}]",
                f"unknown concept {token!r}; see /api/concepts",
            )
    objects = payload.get("objects", [])
    if not isinstance(objects, list):
        raise _BadRequest("objects", "must be a list")
    normalized_objects = []
    for i, obj in enumerate(objects):
        if not isinstance(obj, dict):
            raise _BadRequest(f"objects[{i}]", "must be an object")
        concept = obj.get("concept")
        if not isinstance(concept, str) or concept not in tokens:
            raise _BadRequest(f"objects[{i}].concept", "must be one of the prompt tokens")
        bbox = obj.get("bbox")
        if (
            not isinstance(bbox, list)
            or len(bbox) != 4
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in bbox)
        ):
            raise _BadRequest(f"objects[{i}].bbox", "must be four numbers")
        try:
            BoundingBox(*bbox)
        except ValueError as exc:
            raise _BadRequest(f"objects[{i}].bbox", str(exc)) from exc
        normalized_objects.append({"concept": concept, "bbox": [float(v) for v in bbox]})
    w_prime = _require_number(payload, "w_prime", 0.2)
    if w_prime < 0:
        raise _BadRequest("w_prime", "must be non-negative")
    mask_mode = payload.get("mask_mode", "gaussian")
    if mask_mode not in MASK_MODES:
        raise _BadRequest("mask_mode", f"must be one of {', '.join(MASK_MODES)}")
    seed = _require_int(payload, "seed", 0)
    if seed < 0:
        raise _BadRequest("seed", "must be non-negative")
    steps = _require_int(payload, "steps", 20)
    if not 1 <= steps <= MAX_STEPS:
        raise _BadRequest("steps", f"must be between 1 and {MAX_STEPS}")
    return {
        "prompt_tokens": [str(t) for t in tokens],
        "objects": normalized_objects,
        "w_prime": w_prime,
        "mask_mode": mask_mode,
        "seed": seed,
        "steps": steps,
    }


def _run_generate(request: dict, vocab: ConceptVocabulary) -> bytes:
    tokens = request["prompt_tokens"]
    guidance = GuidanceSet(
        prompt=tuple(tokens),
        entries=tuple(
            GuidanceEntry(box=BoundingBox(*obj["bbox"]), concept=tokens.index(obj["concept"]))
            for obj in request["objects"]
        ),
    )
    config = GenerationConfig(
        steps=request["steps"],
        w_prime=request["w_prime"],
        mask_mode=request["mask_mode"],
        seed=request["seed"],
    )
    started = time.perf_counter()
    result = generate(guidance, vocab, config)
    elapsed_ms = int(round((time.perf_counter() - started) * 1000))
    detections = oracle_detect(result.image)
    records = match_guidance(detections, guidance)
    payload = {
        "image": base64.b64encode(result.image.to_ppm()).decode("ascii"),
        "detections": [
            {
                "class_name": d.class_name,
                "bbox": list(d.box.as_tuple()),
                "score": d.score,
            }
            for d in detections
        ],
        "consistency": [
            {
                "concept": r.concept,
                "bbox": list(r.entry.box.as_tuple()),
                "recorded_iou": r.recorded_iou,
                "success": r.success,
                "size_class": r.size_class.value,
                "distance_class": r.distance_class.value,
            }
            for r in records
        ],
        "timing": elapsed_ms,
    }
    return json.dumps(payload).encode("utf-8")


def _error(status: int, message: str, field: str | None = None) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"field": field, "message": message}})


def create_app(
    vocab: ConceptVocabulary | None = None, static_dir: str | Path | None = None
) -> FastAPI:
    """Build the service app around one immutable vocabulary.

    When ``static_dir`` is omitted, a built UI bundle next to the package
    checkout (frontend/dist) is mounted at the root if present.
    """
    vocab = vocab or default_vocabulary()
    app = FastAPI(title="boxguide", docs_url=None, redoc_url=None)
    # Replay buffer keyed by the canonical request: identical requests must
    # return identical bytes even though the timing field varies per run.
    cache: dict[str, bytes] = {}
    cache_lock = threading.Lock()

    @app.post("/api/generate")
    async def api_generate(request: Request) -> Response:
        try:
            payload = await request.json()
        except ValueError:
            return _error(400, "request body must be JSON", "body")
        try:
            normalized = _normalize_request(payload, vocab)
        except _BadRequest as exc:
            return _error(400, exc.message, exc.field)
        key = json.dumps(normalized, sort_keys=True)
        with cache_lock:
            cached = cache.get(key)
        if cached is None:
            try:
                body = _run_generate(normalized, vocab)
            except ValueError as exc:
                return _error(422, str(exc))
            with cache_lock:
                if len(cache) >= _CACHE_LIMIT:
                    cache.pop(next(iter(cache)))
                cached = cache.setdefault(key, body)
        return Response(content=cached, media_type="application/json")

    @app.get("/api/concepts")
    async def api_concepts() -> JSONResponse:
        return JSONResponse(
            {
                "concepts": [
                    {"name": token.name, "color": list(token.color)}
                    for token in vocab.tokens
                ]
            }
        )

    @app.get("/healthz")
    async def healthz() -> PlainTextResponse:
        return PlainTextResponse("ok")

    if static_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = bundled if bundled.is_dir() else None
    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
