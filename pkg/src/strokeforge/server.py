"""HTTP session API driving interactive multi-round sketching.

Sessions live in memory. Each session serializes its rounds (starting a
round while one runs returns 409); progress is streamed as NDJSON events.
Loss records are kept in a per-session backlog so late subscribers replay
the full history — previews are live-only and may be dropped for slow
consumers, loss records never are.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import queue
import threading
import uuid
from dataclasses import dataclass, field, replace

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from PIL import Image, UnidentifiedImageError

from strokeforge import placement
from strokeforge.edges import GrayImage, detect_edges, to_grayscale
from strokeforge.errors import ConfigError, DomainError
from strokeforge.geometry import Canvas, Sketch
from strokeforge.loss import LossConfig
from strokeforge.optimize import (OptimConfig, ProgressEvent, RoundReport,
                                  region_seed_strokes, round_report_from_state,
                                  prepare_target, run_round)
from strokeforge.regions import RegionMask, global_mask, mask_from_polygon
from strokeforge.svgio import export_svg

log = logging.getLogger(__name__)

_PREVIEW_QUEUE_SOFT_LIMIT = 64
_END_OF_ROUND = None


@dataclass
class SessionRecord:
    session_id: str
    gray: GrayImage
    canvas: Canvas
    n_strokes: int
    rng_seed: int
    loss_cfg: LossConfig
    optim: OptimConfig
    sampler: str
    init_radius: float
    canny_low: float
    canny_high: float
    regions: list[RegionMask] = field(default_factory=list)
    sketch: Sketch | None = None
    rounds: list[RoundReport] = field(default_factory=list)
    status: str = "idle"
    loss_backlog: list[dict] = field(default_factory=list)
    subscribers: list[queue.SimpleQueue] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    target: np.ndarray | None = None

    def config_dict(self) -> dict:
        return {
            "strokes": self.n_strokes,
            "seed": self.rng_seed,
            "backend": self.loss_cfg.backend,
            "canvas": [self.canvas.width, self.canvas.height],
            "canny_low": self.canny_low,
            "canny_high": self.canny_high,
            "init_radius": self.init_radius,
            "sampler": self.sampler,
            "freeze_previous": not self.optim.retrain_previous_rounds,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.config_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _decode_photo(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data)).convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise DomainError(f"photo does not decode as an image: {exc}") from exc
    return np.asarray(img, dtype=np.float64) / 255.0


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message})


def create_app() -> FastAPI:
    app = FastAPI(title="strokeforge", version="0.1.0")
    sessions: dict[str, SessionRecord] = {}
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> SessionRecord | None:
        with registry_lock:
            return sessions.get(session_id)

    @app.post("/sessions")
    async def create_session(
        request: Request,
        strokes: int = Query(128, ge=1),
        seed: int = Query(0),
        backend: str = Query("builtin"),
        canvas: int = Query(224, ge=8),
        canny_low: float = Query(20.0),
        canny_high: float = Query(200.0),
        init_radius: float = Query(0.05, gt=0),
        sampler: str = Query("fps"),
        freeze_previous: bool = Query(False),
        max_iters: int = Query(800, ge=1),
        eval_interval: int = Query(10, ge=1),
        service_url: str | None = Query(None),
    ):
        body = await request.body()
        try:
            photo = _decode_photo(body)
            gray = to_grayscale(photo)
            loss_cfg = LossConfig(backend=backend, service_url=service_url)
            optim = OptimConfig(max_iters_per_round=max_iters,
                                eval_interval=eval_interval,
                                retrain_previous_rounds=not freeze_previous)
        except (DomainError, ConfigError) as exc:
            return _error(422, str(exc))

        session = SessionRecord(
            session_id=uuid.uuid4().hex,
            gray=gray,
            canvas=Canvas(canvas, canvas),
            n_strokes=strokes,
            rng_seed=seed,
            loss_cfg=loss_cfg,
            optim=optim,
            sampler=sampler,
            init_radius=init_radius,
            canny_low=canny_low,
            canny_high=canny_high,
        )
        h, w = gray.shape
        session.regions.append(global_mask(h, w))
        session.sketch = Sketch(canvas=session.canvas)
        with registry_lock:
            sessions[session.session_id] = session
        return {"session_id": session.session_id,
                "photo_size": [w, h],
                "regions": [0]}

    @app.post("/sessions/{session_id}/regions")
    async def add_region(session_id: str, request: Request):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        h, w = session.gray.shape
        content_type = request.headers.get("content-type", "")
        try:
            if content_type.startswith("image/png"):
                mask_img = Image.open(io.BytesIO(await request.body()))
                bits = np.asarray(mask_img.convert("L"), dtype=np.uint8) > 127
                if bits.shape != (h, w):
                    raise DomainError(
                        f"mask is {bits.shape[1]}x{bits.shape[0]}, photo is {w}x{h}")
                with session.lock:
                    region_id = len(session.regions)
                    session.regions.append(RegionMask(bits, region_id))
            else:
                body = json.loads(await request.body())
                polygon = body.get("polygon")
                label = body.get("label", "")
                if not isinstance(polygon, list):
                    raise DomainError("body must carry a 'polygon' vertex list")
                with session.lock:
                    region_id = len(session.regions)
                    session.regions.append(
                        mask_from_polygon(polygon, w, h, region_id, label))
        except (DomainError, ValueError, OSError) as exc:
            return _error(422, f"invalid region: {exc}")
        return {"region_id": region_id}

    @app.post("/sessions/{session_id}/rounds")
    async def start_round(session_id: str, request: Request):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        try:
            body = json.loads(await request.body() or b"{}")
        except ValueError as exc:
            return _error(422, f"invalid JSON body: {exc}")
        region_id = body.get("region_id")
        overrides = body.get("overrides", {})

        with session.lock:
            if session.status == "running":
                return _error(409, "a round is already running for this session")
            region = next((r for r in session.regions if r.region_id == region_id), None)
            if region is None:
                return _error(422, f"unknown region_id {region_id}")
            round_id = session.sketch.rounds_completed
            session.status = "running"

        optim = session.optim
        if overrides:
            try:
                optim = replace(optim, **{
                    {"max_iters": "max_iters_per_round"}.get(k, k): v
                    for k, v in overrides.items()})
            except (TypeError, ConfigError) as exc:
                with session.lock:
                    session.status = "idle"
                return _error(422, f"bad overrides: {exc}")

        thread = threading.Thread(target=_run_session_round,
                                  args=(session, region, optim), daemon=True)
        thread.start()
        return JSONResponse(status_code=202, content={"round_id": round_id})

    @app.get("/sessions/{session_id}/progress")
    def progress(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown session")

        sub: queue.SimpleQueue = queue.SimpleQueue()
        with session.lock:
            live = session.status == "running"
            if live:
                session.subscribers.append(sub)
            backlog = [dict(ev) for ev in session.loss_backlog]
            status = session.status

        def gen():
            try:
                for ev in backlog:
                    yield json.dumps(ev) + "\n"
                if not live:
                    yield json.dumps({"type": "status", "status": status}) + "\n"
                    return
                while True:
                    ev = sub.get()
                    if ev is _END_OF_ROUND:
                        break
                    yield json.dumps(ev) + "\n"
            finally:
                with session.lock:
                    if sub in session.subscribers:
                        session.subscribers.remove(sub)

        return StreamingResponse(gen(), media_type="application/x-ndjson")

    @app.get("/sessions/{session_id}/sketch.svg")
    def sketch_svg(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        with session.lock:
            svg = export_svg(session.sketch, meta={
                "seed": session.rng_seed, "config_hash": session.config_hash()})
        return Response(content=svg, media_type="image/svg+xml")

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        with session.lock:
            return {
                "session_id": session.session_id,
                "status": session.status,
                "config": session.config_dict(),
                "config_hash": session.config_hash(),
                "strokes_total": len(session.sketch),
                "regions": [r.region_id for r in session.regions],
                "rounds": [r.as_dict() for r in session.rounds],
            }

    return app


def _broadcast(session: SessionRecord, event: dict | None) -> None:
    with session.lock:
        if event is not None and event.get("type") == "loss":
            session.loss_backlog.append(event)
        subs = list(session.subscribers)
    for sub in subs:
        if event is not None and event.get("type") == "preview" \
                and sub.qsize() > _PREVIEW_QUEUE_SOFT_LIMIT:
            continue  # slow consumer: previews are droppable, loss records are not
        sub.put(event)


def _run_session_round(session: SessionRecord, region: RegionMask,
                       optim: OptimConfig) -> None:
    try:
        edge_sets = {
            r.region_id: detect_edges(session.gray, r,
                                      low=session.canny_low, high=session.canny_high)
            for r in session.regions
        }
        plan = placement.allocate_strokes(
            [(r.region_id, len(edge_sets[r.region_id])) for r in session.regions],
            session.n_strokes)
        budget = plan.budget_for(region.region_id)
        round_id = session.sketch.rounds_completed
        new_strokes = region_seed_strokes(
            session.gray, region, budget, round_id=round_id,
            rng_seed=session.rng_seed, sampler=session.sampler,
            init_radius=session.init_radius,
            edge_points=edge_sets[region.region_id])

        if not new_strokes:
            with session.lock:
                session.rounds.append(RoundReport(
                    round_id=round_id, region_id=region.region_id, budget=budget,
                    iterations=0, initial_loss=float("nan"), final_loss=float("nan"),
                    converged=False, skipped=True))
                session.status = "idle"
            _broadcast(session, {"type": "status", "status": "idle",
                                 "note": "region skipped: no edge points"})
            _finish(session)
            return

        if session.target is None:
            session.target = prepare_target(session.gray, session.canvas)

        def sink(ev: ProgressEvent) -> None:
            _broadcast(session, {"type": "loss", "round": ev.round_id,
                                 "iteration": ev.iteration,
                                 "clean_loss": ev.clean_loss})
            if ev.preview_png is not None:
                _broadcast(session, {
                    "type": "preview", "round": ev.round_id,
                    "iteration": ev.iteration,
                    "png_b64": base64.b64encode(ev.preview_png).decode()})

        step_rng = np.random.default_rng((session.rng_seed, round_id, 0, 2))
        sketch, state = run_round(session.sketch, new_strokes, session.target,
                                  optim, session.loss_cfg, sink, step_rng=step_rng)
        rep = round_report_from_state(state, region.region_id, budget, optim)
        with session.lock:
            session.sketch = sketch
            session.rounds.append(rep)
            session.status = "converged" if rep.converged else "idle"
        _broadcast(session, {"type": "status", "status": session.status,
                             "round": rep.round_id, "iterations": rep.iterations,
                             "final_loss": rep.final_loss})
    except Exception as exc:  # noqa: BLE001 - a worker thread must not die silently
        log.exception("round failed for session %s", session.session_id)
        with session.lock:
            session.status = "failed"
        _broadcast(session, {"type": "status", "status": "failed", "error": str(exc)})
    finally:
        _finish(session)


def _finish(session: SessionRecord) -> None:
    with session.lock:
        subs = list(session.subscribers)
        session.subscribers.clear()
    for sub in subs:
        sub.put(_END_OF_ROUND)
