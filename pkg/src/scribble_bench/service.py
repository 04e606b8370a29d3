"""HTTP session service for live interactive refinement.

Serves the sample catalog, creates per-image refinement sessions, buffers
strokes between predictions, and returns run-length encoded masks (with
IoU/Dice whenever ground truth is known). Stroke logs are exportable and
replayable: feeding a log back through the same backend reproduces the
mask sequence bit for bit.

Sessions are serialized by a per-session lock (concurrent mutation gets a
409), never share state, and expire after a configurable idle TTL.
"""

from __future__ import annotations

import io
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field
from PIL import Image

from . import maskio
from .protocol import DatasetManifest, dice, iou, load_manifest
from .raster import Mask, Polyline, RasterError, ScribbleMap, channel_max, rasterize_stroke
from .segmenters import GeodesicParams, OracleParams, SegmenterSession, make_session
from .toynet import ToyNet


# ---- wire models ----


class RleMask(BaseModel):
    w: int
    h: int
    runs: list[int]


class SampleInfo(BaseModel):
    id: str
    width: int
    height: int
    classes: list[str]


class SessionCreate(BaseModel):
    sample_id: str
    backend: Literal["toynet", "geodesic", "oracle"] | None = None
    target_class: str | None = None


class SessionCreated(BaseModel):
    session_id: str


class StrokeRequest(BaseModel):
    channel: Literal["pos", "neg"]
    polyline: list[tuple[float, float]] = Field(min_length=1)
    width: int = Field(default=3, ge=1)


class PredictResponse(BaseModel):
    round: int
    mask: RleMask
    iou: float | None = None
    dice: float | None = None


class ReplayRequest(BaseModel):
    sample_id: str
    backend: Literal["toynet", "geodesic", "oracle"] | None = None
    target_class: str | None = None
    log: list[dict]


class ReplayResponse(BaseModel):
    masks: list[RleMask]


# ---- server state ----


@dataclass
class CatalogEntry:
    sample_id: str
    image: np.ndarray
    png_bytes: bytes
    targets: dict[str, Mask]


@dataclass
class SessionRecord:
    session_id: str
    sample_id: str
    backend: str
    target_class: str | None
    session: SegmenterSession
    lock: threading.Lock = field(default_factory=threading.Lock)
    strokes: list[StrokeRequest] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    created: float = 0.0
    last_active: float = 0.0


@dataclass
class ServiceConfig:
    backend: str = "geodesic"
    session_ttl: float = 3600.0
    geodesic: GeodesicParams = field(default_factory=GeodesicParams)
    oracle: OracleParams = field(default_factory=OracleParams)
    cors_origins: tuple[str, ...] = ("*",)


def _encode_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.astype(np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _load_catalog(manifest: DatasetManifest) -> dict[str, CatalogEntry]:
    catalog: dict[str, CatalogEntry] = {}
    for s in manifest.samples:
        image = maskio.load_image_png(s.image_path)
        targets = {t.class_name: maskio.load_mask_png(t.mask_path) for t in s.targets}
        catalog[s.sample_id] = CatalogEntry(
            sample_id=s.sample_id,
            image=image,
            png_bytes=_encode_png(image),
            targets=targets,
        )
    return catalog


def strokes_to_scribble(strokes: list[StrokeRequest], shape: tuple[int, int]) -> ScribbleMap:
    """Rasterize buffered strokes in order; later strokes win conflicts.
    Single-point strokes become dots of the brush width."""
    out = ScribbleMap.empty(*shape)
    for s in strokes:
        pts = np.asarray(s.polyline, dtype=np.float64)
        if pts.shape[0] == 1:
            pts = np.repeat(pts, 2, axis=0)
        try:
            bits = rasterize_stroke(shape, Polyline(points=pts), s.width)
        except RasterError as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        empty = np.zeros(shape, dtype=bool)
        layer = (
            ScribbleMap(positive=bits, negative=empty)
            if s.channel == "pos"
            else ScribbleMap(positive=empty, negative=bits)
        )
        out = channel_max(out, layer)
    return out


def create_app(
    manifest: DatasetManifest | str | Path,
    *,
    net: ToyNet | None = None,
    config: ServiceConfig | None = None,
    ui_dir: str | Path | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> FastAPI:
    cfg = config or ServiceConfig()
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    catalog = _load_catalog(manifest)

    app = FastAPI(title="scribble-bench annotation service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cfg.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, SessionRecord] = {}
    sessions_guard = threading.Lock()
    app.state.catalog = catalog
    app.state.sessions = sessions

    def purge_expired() -> None:
        now = clock()
        with sessions_guard:
            dead = [
                sid
                for sid, rec in sessions.items()
                if now - rec.last_active > cfg.session_ttl
            ]
            for sid in dead:
                del sessions[sid]

    def get_entry(sample_id: str) -> CatalogEntry:
        entry = catalog.get(sample_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id!r}")
        return entry

    def get_record(session_id: str) -> SessionRecord:
        purge_expired()
        rec = sessions.get(session_id)
        if rec is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return rec

    def build_session(entry: CatalogEntry, backend: str,
                      target_class: str | None) -> SegmenterSession:
        gt = None
        if target_class is not None:
            if target_class not in entry.targets:
                raise HTTPException(
                    status_code=404,
                    detail=f"sample {entry.sample_id!r} has no class {target_class!r}",
                )
            gt = entry.targets[target_class]
        if backend == "oracle" and gt is None:
            raise HTTPException(
                status_code=422,
                detail="oracle backend requires target_class (needs ground truth)",
            )
        if backend == "toynet" and net is None:
            raise HTTPException(
                status_code=422,
                detail="toynet backend unavailable: server started without parameters",
            )
        try:
            return make_session(
                backend, entry.image, gt=gt,
                geodesic=cfg.geodesic, oracle=cfg.oracle, net=net,
            )
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e)) from e

    # ---- catalog ----

    @app.get("/api/samples", response_model=list[SampleInfo])
    def list_samples():
        return [
            SampleInfo(
                id=e.sample_id,
                width=e.image.shape[1],
                height=e.image.shape[0],
                classes=sorted(e.targets),
            )
            for e in catalog.values()
        ]

    @app.get("/api/samples/{sample_id}/image")
    def sample_image(sample_id: str):
        return Response(content=get_entry(sample_id).png_bytes, media_type="image/png")

    # ---- sessions ----

    @app.post("/api/sessions", response_model=SessionCreated, status_code=201)
    def create_session(body: SessionCreate):
        purge_expired()
        entry = get_entry(body.sample_id)
        backend = body.backend or cfg.backend
        session = build_session(entry, backend, body.target_class)
        sid = uuid.uuid4().hex
        now = clock()
        with sessions_guard:
            sessions[sid] = SessionRecord(
                session_id=sid,
                sample_id=body.sample_id,
                backend=backend,
                target_class=body.target_class,
                session=session,
                created=now,
                last_active=now,
            )
        return SessionCreated(session_id=sid)

    def locked(rec: SessionRecord):
        if not rec.lock.acquire(blocking=False):
            raise HTTPException(
                status_code=409,
                detail="session is being mutated by a concurrent request",
            )
        return rec.lock

    @app.post("/api/sessions/{session_id}/strokes", status_code=204)
    def add_stroke(session_id: str, body: StrokeRequest):
        rec = get_record(session_id)
        lock = locked(rec)
        try:
            rec.strokes.append(body)
            rec.last_active = clock()
        finally:
            lock.release()
        return Response(status_code=204)

    @app.post("/api/sessions/{session_id}/predict", response_model=PredictResponse,
              response_model_exclude_none=True)
    def predict(session_id: str):
        rec = get_record(session_id)
        entry = catalog[rec.sample_id]
        lock = locked(rec)
        try:
            shape = entry.image.shape[:2]
            correction = strokes_to_scribble(rec.strokes, shape)
            round_index = rec.session.round
            mask = rec.session.predict(correction)
            gt = entry.targets.get(rec.target_class) if rec.target_class else None
            iou_v = iou(mask, gt) if gt is not None else None
            dice_v = dice(mask, gt) if gt is not None else None
            log_item = {
                "round": round_index,
                "strokes": [s.model_dump() for s in rec.strokes],
                "correction": maskio.scribble_to_rle(correction),
                "mask": maskio.mask_to_rle(mask),
            }
            if iou_v is not None:
                log_item["iou"] = iou_v
                log_item["dice"] = dice_v
            rec.log.append(log_item)
            rec.strokes = []
            rec.last_active = clock()
            return PredictResponse(
                round=round_index,
                mask=RleMask(**maskio.mask_to_rle(mask)),
                iou=iou_v,
                dice=dice_v,
            )
        finally:
            lock.release()

    @app.post("/api/sessions/{session_id}/undo", status_code=204)
    def undo(session_id: str):
        rec = get_record(session_id)
        lock = locked(rec)
        try:
            rec.strokes = []
            rec.last_active = clock()
        finally:
            lock.release()
        return Response(status_code=204)

    @app.post("/api/sessions/{session_id}/reset", status_code=204)
    def reset(session_id: str):
        rec = get_record(session_id)
        entry = catalog[rec.sample_id]
        lock = locked(rec)
        try:
            rec.session = build_session(entry, rec.backend, rec.target_class)
            rec.strokes = []
            rec.log = []
            rec.last_active = clock()
        finally:
            lock.release()
        return Response(status_code=204)

    @app.delete("/api/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        get_record(session_id)
        with sessions_guard:
            sessions.pop(session_id, None)
        return Response(status_code=204)

    @app.get("/api/sessions/{session_id}/log")
    def session_log(session_id: str):
        rec = get_record(session_id)
        return {
            "sample_id": rec.sample_id,
            "backend": rec.backend,
            "target_class": rec.target_class,
            "round": rec.session.round,
            "log": rec.log,
        }

    # ---- replay ----

    @app.post("/api/replay", response_model=ReplayResponse)
    def replay(body: ReplayRequest):
        entry = get_entry(body.sample_id)
        backend = body.backend or cfg.backend
        session = build_session(entry, backend, body.target_class)
        shape = entry.image.shape[:2]
        masks = []
        for item in body.log:
            strokes = [StrokeRequest(**s) for s in item.get("strokes", [])]
            correction = strokes_to_scribble(strokes, shape)
            masks.append(session.predict(correction))
        return ReplayResponse(masks=[RleMask(**maskio.mask_to_rle(m)) for m in masks])

    @app.get("/api/spec")
    def api_spec():
        return app.openapi()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def replay_log(app_entry_image: np.ndarray, log: list[dict], backend: str, *,
               gt: Mask | None = None, net: ToyNet | None = None,
               geodesic: GeodesicParams | None = None,
               oracle: OracleParams | None = None) -> list[Mask]:
    """Library-side replay of a stroke log (mirrors POST /api/replay)."""
    session = make_session(backend, app_entry_image, gt=gt, net=net,
                           geodesic=geodesic, oracle=oracle)
    shape = app_entry_image.shape[:2]
    masks = []
    for item in log:
        strokes = [StrokeRequest(**s) for s in item.get("strokes", [])]
        masks.append(session.predict(strokes_to_scribble(strokes, shape)))
    return masks
