"""HTTP backend for the web demo, wrapping predictor sessions.

Endpoints:
  GET  /api/models   -> registered model/feature pairs
  POST /api/videos   -> register a video (multipart upload, frame_dir, or
                        feature_file reference) and get a reusable token
  POST /api/predict  -> {video_token, model_id, query} -> moments + saliency

Videos are cached server-side under tokens; each model encodes a token once
and reuses the encoding for later queries. Requests against one model are
serialized by a per-session lock.
"""

from __future__ import annotations

import shlex
import subprocess
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .data import clip_grid
from .errors import ConfigError, MomentKitError, SessionStateError, ValidationError
from .features import load_features
from .predictor import (DEFAULT_NMS_THRESHOLD, DEFAULT_TOP_K, EncodedVideo,
                        PredictorSession, new_predictor)

DEFAULT_MAX_UPLOAD_MB = 50


class ModelInfo(BaseModel):
    id: str
    feature_name: str


class VideoRegistration(BaseModel):
    video_token: str
    duration: float
    clip_len: float


class PredictRequest(BaseModel):
    video_token: str
    model_id: str
    query: str


class PredictResponse(BaseModel):
    moments: list[list[float]]
    saliency: list[list[float]]


class ErrorBody(BaseModel):
    error: str


@dataclass
class VideoEntry:
    token: str
    source_kind: str  # "frame_dir" or "feature_file"
    path: Path
    duration: float
    n_clips: int


@dataclass
class ServerConfig:
    models: list[dict]
    clip_len_s: float = 2.0
    upload_dir: Path = Path("uploads")
    max_upload_mb: int = DEFAULT_MAX_UPLOAD_MB
    decoder_cmd: Optional[str] = None
    nms_threshold: float = DEFAULT_NMS_THRESHOLD
    top_k: int = DEFAULT_TOP_K
    static_dir: Optional[Path] = None


def load_server_config(path) -> ServerConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict) or "models" not in raw:
        raise ConfigError(f"{path}: server config needs a 'models' list")
    known = {"models", "clip_len_s", "upload_dir", "max_upload_mb",
             "decoder_cmd", "nms_threshold", "top_k", "static_dir"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}' in server config")
    models = raw["models"]
    if not isinstance(models, list) or not models:
        raise ConfigError("'models' must be a non-empty list")
    for entry in models:
        for key in ("id", "checkpoint", "feature_name"):
            if key not in entry:
                raise ConfigError(f"model entry missing '{key}'")
    base = path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else (base / p).resolve()

    for entry in models:
        entry["checkpoint"] = str(resolve(entry["checkpoint"]))
    static_dir = raw.get("static_dir")
    return ServerConfig(
        models=models,
        clip_len_s=float(raw.get("clip_len_s", 2.0)),
        upload_dir=resolve(raw.get("upload_dir", "uploads")),
        max_upload_mb=int(raw.get("max_upload_mb", DEFAULT_MAX_UPLOAD_MB)),
        decoder_cmd=raw.get("decoder_cmd"),
        nms_threshold=float(raw.get("nms_threshold", DEFAULT_NMS_THRESHOLD)),
        top_k=int(raw.get("top_k", DEFAULT_TOP_K)),
        static_dir=resolve(static_dir) if static_dir else None,
    )


class SessionRegistry:
    """Predictor sessions keyed by model id, plus the shared video store."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.sessions: dict[str, PredictorSession] = {}
        self.feature_names: dict[str, str] = {}
        for entry in config.models:
            session = new_predictor(entry["checkpoint"],
                                    device=entry.get("device", "cpu"),
                                    feature_name=entry["feature_name"],
                                    nms_threshold=config.nms_threshold,
                                    top_k=config.top_k)
            self.sessions[entry["id"]] = session
            self.feature_names[entry["id"]] = entry["feature_name"]
        self.videos: dict[str, VideoEntry] = {}
        self.encodings: dict[tuple[str, str], EncodedVideo] = {}
        self._store_lock = threading.Lock()

    def register_video(self, source_kind: str, path: Path) -> VideoEntry:
        if source_kind == "frame_dir":
            if not path.is_dir():
                raise MomentKitError(f"frame directory not found: {path}")
            n_clips = sum(1 for p in path.iterdir() if p.is_dir())
            if n_clips == 0:
                raise MomentKitError(f"no clip subdirectories under {path}")
        elif source_kind == "feature_file":
            n_clips = load_features(path).shape[0]
        else:
            raise MomentKitError(f"unsupported video source '{source_kind}'")
        grid = clip_grid(n_clips * self.config.clip_len_s, self.config.clip_len_s)
        entry = VideoEntry(token=uuid.uuid4().hex, source_kind=source_kind,
                           path=path, duration=grid.duration_s, n_clips=n_clips)
        with self._store_lock:
            self.videos[entry.token] = entry
        return entry

    def predict(self, token: str, model_id: str, query: str):
        with self._store_lock:
            entry = self.videos.get(token)
        if entry is None:
            raise KeyError("unknown video_token")
        session = self.sessions.get(model_id)
        if session is None:
            raise KeyError(f"unknown model_id '{model_id}'")
        with session.lock:
            cached = self.encodings.get((model_id, token))
            if cached is None:
                cached = session.encode_video(entry.path)
                self.encodings[(model_id, token)] = cached
            else:
                session.attach_encoded(cached)
            return session.predict(query)


def _decode_upload(config: ServerConfig, upload_path: Path) -> Path:
    """Run the configured external decoder to turn an uploaded video file
    into a frame directory."""
    if not config.decoder_cmd:
        raise MomentKitError(
            "no video decoder configured; pass frame_dir or feature_file instead")
    out_dir = upload_path.with_suffix(".frames")
    out_dir.mkdir(parents=True, exist_ok=True)
    cmd = [part.format(input=str(upload_path), output=str(out_dir))
           for part in shlex.split(config.decoder_cmd)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise MomentKitError(f"decoder failed: {proc.stderr.strip()[:200]}")
    return out_dir


def create_app(registry: SessionRegistry) -> FastAPI:
    app = FastAPI(title="momentkit demo backend")
    config = registry.config

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        fields = ", ".join(
            ".".join(str(p) for p in err["loc"] if p != "body")
            for err in exc.errors())
        return JSONResponse(status_code=400,
                            content={"error": f"invalid request field(s): {fields}"})

    @app.exception_handler(MomentKitError)
    async def domain_handler(request: Request, exc: MomentKitError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/api/models", response_model=list[ModelInfo])
    def list_models():
        return [ModelInfo(id=mid, feature_name=registry.feature_names[mid])
                for mid in sorted(registry.sessions)]

    @app.post("/api/videos", response_model=VideoRegistration,
              responses={413: {"model": ErrorBody}, 400: {"model": ErrorBody}})
    async def register_video(file: UploadFile | None = File(None),
                             frame_dir: str | None = Form(None),
                             feature_file: str | None = Form(None)):
        if sum(x is not None for x in (file, frame_dir, feature_file)) != 1:
            return JSONResponse(status_code=400, content={
                "error": "provide exactly one of: file, frame_dir, feature_file"})
        if frame_dir is not None:
            entry = registry.register_video("frame_dir", Path(frame_dir))
        elif feature_file is not None:
            entry = registry.register_video("feature_file", Path(feature_file))
        else:
            config.upload_dir.mkdir(parents=True, exist_ok=True)
            suffix = Path(file.filename or "upload.bin").suffix or ".bin"
            dest = config.upload_dir / f"{uuid.uuid4().hex}{suffix}"
            limit = config.max_upload_mb * 1024 * 1024
            written = 0
            with open(dest, "wb") as out:
                while chunk := await file.read(1 << 20):
                    written += len(chunk)
                    if written > limit:
                        dest.unlink(missing_ok=True)
                        return JSONResponse(status_code=413, content={
                            "error": f"upload exceeds {config.max_upload_mb} MB"})
                    out.write(chunk)
            frames = _decode_upload(config, dest)
            entry = registry.register_video("frame_dir", frames)
        return VideoRegistration(video_token=entry.token,
                                 duration=entry.duration,
                                 clip_len=config.clip_len_s)

    @app.post("/api/predict", response_model=PredictResponse,
              responses={404: {"model": ErrorBody}, 400: {"model": ErrorBody}})
    def predict(req: PredictRequest):
        try:
            result = registry.predict(req.video_token, req.model_id, req.query)
        except KeyError as exc:
            return JSONResponse(status_code=404,
                                content={"error": str(exc).strip("'\"")})
        except (SessionStateError, ValidationError) as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        return PredictResponse(
            moments=[[m.start_s, m.end_s, score] for m, score in result.moments],
            saliency=[[start, score] for start, score in result.saliency],
        )

    if config.static_dir and config.static_dir.is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(config.static_dir), html=True),
                  name="static")
    return app


def build_app_from_config(path) -> FastAPI:
    return create_app(SessionRegistry(load_server_config(path)))
