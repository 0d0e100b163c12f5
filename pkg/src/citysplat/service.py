"""Local HTTP render service.

One process serves one scene. Scene data is immutable; the only mutable state
is the active distance-interval configuration (swapped atomically) and the
stats of the last rendered frame. Identical requests therefore produce
identical PNG bytes no matter how many clients are connected.

Endpoints:
  GET  /scene/info   scene metadata (blocks, levels, sizes, intervals)
  GET  /blocks       world-space block boxes for client-side overlays
  POST /render       camera JSON in, image/png out, stats in X- headers
  POST /lod          update intervals / toggle detail levels
  GET  /stats/last   stats of the most recent frame
"""

import dataclasses
import math
import threading
import time
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .config import validate_intervals
from .core import CameraView
from .errors import ConfigError
from .images import encode_png
from .lod import LodScene, assemble_render_set
from .render import RenderSettings, rasterize_stats

MAX_DIM_DEFAULT = 1920


def _json_intervals(intervals) -> list:
    # JSON has no Infinity literal; an unbounded upper edge travels as null
    return [[lo, hi if math.isfinite(hi) else None] for lo, hi in intervals]


class _BadRequest(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


def _number(body: dict, field: str) -> float:
    try:
        v = float(body[field])
    except KeyError:
        raise _BadRequest(f"camera.{field}", "missing required field") from None
    except (TypeError, ValueError):
        raise _BadRequest(f"camera.{field}", "must be a number") from None
    if not math.isfinite(v):
        raise _BadRequest(f"camera.{field}", "must be finite")
    return v


def camera_from_json(body) -> CameraView:
    """Build a validated camera from the request payload, naming the broken
    field on failure."""
    if not isinstance(body, dict):
        raise _BadRequest("camera", "must be an object")
    width = _number(body, "width")
    height = _number(body, "height")
    if width != int(width) or height != int(height):
        raise _BadRequest("camera.width", "dimensions must be integers")
    try:
        rotation = np.asarray(body["rotation"], dtype=np.float64).reshape(3, 3)
    except KeyError:
        raise _BadRequest("camera.rotation", "missing required field") from None
    except (TypeError, ValueError):
        raise _BadRequest("camera.rotation", "must be a 3x3 matrix") from None
    try:
        translation = np.asarray(body["translation"], dtype=np.float64).reshape(3)
    except KeyError:
        raise _BadRequest("camera.translation", "missing required field") from None
    except (TypeError, ValueError):
        raise _BadRequest("camera.translation", "must be a 3-vector") from None
    try:
        return CameraView(
            width=int(width), height=int(height),
            fx=_number(body, "fx"), fy=_number(body, "fy"),
            cx=_number(body, "cx"), cy=_number(body, "cy"),
            rotation_w2c=rotation, translation_w2c=translation,
        )
    except ValueError as exc:
        raise _BadRequest("camera", str(exc)) from None


def _stats_payload(render_ms, cloud_count, raster, decisions, lod_enabled,
                   want_overlay) -> dict:
    blocks = []
    for d in decisions:
        if not d.visible:
            continue
        entry = {
            "id": d.block,
            "level": d.level,
            "distance": d.distance,
        }
        if want_overlay:
            entry["screen_box"] = list(d.screen_box) if d.screen_box else None
        blocks.append(entry)
    return {
        "render_ms": render_ms,
        "visible_gaussians": raster.visible_splats,
        "assembled_gaussians": cloud_count,
        "fps_estimate": 1000.0 / max(render_ms, 1e-6),
        "lod_enabled": lod_enabled,
        "blocks": blocks,
    }


class RenderService:
    """Request handling behind the HTTP surface; usable directly in tests."""

    def __init__(self, scene: LodScene, settings: Optional[RenderSettings] = None,
                 max_dim: int = MAX_DIM_DEFAULT):
        self.scene = scene
        self.settings = settings or RenderSettings()
        self.max_dim = int(max_dim)
        self._lock = threading.Lock()
        self._intervals = scene.distance_intervals
        self._enabled = True
        self._last_stats: Optional[dict] = None

    def snapshot(self):
        with self._lock:
            return self._intervals, self._enabled

    def scene_info(self) -> dict:
        scene = self.scene
        intervals, enabled = self.snapshot()
        return {
            "n_blocks": scene.n_blocks,
            "n_levels": scene.n_levels,
            "level_sizes": [scene.level_size(level) for level in range(scene.n_levels)],
            "full_size": scene.full.count,
            "sh_degrees": list(scene.sh_degrees),
            "intervals": _json_intervals(intervals),
            "lod_enabled": enabled,
            "n_mad": scene.n_mad,
            "bounds_min": scene.bounds_min.tolist(),
            "bounds_max": scene.bounds_max.tolist(),
            "max_dim": self.max_dim,
        }

    def block_geometry(self) -> dict:
        scene = self.scene
        blocks = []
        for j in range(scene.n_blocks):
            blocks.append({
                "id": j,
                "min": scene.bounds_min[j].tolist(),
                "max": scene.bounds_max[j].tolist(),
                "occupied": scene.occupied(j),
                "size": scene.levels[scene.finest][j].count,
            })
        return {"blocks": blocks}

    def update_lod(self, body: dict) -> dict:
        if not isinstance(body, dict):
            raise _BadRequest("lod", "must be an object")
        intervals = None
        if body.get("intervals") is not None:
            intervals = self._parse_intervals(body["intervals"])
        with self._lock:
            if intervals is not None:
                self._intervals = intervals
            if "enabled" in body and body["enabled"] is not None:
                self._enabled = bool(body["enabled"])
            return {"ok": True,
                    "intervals": _json_intervals(self._intervals),
                    "enabled": self._enabled}

    def _parse_intervals(self, raw):
        try:
            intervals = tuple(
                (float(lo), float(hi if hi is not None else math.inf))
                for lo, hi in raw
            )
        except (TypeError, ValueError):
            raise _BadRequest("lod.intervals", "must be a list of [lo, hi] pairs") from None
        try:
            validate_intervals(intervals)
        except ConfigError as exc:
            raise _BadRequest("lod.intervals", str(exc)) from None
        if len(intervals) != self.scene.n_levels:
            raise _BadRequest(
                "lod.intervals",
                f"need exactly {self.scene.n_levels} intervals for this scene")
        return intervals

    def render(self, body: dict):
        if not isinstance(body, dict):
            raise _BadRequest("request", "must be a JSON object")
        cam = camera_from_json(body.get("camera"))
        if cam.width > self.max_dim or cam.height > self.max_dim:
            raise _Oversized(self.max_dim)
        want_overlay = bool(body.get("want_overlay", False))

        intervals, enabled = self.snapshot()
        override = body.get("lod")
        if override is not None:
            if not isinstance(override, dict):
                raise _BadRequest("lod", "must be an object")
            if override.get("intervals") is not None:
                intervals = self._parse_intervals(override["intervals"])
            if "enabled" in override and override["enabled"] is not None:
                enabled = bool(override["enabled"])

        start = time.perf_counter()
        if enabled:
            scene = self.scene
            if intervals != scene.distance_intervals:
                scene = dataclasses.replace(scene, distance_intervals=intervals)
            assembled = assemble_render_set(scene, cam)
            cloud, decisions = assembled.cloud, assembled.decisions
        else:
            cloud, decisions = self.scene.full, ()
        image, raster = rasterize_stats(cloud, cam, self.settings)
        render_ms = (time.perf_counter() - start) * 1000.0

        stats = _stats_payload(render_ms, cloud.count, raster, decisions,
                               enabled, want_overlay)
        png = encode_png(image)
        with self._lock:
            self._last_stats = stats
        return png, stats

    def last_stats(self) -> Optional[dict]:
        with self._lock:
            return self._last_stats


class _Oversized(Exception):
    def __init__(self, max_dim: int):
        super().__init__(f"image dimensions exceed the configured maximum {max_dim}")
        self.max_dim = max_dim


def create_app(scene: LodScene, settings: Optional[RenderSettings] = None,
               max_dim: int = MAX_DIM_DEFAULT) -> FastAPI:
    service = RenderService(scene, settings, max_dim)
    app = FastAPI(title="citysplat render service")
    app.state.service = service

    @app.exception_handler(_BadRequest)
    async def _bad_request(request, exc: _BadRequest):
        return JSONResponse(status_code=400,
                            content={"field": exc.field, "error": str(exc)})

    @app.exception_handler(_Oversized)
    async def _oversized(request, exc: _Oversized):
        return JSONResponse(status_code=413, content={"error": str(exc)})

    @app.get("/scene/info")
    def scene_info():
        return service.scene_info()

    @app.get("/blocks")
    def blocks():
        return service.block_geometry()

    @app.post("/render")
    async def render(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise _BadRequest("request", "body must be JSON") from None
        png, stats = service.render(body)
        headers = {
            "X-Render-Ms": f"{stats['render_ms']:.3f}",
            "X-Visible-Gaussians": str(stats["visible_gaussians"]),
            "X-Assembled-Gaussians": str(stats["assembled_gaussians"]),
            "X-Fps-Estimate": f"{stats['fps_estimate']:.3f}",
        }
        return Response(content=png, media_type="image/png", headers=headers)

    @app.post("/lod")
    async def update_lod(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise _BadRequest("request", "body must be JSON") from None
        return service.update_lod(body)

    @app.get("/stats/last")
    def stats_last():
        stats = service.last_stats()
        if stats is None:
            return JSONResponse(status_code=404,
                                content={"error": "no frame rendered yet"})
        return stats

    return app
