"""HTTP view service for trained radiance fields.

Pull-based rendering: the client posts a pose and receives a PNG, so
the protocol has no streaming state and every response is reproducible
from its request alone.  Three endpoints: GET /api/meta describes the
scene, POST /api/render renders a view, GET /api/cloud streams the
fused point cloud when one is configured.  A static frontend directory
can be mounted under /.

The client owns the progressive-refinement policy: a request carries a
quality rung (resolution divisor 1, 2, or 4) and the server renders at
exactly the divided resolution, nothing adaptive.

Renders run on a fixed pool of worker threads fed by a FIFO queue, so
at most `workers` renders are in flight and a burst of requests cannot
starve the earliest one.  The field is shared read-only; no request
mutates server state.
"""

from __future__ import annotations

import hashlib
import math
import queue
import threading
import time
from concurrent.futures import Future
from io import BytesIO
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .errors import ConfigError
from .geometry import EquirectCamera, Pose

MIN_DIM = 16
MAX_DIM = 2048
MIN_SAMPLES = 4
MAX_SAMPLES = 256
RUNGS = (1, 2, 4)
_RAY_BATCH = 8192


class RequestError(Exception):
    """Invalid render request; carries the offending field name."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class RenderPool:
    """FIFO render queue drained by a fixed set of worker threads."""

    def __init__(self, workers: int):
        if workers < 1:
            raise ConfigError(f"workers {workers} must be >= 1")
        self.workers = workers
        self._queue: queue.SimpleQueue = queue.SimpleQueue()
        self._threads = [
            threading.Thread(target=self._drain, daemon=True, name=f"render-{i}")
            for i in range(workers)
        ]
        for t in self._threads:
            t.start()

    def _drain(self):
        while True:
            item = self._queue.get()
            if item is None:
                return
            fn, fut = item
            if not fut.set_running_or_notify_cancel():
                continue
            try:
                fut.set_result(fn())
            except BaseException as e:
                fut.set_exception(e)

    def submit(self, fn) -> Future:
        fut: Future = Future()
        self._queue.put((fn, fut))
        return fut

    def close(self):
        for _ in self._threads:
            self._queue.put(None)
        for t in self._threads:
            t.join(timeout=5.0)


def _require_number(body, field, lo, hi, default=None):
    value = body.get(field, default)
    if value is None:
        raise RequestError(field, "is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RequestError(field, f"must be a number, got {value!r}")
    if not (lo <= value <= hi):
        raise RequestError(field, f"{value} outside [{lo}, {hi}]")
    return value


def _require_int(body, field, lo, hi, default=None):
    value = _require_number(body, field, lo, hi, default)
    if int(value) != value:
        raise RequestError(field, f"must be an integer, got {value!r}")
    return int(value)


def _parse_pose(body) -> Pose:
    pose = body.get("pose")
    if not isinstance(pose, dict) or set(pose) != {"quat", "t"}:
        raise RequestError("pose", 'must be {"quat": [w, x, y, z], "t": [x, y, z]}')
    quat = np.asarray(pose["quat"], dtype=np.float64)
    t = np.asarray(pose["t"], dtype=np.float64)
    if quat.shape != (4,) or not np.all(np.isfinite(quat)):
        raise RequestError("pose.quat", "must be four finite numbers")
    if t.shape != (3,) or not np.all(np.isfinite(t)):
        raise RequestError("pose.t", "must be three finite numbers")
    norm = float(np.linalg.norm(quat))
    if norm < 1e-9:
        raise RequestError("pose.quat", "has zero norm")
    return Pose(q=quat / norm, t=t)


class RenderRequest:
    """Validated render request: pose, output geometry, sampling."""

    ALLOWED = {"pose", "width", "height", "samples", "rung", "fov"}

    def __init__(self, body):
        if not isinstance(body, dict):
            raise RequestError("body", "must be a JSON object")
        unknown = set(body) - self.ALLOWED
        if unknown:
            raise RequestError(sorted(unknown)[0], "unknown field")
        self.pose = _parse_pose(body)
        self.width = _require_int(body, "width", MIN_DIM, MAX_DIM)
        self.height = _require_int(body, "height", MIN_DIM, MAX_DIM)
        self.samples = _require_int(body, "samples", MIN_SAMPLES, MAX_SAMPLES, default=64)
        self.rung = _require_int(body, "rung", 1, 4, default=1)
        if self.rung not in RUNGS:
            raise RequestError("rung", f"must be one of {RUNGS}")
        if self.width % self.rung or self.height % self.rung:
            raise RequestError("rung", f"{self.rung} must divide width and height")
        self.out_width = self.width // self.rung
        self.out_height = self.height // self.rung
        if self.width == 2 * self.height:
            self.panoramic = True
            if "fov" in body:
                raise RequestError("fov", "only valid in perspective mode")
            if self.out_width < 8:
                raise RequestError("rung", f"width/rung = {self.out_width} is below 8")
            self.fov = None
        elif self.width == self.height:
            self.panoramic = False
            self.fov = _require_number(body, "fov", 1e-3, 3.1)
        else:
            raise RequestError(
                "width",
                "must equal 2*height (panoramic) or height (perspective with fov)",
            )


def _pinhole_directions(size: int, fov: float) -> np.ndarray:
    """(size, size, 3) unit ray directions through a square image plane."""
    focal = (size / 2.0) / math.tan(fov / 2.0)
    xs = (np.arange(size) + 0.5 - size / 2.0) / focal
    ys = (size / 2.0 - (np.arange(size) + 0.5)) / focal
    x, y = np.meshgrid(xs, ys)
    d = np.stack([x, y, np.ones_like(x)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def _render_perspective(field, pose: Pose, size: int, fov: float, samples: int):
    from .field import render_rays

    dirs = pose.rotate(_pinhole_directions(size, fov).reshape(-1, 3))
    colors = np.empty_like(dirs)
    for start in range(0, dirs.shape[0], _RAY_BATCH):
        chunk = dirs[start : start + _RAY_BATCH]
        origins = np.broadcast_to(pose.t, chunk.shape)
        out = render_rays(field, origins, chunk, samples)
        colors[start : start + _RAY_BATCH] = out["color"]
    return colors.reshape(size, size, 3)


def _encode_png(image01: np.ndarray) -> bytes:
    from PIL import Image

    from .images import to_uint8

    buf = BytesIO()
    Image.fromarray(to_uint8(image01)).save(buf, format="PNG")
    return buf.getvalue()


def create_app(checkpoint, cloud=None, workers: int = 1, frontend_dir=None):
    """Build the FastAPI application around one loaded checkpoint.

    Args:
        checkpoint: field checkpoint path, loaded once at startup.
        cloud: optional PLY path served verbatim as the overlay.
        workers: render threads; requests beyond this queue FIFO.
        frontend_dir: optional static assets mounted under /.

    Raises:
        ConfigError: no checkpoint, or a configured path is unreadable.
    """
    from .field import load_checkpoint, render_panorama_view

    if checkpoint is None:
        raise ConfigError("the view server needs a checkpoint to render from")
    try:
        checkpoint_bytes = Path(checkpoint).read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read checkpoint {checkpoint}: {e}") from e
    field = load_checkpoint(checkpoint)

    cloud_bytes = None
    if cloud is not None:
        try:
            cloud_bytes = Path(cloud).read_bytes()
        except OSError as e:
            raise ConfigError(f"cannot read cloud {cloud}: {e}") from e

    center = (np.asarray(field.bounds.lo) + np.asarray(field.bounds.hi)) / 2.0
    meta = {
        "bounds": {
            "lo": [float(x) for x in field.bounds.lo],
            "hi": [float(x) for x in field.bounds.hi],
        },
        "start_pose": {"quat": [1.0, 0.0, 0.0, 0.0], "t": [float(x) for x in center]},
        "checkpoint_id": hashlib.sha256(checkpoint_bytes).hexdigest()[:16],
        "overlays": ["cloud"] if cloud_bytes is not None else [],
    }

    pool = RenderPool(workers)
    app = FastAPI(title="panorec view server")
    app.state.pool = pool

    @app.get("/api/meta")
    def get_meta():
        return JSONResponse(meta)

    @app.post("/api/render")
    async def post_render(request: Request):
        import asyncio

        try:
            body = await request.json()
        except Exception:
            return JSONResponse(
                {"field": "body", "message": "not valid JSON"}, status_code=400
            )
        try:
            req = RenderRequest(body)
        except RequestError as e:
            return JSONResponse(
                {"field": e.field, "message": e.message}, status_code=400
            )

        def job():
            t0 = time.perf_counter()
            if req.panoramic:
                cam = EquirectCamera(width=req.out_width, height=req.out_height)
                image, _, _ = render_panorama_view(field, req.pose, cam, req.samples)
            else:
                image = _render_perspective(
                    field, req.pose, req.out_width, req.fov, req.samples
                )
            png = _encode_png(image)
            return png, (time.perf_counter() - t0) * 1000.0

        png, millis = await asyncio.wrap_future(pool.submit(job))
        return Response(
            content=png,
            media_type="image/png",
            headers={"X-Render-Millis": f"{millis:.1f}"},
        )

    @app.get("/api/cloud")
    def get_cloud():
        if cloud_bytes is None:
            return JSONResponse({"message": "no cloud configured"}, status_code=404)
        return Response(content=cloud_bytes, media_type="application/octet-stream")

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True))

    return app
