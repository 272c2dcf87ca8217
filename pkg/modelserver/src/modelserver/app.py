"""HTTP sidecar serving image embeddings, text embeddings, and object masks.

JSON in, JSON out, one inference at a time behind a lock. On startup the
server probes itself: the class token from a full-grid masked forward
must agree with the plain image forward within SELF_CHECK_TOL, otherwise
it refuses to serve (everything returns 503). Payload problems are 400s;
the request format lives in wire.py.
"""

import threading

import numpy as np
import torch
from fastapi import Body, FastAPI, HTTPException

from . import wire
from .config import ServerConfig
from .encoders import build_towers
from .segmenter import propose_masks

SELF_CHECK_TOL = 1e-4


class ModelState:
    """Towers plus the lock that serializes access to them."""

    def __init__(self, cfg: ServerConfig):
        self.cfg = cfg
        self.lock = threading.Lock()
        self.device = torch.device(cfg.device)
        self.error: str | None = None
        self.self_check_max_abs = float("nan")
        try:
            torch.use_deterministic_algorithms(True)
            self.image_tower, self.text_tower = build_towers(cfg)
            self.self_check_max_abs = self._self_check()
            if not self.self_check_max_abs <= SELF_CHECK_TOL:
                raise RuntimeError(
                    f"full-grid window vs image class token disagree: "
                    f"{self.self_check_max_abs:.3g} > {SELF_CHECK_TOL}")
        except Exception as exc:
            self.error = f"{type(exc).__name__}: {exc}"

    @property
    def ready(self) -> bool:
        return self.error is None

    def _self_check(self) -> float:
        cfg = self.cfg
        probe = np.random.default_rng(cfg.seed).random(
            (cfg.image_size, cfg.image_size, 3), dtype=np.float32)
        tens = torch.from_numpy(probe).to(self.device)
        keep = torch.arange(cfg.grid_side * cfg.grid_side, device=self.device)
        with torch.inference_mode():
            win = self.image_tower.window_embedding(tens, keep)
            cls, _ = self.image_tower.image_embeddings(tens)
        return float((win - cls).abs().max())


def create_app(cfg: ServerConfig | None = None) -> FastAPI:
    cfg = cfg or ServerConfig.from_env()
    state = ModelState(cfg)
    app = FastAPI(title="modelserver")
    app.state.models = state
    grid = cfg.grid_side

    def require_ready():
        if not state.ready:
            raise HTTPException(503, detail=f"model not loaded: {state.error}")

    def decode_image(payload, lock_side: bool) -> np.ndarray:
        try:
            arr = wire.decode_tensor(payload, "image")
        except ValueError as exc:
            raise HTTPException(400, detail=str(exc)) from exc
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise HTTPException(400, detail=f"image must be (H, W, 3), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise HTTPException(400, detail="image contains non-finite values")
        if lock_side and arr.shape[:2] != (cfg.image_size, cfg.image_size):
            raise HTTPException(
                400, detail=f"image is {arr.shape[0]}x{arr.shape[1]}, "
                            f"this model wants {cfg.image_size}x{cfg.image_size}")
        return arr

    @app.get("/healthz")
    def healthz():
        require_ready()
        return {"status": "ok", "model": cfg.model_name,
                "self_check_max_abs": state.self_check_max_abs}

    @app.get("/v1/descriptor")
    def descriptor():
        require_ready()
        return {"name": cfg.model_name, "dim": cfg.embed_dim,
                "patch_size": cfg.patch_size, "deterministic": True}

    @app.post("/v1/embed_window")
    def embed_window(body: dict = Body(...)):
        require_ready()
        image = decode_image(body.get("image"), lock_side=True)
        rect = body.get("window")
        if not isinstance(rect, dict):
            raise HTTPException(400, detail="missing window rect")
        try:
            row0, col0 = int(rect["row0"]), int(rect["col0"])
            rows, cols = int(rect["rows"]), int(rect["cols"])
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(400, detail=f"bad window rect: {exc}") from exc
        if (row0 < 0 or col0 < 0 or rows < 1 or cols < 1
                or row0 + rows > grid or col0 + cols > grid):
            raise HTTPException(
                400, detail=f"window {rect} outside {grid}x{grid} patch grid")
        offsets = np.arange(cols) + np.arange(rows)[:, None] * grid
        keep = torch.from_numpy(
            (row0 * grid + col0 + offsets).ravel()).to(state.device)
        tens = torch.from_numpy(image).to(state.device)
        with state.lock, torch.inference_mode():
            emb = state.image_tower.window_embedding(tens, keep)
        return {"embedding": wire.encode_tensor(emb.cpu().numpy())}

    @app.post("/v1/embed_image")
    def embed_image(body: dict = Body(...)):
        require_ready()
        image = decode_image(body.get("image"), lock_side=True)
        tens = torch.from_numpy(image).to(state.device)
        with state.lock, torch.inference_mode():
            cls, patches = state.image_tower.image_embeddings(tens)
        return {"class_token": wire.encode_tensor(cls.cpu().numpy()),
                "patch_tokens": wire.encode_tensor(patches.cpu().numpy())}

    @app.post("/v1/embed_text")
    def embed_text(body: dict = Body(...)):
        require_ready()
        templates = body.get("templates")
        if (not isinstance(templates, list) or not templates
                or not all(isinstance(t, str) and t for t in templates)):
            raise HTTPException(
                400, detail="templates must be a nonempty list of nonempty strings")
        with state.lock, torch.inference_mode():
            rows = torch.stack([state.text_tower.encode(t) for t in templates])
        return {"embeddings": wire.encode_tensor(rows.cpu().numpy())}

    @app.post("/v1/segment")
    def segment(body: dict = Body(...)):
        require_ready()
        image = decode_image(body.get("image"), lock_side=False)
        with state.lock:
            masks = propose_masks(image, cfg.max_masks, cfg.min_mask_area)
        return {"masks": [wire.rle_encode(m) for m in masks]}

    return app


def main() -> None:
    import uvicorn

    cfg = ServerConfig.from_env()
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="info")
