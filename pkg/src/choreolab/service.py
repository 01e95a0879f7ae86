"""HTTP service: generation, session lineage, latent-code editing.

Sessions are immutable: every edit decodes into a new child session holding
its parent's id. The store is a directory of JSON documents plus binary
motion payloads; the decoded motion is stored verbatim, so a session's codes
always re-decode to exactly the stored frames.
"""

from __future__ import annotations

import datetime
import json
import logging
import os
import threading
import uuid
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import diffusion as dif
from . import hvqvae as hv
from .fileio import MOTION_MAGIC, atomic_write_text, read_array_file, write_array_file
from .latent_tools import EditOp, IndexOutOfRange, LatentCodes, RatioViolation, apply_edits
from .motion import MotionSequence, default_skeleton, forward_kinematics
from .music import extract_beats, resolve_music_spec

log = logging.getLogger("choreolab.service")

API_VERSION = 1


class SessionStore:
    """One JSON document + one motion payload per session, create-only."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def create(self, codes: LatentCodes, motion: MotionSequence, music_id: str,
               beats: list[float], parent_id: str | None = None) -> dict:
        record = {
            "v": API_VERSION,
            "id": uuid.uuid4().hex[:12],
            "parent_id": parent_id,
            "music_id": music_id,
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "codes": json.loads(codes.to_json()),
            "beats": beats,
            "frames": len(motion),
            "fps": motion.fps,
        }
        with self._lock:
            write_array_file(self.root / f"{record['id']}.dmmo", MOTION_MAGIC,
                             motion.frames.numpy(), motion.fps)
            atomic_write_text(self.root / f"{record['id']}.json", json.dumps(record))
        return record

    def get(self, session_id: str) -> dict | None:
        path = self.root / f"{session_id}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def motion(self, session_id: str) -> MotionSequence:
        data, fps = read_array_file(self.root / f"{session_id}.dmmo", MOTION_MAGIC)
        return MotionSequence(torch.from_numpy(data), fps=fps)

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))


class ModelsNotLoaded(RuntimeError):
    pass


def create_app(
    vq_path: str | None = None,
    prior_path: str | None = None,
    data_dir: str | None = None,
    static_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="choreolab", version="0.1.0")

    root = Path(data_dir or os.environ.get("DM_DATA_DIR") or "dm_data")
    store = SessionStore(root / "sessions")
    music_dir = root / "music"

    vq = hv.load_vqvae_checkpoint(vq_path) if vq_path else None
    prior, _ = (dif.load_prior_checkpoint(prior_path) if prior_path else (None, None))
    skel = default_skeleton()

    def require_models():
        if vq is None or prior is None:
            raise ModelsNotLoaded("vqvae/prior checkpoints not loaded")

    @app.middleware("http")
    async def map_errors(request: Request, call_next):
        try:
            return await call_next(request)
        except ModelsNotLoaded as exc:
            return JSONResponse(status_code=409, content={"error": "ModelsNotLoaded", "detail": str(exc)})
        except (IndexOutOfRange, RatioViolation, ValueError, KeyError,
                TypeError, FileNotFoundError) as exc:
            return JSONResponse(
                status_code=400, content={"error": type(exc).__name__, "detail": str(exc)}
            )
        except Exception:
            incident = uuid.uuid4().hex[:8]
            log.exception("incident %s on %s", incident, request.url.path)
            return JSONResponse(status_code=500, content={"error": "InternalError", "incident": incident})

    def session_payload(record: dict) -> dict:
        motion = store.motion(record["id"])
        joints = forward_kinematics(motion, skel)
        payload = dict(record)
        payload["joints"] = joints.numpy().round(6).tolist()
        payload["parents"] = list(skel.parent_index)
        return payload

    @app.get("/api/health")
    async def health():
        versions = {
            "vqvae": hv.CHECKPOINT_VERSION if vq else None,
            "prior": dif.CHECKPOINT_VERSION if prior else None,
        }
        return {"v": API_VERSION, "status": "ok", "models_loaded": vq is not None and prior is not None,
                "model_versions": versions}

    @app.get("/api/codebooks")
    async def codebooks():
        require_models()
        usage_top: dict[int, int] = {}
        usage_bottom: dict[int, int] = {}
        for sid in store.ids():
            record = store.get(sid)
            for idx in record["codes"]["top"]:
                usage_top[idx] = usage_top.get(idx, 0) + 1
            for idx in record["codes"]["bottom"]:
                usage_bottom[idx] = usage_bottom.get(idx, 0) + 1
        return {
            "v": API_VERSION,
            "top": {"size": vq.model.codebook_t.size, "used": len(usage_top),
                    "usage": {str(k): v for k, v in sorted(usage_top.items())}},
            "bottom": {"size": vq.model.codebook_b.size, "used": len(usage_bottom),
                       "usage": {str(k): v for k, v in sorted(usage_bottom.items())}},
        }

    @app.post("/api/generate")
    async def generate_session(body: dict):
        require_models()
        music_spec = body.get("music")
        if not isinstance(music_spec, str):
            raise ValueError("body.music must be 'click:BPM' or a music feature-file id")
        steps = int(body.get("steps", 50))
        seed = int(body.get("seed", 0))
        windows = int(body.get("windows", 1))
        if music_spec.startswith("click:"):
            feats = resolve_music_spec(music_spec, prior.denoiser.cfg.cond_dim, windows)
        else:
            feats = resolve_music_spec(
                str(music_dir / f"{music_spec}.dmft"), prior.denoiser.cfg.cond_dim, windows
            )
        motion, top, bottom = dif.generate(feats, vq.model, prior, num_steps=steps, seed=seed)
        codes = LatentCodes(top=top, bottom=bottom, fps=motion.fps, window=dif.WINDOW_FRAMES)
        record = store.create(codes, motion, music_spec, extract_beats(feats))
        return session_payload(record)

    @app.get("/api/session/{session_id}")
    async def get_session(session_id: str):
        record = store.get(session_id)
        if record is None:
            return JSONResponse(status_code=404, content={"error": "UnknownSession", "detail": session_id})
        return session_payload(record)

    @app.post("/api/session/{session_id}/edit")
    async def edit_session(session_id: str, body: dict):
        require_models()
        record = store.get(session_id)
        if record is None:
            return JSONResponse(status_code=404, content={"error": "UnknownSession", "detail": session_id})
        ops = [EditOp.from_dict(d) for d in body.get("ops", [])]
        codes = LatentCodes(
            top=torch.tensor(record["codes"]["top"], dtype=torch.long),
            bottom=torch.tensor(record["codes"]["bottom"], dtype=torch.long),
            fps=record["codes"]["fps"], window=record["codes"]["window"],
        )
        edited, motion = apply_edits(codes, ops, vq.model)
        child = store.create(edited, motion, record["music_id"], record["beats"], parent_id=session_id)
        return session_payload(child)

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
