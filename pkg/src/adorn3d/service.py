"""HTTP inference service: sessions, accessory stacking, scribbles, rendering.

Sessions live in memory; every mutating endpoint returns the full session
descriptor so clients never drift from server state. Renders are pure
functions of (checkpoint, session, request): repeating a request yields
byte-identical images. Images travel as base64 PNG.
"""

from __future__ import annotations

import base64
import os
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
import torch
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .camera import pose_from_angles
from .checkpoint import ModelSet, load_checkpoint, state_hash
from .errors import InvalidInputError
from .pipeline import AccessorySpec
from .pngio import labels_to_png_bytes, png_bytes_to_labels, rgb_to_png_bytes
from .render import N_ACCESSORY_CLASSES
from .scribble import labels_to_onehot

SOURCE_SAMPLED = "sampled"
SOURCE_SCRIBBLE = "scribble"


class PoseBody(BaseModel):
    yaw: float = 0.0
    pitch: float = 0.0


class CreateSessionBody(BaseModel):
    seed: int
    pose: PoseBody = PoseBody()


class AddAccessoryBody(BaseModel):
    seed: int
    texture_seed: int


class ScribbleBody(BaseModel):
    png_base64: str
    texture_seed: int


class RenderBody(BaseModel):
    pose: PoseBody | None = None


@dataclass
class AccessoryState:
    source: str
    texture_seed: int
    spec: AccessorySpec
    seed: int | None = None
    codebook_index: int | None = None

    def describe(self) -> dict:
        return {"source": self.source, "seed": self.seed,
                "texture_seed": self.texture_seed,
                "codebook_index": self.codebook_index}


@dataclass
class Session:
    session_id: str
    seed: int
    yaw: float
    pitch: float
    bundle: object
    accessories: list[AccessoryState] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def describe(self) -> dict:
        return {"id": self.session_id, "seed": self.seed,
                "pose": {"yaw": self.yaw, "pitch": self.pitch},
                "accs": bool(self.accessories),
                "accessories": [a.describe() for a in self.accessories]}


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


class InferenceService:
    """Model-backed session registry; the FastAPI app wraps its methods."""

    def __init__(self, models: ModelSet):
        self.models = models
        self.cfg = models.cfg
        self.generator = models.generator.eval()
        self.checkpoint_hash = state_hash(models.generator)[:16]
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()

    # -- session ops --------------------------------------------------------

    def create_session(self, seed: int, yaw: float, pitch: float,
                       session_id: str | None = None) -> Session:
        bundle = self.generator.sample_bundle(seed)
        session = Session(session_id or uuid.uuid4().hex[:12], seed, yaw, pitch, bundle)
        with self.registry_lock:
            if session.session_id in self.sessions:
                raise InvalidInputError(f"session id {session.session_id} already used")
            self.sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self.registry_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session

    def add_sampled_accessory(self, session: Session, seed: int,
                              texture_seed: int) -> None:
        spec = self.generator.accessory_from_seeds(seed, texture_seed)
        with session.lock:
            session.accessories.append(AccessoryState(
                SOURCE_SAMPLED, texture_seed, spec, seed=seed))

    def add_scribble_accessory(self, session: Session, png_bytes: bytes,
                               texture_seed: int) -> None:
        labels = png_bytes_to_labels(png_bytes)
        res = self.cfg.render.resolution
        if labels.shape != (res, res):
            raise InvalidInputError(
                f"scribble must be {res}x{res}, got {labels.shape}")
        if labels.max() >= N_ACCESSORY_CLASSES:
            raise InvalidInputError("scribble contains unknown class indices")
        with session.lock:
            pose = pose_from_angles(session.yaw, session.pitch, self.cfg.camera)
            with torch.no_grad():
                _tri, f_por, _s = self.generator.portrait_branch(
                    session.bundle.w_por_g, pose)
                dtype = f_por.features.dtype
                w = self.models.scribble_encoder(
                    labels_to_onehot(torch.as_tensor(labels.copy())[None], dtype=dtype),
                    f_por.features)
                idx = self.models.codebook.nearest(w)
                code = self.models.codebook.entries[idx].detach()
            w_acc_t = self.generator.accessory_from_seeds(0, texture_seed).w_acc_t
            session.accessories.append(AccessoryState(
                SOURCE_SCRIBBLE, texture_seed, AccessorySpec(code, w_acc_t),
                codebook_index=int(idx[0])))

    def remove_accessory(self, session: Session, index: int) -> None:
        with session.lock:
            if not 0 <= index < len(session.accessories):
                raise IndexError(index)
            session.accessories.pop(index)

    def render(self, session: Session, yaw: float | None = None,
               pitch: float | None = None) -> dict:
        with session.lock:
            if yaw is not None:
                session.yaw = yaw
            if pitch is not None:
                session.pitch = pitch
            pose = pose_from_angles(session.yaw, session.pitch, self.cfg.camera)
            specs = [a.spec for a in session.accessories]
            with torch.no_grad():
                out = self.generator.synthesize(session.bundle, pose,
                                                accs=bool(specs),
                                                accessories=specs)
            s_por = out.s_por.argmax_labels()[0].cpu().numpy().astype(np.uint8)
            s_acc = out.s_acc.argmax_labels()[0].cpu().numpy().astype(np.uint8)
            return {"session": session.describe(),
                    "rgb_png": _b64(rgb_to_png_bytes(out.rgb[0])),
                    "s_por_png": _b64(labels_to_png_bytes(s_por)),
                    "s_acc_png": _b64(labels_to_png_bytes(s_acc))}


def create_app(models_or_path: ModelSet | str) -> FastAPI:
    # fixed thread counts keep renders byte-reproducible under CPU contention
    os.environ.setdefault("MKL_DYNAMIC", "FALSE")
    os.environ.setdefault("OMP_DYNAMIC", "FALSE")
    torch.set_num_threads(torch.get_num_threads())
    if isinstance(models_or_path, ModelSet):
        models = models_or_path
    else:
        models, _, _ = load_checkpoint(models_or_path)
    service = InferenceService(models)
    app = FastAPI(title="adorn3d inference service")
    app.state.service = service

    def _session_or_404(session_id: str) -> Session:
        try:
            return service.get(session_id)
        except KeyError:
            raise HTTPException(404, f"no session {session_id}")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "checkpoint": service.checkpoint_hash,
                "sessions": len(service.sessions)}

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        session = service.create_session(body.seed, body.pose.yaw, body.pose.pitch)
        return session.describe()

    @app.post("/sessions/{session_id}/accessories")
    def add_accessory(session_id: str, body: AddAccessoryBody):
        session = _session_or_404(session_id)
        service.add_sampled_accessory(session, body.seed, body.texture_seed)
        return session.describe()

    @app.post("/sessions/{session_id}/scribble")
    def add_scribble(session_id: str, body: ScribbleBody):
        session = _session_or_404(session_id)
        try:
            png = base64.b64decode(body.png_base64, validate=True)
            service.add_scribble_accessory(session, png, body.texture_seed)
        except (InvalidInputError, ValueError) as exc:
            raise HTTPException(400, str(exc))
        return session.describe()

    @app.delete("/sessions/{session_id}/accessories/{index}")
    def remove_accessory(session_id: str, index: int):
        session = _session_or_404(session_id)
        try:
            service.remove_accessory(session, index)
        except IndexError:
            raise HTTPException(404, f"no accessory {index}")
        return session.describe()

    @app.post("/sessions/{session_id}/render")
    def render(session_id: str, body: RenderBody):
        session = _session_or_404(session_id)
        try:
            if body.pose is not None:
                return service.render(session, body.pose.yaw, body.pose.pitch)
            return service.render(session)
        except InvalidInputError as exc:
            raise HTTPException(400, str(exc))

    return app
