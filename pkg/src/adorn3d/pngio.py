"""PNG (de)serialization for label maps, RGB renders, and semantic maps."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .classes import ACCESSORY_CLASSES, PORTRAIT_CLASSES
from .errors import InvalidInputError
from .render import CLASS_SET_ACCESSORY, CLASS_SET_PORTRAIT, SemanticMap

CLASS_SETS = {
    CLASS_SET_PORTRAIT: PORTRAIT_CLASSES,
    CLASS_SET_ACCESSORY: ACCESSORY_CLASSES,
}


def labels_to_png_bytes(labels: np.ndarray) -> bytes:
    if labels.ndim != 2:
        raise InvalidInputError("label map must be 2D")
    buf = io.BytesIO()
    Image.fromarray(labels.astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_labels(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise InvalidInputError(f"not a decodable PNG: {exc}") from exc
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img, dtype=np.uint8)


def rgb_to_png_bytes(rgb: torch.Tensor | np.ndarray) -> bytes:
    """RGB in [-1, 1], (3, H, W) tensor or (H, W, 3) uint8 array."""
    if isinstance(rgb, torch.Tensor):
        arr = ((rgb.detach().clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
        arr = arr.permute(1, 2, 0).cpu().numpy()
    else:
        arr = rgb.astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_rgb_array(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def save_semantic_map(path: str | Path, sm: SemanticMap, batch_index: int = 0) -> None:
    """Argmax label PNG plus a JSON sidecar naming the class set."""
    path = Path(path)
    labels = sm.argmax_labels()[batch_index].cpu().numpy().astype(np.uint8)
    path.write_bytes(labels_to_png_bytes(labels))
    sidecar = {"class_set": sm.class_set,
               "classes": list(CLASS_SETS[sm.class_set])}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def load_label_png(path: str | Path) -> np.ndarray:
    return png_bytes_to_labels(Path(path).read_bytes())
