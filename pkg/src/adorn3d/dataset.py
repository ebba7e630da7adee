"""Three-group mask dataset construction and the synthetic desk-scale stand-in.

Raw annotated samples (per-class binary masks + RGB + attribute flags + pose)
are turned into three disjoint record groups:

  accessory_segmaps  label maps holding exactly one accessory class
  portrait_segmaps   20-class label maps with no accessory pixels
  rgb_images         flat RGB images

Preprocessing order: accessory-priority semantic reordering, nose split into
left/right halves, pose attachment, partition/extraction, per-class
balancing by duplication, then mirroring everything with yaw negated.
A procedural face generator provides a fully seeded synthetic raw set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

import torch
import torch.nn.functional as F

from .camera import CameraConfig, CameraPose, pose_from_angles
from .classes import (ACCESSORY_CLASSES, ACCESSORY_INDEX, MIRROR_PAIRS,
                      PORTRAIT_CLASSES, PORTRAIT_INDEX)
from .errors import ConfigError, InvalidInputError
from .pngio import labels_to_png_bytes, load_label_png, png_bytes_to_rgb_array, rgb_to_png_bytes

GROUP_ACCESSORY = "accessory_segmaps"
GROUP_PORTRAIT = "portrait_segmaps"
GROUP_RGB = "rgb_images"
GROUPS = (GROUP_ACCESSORY, GROUP_PORTRAIT, GROUP_RGB)

ORIGIN_ORIGINAL = "original"
ORIGIN_MIRRORED = "mirrored"
ORIGIN_DUPLICATED = "duplicated"
ORIGIN_SYNTHETIC = "synthetic"

# combined working label space used during preprocessing:
# portrait classes 0..19, accessory classes 20..23, raw unsplit nose 24
COMBINED_CLASSES = PORTRAIT_CLASSES + ACCESSORY_CLASSES[1:]
NOSE_RAW = "nose"
NOSE_RAW_LABEL = len(COMBINED_CLASSES)
ACCESSORY_LABEL_OFFSET = len(PORTRAIT_CLASSES)

# painting order, lowest priority first; accessories always last so that
# overlaps never erase them ("glasses over hair" keeps the glasses)
REORDER_PRIORITY: tuple[str, ...] = (
    "background", "body", "cloth", "neck", "skin", "left_ear", "right_ear",
    "hair", "beard", NOSE_RAW, "left_nose", "right_nose",
    "left_brow", "right_brow", "left_eye", "right_eye",
    "upper_lip", "lower_lip", "mouth_interior", "teeth", "tongue",
    "eyewear", "earring", "headwear", "necklace",
)


def _label_of(name: str) -> int:
    if name == NOSE_RAW:
        return NOSE_RAW_LABEL
    if name in PORTRAIT_INDEX:
        return PORTRAIT_INDEX[name]
    if name in ACCESSORY_INDEX:
        return ACCESSORY_LABEL_OFFSET + ACCESSORY_INDEX[name] - 1
    raise InvalidInputError(f"unknown semantic class {name!r}")


def is_accessory_label(labels: np.ndarray) -> np.ndarray:
    # the raw-nose pseudo-label sits above the accessory range
    return (labels >= ACCESSORY_LABEL_OFFSET) & (labels < NOSE_RAW_LABEL)


@dataclass
class RawSample:
    masks: dict[str, np.ndarray]      # class name -> binary uint8 (H, W)
    rgb: np.ndarray                   # (H, W, 3) uint8
    attributes: dict[str, bool] = field(default_factory=dict)
    yaw: float | None = None
    pitch: float | None = None


@dataclass
class PacRecord:
    record_id: str
    group: str
    payload: np.ndarray               # label map (H, W) or RGB (H, W, 3)
    yaw: float
    pitch: float
    origin: str
    attributes: dict[str, bool] = field(default_factory=dict)


# -- preprocessing steps ----------------------------------------------------

def reorder_semantics(masks: dict[str, np.ndarray]) -> np.ndarray:
    """Stack per-class binary masks into one label map, painting in a fixed
    priority order so accessories always win overlapping pixels."""
    shapes = {m.shape for m in masks.values()}
    if len(shapes) > 1:
        raise InvalidInputError(f"mask resolutions disagree: {shapes}")
    some = next(iter(masks.values()))
    labels = np.zeros(some.shape, dtype=np.uint8)
    for name in REORDER_PRIORITY:
        if name in masks:
            labels[masks[name] != 0] = _label_of(name)
    return labels


def split_nose(labels: np.ndarray) -> np.ndarray:
    """Relabel raw nose pixels into left/right halves at the centroid column."""
    nose = labels == NOSE_RAW_LABEL
    if not nose.any():
        return labels
    out = labels.copy()
    cols = np.nonzero(nose)[1]
    centroid = cols.mean()
    left = nose & (np.arange(labels.shape[1])[None, :] < centroid)
    out[left] = PORTRAIT_INDEX["left_nose"]
    out[nose & ~left] = PORTRAIT_INDEX["right_nose"]
    return out


def attach_pose(sample: RawSample, rng: np.random.Generator,
                yaw_range: float = 1.2, pitch_range: float = 0.45) -> RawSample:
    """Use the provided pose label; draw a synthetic stand-in when absent."""
    if sample.yaw is not None and sample.pitch is not None:
        return sample
    yaw = float(rng.uniform(-yaw_range, yaw_range))
    pitch = float(rng.uniform(-pitch_range, pitch_range))
    return replace(sample, yaw=yaw, pitch=pitch)


def extract_accessory_maps(labels: np.ndarray) -> list[tuple[str, np.ndarray]]:
    """One 5-class accessory map per accessory class present; all other
    pixels become 'none'."""
    out = []
    for name in ACCESSORY_CLASSES[1:]:
        combined_label = _label_of(name)
        if (labels == combined_label).any():
            acc = np.zeros_like(labels)
            acc[labels == combined_label] = ACCESSORY_INDEX[name]
            out.append((name, acc))
    return out


def partition_and_extract(samples: list[RawSample],
                          rng: np.random.Generator,
                          origin: str = ORIGIN_ORIGINAL) -> list[PacRecord]:
    """Reorder + split + route each sample into the three groups."""
    records: list[PacRecord] = []
    counter = 0

    def next_id() -> str:
        nonlocal counter
        counter += 1
        return f"{counter - 1:06d}"

    for sample in samples:
        sample = attach_pose(sample, rng)
        labels = split_nose(reorder_semantics(sample.masks))
        common = dict(yaw=sample.yaw, pitch=sample.pitch, origin=origin,
                      attributes=dict(sample.attributes))
        acc_maps = extract_accessory_maps(labels)
        if acc_maps:
            for _name, acc in acc_maps:
                records.append(PacRecord(next_id(), GROUP_ACCESSORY, acc, **common))
        else:
            portrait = labels.copy()
            portrait[is_accessory_label(portrait)] = 0  # unreachable, by construction
            records.append(PacRecord(next_id(), GROUP_PORTRAIT, portrait, **common))
        records.append(PacRecord(next_id(), GROUP_RGB, sample.rgb.copy(), **common))
    return records


def mirror_labels(labels: np.ndarray) -> np.ndarray:
    """Horizontal flip with lateral class swap; an involution."""
    flipped = labels[:, ::-1].copy()
    for left, right in MIRROR_PAIRS:
        li, ri = PORTRAIT_INDEX[left], PORTRAIT_INDEX[right]
        lmask = flipped == li
        rmask = flipped == ri
        flipped[lmask] = ri
        flipped[rmask] = li
    return flipped


def mirror_record(record: PacRecord) -> PacRecord:
    if record.group == GROUP_RGB:
        payload = record.payload[:, ::-1].copy()
    elif record.group == GROUP_PORTRAIT:
        payload = mirror_labels(record.payload)
    else:
        payload = record.payload[:, ::-1].copy()
    return PacRecord(record.record_id + "m", record.group, payload,
                     -record.yaw, record.pitch, ORIGIN_MIRRORED,
                     dict(record.attributes))


def accessory_class_of(record: PacRecord) -> str:
    present = np.unique(record.payload)
    present = present[present != 0]
    if len(present) != 1:
        raise InvalidInputError("accessory record must hold exactly one class")
    return ACCESSORY_CLASSES[int(present[0])]


def balance_and_mirror(records: list[PacRecord], rng: np.random.Generator,
                       ratio_band: float = 0.5) -> list[PacRecord]:
    """Duplicate under-represented accessory classes up to ratio_band * max
    count, then emit a mirrored twin of every record."""
    by_class: dict[str, list[PacRecord]] = {}
    for rec in records:
        if rec.group == GROUP_ACCESSORY:
            by_class.setdefault(accessory_class_of(rec), []).append(rec)

    balanced = list(records)
    if by_class:
        max_count = max(len(v) for v in by_class.values())
        target = math.ceil(ratio_band * max_count)
        for name in sorted(by_class):
            pool = by_class[name]
            need = target - len(pool)
            for k in range(max(0, need)):
                src = pool[int(rng.integers(0, len(pool)))]
                balanced.append(PacRecord(f"{src.record_id}d{k}", src.group,
                                          src.payload.copy(), src.yaw, src.pitch,
                                          ORIGIN_DUPLICATED, dict(src.attributes)))

    return balanced + [mirror_record(r) for r in balanced]


# -- bias analysis -----------------------------------------------------------

def mutual_information(x: np.ndarray, y: np.ndarray) -> float:
    """MI in nats between two categorical variables; 0 when either is constant."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise InvalidInputError("variables must be paired")
    n = len(x)
    xs, ys = np.unique(x), np.unique(y)
    if len(xs) < 2 or len(ys) < 2:
        return 0.0
    mi = 0.0
    for xv in xs:
        px = np.mean(x == xv)
        for yv in ys:
            pxy = np.mean((x == xv) & (y == yv))
            py = np.mean(y == yv)
            if pxy > 0:
                mi += pxy * np.log(pxy / (px * py))
    return float(max(mi, 0.0))


def mutual_information_report(samples: list[RawSample]) -> dict:
    """MI matrix between accessory presence and each attribute flag."""
    attr_names = sorted({k for s in samples for k in s.attributes})
    acc_names = list(ACCESSORY_CLASSES[1:])
    wears = {name: np.array([int(name in s.masks and s.masks[name].any())
                             for s in samples]) for name in acc_names}
    matrix = []
    for acc in acc_names:
        row = []
        for attr in attr_names:
            flags = np.array([int(bool(s.attributes.get(attr, False))) for s in samples])
            row.append(mutual_information(wears[acc], flags))
        matrix.append(row)
    return {"accessories": acc_names, "attributes": attr_names,
            "matrix": matrix, "n_samples": len(samples)}


# -- synthetic raw set --------------------------------------------------------

def _ellipse(h: int, w: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy / h - cy) / ry) ** 2 + ((xx / w - cx) / rx) ** 2 <= 1.0


CLASS_COLORS = {
    "background": (28, 28, 36), "skin": (224, 172, 138), "hair": (72, 48, 28),
    "beard": (90, 70, 50), "neck": (210, 160, 128), "cloth": (60, 90, 150),
    "body": (50, 70, 110), "left_eye": (240, 240, 240), "right_eye": (240, 240, 240),
    "left_brow": (70, 50, 35), "right_brow": (70, 50, 35),
    "left_ear": (216, 164, 130), "right_ear": (216, 164, 130),
    "nose": (232, 180, 142), "left_nose": (232, 180, 142), "right_nose": (236, 184, 146),
    "upper_lip": (190, 90, 90), "lower_lip": (180, 80, 80),
    "mouth_interior": (120, 40, 40), "teeth": (250, 250, 245), "tongue": (200, 90, 90),
    "eyewear": (20, 20, 20), "earring": (240, 210, 80),
    "headwear": (160, 40, 50), "necklace": (220, 220, 230),
}


def synthesize_raw_sample(rng: np.random.Generator, size: int = 32,
                          accessory_incidence: float = 0.37) -> RawSample:
    """One procedural face: ellipse head, hair arc, parallax nose, optional
    accessory shapes, flat-shaded RGB, and a synthetic pose."""
    h = w = size
    yaw = float(rng.uniform(-1.0, 1.0))
    pitch = float(rng.uniform(-0.35, 0.35))
    shift = 0.12 * math.sin(yaw)       # head translation with yaw
    parallax = 0.08 * math.sin(yaw)    # extra shift for near-camera parts

    long_hair = bool(rng.random() < 0.5)
    makeup = bool(rng.random() < (0.6 if long_hair else 0.2))

    masks: dict[str, np.ndarray] = {}
    cx = 0.5 + shift
    face = _ellipse(h, w, 0.46, cx, 0.30, 0.22)
    masks["skin"] = face.astype(np.uint8)
    masks["body"] = (np.mgrid[0:h, 0:w][0] / h > 0.88).astype(np.uint8)
    neck = _ellipse(h, w, 0.82, cx, 0.12, 0.08)
    masks["neck"] = neck.astype(np.uint8)
    masks["cloth"] = _ellipse(h, w, 0.98, cx, 0.18, 0.30).astype(np.uint8)

    hair_ry = 0.40 if long_hair else 0.33
    hair = _ellipse(h, w, 0.38, cx, hair_ry, 0.26) & ~_ellipse(h, w, 0.50, cx, 0.27, 0.20)
    masks["hair"] = hair.astype(np.uint8)

    eye_dx = 0.085
    eye_cx = cx + parallax * 0.5
    for name, sgn in (("left_eye", -1), ("right_eye", 1)):
        masks[name] = _ellipse(h, w, 0.42, eye_cx + sgn * eye_dx, 0.035, 0.04).astype(np.uint8)
    for name, sgn in (("left_brow", -1), ("right_brow", 1)):
        masks[name] = _ellipse(h, w, 0.36, eye_cx + sgn * eye_dx, 0.022, 0.05).astype(np.uint8)
    for name, sgn in (("left_ear", -1), ("right_ear", 1)):
        masks[name] = _ellipse(h, w, 0.48, cx + sgn * 0.22, 0.05, 0.035).astype(np.uint8)

    nose_cx = cx + parallax
    masks["nose"] = _ellipse(h, w, 0.52, nose_cx, 0.055, 0.035).astype(np.uint8)
    masks["upper_lip"] = _ellipse(h, w, 0.625, cx + parallax * 0.6, 0.016, 0.055).astype(np.uint8)
    masks["lower_lip"] = _ellipse(h, w, 0.655, cx + parallax * 0.6, 0.018,
                                  0.06 if makeup else 0.05).astype(np.uint8)

    attributes = {"long_hair": long_hair, "makeup": makeup}

    if rng.random() < accessory_incidence:
        # biased type frequencies: earrings/necklaces skew to long_hair+makeup
        if long_hair:
            weights = {"eyewear": 0.2, "earring": 0.4, "headwear": 0.1, "necklace": 0.3}
        else:
            weights = {"eyewear": 0.45, "earring": 0.08, "headwear": 0.4, "necklace": 0.07}
        names = list(weights)
        probs = np.array([weights[n] for n in names])
        count = 1 + int(rng.random() < 0.25)
        chosen = rng.choice(names, size=min(count, len(names)), replace=False,
                            p=probs / probs.sum())
        for name in chosen:
            if name == "eyewear":
                band = _ellipse(h, w, 0.42, eye_cx, 0.045, 0.17)
                masks[name] = band.astype(np.uint8)
            elif name == "earring":
                side = -1 if rng.random() < 0.5 else 1
                masks[name] = _ellipse(h, w, 0.56, cx + side * 0.22, 0.030,
                                       0.022).astype(np.uint8)
            elif name == "headwear":
                masks[name] = (_ellipse(h, w, 0.22, cx, 0.14, 0.26)
                               & ~face).astype(np.uint8)
            else:  # necklace
                masks[name] = (_ellipse(h, w, 0.90, cx, 0.05, 0.14)
                               & ~neck).astype(np.uint8)

    rgb = np.zeros((h, w, 3), dtype=np.float64)
    rgb[:] = CLASS_COLORS["background"]
    tint = rng.uniform(-18, 18, size=3)
    order = [n for n in REORDER_PRIORITY if n in masks]
    for name in order:
        rgb[masks[name] != 0] = np.array(CLASS_COLORS[name]) + tint
    rgb = np.clip(rgb, 0, 255).astype(np.uint8)
    return RawSample(masks, rgb, attributes, yaw, pitch)


def synthesize_raw_samples(n: int, seed: int, size: int = 32,
                           accessory_incidence: float = 0.37) -> list[RawSample]:
    rng = np.random.default_rng(seed)
    return [synthesize_raw_sample(rng, size, accessory_incidence) for _ in range(n)]


def build_pacmask(samples: list[RawSample], seed: int = 0,
                  ratio_band: float = 0.5) -> list[PacRecord]:
    rng = np.random.default_rng(seed)
    records = partition_and_extract(samples, rng)
    return balance_and_mirror(records, rng, ratio_band)


# -- disk layout --------------------------------------------------------------

def write_raw_samples(samples: list[RawSample], out_dir: str | Path) -> Path:
    """Raw layout: one directory per sample with rgb.png, mask_<class>.png,
    and meta.json (attributes + optional pose)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, sample in enumerate(samples):
        d = out / f"sample_{i:06d}"
        d.mkdir(exist_ok=True)
        (d / "rgb.png").write_bytes(rgb_to_png_bytes(sample.rgb))
        for name, mask in sorted(sample.masks.items()):
            (d / f"mask_{name}.png").write_bytes(
                labels_to_png_bytes((mask != 0).astype(np.uint8) * 255))
        meta = {"attributes": sample.attributes,
                "pose": (None if sample.yaw is None
                         else {"yaw": sample.yaw, "pitch": sample.pitch})}
        (d / "meta.json").write_text(json.dumps(meta, sort_keys=True))
    return out


def load_raw_samples(in_dir: str | Path) -> list[RawSample]:
    root = Path(in_dir)
    sample_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not sample_dirs:
        raise ConfigError(f"no sample directories under {root}")
    samples = []
    for d in sample_dirs:
        meta = json.loads((d / "meta.json").read_text())
        masks = {}
        for mpath in sorted(d.glob("mask_*.png")):
            name = mpath.stem[len("mask_"):]
            masks[name] = (load_label_png(mpath) != 0).astype(np.uint8)
        pose = meta.get("pose")
        samples.append(RawSample(
            masks, png_bytes_to_rgb_array((d / "rgb.png").read_bytes()),
            meta.get("attributes", {}),
            None if pose is None else pose["yaw"],
            None if pose is None else pose["pitch"]))
    return samples


def write_records(records: list[PacRecord], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index_lines = []
    for rec in records:
        fname = f"{rec.group}_{rec.record_id}.png"
        if rec.group == GROUP_RGB:
            (out / fname).write_bytes(rgb_to_png_bytes(rec.payload))
        else:
            (out / fname).write_bytes(labels_to_png_bytes(rec.payload))
        index_lines.append(json.dumps({
            "id": rec.record_id, "group": rec.group, "file": fname,
            "pose": {"yaw": rec.yaw, "pitch": rec.pitch},
            "origin": rec.origin, "attributes": rec.attributes,
        }, sort_keys=True))
    (out / "index.jsonl").write_text("\n".join(index_lines) + "\n")
    return out


def load_records(in_dir: str | Path) -> list[PacRecord]:
    root = Path(in_dir)
    index = root / "index.jsonl"
    if not index.exists():
        raise ConfigError(f"no index.jsonl under {root}")
    records = []
    for line in index.read_text().splitlines():
        meta = json.loads(line)
        path = root / meta["file"]
        if meta["group"] == GROUP_RGB:
            payload = png_bytes_to_rgb_array(path.read_bytes())
        else:
            payload = load_label_png(path)
        records.append(PacRecord(meta["id"], meta["group"], payload,
                                 meta["pose"]["yaw"], meta["pose"]["pitch"],
                                 meta["origin"], meta.get("attributes", {})))
    return records


class PacMaskDataset:
    """Grouped record access with seeded batch sampling for training."""

    def __init__(self, records: list[PacRecord]):
        self.by_group: dict[str, list[PacRecord]] = {g: [] for g in GROUPS}
        for rec in records:
            if rec.group not in self.by_group:
                raise InvalidInputError(f"unknown group {rec.group!r}")
            self.by_group[rec.group].append(rec)

    @classmethod
    def from_dir(cls, path: str | Path) -> "PacMaskDataset":
        return cls(load_records(path))

    def group_size(self, group: str) -> int:
        return len(self.by_group[group])

    def sample(self, group: str, batch: int, rng: np.random.Generator) -> list[PacRecord]:
        pool = self.by_group[group]
        if not pool:
            raise ConfigError(f"data group {group!r} is empty")
        idx = rng.integers(0, len(pool), size=batch)
        return [pool[i] for i in idx]

    def accessory_incidence(self) -> float:
        """Fraction of identity samples that carry accessories, estimated from
        the original (unmirrored, unduplicated) records."""
        acc = sum(1 for r in self.by_group[GROUP_ACCESSORY]
                  if r.origin in (ORIGIN_ORIGINAL, ORIGIN_SYNTHETIC))
        por = sum(1 for r in self.by_group[GROUP_PORTRAIT]
                  if r.origin in (ORIGIN_ORIGINAL, ORIGIN_SYNTHETIC))
        total = acc + por
        return acc / total if total else 0.0


# -- tensor conversion for training/eval ---------------------------------------

def resize_labels(labels: np.ndarray, resolution: int) -> np.ndarray:
    if labels.shape[0] == resolution:
        return labels
    t = torch.as_tensor(np.ascontiguousarray(labels), dtype=torch.float32)[None, None]
    out = F.interpolate(t, size=(resolution, resolution), mode="nearest")
    return out[0, 0].numpy().astype(labels.dtype)


def labels_to_onehot_array(labels: np.ndarray, n_classes: int,
                           resolution: int, dtype: torch.dtype) -> torch.Tensor:
    labels = resize_labels(labels, resolution)
    t = torch.as_tensor(labels.astype(np.int64))
    return F.one_hot(t, n_classes).permute(2, 0, 1).to(dtype)


def rgb_to_tensor(rgb: np.ndarray, resolution: int, dtype: torch.dtype) -> torch.Tensor:
    t = torch.as_tensor(rgb.astype(np.float32) / 127.5 - 1.0).permute(2, 0, 1)
    if t.shape[-1] != resolution:
        t = F.interpolate(t[None], size=(resolution, resolution), mode="bilinear",
                          align_corners=False)[0]
    return t.to(dtype)


def records_to_batch(records: list[PacRecord], map_resolution: int,
                     rgb_resolution: int, dtype: torch.dtype,
                     camera_cfg: CameraConfig | None = None
                     ) -> tuple[torch.Tensor, torch.Tensor, list[CameraPose]]:
    """Stack records into (payload batch, pose conditioning (B, 25), poses)."""
    payloads = []
    poses = []
    for rec in records:
        poses.append(pose_from_angles(rec.yaw, rec.pitch, camera_cfg))
        if rec.group == GROUP_RGB:
            payloads.append(rgb_to_tensor(rec.payload, rgb_resolution, dtype))
        elif rec.group == GROUP_PORTRAIT:
            payloads.append(labels_to_onehot_array(
                rec.payload, len(PORTRAIT_CLASSES), map_resolution, dtype))
        else:
            payloads.append(labels_to_onehot_array(
                rec.payload, len(ACCESSORY_CLASSES), map_resolution, dtype))
    cond = torch.stack([torch.as_tensor(p.conditioning_vector(), dtype=dtype)
                        for p in poses])
    return torch.stack(payloads), cond, poses
