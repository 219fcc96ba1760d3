"""PNG and manifest I/O."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .types import DatasetManifest, ImageError, Label, ManifestRecord, check_fundus


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB PNG into an ``(H, W, 3)`` float image in [0, 1]."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("RGB", "RGBA"):
                raise ImageError(f"{path}: expected RGB content, got mode {im.mode}")
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise ImageError(f"cannot read image {path}: {exc}") from exc
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ImageError(f"{path}: zero-dimension image")
    return arr.astype(np.float64) / 255.0


def to_bytes(img: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] values to uint8 with round-half-up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    check_fundus(img)
    Image.fromarray(to_bytes(img), mode="RGB").save(path, format="PNG")


def save_mask(mask: np.ndarray, path) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def parse_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed manifest JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("records"), list):
        raise ValueError(f"{path}: manifest must be an object with a 'records' list")
    if not doc["records"]:
        raise ValueError(f"{path}: manifest has no records")
    records = []
    for i, rec in enumerate(doc["records"]):
        try:
            records.append(ManifestRecord(
                image_path=path.parent / rec["image"],
                subject_id=str(rec["subject"]),
                label=Label.from_name(rec["label"]),
            ))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: record {i} is missing field {exc}") from exc
    return DatasetManifest(records)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    root = path.parent.resolve()
    records = [
        {
            "image": os.path.relpath(Path(r.image_path).resolve(), root),
            "subject": r.subject_id,
            "label": r.label.slug,
        }
        for r in manifest.records
    ]
    path.write_text(json.dumps({"records": records}, indent=1) + "\n")
