"""Shared domain types.

Rasters are plain numpy arrays rather than wrapper classes:

* fundus image: ``float64`` array of shape ``(H, W, 3)`` (red, green, blue),
  values in ``[0, 1]``
* gray image: ``float64`` array ``(H, W)`` in ``[0, 1]``
* binary mask: ``bool`` array ``(H, W)``

Pixel ``(x, y)`` is the unit square centred on integer coordinates, with
``x`` the column and ``y`` the row.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ImageError(ValueError):
    """Raised for rasters that violate the fundus/gray image contract."""


def check_fundus(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"expected an (H, W, 3) RGB image, got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ImageError("image has a zero dimension")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ImageError("intensities must lie in [0, 1]")
    return img


def check_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim != 2 or img.shape[0] == 0 or img.shape[1] == 0:
        raise ImageError(f"expected a non-empty (H, W) image, got shape {img.shape}")
    return img


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"circle radius must be positive, got {self.r}")

    def to_dict(self):
        return {"cx": self.cx, "cy": self.cy, "r": self.r}


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel box: columns ``x0 <= x < x1``, rows ``y0 <= y < y1``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box {self}")

    @property
    def center(self):
        return ((self.x0 + self.x1 - 1) / 2.0, (self.y0 + self.y1 - 1) / 2.0)

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    def within(self, width, height):
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 <= width and self.y1 <= height

    def slice(self, img):
        return img[self.y0:self.y1, self.x0:self.x1]

    def to_list(self):
        return [self.x0, self.y0, self.x1, self.y1]


class Label(enum.IntEnum):
    PSEUDOPAPILLEDEMA = 0
    PAPILLEDEMA = 1

    @classmethod
    def from_name(cls, name: str) -> "Label":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown label {name!r}") from None

    @property
    def slug(self):
        return self.name.lower()


@dataclass(frozen=True)
class ManifestRecord:
    image_path: Path
    subject_id: str
    label: Label

    def __post_init__(self):
        if not self.subject_id:
            raise ValueError("subject_id must be non-empty")


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def labels(self):
        return np.array([int(r.label) for r in self.records], dtype=np.int64)

    @property
    def subjects(self):
        """Distinct subject ids in first-appearance order."""
        return list(dict.fromkeys(r.subject_id for r in self.records))

    def subject_labels(self):
        out = {}
        for r in self.records:
            prev = out.setdefault(r.subject_id, r.label)
            if prev != r.label:
                raise ValueError(f"subject {r.subject_id} has images with both labels")
        return out

    def select_subjects(self, subjects) -> "DatasetManifest":
        keep = set(subjects)
        return DatasetManifest([r for r in self.records if r.subject_id in keep])
