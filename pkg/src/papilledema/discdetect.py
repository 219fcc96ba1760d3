"""Unsupervised optic-disc localization.

Pipeline: equalized red channel -> retina mask -> minimum enclosing circle
-> circle crop at 0.8 radius -> bright-region disc mask -> component
validation by area and eccentricity -> enlarged bounding box. When no
component validates, the circle crop itself is the proposal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import eccentricity_from_sums, min_enclosing_circle
from .types import BoundingBox, Circle, check_fundus, check_gray

N_BINS = 256


class EmptyRetinaError(ValueError):
    """The retina threshold selected no pixels."""


@dataclass(frozen=True)
class MorphologyConfig:
    open_radius_frac: float = 0.01
    close_radius_frac: float = 0.02
    mean_filter_radius_frac: float = 0.015
    box_enlarge: float = 1.5
    eccentricity_max: float = 0.95
    area_min_frac: float = 0.001
    area_max_frac: float = 0.25

    def __post_init__(self):
        for name in ("open_radius_frac", "close_radius_frac", "mean_filter_radius_frac",
                     "box_enlarge", "area_min_frac", "area_max_frac"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.area_min_frac < self.area_max_frac:
            raise ValueError("area_min_frac must be smaller than area_max_frac")
        if not 0.0 < self.eccentricity_max < 1.0:
            raise ValueError("eccentricity_max must lie in (0, 1)")

    def radius(self, frac, shape):
        return max(1, int(round(frac * min(shape[:2]))))


@dataclass(frozen=True)
class Component:
    mask: np.ndarray
    area: int
    eccentricity: float
    box: BoundingBox


@dataclass(frozen=True)
class DiscProposal:
    crop: np.ndarray
    source_box: BoundingBox
    used_fallback: bool
    retina_circle: Circle
    disc_mask: np.ndarray
    retina_mask: np.ndarray
    area: int | None = None
    eccentricity: float | None = None

    def sidecar(self):
        return {
            "box": self.source_box.to_list(),
            "used_fallback": self.used_fallback,
            "area": self.area,
            "eccentricity": self.eccentricity,
            "retina_circle": self.retina_circle.to_dict(),
        }


def equalized_red(img: np.ndarray) -> np.ndarray:
    """Global 256-bin histogram equalization of the red plane.

    Each value maps to the fraction of pixels in its bin or below. A plane
    occupying a single bin has nothing to spread and is returned unchanged,
    so an all-black image stays black.
    """
    check_fundus(img)
    bins = np.clip(np.floor(img[..., 0] * (N_BINS - 1) + 0.5), 0, N_BINS - 1).astype(np.intp)
    hist = np.bincount(bins.ravel(), minlength=N_BINS)
    if np.count_nonzero(hist) == 1:
        return img[..., 0].copy()
    cdf = np.cumsum(hist) / bins.size
    return cdf[bins]


def retina_mask(gray: np.ndarray, cfg: MorphologyConfig = MorphologyConfig()) -> np.ndarray:
    check_gray(gray)
    mask = gray > 0.2 * gray.mean()
    if not mask.any():
        raise EmptyRetinaError("retina threshold selected no pixels")
    mask = kernels.opening(mask, cfg.radius(cfg.open_radius_frac, gray.shape))
    return kernels.closing(mask, cfg.radius(cfg.close_radius_frac, gray.shape))


def fit_retina_circle(mask: np.ndarray) -> Circle:
    return min_enclosing_circle(mask)


def circle_box(shape, c: Circle, shrink=0.8):
    h, w = shape[:2]
    rr = shrink * c.r
    x0, x1 = int(round(c.cx - rr)), int(round(c.cx + rr))
    y0, y1 = int(round(c.cy - rr)), int(round(c.cy + rr))
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, w), min(y1, h)
    if x0 >= x1 or y0 >= y1:
        raise ValueError(f"circle {c} lies outside the {w}x{h} image")
    return BoundingBox(x0, y0, x1, y1)


def crop_circle(img: np.ndarray, c: Circle, shrink: float = 0.8) -> np.ndarray:
    """Square crop of side ``2 * shrink * r`` around the circle, with pixels
    beyond ``shrink * r`` from the centre zeroed."""
    box = circle_box(img.shape, c, shrink)
    crop = box.slice(img).copy()
    yy, xx = np.mgrid[box.y0:box.y1, box.x0:box.x1]
    outside = (xx - c.cx) ** 2 + (yy - c.cy) ** 2 > (shrink * c.r) ** 2
    crop[outside] = 0.0
    return crop


def disc_mask(crop: np.ndarray, cfg: MorphologyConfig = MorphologyConfig()) -> np.ndarray:
    red = crop[..., 0]
    smooth = kernels.disk_mean(red, cfg.radius(cfg.mean_filter_radius_frac, red.shape))
    mask = smooth > 0.99 * smooth.max()
    mask = kernels.opening(mask, cfg.radius(cfg.open_radius_frac, red.shape))
    return kernels.closing(mask, cfg.radius(cfg.close_radius_frac, red.shape))


def components(mask: np.ndarray):
    """Yield ``(label, area, eccentricity, box)`` for each 8-connected
    component; eccentricity is ``None`` when undefined."""
    labels, n = kernels.label8(mask)
    area, sx, sy, sxx, sxy, syy, xmin, ymin, xmax, ymax = kernels.region_sums(labels, n)
    for k in range(1, n + 1):
        ecc = eccentricity_from_sums(area[k], sx[k], sy[k], sxx[k], sxy[k], syy[k])
        box = BoundingBox(int(xmin[k]), int(ymin[k]), int(xmax[k]) + 1, int(ymax[k]) + 1)
        yield labels, k, int(area[k]), ecc, box


def select_component(mask: np.ndarray, cfg: MorphologyConfig = MorphologyConfig()):
    """Largest component with a defined, non-zero eccentricity not above
    ``eccentricity_max``, or ``None`` if there is none or its area fraction
    falls outside the admissible window."""
    best = None
    for labels, k, area, ecc, box in components(mask):
        if not ecc or ecc > cfg.eccentricity_max:
            continue
        if best is None or area > best[2]:
            best = (labels, k, area, ecc, box)
    if best is None:
        return None
    labels, k, area, ecc, box = best
    frac = area / mask.size
    if not cfg.area_min_frac <= frac <= cfg.area_max_frac:
        return None
    return Component(labels == k, area, ecc, box)


def enlarge_box(box: BoundingBox, factor, width, height) -> BoundingBox:
    cx, cy = (box.x0 + box.x1) / 2.0, (box.y0 + box.y1) / 2.0
    hw, hh = factor * box.width / 2.0, factor * box.height / 2.0
    x0 = max(0, int(np.floor(cx - hw)))
    y0 = max(0, int(np.floor(cy - hh)))
    x1 = min(width, int(np.ceil(cx + hw)))
    y1 = min(height, int(np.ceil(cy + hh)))
    return BoundingBox(x0, y0, x1, y1)


def propose_disc(img: np.ndarray, cfg: MorphologyConfig = MorphologyConfig()) -> DiscProposal:
    check_fundus(img)
    rmask = retina_mask(equalized_red(img), cfg)
    circle = fit_retina_circle(rmask)
    cbox = circle_box(img.shape, circle)
    crop = crop_circle(img, circle)
    dmask = disc_mask(crop, cfg)
    comp = select_component(dmask, cfg)
    if comp is None:
        return DiscProposal(crop=crop, source_box=cbox, used_fallback=True, retina_circle=circle,
                            disc_mask=np.zeros_like(dmask), retina_mask=rmask)
    local = enlarge_box(comp.box, cfg.box_enlarge, crop.shape[1], crop.shape[0])
    box = BoundingBox(local.x0 + cbox.x0, local.y0 + cbox.y0, local.x1 + cbox.x0, local.y1 + cbox.y0)
    return DiscProposal(crop=box.slice(img).copy(), source_box=box, used_fallback=False,
                        retina_circle=circle, disc_mask=comp.mask, retina_mask=rmask,
                        area=comp.area, eccentricity=comp.eccentricity)
