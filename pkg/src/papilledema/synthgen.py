"""Synthetic fundus-like images with known disc geometry.

Positive (papilledema) images carry three simple, channel-localized proxies
near the disc: a blurred and enlarged disc margin (swelling), red-dominant
blobs at the rim (hemorrhage) and thickened, wavier vessels near the disc
(congestion). Each proxy is drawn independently with probability
``class_effect``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .io import save_image, write_manifest
from .seeding import derive_seed, rng_for
from .types import Circle, DatasetManifest, Label, ManifestRecord

RETINA_RGB = np.array([0.40, 0.20, 0.08])
DISC_RGB = np.array([0.95, 0.80, 0.55])
HEMORRHAGE_RGB = np.array([0.80, 0.10, 0.06])
# fractional darkening of (r, g, b) under a vessel; red barely sees vessels
VESSEL_ABSORB = np.array([0.03, 0.50, 0.35])
BACKGROUND_LEVEL = 0.04
POSITIVE_FRACTION = 0.45


@dataclass(frozen=True)
class SynthParams:
    image_size: int = 512
    retina_radius_frac: float = 0.92
    disc_radius_frac: float = 0.12
    vessel_count: int = 8
    noise_sigma: float = 0.02
    class_effect: float = 0.7
    render_disc: bool = True

    def __post_init__(self):
        if self.image_size < 64:
            raise ValueError("image_size must be >= 64")
        for name in ("retina_radius_frac", "disc_radius_frac"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not 0.0 <= self.class_effect <= 1.0:
            raise ValueError("class_effect must lie in [0, 1]")
        if self.vessel_count < 0 or self.noise_sigma < 0:
            raise ValueError("vessel_count and noise_sigma must be non-negative")


@dataclass(frozen=True)
class SynthTruth:
    disc: Circle
    retina: Circle
    label: Label
    indicators: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "cx": self.disc.cx, "cy": self.disc.cy, "r": self.disc.r,
            "label": self.label.slug,
            "indicators": dict(self.indicators),
            "retina": self.retina.to_dict(),
        }


@dataclass(frozen=True)
class Layout:
    """Subject-level appearance: shared by all images of one subject."""

    retina_shift: tuple
    brightness: float
    disc_angle: float
    disc_dist: float  # fraction of retina radius
    vessel_angles: tuple
    vessel_bends: tuple
    vessel_widths: tuple

    @classmethod
    def draw(cls, rng, params: SynthParams):
        size = params.image_size
        side = rng.choice([0.0, math.pi])
        n = params.vessel_count
        base = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False) if n else np.zeros(0)
        return cls(
            retina_shift=tuple(rng.uniform(-0.015, 0.015, 2) * size),
            brightness=float(rng.uniform(0.93, 1.04)),
            disc_angle=float(side + rng.uniform(-0.35, 0.35)),
            disc_dist=float(rng.uniform(0.28, 0.42)),
            vessel_angles=tuple(base + rng.uniform(-0.3, 0.3, n)),
            vessel_bends=tuple(rng.uniform(-0.9, 0.9, n)),
            vessel_widths=tuple(rng.uniform(3.0, 5.0, n) * size / 512.0),
        )

    def jittered(self, rng, params: SynthParams):
        size = params.image_size
        return Layout(
            retina_shift=tuple(np.asarray(self.retina_shift) + rng.normal(0.0, 0.003 * size, 2)),
            brightness=float(self.brightness * rng.uniform(0.98, 1.02)),
            disc_angle=float(self.disc_angle + rng.normal(0.0, 0.03)),
            disc_dist=float(np.clip(self.disc_dist + rng.normal(0.0, 0.01), 0.25, 0.45)),
            vessel_angles=tuple(np.asarray(self.vessel_angles) + rng.normal(0.0, 0.03, len(self.vessel_angles))),
            vessel_bends=self.vessel_bends,
            vessel_widths=self.vessel_widths,
        )


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _vessel_canvas(params, layout, disc_xy, disc_r, retina_xy, retina_r, congested):
    size = params.image_size
    canvas = np.zeros((size, size), dtype=np.float32)
    step = max(2.0, size / 128.0)
    for ang, bend, width in zip(layout.vessel_angles, layout.vessel_bends, layout.vessel_widths):
        # vessels emerge from the rim of the central cup
        x = disc_xy[0] + 0.7 * disc_r * math.cos(ang)
        y = disc_xy[1] + 0.7 * disc_r * math.sin(ang)
        heading = ang
        travelled = 0.0
        reach = 1.6 * retina_r
        while travelled < reach:
            heading += bend * step / retina_r
            nx = x + step * math.cos(heading)
            ny = y + step * math.sin(heading)
            travelled += step
            near = math.hypot(nx - disc_xy[0], ny - disc_xy[1]) < 2.5 * disc_r
            w = width * (1.0 - 0.5 * travelled / reach)
            if congested and near:
                w *= 2.5
                # tortuosity: lateral wiggle near the disc
                nx += 0.6 * math.sin(travelled / 4.0) * math.cos(heading + math.pi / 2)
                ny += 0.6 * math.sin(travelled / 4.0) * math.sin(heading + math.pi / 2)
            if math.hypot(nx - retina_xy[0], ny - retina_xy[1]) > retina_r:
                break
            cv2.line(canvas, (int(round(x * 16)), int(round(y * 16))),
                     (int(round(nx * 16)), int(round(ny * 16))), 1.0,
                     thickness=max(1, int(round(w))), lineType=cv2.LINE_AA, shift=4)
            x, y = nx, ny
    canvas = cv2.GaussianBlur(canvas, (0, 0), 0.8)
    return np.clip(canvas.astype(np.float64), 0.0, 1.0)


def _render(rng, params: SynthParams, label: Label, layout: Layout):
    size = params.image_size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    centre = (size - 1) / 2.0
    rcx, rcy = centre + layout.retina_shift[0], centre + layout.retina_shift[1]
    big_r = params.retina_radius_frac * size / 2.0
    disc_r = params.disc_radius_frac * big_r
    dcx = rcx + layout.disc_dist * big_r * math.cos(layout.disc_angle)
    dcy = rcy + layout.disc_dist * big_r * math.sin(layout.disc_angle)

    positive = label == Label.PAPILLEDEMA
    indicators = {
        name: bool(positive and rng.random() < params.class_effect)
        for name in ("swelling", "hemorrhage", "congestion")
    }

    rho = np.hypot(xx - rcx, yy - rcy)
    retina_alpha = np.clip(big_r - rho + 0.5, 0.0, 1.0)
    rim = 1.0 - 0.3 * _smoothstep((rho - 0.85 * big_r) / (0.15 * big_r))
    img = (RETINA_RGB * layout.brightness)[None, None, :] * rim[..., None]

    if params.render_disc:
        dist = np.hypot(xx - dcx, yy - dcy)
        if indicators["swelling"]:
            inner, outer = 0.75 * disc_r, 1.5 * disc_r
        else:
            inner, outer = disc_r - 1.0, disc_r + 1.0
        p = 1.0 - _smoothstep((dist - inner) / (outer - inner))
        disc_rgb = DISC_RGB * layout.brightness
        img = img * (1.0 - p[..., None]) + disc_rgb[None, None, :] * p[..., None]

    if indicators["hemorrhage"]:
        for _ in range(int(rng.integers(3, 7))):
            a = rng.uniform(0.0, 2.0 * math.pi)
            d = rng.uniform(0.85, 1.15) * disc_r
            hx, hy = dcx + d * math.cos(a), dcy + d * math.sin(a)
            # flame-shaped: long axis tangential to the disc rim
            u = (xx - hx) * math.cos(a) + (yy - hy) * math.sin(a)
            v = -(xx - hx) * math.sin(a) + (yy - hy) * math.cos(a)
            blob = 0.9 * np.exp(-0.5 * ((u / (0.15 * disc_r)) ** 2 + (v / (0.35 * disc_r)) ** 2))
            img = img * (1.0 - blob[..., None]) + (HEMORRHAGE_RGB * layout.brightness)[None, None, :] * blob[..., None]

    if params.vessel_count:
        vessels = _vessel_canvas(params, layout, (dcx, dcy), disc_r, (rcx, rcy), big_r,
                                 indicators["congestion"])
        img = img * (1.0 - vessels[..., None] * VESSEL_ABSORB[None, None, :])

    img = img * retina_alpha[..., None] + BACKGROUND_LEVEL * (1.0 - retina_alpha[..., None])
    if params.noise_sigma > 0:
        img = img + rng.normal(0.0, params.noise_sigma, img.shape)
    img = np.clip(img, 0.0, 1.0)

    truth = SynthTruth(
        disc=Circle(float(dcx), float(dcy), float(disc_r)),
        retina=Circle(float(rcx), float(rcy), float(big_r)),
        label=Label(int(label)),
        indicators=indicators,
    )
    return img, truth


def generate_fundus(seed, params: SynthParams = SynthParams(), label=Label.PSEUDOPAPILLEDEMA,
                    layout: Layout | None = None):
    """Render one synthetic fundus image.

    Returns ``(image, truth)``. Without an explicit ``layout`` a fresh
    subject layout is drawn from the seed.
    """
    rng = rng_for(seed, "image")
    if layout is None:
        layout = Layout.draw(rng_for(seed, "layout"), params)
    return _render(rng, params, Label(int(label)), layout)


def generate_dataset(seed, n_subjects, images_per_subject, params: SynthParams, out_dir):
    """Write PNGs, ``manifest.json`` and ``truth.json`` under ``out_dir``.

    Subjects are class-pure; ``round(0.45 * n_subjects)`` of them are
    papilledema, assigned in a seeded random order. Images of one subject
    share a layout with small per-image jitter.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    n_pos = int(round(POSITIVE_FRACTION * n_subjects))
    labels = np.zeros(n_subjects, dtype=int)
    labels[rng_for(seed, "labels").permutation(n_subjects)[:n_pos]] = 1

    width = max(3, len(str(n_subjects - 1)))
    records, truth = [], {}
    for s in range(n_subjects):
        subject = f"S{s:0{width}d}"
        layout = Layout.draw(rng_for(seed, "subject", s), params)
        for i in range(images_per_subject):
            img_layout = layout.jittered(rng_for(seed, "jitter", s, i), params)
            img, t = generate_fundus(derive_seed(seed, "img", s, i), params, Label(int(labels[s])),
                                     img_layout)
            rel = f"images/{subject}_{i}.png"
            save_image(img, out_dir / rel)
            records.append(ManifestRecord(out_dir / rel, subject, t.label))
            truth[rel] = t.to_dict()
    manifest = DatasetManifest(records)
    write_manifest(manifest, out_dir / "manifest.json")
    (out_dir / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")
    return manifest


def params_dict(params: SynthParams):
    return asdict(params)
