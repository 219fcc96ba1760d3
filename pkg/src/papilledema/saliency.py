"""Input-gradient saliency per branch and heat-map overlays."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .io import to_bytes
from .model import BRANCH_NAMES, TriBranchNet, to_input
from .views import TriView

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray  # (H, W), in [0, 1]

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def input_gradient_saliency(model: TriBranchNet, tv: TriView, branch: str) -> SaliencyMap:
    """|d logit / d pixel| of the chosen branch input, max over channels,
    scaled so the peak is 1 (an all-zero gradient stays all zero)."""
    if branch not in BRANCH_NAMES:
        raise ValueError(f"branch must be one of {BRANCH_NAMES}, got {branch!r}")
    k = BRANCH_NAMES.index(branch)
    size = model.spec.input_size
    xs = [to_input(im, size)[None] for im in (tv.original, tv.red_view, tv.green_view)]
    xs[k].requires_grad_(True)
    logit = model(*xs)[4][0]
    (grad,) = torch.autograd.grad(logit, xs[k])
    score = grad[0].abs().amax(dim=0).numpy()
    peak = score.max()
    if peak > 0:
        score = score / peak
    return SaliencyMap(score)


def heat(values: np.ndarray) -> np.ndarray:
    """Linear blue-to-red ramp: v -> (v, 0, 1 - v)."""
    return np.stack([values, np.zeros_like(values), 1.0 - values], axis=-1)


def grayscale(img: np.ndarray) -> np.ndarray:
    return np.repeat((img @ LUMA)[..., None], 3, axis=-1)


def resize_map(smap: SaliencyMap, height: int, width: int) -> np.ndarray:
    if smap.values.shape == (height, width):
        return smap.values
    t = torch.from_numpy(np.ascontiguousarray(smap.values, dtype=np.float64))[None, None]
    out = F.interpolate(t, size=(height, width), mode="bilinear", align_corners=False)
    return out[0, 0].clamp(0.0, 1.0).numpy()


def overlay(smap: SaliencyMap, img: np.ndarray, alpha=0.5) -> np.ndarray:
    """``(1 - alpha) * gray(img) + alpha * heat(map)``, map resized to the image."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    values = resize_map(smap, img.shape[0], img.shape[1])
    return (1.0 - alpha) * grayscale(img) + alpha * heat(values)


def panel(model: TriBranchNet, tv: TriView, alpha=0.5, gap=4) -> np.ndarray:
    """Crop followed by the three branch overlays, side by side."""
    tiles = [tv.original]
    for name, img in zip(BRANCH_NAMES, (tv.original, tv.red_view, tv.green_view)):
        tiles.append(overlay(input_gradient_saliency(model, tv, name), img, alpha))
    h = tv.original.shape[0]
    spacer = np.ones((h, gap, 3))
    row = [tiles[0]]
    for t in tiles[1:]:
        row += [spacer, t]
    return np.concatenate(row, axis=1)


def save_panel(model: TriBranchNet, tv: TriView, path, alpha=0.5):
    Image.fromarray(to_bytes(panel(model, tv, alpha))).save(path)
