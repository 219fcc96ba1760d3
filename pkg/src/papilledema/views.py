"""Red/green contrast views of a disc crop."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

FACTOR_MIN = 1.5
FACTOR_MAX = 1.8
CHANNELS = {"red": 0, "green": 1}


class ViewMode(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class TriView:
    original: np.ndarray
    red_view: np.ndarray
    green_view: np.ndarray
    factors: tuple

    def __post_init__(self):
        if not self.original.shape == self.red_view.shape == self.green_view.shape:
            raise ValueError("views must share dimensions")


def adjust_channel_contrast(img: np.ndarray, channel: str, factor: float) -> np.ndarray:
    """Stretch one colour plane about its mean by ``factor``, clamped to [0, 1]."""
    if not factor > 0:
        raise ValueError("contrast factor must be positive")
    idx = CHANNELS[channel]
    out = img.copy()
    plane = img[..., idx]
    mu = plane.mean()
    out[..., idx] = np.clip(mu + factor * (plane - mu), 0.0, 1.0)
    return out


def sample_factor(rng: np.random.Generator, mode: ViewMode) -> float:
    if mode is ViewMode.EVAL:
        return FACTOR_MIN
    return float(rng.uniform(FACTOR_MIN, FACTOR_MAX))


def make_views(img: np.ndarray, rng: np.random.Generator | None, mode: ViewMode) -> TriView:
    f_red = sample_factor(rng, mode)
    f_green = sample_factor(rng, mode)
    return TriView(
        original=img,
        red_view=adjust_channel_contrast(img, "red", f_red),
        green_view=adjust_channel_contrast(img, "green", f_green),
        factors=(f_red, f_green),
    )
