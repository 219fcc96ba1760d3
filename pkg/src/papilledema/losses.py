"""Cross-entropy, cosine triplet terms and the two-phase objective.

Functions accept torch tensors so gradients flow; plain floats and numpy
arrays are converted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    phase1_triplet: float = 0.5  # lambda2 = lambda3 before the switch
    lambda1: float = 1.0
    lambda2: float = 0.05
    lambda3: float = 0.05
    margin: float = 0.3
    phase_switch_epoch: int = 10
    total_epochs: int = 50

    def __post_init__(self):
        if min(self.phase1_triplet, self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.lambda1 < 10 * max(self.lambda2, self.lambda3):
            raise ValueError("supervised phase needs lambda1 >= 10 * max(lambda2, lambda3)")
        if not 1 <= self.phase_switch_epoch < self.total_epochs:
            raise ValueError("need 1 <= phase_switch_epoch < total_epochs")

    def phase(self, epoch):
        return 1 if epoch <= self.phase_switch_epoch else 2

    def weights(self, epoch):
        """(lambda1, lambda2, lambda3) active at ``epoch``."""
        if self.phase(epoch) == 1:
            return 0.0, self.phase1_triplet, self.phase1_triplet
        return self.lambda1, self.lambda2, self.lambda3


def _t(x):
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def cross_entropy(prob, y):
    """Binary cross-entropy, elementwise; ``prob`` clamped to [1e-12, 1 - 1e-12]."""
    p = _t(prob).clamp(EPS, 1.0 - EPS)
    y = _t(y).to(p.dtype)
    return -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p))


def cosine_distance(a, b):
    """1 - cos(a, b) along the last axis; zero vectors are an error."""
    a, b = _t(a), _t(b)
    na = torch.linalg.vector_norm(a, dim=-1)
    nb = torch.linalg.vector_norm(b, dim=-1)
    if bool((na == 0).any()) or bool((nb == 0).any()):
        raise ValueError("cosine distance is undefined for zero vectors")
    return 1.0 - (a * b).sum(dim=-1) / (na * nb)


def triplet(anchor, positive, negative, margin=0.3):
    d_pos = cosine_distance(anchor, positive)
    d_neg = cosine_distance(anchor, negative)
    return torch.clamp(d_pos - d_neg + margin, min=0.0)


def random_derangement(n, rng: np.random.Generator):
    """Uniform random permutation with no fixed points (rejection sampling)."""
    if n < 2:
        raise ValueError("a derangement needs at least two elements")
    while True:
        perm = rng.permutation(n)
        if not (perm == np.arange(n)).any():
            return perm


def batch_triplet_terms(v, v_red, v_green, negatives, margin=0.3):
    """Mean triplet losses (J2, J3) with the original-view embedding as
    anchor, its own augmented views as positives and the augmented views of
    sample ``negatives[i]`` as negatives."""
    n = len(v)
    if n < 2:
        raise ValueError("triplet terms need a batch of at least two samples")
    neg = torch.as_tensor(np.asarray(negatives), dtype=torch.long)
    if bool((neg == torch.arange(n)).any()):
        raise ValueError("negative assignment must not map a sample to itself")
    j2 = triplet(v, v_red, v_red[neg], margin).mean()
    j3 = triplet(v, v_green, v_green[neg], margin).mean()
    return j2, j3


def combined_loss(epoch, j1, j2, j3, w: LossWeights):
    if epoch < 1:
        raise ValueError("epochs are numbered from 1")
    l1, l2, l3 = w.weights(epoch)
    if w.phase(epoch) == 1:
        return l2 * j2 + l3 * j3
    return l1 * j1 + l2 * j2 + l3 * j3
