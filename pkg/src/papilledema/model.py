"""Tri-branch embedding classifier.

Each view (original crop, red-contrast, green-contrast) runs through its own
backbone and a linear 128-D projection; the three embeddings are concatenated
(original, red, green) and a single affine layer maps the 384-D vector to a
logit. Backbones are frozen: only projections and the classifier train.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .seeding import rng_for

EMBED_DIM = 128
N_BRANCHES = 3
BRANCH_NAMES = ("original", "red", "green")
DTYPE = torch.float64

_MAGIC = b"PAPT"
_VERSION = 1


@dataclass(frozen=True)
class BackboneSpec:
    name: str = "smallcnn"
    input_size: int = 64
    feature_dim: int = 128

    def __post_init__(self):
        if self.input_size < 32:
            raise ValueError("input_size must be >= 32")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        if self.name != "smallcnn":
            raise ValueError(f"unknown backbone {self.name!r}")


@dataclass(frozen=True)
class EmbeddingSet:
    v: np.ndarray
    v_red: np.ndarray
    v_green: np.ndarray
    fused: np.ndarray
    logit: float
    probability: float


class Backbone(nn.Module):
    """Four conv-ReLU-maxpool stages (16/32/64/B channels) and global
    average pooling."""

    def __init__(self, feature_dim=128):
        super().__init__()
        widths = (3, 16, 32, 64, feature_dim)
        self.convs = nn.ModuleList(
            nn.Conv2d(cin, cout, 3, padding=1, dtype=DTYPE) for cin, cout in zip(widths, widths[1:])
        )

    def forward(self, x):
        for conv in self.convs:
            x = F.max_pool2d(F.relu(conv(x)), 2)
        return x.mean(dim=(2, 3))


class Branch(nn.Module):
    def __init__(self, feature_dim=128):
        super().__init__()
        self.backbone = Backbone(feature_dim)
        self.projection = nn.Linear(feature_dim, EMBED_DIM, dtype=DTYPE)

    def forward(self, x):
        return self.projection(self.backbone(x))


class TriBranchNet(nn.Module):
    def __init__(self, spec: BackboneSpec = BackboneSpec()):
        super().__init__()
        self.spec = spec
        self.branches = nn.ModuleList(Branch(spec.feature_dim) for _ in range(N_BRANCHES))
        self.classifier = nn.Linear(N_BRANCHES * EMBED_DIM, 1, dtype=DTYPE)

    def features(self, x, x_red, x_green):
        """Backbone outputs per branch, shape (N, B) each."""
        return tuple(b.backbone(t) for b, t in zip(self.branches, (x, x_red, x_green)))

    def head(self, f, f_red, f_green):
        """Projection, fusion and classifier on precomputed backbone features.

        Returns ``(v, v_red, v_green, fused, logit)`` with ``logit`` of shape (N,).
        """
        v, v_red, v_green = (b.projection(t) for b, t in zip(self.branches, (f, f_red, f_green)))
        fused = torch.cat([v, v_red, v_green], dim=1)
        return v, v_red, v_green, fused, self.classifier(fused).squeeze(1)

    def forward(self, x, x_red, x_green):
        return self.head(*self.features(x, x_red, x_green))

    # parameter partition

    def frozen_parameters(self):
        return {n: p for n, p in self.named_parameters() if ".backbone." in n}

    def trainable_parameters(self):
        return {n: p for n, p in self.named_parameters() if ".backbone." not in n}

    def freeze_backbones(self):
        for p in self.frozen_parameters().values():
            p.requires_grad_(False)
        return self


def build_model(spec: BackboneSpec = BackboneSpec(), seed=0) -> TriBranchNet:
    """He-uniform weights from per-tensor seeded streams, zero biases,
    frozen backbones."""
    model = TriBranchNet(spec)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("bias"):
                p.zero_()
                continue
            fan_in = int(np.prod(p.shape[1:]))
            bound = math.sqrt(6.0 / fan_in)
            values = rng_for(seed, "init", name).uniform(-bound, bound, tuple(p.shape))
            p.copy_(torch.from_numpy(values))
    return model.freeze_backbones()


def to_input(img: np.ndarray, size: int) -> torch.Tensor:
    """(H, W, 3) image -> (3, size, size) tensor via bilinear resampling."""
    t = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1), dtype=np.float64))
    if t.shape[1:] == (size, size):
        return t
    out = F.interpolate(t[None], size=(size, size), mode="bilinear", align_corners=False,
                        antialias=True)[0]
    return out.clamp_(0.0, 1.0)


def backbone_forward(model: TriBranchNet, branch: int, x: torch.Tensor) -> torch.Tensor:
    return model.branches[branch].backbone(x)


def project(model: TriBranchNet, branch: int, feature: torch.Tensor) -> torch.Tensor:
    return model.branches[branch].projection(feature)


def forward(model: TriBranchNet, tv) -> EmbeddingSet:
    """Embed one TriView."""
    size = model.spec.input_size
    xs = [to_input(im, size)[None] for im in (tv.original, tv.red_view, tv.green_view)]
    with torch.no_grad():
        v, v_red, v_green, fused, logit = model(*xs)
    logit = float(logit[0])
    return EmbeddingSet(
        v=v[0].numpy(), v_red=v_red[0].numpy(), v_green=v_green[0].numpy(), fused=fused[0].numpy(),
        logit=logit, probability=float(torch.sigmoid(torch.tensor(logit, dtype=DTYPE))),
    )


# parameter container


def save_params(model: TriBranchNet, path) -> None:
    """Write all tensors: file header, then per tensor a JSON header
    ``{name, dtype, shape}`` and its little-endian row-major float64 payload."""
    state = model.state_dict()
    header = json.dumps({"spec": asdict(model.spec), "count": len(state)},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", _VERSION, len(header)) + header)
        for name, t in state.items():
            arr = np.ascontiguousarray(t.detach().numpy(), dtype="<f8")
            th = json.dumps({"name": name, "dtype": "float64", "shape": list(arr.shape)},
                            sort_keys=True, separators=(",", ":")).encode()
            fh.write(struct.pack("<I", len(th)) + th + arr.tobytes())


def read_container(path):
    """Return ``(spec_dict, {name: ndarray})`` from a container file."""
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a parameter container")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    pos = 12
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    tensors = {}
    for _ in range(header["count"]):
        (tlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        th = json.loads(data[pos:pos + tlen])
        pos += tlen
        n = int(np.prod(th["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(th["shape"])
        pos += 8 * n
        tensors[th["name"]] = arr.astype(np.float64)
    return header["spec"], tensors


def load_params(path, spec: BackboneSpec | None = None) -> TriBranchNet:
    """Load a container into a fresh model built for ``spec`` (defaults to
    the backbone settings recorded in the file)."""
    stored_spec, tensors = read_container(path)
    spec = spec or BackboneSpec(**stored_spec)
    model = TriBranchNet(spec)
    expected = model.state_dict()
    for name, t in expected.items():
        if name not in tensors:
            raise KeyError(f"parameter container is missing tensor {name!r}")
        if tuple(tensors[name].shape) != tuple(t.shape):
            raise ValueError(f"shape mismatch for {name!r}: file has {tuple(tensors[name].shape)}, "
                             f"model expects {tuple(t.shape)}")
    extra = set(tensors) - set(expected)
    if extra:
        raise KeyError(f"parameter container has unexpected tensors {sorted(extra)}")
    model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
    return model.freeze_backbones()
