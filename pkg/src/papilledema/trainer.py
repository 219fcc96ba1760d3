"""Two-phase training with AdamW and phase-2 early stopping."""
from __future__ import annotations

import contextlib
import copy
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .discdetect import MorphologyConfig, propose_disc
from .io import load_image
from .losses import LossWeights, batch_triplet_terms, combined_loss, cross_entropy, random_derangement
from .model import TriBranchNet, to_input
from .seeding import rng_for
from .types import DatasetManifest
from .views import ViewMode, make_views

log = logging.getLogger("papilledema")

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


class SplitError(ValueError):
    """Train/validation/test sets violate subject or class requirements."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    patience: int = 5
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (triplet negatives)")

    @property
    def total_epochs(self):
        return self.loss.total_epochs

    @property
    def phase_switch_epoch(self):
        return self.loss.phase_switch_epoch


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int | None = None

    def to_dict(self):
        return {"records": self.records, "stopped_early": self.stopped_early,
                "best_epoch": self.best_epoch}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    s: dict = field(default_factory=dict)


def optimizer_step(params, grads, state: AdamState, lr, weight_decay):
    """One AdamW update, in place on the tensors in ``params``.

    ``theta -= lr * (m_hat / (sqrt(s_hat) + eps) + weight_decay * theta)``
    """
    state.step += 1
    t = state.step
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m = state.m.get(name)
            if m is None:
                m = state.m[name] = torch.zeros_like(p)
                state.s[name] = torch.zeros_like(p)
            s = state.s[name]
            m.mul_(BETA1).add_(g, alpha=1.0 - BETA1)
            s.mul_(BETA2).addcmul_(g, g, value=1.0 - BETA2)
            m_hat = m / (1.0 - BETA1 ** t)
            s_hat = s / (1.0 - BETA2 ** t)
            p.sub_(lr * (m_hat / (s_hat.sqrt() + ADAM_EPS) + weight_decay * p))
    return params, state


@contextlib.contextmanager
def torch_threads(n):
    prev = torch.get_num_threads()
    torch.set_num_threads(n)
    try:
        yield
    finally:
        torch.set_num_threads(prev)


def detect_crops(manifest: DatasetManifest, morph: MorphologyConfig, cache=None, workers=1):
    """Disc-proposal crops keyed by image path (str). Reuses ``cache``."""
    cache = {} if cache is None else cache
    todo = [str(r.image_path) for r in manifest if str(r.image_path) not in cache]
    todo = list(dict.fromkeys(todo))

    def one(path):
        return propose_disc(load_image(path), morph).crop

    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(workers) as pool:
            crops = list(pool.map(one, todo))
    else:
        crops = [one(p) for p in todo]
    cache.update(zip(todo, crops))
    return cache


def check_split(train: DatasetManifest, val: DatasetManifest):
    overlap = set(train.subjects) & set(val.subjects)
    if overlap:
        raise SplitError(f"subjects on both sides of the split: {sorted(overlap)[:5]}")
    if len(set(train.labels.tolist())) < 2:
        raise SplitError("training set must contain both classes")
    if len(val) < 2:
        raise SplitError("validation set needs at least two images")


def _eval_inputs(crops, size):
    """Eval-mode (factor 1.5) input tensors for a list of crops."""
    xs = ([], [], [])
    for crop in crops:
        tv = make_views(crop, None, ViewMode.EVAL)
        for lst, im in zip(xs, (tv.original, tv.red_view, tv.green_view)):
            lst.append(to_input(im, size))
    return tuple(torch.stack(x) for x in xs)


def _batched_features(model, inputs, chunk=1):
    """Backbone features in chunks. The default of one sample per pass keeps a
    record's output independent of which other records share its batch."""
    out = []
    with torch.no_grad():
        for i in range(0, len(inputs[0]), chunk):
            out.append(model.features(*(x[i:i + chunk] for x in inputs)))
    return tuple(torch.cat(parts) for parts in zip(*out))


def _objective(model, feats, labels, negatives, epoch, w):
    v, v_red, v_green, _, logit = model.head(*feats)
    prob = torch.sigmoid(logit)
    j1 = cross_entropy(prob, labels).mean()
    j2, j3 = batch_triplet_terms(v, v_red, v_green, negatives, w.margin)
    return combined_loss(epoch, j1, j2, j3, w), prob


def train(model: TriBranchNet, train_set: DatasetManifest, val_set: DatasetManifest,
          cfg: TrainConfig = TrainConfig(), morph: MorphologyConfig = MorphologyConfig(),
          crops=None, workers=1):
    """Train projections and classifier; return ``(best_model, history)``.

    Epochs up to ``phase_switch_epoch`` optimize the triplet objective only;
    later epochs add cross-entropy. Early stopping watches the validation
    value of the active objective during phase 2 only and restores the best
    phase-2 parameters. ``model`` is not modified.
    """
    check_split(train_set, val_set)
    model = copy.deepcopy(model).freeze_backbones()
    frozen_before = {n: p.detach().clone() for n, p in model.frozen_parameters().items()}
    crops = detect_crops(DatasetManifest(train_set.records + val_set.records), morph, crops, workers)
    size = model.spec.input_size
    w = cfg.loss

    train_crops = [crops[str(r.image_path)] for r in train_set]
    y_train = torch.as_tensor(train_set.labels, dtype=torch.float64)
    originals = torch.stack([to_input(c, size) for c in train_crops])
    with torch.no_grad():
        f_orig = torch.cat([model.branches[0].backbone(originals[i:i + 64])
                            for i in range(0, len(originals), 64)])

    val_feats = _batched_features(model, _eval_inputs([crops[str(r.image_path)] for r in val_set], size))
    y_val = torch.as_tensor(val_set.labels, dtype=torch.float64)
    val_neg = random_derangement(len(val_set), rng_for(cfg.seed, "val-negatives"))

    params = model.trainable_parameters()
    state = AdamState()
    history = TrainHistory()
    best_loss, best_state, since_best = None, None, 0
    n = len(train_set)
    bs = min(cfg.batch_size, n)

    def views_for(epoch, i):
        tv = make_views(train_crops[i], rng_for(cfg.seed, "views", epoch, i), ViewMode.TRAIN)
        return to_input(tv.red_view, size), to_input(tv.green_view, size)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for epoch in range(1, cfg.total_epochs + 1):
            order = rng_for(cfg.seed, "order", epoch).permutation(n)
            losses = []
            for b in range(n // bs):
                idx = order[b * bs:(b + 1) * bs]
                jobs = [(epoch, int(i)) for i in idx]
                pairs = list(pool.map(lambda a: views_for(*a), jobs)) if pool else [views_for(*a) for a in jobs]
                x_red = torch.stack([p[0] for p in pairs])
                x_green = torch.stack([p[1] for p in pairs])
                with torch.no_grad():
                    f_red = model.branches[1].backbone(x_red)
                    f_green = model.branches[2].backbone(x_green)
                negatives = random_derangement(len(idx), rng_for(cfg.seed, "negatives", epoch, b))
                loss, _ = _objective(model, (f_orig[idx], f_red, f_green), y_train[idx], negatives, epoch, w)
                names = list(params)
                grads = torch.autograd.grad(loss, [params[k] for k in names], allow_unused=True)
                grads = {k: (g if g is not None else torch.zeros_like(params[k])) for k, g in zip(names, grads)}
                optimizer_step(params, grads, state, cfg.learning_rate, cfg.weight_decay)
                losses.append(float(loss.detach()))

            with torch.no_grad():
                val_loss, val_prob = _objective(model, val_feats, y_val, val_neg, epoch, w)
            val_loss = float(val_loss)
            val_acc = float(((val_prob >= 0.5).to(torch.float64) == y_val).to(torch.float64).mean())
            phase = w.phase(epoch)
            rec = {"epoch": epoch, "phase": phase,
                   "train_loss": float(np.mean(losses)) if losses else None,
                   "val_loss": val_loss, "val_accuracy": val_acc}
            history.records.append(rec)
            log.info(json.dumps({"event": "epoch", "seed": cfg.seed, **rec}))

            if phase == 2:
                if best_loss is None or val_loss < best_loss:
                    best_loss, since_best = val_loss, 0
                    history.best_epoch = epoch
                    best_state = {k: p.detach().clone() for k, p in params.items()}
                else:
                    since_best += 1
                    if since_best >= cfg.patience:
                        history.stopped_early = epoch < cfg.total_epochs
                        break
    finally:
        if pool:
            pool.shutdown()

    with torch.no_grad():
        for k, p in params.items():
            p.copy_(best_state[k])
    for k, p in model.frozen_parameters().items():
        assert torch.equal(p, frozen_before[k]), f"frozen parameter {k} changed"
    return model, history


def predict(model: TriBranchNet, manifest: DatasetManifest, morph: MorphologyConfig = MorphologyConfig(),
            crops=None, workers=1):
    """Eval-mode probabilities, one per record; ``None`` where the image could
    not be loaded or processed (the error is logged)."""
    out = [None] * len(manifest)
    ok_idx, ok_crops = [], []
    cache = {} if crops is None else crops
    for i, rec in enumerate(manifest):
        key = str(rec.image_path)
        try:
            if key not in cache:
                detect_crops(DatasetManifest([rec]), morph, cache)
        except (OSError, ValueError) as exc:
            log.error(json.dumps({"event": "predict_error", "image": key, "error": str(exc)}))
            continue
        ok_idx.append(i)
        ok_crops.append(cache[key])
    if ok_idx:
        feats = _batched_features(model, _eval_inputs(ok_crops, model.spec.input_size))
        with torch.no_grad():
            for j, i in enumerate(ok_idx):
                out[i] = float(torch.sigmoid(model.head(*(f[j:j + 1] for f in feats))[4][0]))
    return out


def history_from_dict(d) -> TrainHistory:
    return TrainHistory(records=list(d["records"]), stopped_early=d["stopped_early"],
                        best_epoch=d["best_epoch"])


def config_dict(cfg: TrainConfig):
    return asdict(cfg)
