"""Subject-grouped cross-validation and ranking metrics."""
from __future__ import annotations

import json
import logging
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .discdetect import MorphologyConfig
from .model import BackboneSpec, build_model
from .seeding import derive_seed, rng_for
from .trainer import TrainConfig, detect_crops, predict, torch_threads, train
from .types import DatasetManifest, Label, ManifestRecord

log = logging.getLogger("papilledema")


class LeakageError(AssertionError):
    """A subject appears on both sides of a split."""


@dataclass(frozen=True)
class FoldPlan:
    folds: list  # [(train subject frozenset, test subject frozenset)]
    k: int
    seed: int


@dataclass
class MetricReport:
    folds: list = field(default_factory=list)
    sessions: int = 1
    k: int = 10
    mode: str = "kfold"
    leakage_checks: int = 0

    @property
    def aggregate(self):
        aucs = [f["auc"] for f in self.folds]
        accs = [f["accuracy"] for f in self.folds]
        return {"mean_auc": _mean(aucs), "std_auc": _std(aucs),
                "mean_acc": _mean(accs), "std_acc": _std(accs)}

    def to_dict(self):
        return {"mode": self.mode, "k": self.k, "sessions": self.sessions,
                "leakage_checks": self.leakage_checks, "folds": self.folds,
                "aggregate": self.aggregate}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"


def _mean(xs):
    return float(np.mean(xs)) if xs else float("nan")


def _std(xs):
    """Sample standard deviation; 0.0 for fewer than two values."""
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0


# metrics


def accuracy(probs, labels, threshold=0.5):
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.size == 0 or probs.shape != labels.shape:
        raise ValueError("accuracy needs equal-length, non-empty inputs")
    return float(np.mean((probs >= threshold).astype(int) == labels))


def auc(scores, labels):
    """Mann-Whitney AUC from mid-ranks; ties between classes count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    # mid-rank for each run of equal scores (1-based)
    starts = np.flatnonzero(np.r_[True, sorted_scores[1:] != sorted_scores[:-1]])
    ends = np.r_[starts[1:], scores.size]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + 1 + e) / 2.0
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# splits


def group_stratified_folds(manifest: DatasetManifest, k: int, seed) -> FoldPlan:
    """Shuffle subjects within each class and deal them round-robin into k
    test groups; the dealer continues across classes so fold sizes differ by
    at most one."""
    subj_labels = manifest.subject_labels()
    subjects = list(subj_labels)
    if len(subjects) < k:
        raise ValueError(f"need at least k={k} subjects, got {len(subjects)}")
    groups = [[] for _ in range(k)]
    slot = 0
    for cls in (Label.PAPILLEDEMA, Label.PSEUDOPAPILLEDEMA):
        members = [s for s in subjects if subj_labels[s] == cls]
        for j in rng_for(seed, "folds", int(cls)).permutation(len(members)):
            groups[slot % k].append(members[j])
            slot += 1
    universe = frozenset(subjects)
    folds = [(universe - frozenset(g), frozenset(g)) for g in groups]
    return FoldPlan(folds=folds, k=k, seed=int(seed))


def grouped_shuffle_split(manifest: DatasetManifest, repeats: int, test_fraction: float, seed) -> FoldPlan:
    """Repeated stratified subject-level train/test splits (e.g. 75/25)."""
    subj_labels = manifest.subject_labels()
    universe = frozenset(subj_labels)
    folds = []
    for r in range(repeats):
        test = []
        for cls in (Label.PAPILLEDEMA, Label.PSEUDOPAPILLEDEMA):
            members = [s for s in subj_labels if subj_labels[s] == cls]
            n_test = max(1, int(round(test_fraction * len(members))))
            perm = rng_for(seed, "shuffle", r, int(cls)).permutation(len(members))
            test += [members[j] for j in perm[:n_test]]
        folds.append((universe - frozenset(test), frozenset(test)))
    return FoldPlan(folds=folds, k=repeats, seed=int(seed))


def check_plan(plan: FoldPlan, manifest: DatasetManifest | None = None, partition=True):
    """Raise LeakageError if any fold shares subjects between its sides.

    With ``partition`` the test sets must also tile the subject universe.
    Returns the number of folds checked.
    """
    for i, (tr, te) in enumerate(plan.folds):
        shared = set(tr) & set(te)
        if shared:
            raise LeakageError(f"fold {i}: subjects on both sides: {sorted(shared)[:5]}")
    if partition and manifest is not None:
        seen = []
        for _, te in plan.folds:
            seen.extend(te)
        if sorted(seen) != sorted(manifest.subjects):
            raise LeakageError("test folds do not partition the subject universe")
    return len(plan.folds)


def inner_split(manifest: DatasetManifest, subjects, val_fraction, seed):
    """Stratified subject-level train/validation split of ``subjects``."""
    subj_labels = manifest.subject_labels()
    subjects = sorted(subjects)
    train, val = [], []
    for cls in (Label.PAPILLEDEMA, Label.PSEUDOPAPILLEDEMA):
        members = [s for s in subjects if subj_labels[s] == cls]
        perm = rng_for(seed, "inner", int(cls)).permutation(len(members))
        n_val = int(round(val_fraction * len(members)))
        if len(members) >= 2:
            n_val = min(max(n_val, 1), len(members) - 1)
        val += [members[j] for j in perm[:n_val]]
        train += [members[j] for j in perm[n_val:]]
    return train, val


def scramble_labels(manifest: DatasetManifest, seed) -> DatasetManifest:
    """Permute labels across subjects (subjects stay class-pure)."""
    subj_labels = manifest.subject_labels()
    subjects = list(subj_labels)
    perm = rng_for(seed, "scramble").permutation(len(subjects))
    new = {s: subj_labels[subjects[j]] for s, j in zip(subjects, perm)}
    return DatasetManifest([ManifestRecord(r.image_path, r.subject_id, new[r.subject_id])
                            for r in manifest.records])


# cross-validation driver


@dataclass(frozen=True)
class FoldTask:
    session: int
    fold: int
    train_subjects: tuple
    test_subjects: tuple
    seed: int


_WORKER_STATE = {}


def _init_worker(manifest, crops, train_cfg, morph, spec, val_fraction):
    _WORKER_STATE.update(manifest=manifest, crops=crops, train_cfg=train_cfg, morph=morph,
                         spec=spec, val_fraction=val_fraction)


def _run_fold(task: FoldTask):
    st = _WORKER_STATE
    manifest = st["manifest"]
    with torch_threads(1):
        tr, va = inner_split(manifest, task.train_subjects, st["val_fraction"], task.seed)
        cfg = st["train_cfg"]
        cfg = TrainConfig(batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
                          weight_decay=cfg.weight_decay, patience=cfg.patience,
                          seed=derive_seed(task.seed, "train"), loss=cfg.loss)
        model = build_model(st["spec"], seed=derive_seed(task.seed, "init"))
        model, history = train(model, manifest.select_subjects(tr), manifest.select_subjects(va),
                               cfg, st["morph"], crops=st["crops"])
        test = manifest.select_subjects(task.test_subjects)
        probs = predict(model, test, st["morph"], crops=st["crops"])
    result = {
        "session": task.session, "fold": task.fold,
        "auc": auc(probs, test.labels), "accuracy": accuracy(probs, test.labels),
        "n_test_images": len(test), "n_test_subjects": len(task.test_subjects),
        "best_epoch": history.best_epoch, "epochs_run": len(history.records),
    }
    return result


def run_plans(manifest: DatasetManifest, plans, train_cfg: TrainConfig = TrainConfig(),
              morph: MorphologyConfig = MorphologyConfig(), spec: BackboneSpec = BackboneSpec(),
              val_fraction=0.2, workers=1, crops=None, mode="kfold", partition=True):
    """Train and score every fold of every plan (one plan per session).

    Every plan is leakage-checked before any training starts.
    """
    report = MetricReport(sessions=len(plans), k=plans[0].k if plans else 0, mode=mode)
    for plan in plans:
        report.leakage_checks += check_plan(plan, manifest, partition=partition)
    crops = detect_crops(manifest, morph, crops, workers)
    tasks = [
        FoldTask(session=s, fold=f, train_subjects=tuple(sorted(tr)), test_subjects=tuple(sorted(te)),
                 seed=derive_seed(plan.seed, "fold", f))
        for s, plan in enumerate(plans, start=1)
        for f, (tr, te) in enumerate(plan.folds)
    ]
    init_args = (manifest, crops, train_cfg, morph, spec, val_fraction)
    if workers > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(workers, mp_context=ctx, initializer=_init_worker,
                                 initargs=init_args) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        _init_worker(*init_args)
        results = [_run_fold(t) for t in tasks]
    for r in results:
        log.info(json.dumps({"event": "fold", **r}))
    report.folds = results
    return report


def repeated_cv(manifest: DatasetManifest, k=10, repeats=5, train_cfg: TrainConfig = TrainConfig(),
                morph: MorphologyConfig = MorphologyConfig(), spec: BackboneSpec = BackboneSpec(),
                seed=0, val_fraction=0.2, workers=1, crops=None, mode="kfold", test_fraction=0.25):
    """k-fold CV repeated over sessions (``mode="kfold"``), or repeated
    grouped 75/25 shuffle splits (``mode="shuffle"``, one split per session)."""
    if mode == "kfold":
        plans = [group_stratified_folds(manifest, k, derive_seed(seed, "session", s))
                 for s in range(1, repeats + 1)]
        partition = True
    elif mode == "shuffle":
        plans = [grouped_shuffle_split(manifest, 1, test_fraction, derive_seed(seed, "session", s))
                 for s in range(1, repeats + 1)]
        partition = False
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")
    return run_plans(manifest, plans, train_cfg, morph, spec, val_fraction, workers, crops, mode,
                     partition)


def fold_summary(report: MetricReport):
    agg = report.aggregate
    return (f"AUC {agg['mean_auc']:.3f} ± {agg['std_auc']:.3f}  "
            f"Accuracy {agg['mean_acc']:.3f} ± {agg['std_acc']:.3f}  "
            f"({len(report.folds)} folds)")


def isfinite_report(report: MetricReport):
    return all(math.isfinite(v) for v in report.aggregate.values())
