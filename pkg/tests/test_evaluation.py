import itertools
import json
import statistics

import numpy as np
import pytest
from conftest import TINY_SPEC, short_config
from hypothesis import given, settings
from hypothesis import strategies as st

from papilledema.evaluation import (FoldPlan, LeakageError, MetricReport, accuracy, auc, check_plan,
                                    group_stratified_folds, grouped_shuffle_split, inner_split,
                                    repeated_cv, run_plans, scramble_labels)
from papilledema.types import DatasetManifest, Label, ManifestRecord


def make_manifest(n_subjects, n_pos, per_subject=2):
    return DatasetManifest([ManifestRecord(f"{s}_{i}.png", f"S{s:03d}", Label(int(s < n_pos)))
                            for s in range(n_subjects) for i in range(per_subject)])


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    good = sum((p > n) + 0.5 * (p == n) for p, n in itertools.product(pos, neg))
    return good / (len(pos) * len(neg))


# folds

def test_one_subject_per_fold():
    plan = group_stratified_folds(make_manifest(10, 4), 10, 0)
    assert all(len(te) == 1 for _, te in plan.folds)


def test_folds_hold_four_or_five_positive_subjects():
    m = make_manifest(100, 45)
    labels = m.subject_labels()
    for seed in range(5):
        plan = group_stratified_folds(m, 10, seed)
        counts = [sum(int(labels[s]) for s in te) for _, te in plan.folds]
        assert set(counts) <= {4, 5} and sum(counts) == 45


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 60), frac=st.floats(0.1, 0.9), k=st.integers(2, 10), seed=st.integers(0, 2**63))
def test_fold_invariants(n, frac, k, seed):
    n_pos = min(n - 1, max(1, int(frac * n)))
    if n < k:
        with pytest.raises(ValueError, match="at least"):
            group_stratified_folds(make_manifest(n, n_pos), k, seed)
        return
    m = make_manifest(n, n_pos)
    labels = m.subject_labels()
    plan = group_stratified_folds(m, k, seed)
    assert check_plan(plan, m) == k
    tests = [s for _, te in plan.folds for s in te]
    assert sorted(tests) == sorted(m.subjects)  # partition
    for tr, te in plan.folds:
        assert not tr & te and tr | te == set(m.subjects)
        n_te_pos = sum(int(labels[s]) for s in te)
        assert abs(n_te_pos - len(te) * n_pos / n) <= 1 + 1e-9  # stratified within one subject
    sizes = [len(te) for _, te in plan.folds]
    assert max(sizes) - min(sizes) <= 1


def test_folds_deterministic_per_seed():
    m = make_manifest(30, 12)
    assert group_stratified_folds(m, 5, 7) == group_stratified_folds(m, 5, 7)
    assert group_stratified_folds(m, 5, 7) != group_stratified_folds(m, 5, 8)


def test_leaky_plan_rejected():
    m = make_manifest(6, 3)
    subjects = frozenset(m.subjects)
    leaky = FoldPlan(folds=[(subjects, frozenset(["S000"])), (subjects - {"S000"}, subjects - {"S000"})],
                     k=2, seed=0)
    with pytest.raises(LeakageError, match="both sides"):
        check_plan(leaky, m)
    with pytest.raises(LeakageError):
        run_plans(m, [leaky])  # rejected before any image is touched
    gap = FoldPlan(folds=[(subjects - {"S000"}, frozenset(["S000"]))], k=1, seed=0)
    with pytest.raises(LeakageError, match="partition"):
        check_plan(gap, m)


def test_shuffle_split_and_inner_split():
    m = make_manifest(40, 18)
    plan = grouped_shuffle_split(m, 3, 0.25, 1)
    labels = m.subject_labels()
    for tr, te in plan.folds:
        assert not tr & te and len(te) == round(0.25 * 18) + round(0.25 * 22)
        assert sum(int(labels[s]) for s in te) == round(0.25 * 18)
    check_plan(plan, m, partition=False)
    tr, va = inner_split(m, m.subjects, 0.2, 3)
    assert not set(tr) & set(va) and sorted(tr + va) == sorted(m.subjects)
    assert sum(int(labels[s]) for s in va) == round(0.2 * 18)


def test_scramble_keeps_subjects_class_pure():
    m = make_manifest(20, 9, per_subject=3)
    s = scramble_labels(m, 0)
    assert sorted(int(v) for v in s.subject_labels().values()) == sorted(int(v) for v in m.subject_labels().values())
    assert s.subject_labels() != m.subject_labels()


# metrics

def test_accuracy_examples():
    assert accuracy([0.9, 0.1], [1, 0]) == 1.0
    assert accuracy([0.5] * 4, [1, 0, 1, 1]) == 0.75
    assert accuracy([0.9, 0.4, 0.6, 0.2], [1, 1, 0, 0]) == 0.5
    with pytest.raises(ValueError):
        accuracy([], [])


def test_auc_examples():
    assert auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 200), st.booleans())
def test_auc_equals_brute_force(seed, n, coarse):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    scores = rng.integers(0, 5, n) / 4 if coarse else rng.random(n)  # coarse -> many ties
    assert abs(auc(scores, labels) - brute_force_auc(scores, labels)) <= 1e-12


def test_auc_invariant_under_monotone_transform(rng):
    scores = rng.random(80)
    labels = rng.integers(0, 2, 80)
    for f in (np.exp, lambda s: 3 * s - 7, lambda s: s ** 3, np.arctan):
        assert auc(f(scores), labels) == auc(scores, labels)


def test_permuted_labels_give_chance_auc(rng):
    scores = rng.random(60)
    labels = np.array([1] * 25 + [0] * 35)
    vals = [auc(scores, rng.permutation(labels)) for _ in range(1000)]
    assert abs(np.mean(vals) - 0.5) <= 0.02


# report

def test_report_aggregates():
    folds = [{"auc": a, "accuracy": b} for a, b in ((0.8, 0.7), (0.9, 0.75), (0.7, 0.9))]
    agg = MetricReport(folds=folds).aggregate
    assert agg["mean_auc"] == pytest.approx(statistics.mean([0.8, 0.9, 0.7]), abs=1e-15)
    assert agg["std_auc"] == pytest.approx(statistics.stdev([0.8, 0.9, 0.7]), abs=1e-15)
    assert agg["mean_acc"] == pytest.approx(statistics.mean([0.7, 0.75, 0.9]), abs=1e-15)
    assert agg["std_acc"] == pytest.approx(statistics.stdev([0.7, 0.75, 0.9]), abs=1e-15)
    assert MetricReport(folds=folds[:1]).aggregate["std_auc"] == 0.0


def test_repeated_cv_counts_and_json(small_dataset):
    _, m = small_dataset
    cfg = short_config(epochs=3, switch=1)
    report = repeated_cv(m, k=2, repeats=1, train_cfg=cfg, spec=TINY_SPEC, seed=0)
    assert len(report.folds) == 2 and report.leakage_checks == 2
    assert [(f["session"], f["fold"]) for f in report.folds] == [(1, 0), (1, 1)]
    doc = json.loads(report.to_json())
    assert doc["aggregate"]["mean_auc"] == pytest.approx(np.mean([f["auc"] for f in report.folds]))
    assert sum(f["n_test_subjects"] for f in report.folds) == len(m.subjects)


def test_repeated_cv_shuffle_mode(small_dataset):
    _, m = small_dataset
    report = repeated_cv(m, repeats=2, train_cfg=short_config(epochs=3, switch=1), spec=TINY_SPEC,
                         mode="shuffle", test_fraction=0.25)
    assert len(report.folds) == 2 and report.mode == "shuffle"
    with pytest.raises(ValueError, match="mode"):
        repeated_cv(m, mode="holdout")
