import itertools
import math

import numpy as np
import pytest
import torch
from helpers import central_difference, relative_error
from hypothesis import given, settings
from hypothesis import strategies as st

from papilledema.losses import (LossWeights, batch_triplet_terms, combined_loss, cosine_distance,
                                cross_entropy, random_derangement, triplet)

T = lambda *v: torch.tensor(v, dtype=torch.float64)  # noqa: E731


def test_cross_entropy_values():
    assert float(cross_entropy(1.0, 1)) == pytest.approx(0.0, abs=1e-11)
    assert float(cross_entropy(0.5, 1)) == pytest.approx(math.log(2), abs=1e-6)
    assert float(cross_entropy(0.9, 0)) == pytest.approx(2.302585, abs=1e-6)
    assert math.isfinite(float(cross_entropy(0.0, 1)))  # clamped at 1e-12
    assert float(cross_entropy(0.0, 1)) == pytest.approx(-math.log(1e-12))


def test_cosine_distance_values():
    assert float(cosine_distance(T(2, 3), T(2, 3))) == pytest.approx(0.0, abs=1e-15)
    assert float(cosine_distance(T(1, 0), T(0, 1))) == 1.0
    assert float(cosine_distance(T(1, 1), T(1, 0))) == pytest.approx(1 - math.sqrt(2) / 2, abs=1e-6)
    assert float(cosine_distance(T(1, 1), T(1, 0))) == pytest.approx(0.292893, abs=1e-6)
    with pytest.raises(ValueError, match="zero"):
        cosine_distance(T(0, 0), T(1, 0))


def _at_cosine(a, cos):
    """Unit vector making angle arccos(cos) with 2-D vector a."""
    base = math.atan2(a[1], a[0]) + math.acos(cos)
    return T(math.cos(base), math.sin(base))


def test_triplet_values():
    a = T(1, 1)
    assert float(triplet(a, a, T(1, -1), 0.3)) == 0.0  # d(a,n)=1
    assert float(triplet(a, a, a, 0.3)) == pytest.approx(0.3, abs=1e-15)
    n = _at_cosine(a, 0.9)  # d(a,n) = 0.1
    assert float(cosine_distance(a, n)) == pytest.approx(0.1, abs=1e-12)
    assert float(triplet(a, T(1, 0), n, 0.3)) == pytest.approx(0.492893, abs=1e-6)


vec = st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3)


@settings(max_examples=100, deadline=None)
@given(vec, vec, vec, st.floats(0, 1))
def test_triplet_range_and_zero_set(a, p, n, m):
    a, p, n = (torch.tensor(x, dtype=torch.float64) for x in (a, p, n))
    val = float(triplet(a, p, n, m))
    d_ap, d_an = float(cosine_distance(a, p)), float(cosine_distance(a, n))
    assert 0.0 <= val <= 2.0 + m + 1e-12
    assert (val == 0.0) == (d_ap - d_an + m <= 0.0)


def test_derangement_properties():
    rng = np.random.default_rng(0)
    for n in range(2, 20):
        p = random_derangement(n, rng)
        assert sorted(p) == list(range(n)) and not (p == np.arange(n)).any()
    with pytest.raises(ValueError):
        random_derangement(1, rng)


def test_derangement_uniform_over_n4():
    rng = np.random.default_rng(1)
    counts = {}
    for _ in range(9000):
        k = tuple(random_derangement(4, rng))
        counts[k] = counts.get(k, 0) + 1
    all_d = [p for p in itertools.permutations(range(4)) if all(p[i] != i for i in range(4))]
    assert set(counts) == set(all_d) and len(all_d) == 9
    chi2 = sum((c - 1000) ** 2 / 1000 for c in counts.values())
    assert chi2 < 26.1  # chi-square, 8 dof, p = 0.001


def test_batch_terms_examples():
    v = torch.rand(2, 5, dtype=torch.float64) + 0.1
    same = v[[0, 0]]
    j2, j3 = batch_triplet_terms(same, same, same, [1, 0], 0.3)
    assert float(j2) == pytest.approx(0.3) and float(j3) == pytest.approx(0.3)
    e = torch.eye(4, dtype=torch.float64)
    v = e[[0, 1]]
    v_red = e[[0, 1]]  # v_red,i = v_i, and v_red,sigma(i) is orthogonal to v_i
    j2, _ = batch_triplet_terms(v, v_red, v_red, [1, 0], 0.3)
    assert float(j2) == 0.0
    with pytest.raises(ValueError):
        batch_triplet_terms(v[:1], v[:1], v[:1], [0], 0.3)
    with pytest.raises(ValueError, match="itself"):
        batch_triplet_terms(v, v, v, [0, 1], 0.3)


def test_batch_terms_mean_of_triplets():
    g = torch.Generator().manual_seed(0)
    v, vr, vg = (torch.randn(5, 7, generator=g, dtype=torch.float64) for _ in range(3))
    neg = [2, 0, 4, 1, 3]
    j2, j3 = batch_triplet_terms(v, vr, vg, neg, 0.3)
    ref2 = np.mean([float(triplet(v[i], vr[i], vr[neg[i]], 0.3)) for i in range(5)])
    ref3 = np.mean([float(triplet(v[i], vg[i], vg[neg[i]], 0.3)) for i in range(5)])
    assert float(j2) == pytest.approx(ref2, abs=1e-14) and float(j3) == pytest.approx(ref3, abs=1e-14)


def test_combined_loss_values():
    w = LossWeights()
    assert float(combined_loss(5, 123.0, 0.2, 0.4, w)) == pytest.approx(0.3, abs=1e-15)
    assert float(combined_loss(11, 0.7, 0.2, 0.4, w)) == pytest.approx(0.73, abs=1e-15)
    l10 = combined_loss(10, 0.7, 0.2, 0.4, w)
    l11 = combined_loss(11, 0.7, 0.2, 0.4, w)
    assert w.phase(10) == 1 and w.phase(11) == 2
    with pytest.raises(ValueError):
        combined_loss(0, 0, 0, 0, w)
    assert l10 == pytest.approx(0.3)
    assert l11 == pytest.approx(0.73)


def test_loss_weights_validation():
    with pytest.raises(ValueError, match="lambda1"):
        LossWeights(lambda1=0.4, lambda2=0.05)
    with pytest.raises(ValueError):
        LossWeights(lambda2=-1.0)
    with pytest.raises(ValueError):
        LossWeights(phase_switch_epoch=50, total_epochs=50)
    assert LossWeights().weights(3) == (0.0, 0.5, 0.5)
    assert LossWeights().weights(30) == (1.0, 0.05, 0.05)


def test_loss_gradients_match_fd():
    g = torch.Generator().manual_seed(3)
    v, vr, vg = (torch.randn(4, 6, generator=g, dtype=torch.float64, requires_grad=True) for _ in range(3))
    prob = torch.rand(4, generator=g, dtype=torch.float64).clamp(0.05, 0.95).requires_grad_(True)
    y = torch.tensor([1.0, 0.0, 1.0, 0.0], dtype=torch.float64)
    neg = [1, 2, 3, 0]
    w = LossWeights()

    def f():
        j1 = cross_entropy(prob, y).mean()
        j2, j3 = batch_triplet_terms(v, vr, vg, neg, 0.3)
        return combined_loss(12, j1, j2, j3, w)

    grads = torch.autograd.grad(f(), [v, vr, vg, prob])
    for t, gr in zip((v, vr, vg, prob), grads):
        assert relative_error(gr, central_difference(f, t)) <= 1e-4
