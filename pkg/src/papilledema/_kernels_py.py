"""Pure-Python/numpy twins of the compiled kernels in ``_kernels.pyx``.

Same algorithms, same summation order, so outputs match the extension
bit for bit. Used when the extension is not built or when
``PAPILLEDEMA_PURE_PYTHON=1``.
"""
import math

import numpy as np


def _chords(radius):
    return [(dy, math.isqrt(radius * radius - dy * dy)) for dy in range(-radius, radius + 1)]


def _window_bounds(w, hw):
    x = np.arange(w)
    lo = x - hw
    hi = x + hw + 1
    return lo, hi


def erode(mask, radius, border_value=True):
    mask = np.asarray(mask) != 0
    h, w = mask.shape
    zeros = np.zeros((h, w + 1), dtype=np.int32)
    np.cumsum(~mask, axis=1, out=zeros[:, 1:])
    out = np.ones((h, w), dtype=bool)
    for dy, hw in _chords(radius):
        lo, hi = _window_bounds(w, hw)
        clipped = (lo < 0) | (hi > w)
        lo = np.clip(lo, 0, w)
        hi = np.clip(hi, 0, w)
        ys = np.arange(h) + dy
        inside = (ys >= 0) & (ys < h)
        ok = np.full((h, w), bool(border_value))
        rows = ys[inside]
        ok[inside] = (zeros[rows][:, hi] - zeros[rows][:, lo]) == 0
        if not border_value:
            ok[:, clipped] = False
        out &= ok
    return out


def dilate(mask, radius):
    mask = np.asarray(mask) != 0
    h, w = mask.shape
    ones = np.zeros((h, w + 1), dtype=np.int32)
    np.cumsum(mask, axis=1, out=ones[:, 1:])
    out = np.zeros((h, w), dtype=bool)
    for dy, hw in _chords(radius):
        lo, hi = _window_bounds(w, hw)
        lo = np.clip(lo, 0, w)
        hi = np.clip(hi, 0, w)
        ys = np.arange(h) + dy
        inside = (ys >= 0) & (ys < h)
        rows = ys[inside]
        out[inside] |= (ones[rows][:, hi] - ones[rows][:, lo]) != 0
    return out


def disk_mean(img, radius):
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    prefix = np.zeros((h, w + 1), dtype=np.float64)
    np.cumsum(img, axis=1, out=prefix[:, 1:])
    total = np.zeros((h, w), dtype=np.float64)
    count = np.zeros((h, w), dtype=np.int64)
    for dy, hw in _chords(radius):
        lo, hi = _window_bounds(w, hw)
        lo = np.clip(lo, 0, w)
        hi = np.clip(hi, 0, w)
        ys = np.arange(h) + dy
        inside = (ys >= 0) & (ys < h)
        rows = ys[inside]
        total[inside] += prefix[rows][:, hi] - prefix[rows][:, lo]
        count[inside] += hi - lo
    return total / count


def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def label8(mask):
    """Run-length union-find labeling, 8-connectivity."""
    mask = np.asarray(mask) != 0
    h, w = mask.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = mask
    edges = np.diff(padded, axis=1)
    runs = []  # (row, start, stop) with stop exclusive
    row_runs = []
    for y in range(h):
        starts = np.flatnonzero(edges[y] == 1)
        stops = np.flatnonzero(edges[y] == -1)
        first = len(runs)
        runs.extend((y, int(a), int(b)) for a, b in zip(starts, stops))
        row_runs.append((first, len(runs)))
    parent = list(range(len(runs)))
    for y in range(1, h):
        a0, a1 = row_runs[y - 1]
        b0, b1 = row_runs[y]
        i = a0
        for j in range(b0, b1):
            _, s, e = runs[j]
            # advance past runs above that end before the diagonal reach
            while i < a1 and runs[i][2] < s:
                i += 1
            k = i
            while k < a1 and runs[k][1] <= e:
                ra, rb = _find(parent, k), _find(parent, j)
                if ra < rb:
                    parent[rb] = ra
                elif rb < ra:
                    parent[ra] = rb
                k += 1
    labels = np.zeros((h, w), dtype=np.int32)
    remap = {}
    for idx, (y, s, e) in enumerate(runs):
        root = _find(parent, idx)
        if root not in remap:
            remap[root] = len(remap) + 1
        labels[y, s:e] = remap[root]
    return labels, len(remap)


def region_sums(labels, n):
    labels = np.asarray(labels)
    h, w = labels.shape
    ys, xs = np.nonzero(labels)
    k = labels[ys, xs]
    xs = xs.astype(np.int64)
    ys = ys.astype(np.int64)
    size = n + 1
    out = np.zeros((10, size), dtype=np.int64)
    out[0] = np.bincount(k, minlength=size)
    for row, weights in ((1, xs), (2, ys), (3, xs * xs), (4, xs * ys), (5, ys * ys)):
        out[row] = np.bincount(k, weights=weights, minlength=size).astype(np.int64)
    out[6] = w
    out[7] = h
    out[8] = -1
    out[9] = -1
    np.minimum.at(out[6], k, xs)
    np.minimum.at(out[7], k, ys)
    np.maximum.at(out[8], k, xs)
    np.maximum.at(out[9], k, ys)
    return tuple(out)
