# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels for binary morphology, disk filtering and labeling.

Every function here has a pure-Python twin in ``_kernels_py`` with the same
signature and bit-identical results; ``papilledema.kernels`` picks one at
import time.
"""
import numpy as np

from libc.math cimport sqrt, floor


cdef int[:] _chords(int radius):
    cdef int[:] half = np.zeros(2 * radius + 1, dtype=np.int32)
    cdef int dy
    for dy in range(-radius, radius + 1):
        half[dy + radius] = <int>floor(sqrt(<double>(radius * radius - dy * dy)))
    return half


def erode(const unsigned char[:, :] mask, int radius, bint border_value=True):
    """Binary erosion by the disk of the given radius."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t y, x, yy, lo, hi
    cdef int dy, hw
    cdef int[:] half = _chords(radius)
    # zeros[y, x] = number of zero pixels in row y left of column x
    cdef int[:, :] zeros = np.zeros((h, w + 1), dtype=np.int32)
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, :] out = out_arr
    cdef bint ok
    for y in range(h):
        for x in range(w):
            zeros[y, x + 1] = zeros[y, x] + (mask[y, x] == 0)
    for y in range(h):
        for x in range(w):
            ok = True
            for dy in range(-radius, radius + 1):
                hw = half[dy + radius]
                yy = y + dy
                if yy < 0 or yy >= h:
                    if not border_value:
                        ok = False
                        break
                    continue
                lo = x - hw
                hi = x + hw + 1
                if lo < 0:
                    if not border_value:
                        ok = False
                        break
                    lo = 0
                if hi > w:
                    if not border_value:
                        ok = False
                        break
                    hi = w
                if zeros[yy, hi] - zeros[yy, lo] != 0:
                    ok = False
                    break
            out[y, x] = ok
    return out_arr.astype(bool)


def dilate(const unsigned char[:, :] mask, int radius):
    """Binary dilation by the disk of the given radius; outside counts as false."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t y, x, yy, lo, hi
    cdef int dy, hw
    cdef int[:] half = _chords(radius)
    cdef int[:, :] ones = np.zeros((h, w + 1), dtype=np.int32)
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, :] out = out_arr
    for y in range(h):
        for x in range(w):
            ones[y, x + 1] = ones[y, x] + (mask[y, x] != 0)
    for y in range(h):
        for x in range(w):
            for dy in range(-radius, radius + 1):
                yy = y + dy
                if yy < 0 or yy >= h:
                    continue
                hw = half[dy + radius]
                lo = x - hw
                hi = x + hw + 1
                if lo < 0:
                    lo = 0
                if hi > w:
                    hi = w
                if ones[yy, hi] - ones[yy, lo] != 0:
                    out[y, x] = 1
                    break
    return out_arr.astype(bool)


def disk_mean(const double[:, :] img, int radius):
    """Mean over the disk neighbourhood, normalized by the in-bounds pixel count."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t y, x, yy, lo, hi
    cdef int dy, hw
    cdef int[:] half = _chords(radius)
    cdef double[:, :] prefix = np.zeros((h, w + 1), dtype=np.float64)
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef double total
    cdef Py_ssize_t count
    for y in range(h):
        for x in range(w):
            prefix[y, x + 1] = prefix[y, x] + img[y, x]
    for y in range(h):
        for x in range(w):
            total = 0.0
            count = 0
            for dy in range(-radius, radius + 1):
                yy = y + dy
                if yy < 0 or yy >= h:
                    continue
                hw = half[dy + radius]
                lo = x - hw
                hi = x + hw + 1
                if lo < 0:
                    lo = 0
                if hi > w:
                    hi = w
                total = total + (prefix[yy, hi] - prefix[yy, lo])
                count = count + (hi - lo)
            out[y, x] = total / count
    return out_arr


cdef Py_ssize_t _find(Py_ssize_t[:] parent, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t root = i, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


cdef void _union(Py_ssize_t[:] parent, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    a = _find(parent, a)
    b = _find(parent, b)
    if a < b:
        parent[b] = a
    elif b < a:
        parent[a] = b


def label8(const unsigned char[:, :] mask):
    """8-connected component labels (1..n in raster order of first pixel) and n."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t y, x, cur, nxt = 1, n = 0
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, :] labels = labels_arr
    cdef Py_ssize_t[:] parent = np.zeros(h * w // 2 + 2, dtype=np.intp)
    cdef Py_ssize_t[:] remap
    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0:
                continue
            cur = 0
            # previously visited neighbours: W, NW, N, NE
            if x > 0 and labels[y, x - 1]:
                cur = labels[y, x - 1]
            if y > 0:
                if x > 0 and labels[y - 1, x - 1]:
                    if cur:
                        _union(parent, cur, labels[y - 1, x - 1])
                    else:
                        cur = labels[y - 1, x - 1]
                if labels[y - 1, x]:
                    if cur:
                        _union(parent, cur, labels[y - 1, x])
                    else:
                        cur = labels[y - 1, x]
                if x + 1 < w and labels[y - 1, x + 1]:
                    if cur:
                        _union(parent, cur, labels[y - 1, x + 1])
                    else:
                        cur = labels[y - 1, x + 1]
            if not cur:
                cur = nxt
                parent[cur] = cur
                nxt += 1
            labels[y, x] = cur
    remap = np.zeros(nxt, dtype=np.intp)
    # provisional labels are created in raster order, so the first root seen
    # is the earliest component
    for cur in range(1, nxt):
        y = _find(parent, cur)
        if remap[y] == 0:
            n += 1
            remap[y] = n
        remap[cur] = remap[y]
    for y in range(h):
        for x in range(w):
            if labels[y, x]:
                labels[y, x] = remap[labels[y, x]]
    return labels_arr, int(n)


def region_sums(const int[:, :] labels, Py_ssize_t n):
    """Per-label raw moments and bounding boxes as int64 arrays.

    Returns (area, sx, sy, sxx, sxy, syy, xmin, ymin, xmax, ymax), each of
    length n + 1 with index 0 unused.
    """
    cdef Py_ssize_t h = labels.shape[0], w = labels.shape[1]
    cdef Py_ssize_t y, x
    cdef int k
    out = np.zeros((10, n + 1), dtype=np.int64)
    cdef long long[:, :] s = out
    for k in range(n + 1):
        s[6, k] = w
        s[7, k] = h
        s[8, k] = -1
        s[9, k] = -1
    for y in range(h):
        for x in range(w):
            k = labels[y, x]
            if k == 0:
                continue
            s[0, k] += 1
            s[1, k] += x
            s[2, k] += y
            s[3, k] += x * x
            s[4, k] += x * y
            s[5, k] += y * y
            if x < s[6, k]:
                s[6, k] = x
            if y < s[7, k]:
                s[7, k] = y
            if x > s[8, k]:
                s[8, k] = x
            if y > s[9, k]:
                s[9, k] = y
    return tuple(out)
