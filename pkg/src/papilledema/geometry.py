"""Minimum enclosing circles and moment-based region shape."""
from __future__ import annotations

import math

import numpy as np

from .types import Circle


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices counter-clockwise."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                (ax, ay), (bx, by) = out[-2], out[-1]
                if (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) > 0:
                    break
                out.pop()
            out.append((p[0], p[1]))
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _circle_two(a, b):
    cx, cy = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
    return cx, cy, math.hypot(a[0] - cx, a[1] - cy)


def _circle_three(a, b, c):
    ax, ay = a
    bx, by = b[0] - ax, b[1] - ay
    cx, cy = c[0] - ax, c[1] - ay
    d = 2.0 * (bx * cy - by * cx)
    if d == 0.0:
        # collinear: the widest pair spans the others
        return max((_circle_two(p, q) for p, q in ((a, b), (a, c), (b, c))), key=lambda t: t[2])
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (cy * b2 - by * c2) / d
    uy = (bx * c2 - cx * b2) / d
    return ax + ux, ay + uy, math.hypot(ux, uy)


def _inside(circle, p, tol=1e-9):
    cx, cy, r = circle
    return math.hypot(p[0] - cx, p[1] - cy) <= r * (1.0 + tol) + tol


def min_enclosing_circle_points(points: np.ndarray):
    """Welzl's algorithm (iterative form) over a fixed shuffle of the points.

    Returns ``(cx, cy, r)``; ``r`` is 0 for a single point.
    """
    pts = [tuple(p) for p in np.asarray(points, dtype=np.float64)]
    if not pts:
        raise ValueError("no points")
    order = np.random.default_rng(0).permutation(len(pts))
    pts = [pts[i] for i in order]
    c = (pts[0][0], pts[0][1], 0.0)
    for i in range(1, len(pts)):
        p = pts[i]
        if _inside(c, p):
            continue
        c = (p[0], p[1], 0.0)
        for j in range(i):
            q = pts[j]
            if _inside(c, q):
                continue
            c = _circle_two(p, q)
            for k in range(j):
                s = pts[k]
                if not _inside(c, s):
                    c = _circle_three(p, q, s)
    return c


def mask_boundary_points(mask: np.ndarray) -> np.ndarray:
    """(x, y) centres of mask pixels that have a 4-neighbour outside the mask."""
    m = np.pad(mask.astype(bool), 1)
    core = m[1:-1, 1:-1]
    interior = core & m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    ys, xs = np.nonzero(core & ~interior)
    return np.column_stack([xs, ys]).astype(np.float64)


def min_enclosing_circle(mask: np.ndarray) -> Circle:
    """Smallest circle covering every true pixel, pixels taken as discs of
    radius 0.5 around their centres."""
    pts = mask_boundary_points(mask)
    if len(pts) == 0:
        raise ValueError("cannot fit a circle to an empty mask")
    cx, cy, r = min_enclosing_circle_points(convex_hull(pts))
    return Circle(float(cx), float(cy), float(r) + 0.5)


def eccentricity_from_sums(area, sx, sy, sxx, sxy, syy):
    """Eccentricity of the moment-equivalent ellipse of a pixel set.

    Inputs are integer raw moment sums. Central moments are formed in exact
    integer arithmetic so that perfectly symmetric regions give exactly 0.
    Returns ``None`` when undefined (the ellipse degenerates to a point).
    """
    area, sx, sy = int(area), int(sx), int(sy)
    a = area * int(sxx) - sx * sx
    b = area * int(sxy) - sx * sy
    c = area * int(syy) - sy * sy
    diff_sq = (a - c) * (a - c) + 4 * b * b
    if diff_sq == 0:
        return None if a + c == 0 else 0.0
    root = math.sqrt(diff_sq) / 2.0
    major = (a + c) / 2.0 + root
    return math.sqrt(min(1.0, 2.0 * root / major))
