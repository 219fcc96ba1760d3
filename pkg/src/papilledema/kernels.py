"""Backend selection for the image-processing hot kernels.

The compiled extension is used when importable; otherwise (or when the
environment variable ``PAPILLEDEMA_PURE_PYTHON`` is set to ``1``) the numpy
implementation is used. Both produce identical outputs.
"""
import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _kernels_ext
except ImportError:  # extension not built
    _kernels_ext = None

HAVE_EXTENSION = _kernels_ext is not None
BACKENDS = {"python": _kernels_py}
if HAVE_EXTENSION:
    BACKENDS["cython"] = _kernels_ext

if os.environ.get("PAPILLEDEMA_PURE_PYTHON", "") == "1" or not HAVE_EXTENSION:
    BACKEND = "python"
else:
    BACKEND = "cython"
_impl = BACKENDS[BACKEND]


def _resolve(impl):
    """``None`` (active backend), a backend name, or a backend module."""
    if impl is None:
        return _impl
    if isinstance(impl, str):
        if impl not in BACKENDS:
            raise ValueError(f"backend {impl!r} is not available (have {sorted(BACKENDS)})")
        return BACKENDS[impl]
    return impl


def _u8(mask):
    return np.ascontiguousarray(mask, dtype=np.uint8)


def erode(mask, radius, border_value=True, impl=None):
    """Erode a boolean mask by a disk; pixels outside the image count as
    ``border_value``."""
    impl = _resolve(impl)
    return impl.erode(_u8(mask), int(radius), bool(border_value))


def dilate(mask, radius, impl=None):
    impl = _resolve(impl)
    return impl.dilate(_u8(mask), int(radius))


def opening(mask, radius, impl=None):
    """Disk opening. Erosion treats the outside as foreground so that
    erosion/dilation form an adjoint pair on the finite grid; this keeps
    opening anti-extensive and idempotent."""
    return dilate(erode(mask, radius, True, impl=impl), radius, impl=impl)


def closing(mask, radius, impl=None):
    return erode(dilate(mask, radius, impl=impl), radius, True, impl=impl)


def disk_mean(img, radius, impl=None):
    impl = _resolve(impl)
    return impl.disk_mean(np.ascontiguousarray(img, dtype=np.float64), int(radius))


def label8(mask, impl=None):
    impl = _resolve(impl)
    return impl.label8(_u8(mask))


def region_sums(labels, n, impl=None):
    impl = _resolve(impl)
    return impl.region_sums(np.ascontiguousarray(labels, dtype=np.int32), int(n))


def disk_offsets(radius):
    """Boolean footprint of the digital disk {dx^2 + dy^2 <= r^2}."""
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= r * r
