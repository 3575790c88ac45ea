"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``HV3D_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from hv3d import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("HV3D_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from hv3d import _kernels as _impl  # noqa: F811

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback


def block_search(base, other, origins, centers, m, search, backend=None):
    """Exhaustive MSE search; returns ``(matched (N, 2) yx, mse (N,))``."""
    impl = _select(backend)
    base = np.ascontiguousarray(base, dtype=np.float64)
    other = np.ascontiguousarray(other, dtype=np.float64)
    origins = np.ascontiguousarray(origins, dtype=np.intp).reshape(-1, 2)
    centers = np.ascontiguousarray(centers, dtype=np.intp).reshape(-1, 2)
    return impl.block_search(base, other, origins, centers, int(m), int(search))


def edge_widths(img, edges, direction, backend=None):
    impl = _select(backend)
    return impl.edge_widths(
        np.ascontiguousarray(img, dtype=np.float64),
        np.ascontiguousarray(edges, dtype=np.uint8),
        np.ascontiguousarray(direction, dtype=np.int8),
    )


def available_backends():
    names = ["python"]
    if BACKEND == "compiled" or _compiled_importable():
        names.append("compiled")
    return names


def _compiled_importable():
    try:
        from hv3d import _kernels  # noqa: F401
    except ImportError:
        return False
    return True


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _fallback
    if backend == "compiled":
        from hv3d import _kernels

        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
