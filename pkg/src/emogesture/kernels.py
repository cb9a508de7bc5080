"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
implementations are used. Set ``EMOGESTURE_PURE_PYTHON=1`` to force the
fallback (the test-suite runs both).
"""
import os

from . import _kernels_py

if os.environ.get("EMOGESTURE_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

rot6d_to_matrix = _impl.rot6d_to_matrix
geodesic_angle = _impl.geodesic_angle
rot6d_geodesic = _impl.rot6d_geodesic
angular_speed = _impl.angular_speed
forward_kinematics = _impl.forward_kinematics
beat_align_score = _impl.beat_align_score
pairwise_l2 = _impl.pairwise_l2


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out
