"""Backend selection for the hot loops.

The numba kernels are used unless ``FEWJUMPS_DISABLE_NUMBA`` is set to a
truthy value (or numba cannot be imported), in which case the pure-numpy
twins are used. Both backends honour identical contracts; random draws are
always produced by numpy, so results do not depend on the backend beyond
floating-point summation order.
"""

import os

from . import _kernels_numpy

_DISABLE = os.environ.get("FEWJUMPS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

if _DISABLE:
    _impl = _kernels_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _impl = _kernels_numpy
        BACKEND = "numpy"

orthant_hits = _impl.orthant_hits
project_simplex_rows = _impl.project_simplex_rows
signed_quadform_min = _impl.signed_quadform_min
face_qp_min = _impl.face_qp_min
oracle_min = _impl.oracle_min

__all__ = [
    "BACKEND",
    "orthant_hits",
    "project_simplex_rows",
    "signed_quadform_min",
    "face_qp_min",
    "oracle_min",
]
