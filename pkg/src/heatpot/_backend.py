"""Backend selection for the compiled kernels.

Set ``HEATPOT_BACKEND=numpy`` to force the pure-numpy path; the default is
numba, falling back to numpy when numba cannot be imported.
"""
import os

import numpy as np

from . import _kernels_numpy

NODES, WEIGHTS = np.polynomial.legendre.leggauss(16)

_requested = os.environ.get("HEATPOT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"HEATPOT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import _kernels_numba as kernels
        BACKEND = "numba"
    except ImportError:  # pragma: no cover
        kernels = _kernels_numpy
        BACKEND = "numpy"
else:
    kernels = _kernels_numpy
    BACKEND = "numpy"


def get(name):
    """Return the kernel module for ``name`` ('numba' or 'numpy')."""
    if name == "numpy":
        return _kernels_numpy
    from . import _kernels_numba
    return _kernels_numba
