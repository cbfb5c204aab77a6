"""Backend selection for the hot numeric kernels.

The compiled extension is preferred; the numpy fallback is used when it was
not built or when ``OTATTI_PURE_PYTHON=1`` is set in the environment.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("OTATTI_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_c as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py
        BACKEND = "python"

top_energy_fraction = _impl.top_energy_fraction
pairwise_distances = _impl.pairwise_distances
shape_moments = _impl.shape_moments
average_linkage_two = _impl.average_linkage_two

__all__ = [
    "BACKEND",
    "average_linkage_two",
    "pairwise_distances",
    "shape_moments",
    "top_energy_fraction",
]
