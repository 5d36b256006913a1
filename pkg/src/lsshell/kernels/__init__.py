"""Shell element kernels.

The compiled numba versions are used by default. Setting the environment
variable ``LSSHELL_DISABLE_NUMBA=1`` (or running without numba installed)
selects the pure numpy versions, which return the same results.
"""

import os

from . import _numpy

BACKEND = "numpy"
if os.environ.get("LSSHELL_DISABLE_NUMBA", "0").lower() in ("", "0", "false", "no"):
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover
        _impl = _numpy
else:
    _impl = _numpy

element_stiffness = _impl.element_stiffness
offset_energy_derivatives = _impl.offset_energy_derivatives
scatter_add = _impl.scatter_add

__all__ = ["BACKEND", "element_stiffness", "offset_energy_derivatives", "scatter_add"]
