"""Kernel backend selection.

The compiled extension is used when importable; setting ``PILOTWAVE_PURE=1``
forces the numpy fallback. ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py as pure

compiled = None
if os.environ.get("PILOTWAVE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else pure
BACKEND = "cython" if compiled is not None else "python"

stream_seeds = _impl.stream_seeds
uniforms = _impl.uniforms
ground_state_gray = _impl.ground_state_gray
metropolis = _impl.metropolis
