"""Trajectory kernel selection.

The compiled extension is used when it was built; otherwise the vectorized
numpy implementation. Set ``QPATTERN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _trajectory_py

try:
    if os.environ.get("QPATTERN_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python forced")
    from . import _trajectory as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _trajectory_py.run_trajectories}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.run_trajectories

DEFAULT_BACKEND = "compiled" if _compiled is not None else "python"


def get_kernel(name: str | None = None):
    name = name or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
