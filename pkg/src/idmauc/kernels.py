"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``IDMAUC_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _fallback

BACKEND = "python"

if os.environ.get("IDMAUC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import aj_forward, weibull_p01  # noqa: F401

        BACKEND = "compiled"
    except ImportError:  # extension not built
        pass

if BACKEND == "python":
    aj_forward = _fallback.aj_forward
    weibull_p01 = _fallback.weibull_p01

__all__ = ["BACKEND", "aj_forward", "weibull_p01"]
