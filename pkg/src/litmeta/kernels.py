"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
fallback.  Set ``LITMETA_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("LITMETA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
else:
    _compiled = None

if _compiled is not None:
    coupling_pairs = _compiled.coupling_pairs
    louvain_move = _compiled.louvain_move
    BACKEND = "cython"
else:
    coupling_pairs = _kernels_py.coupling_pairs
    louvain_move = _kernels_py.louvain_move

__all__ = ["BACKEND", "coupling_pairs", "louvain_move"]
