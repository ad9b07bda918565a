"""Kernel backend selection.

The numba backend is used when numba imports and ``NEURALBP_DISABLE_NUMBA``
is unset (or ``0``). With the flag set numba is never imported. Both backends expose the same four entry points:
``minsum_forward``, ``spa_forward``, ``minsum_backward``, ``spa_backward``.
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

from . import _numpy

NUMBA_DISABLED = os.environ.get("NEURALBP_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

BACKENDS: dict[str, ModuleType] = {"numpy": _numpy}
if not NUMBA_DISABLED:
    try:
        BACKENDS["numba"] = importlib.import_module(f"{__name__}._numba")
    except ImportError:  # pragma: no cover
        pass

DEFAULT_BACKEND = "numba" if "numba" in BACKENDS else "numpy"


def get_backend(name: str | None = None) -> ModuleType:
    name = name or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}") from None
