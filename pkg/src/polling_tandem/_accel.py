"""Numba on/off switch.

Set ``POLLING_TANDEM_DISABLE_NUMBA=1`` to route every hot kernel through its
pure-numpy (or plain Python) fallback. The flag is read once at import time;
tests flip ``USE_NUMBA`` directly.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_disabled = os.environ.get("POLLING_TANDEM_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)
USE_NUMBA = HAVE_NUMBA and not _disabled

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(func):
    """Compile ``func`` with numba when available; otherwise return it untouched.

    The original Python function stays reachable as ``.py_func`` in both cases
    so fallback paths can run the identical source interpreted.
    """
    if not HAVE_NUMBA:
        func.py_func = func
        return func
    return numba.njit(func, **NUMBA_OPTS)


def use_numba() -> bool:
    return USE_NUMBA


def set_use_numba(flag: bool) -> None:
    global USE_NUMBA
    USE_NUMBA = bool(flag) and HAVE_NUMBA
