"""Numba switch.

Kernels are written once in a numba-compatible subset of Python. When
``EVSNN_DISABLE_NUMBA`` is set (any non-empty value other than ``0``) or numba
cannot be imported, ``njit`` becomes the identity decorator and the same
source runs under the interpreter.
"""

import os

_flag = os.environ.get("EVSNN_DISABLE_NUMBA", "").strip()
_disabled = _flag not in ("", "0")

try:
    if _disabled:
        raise ImportError
    import numba

    NUMBA_ENABLED = True
except ImportError:
    numba = None
    NUMBA_ENABLED = False


def njit(*args, **kwargs):
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def decorator(func):
        return func

    return decorator


def backend_name():
    return "numba" if NUMBA_ENABLED else "python"
