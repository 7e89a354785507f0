"""Optional numba acceleration.

Every kernel in :mod:`cdbp.kernels` is written so that it runs unchanged as
plain Python over numpy arrays.  Setting ``CDBP_DISABLE_NUMBA=1`` in the
environment (before import) selects that fallback path; it is also used
automatically when numba is not installed.
"""

import os

_flag = os.environ.get("CDBP_DISABLE_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _flag not in ("1", "true", "yes", "on")

try:
    if not NUMBA_REQUESTED:
        raise ImportError
    import numba as _numba
except ImportError:  # pragma: no cover - depends on environment
    _numba = None

NUMBA_ENABLED = _numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise.

    Works both bare (``@njit``) and with options (``@njit(cache=True)``).
    """
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        fn = args[0]
        return _numba.njit(cache=True)(fn) if NUMBA_ENABLED else fn

    def deco(fn):
        if not NUMBA_ENABLED:
            return fn
        opts = {"cache": True}
        opts.update(kwargs)
        return _numba.njit(*args, **opts)(fn)

    return deco


def python_version(kernel):
    """Return the uncompiled Python function behind ``kernel``."""
    return getattr(kernel, "py_func", kernel)
