"""Backend selection for the hot kernels.

Set ``ADPDD_BACKEND=numpy`` to force the pure-numpy path, or
``ADPDD_BACKEND=numba`` (the default when numba is importable).
"""

import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the environment
    HAVE_NUMBA = False

_requested = os.environ.get("ADPDD_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"ADPDD_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is available, identity otherwise."""
    if HAVE_NUMBA:
        import numba

        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap
