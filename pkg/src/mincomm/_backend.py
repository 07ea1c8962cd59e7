"""Kernel backend selection.

Set ``MINCOMM_PURE_NUMPY=1`` before import to run every hot kernel through
its vectorised numpy twin instead of the numba-compiled loop.
"""
import os

ENV_FLAG = "MINCOMM_PURE_NUMPY"

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _numpy_forced():
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _numpy_forced()


def njit(fn):
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
