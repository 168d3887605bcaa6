"""Backend selection for the numerical kernels.

Kernels are written once, in numba-compatible numpy. At import time they are
either compiled with ``numba.njit`` or left as plain Python functions operating
on the same arrays, so both backends execute identical code paths.

Set the environment variable ``DMAE_DISABLE_NUMBA=1`` (before importing the
package) to force the pure-numpy fallback. The fallback is also selected
automatically when numba is not installed.
"""

import os

DISABLE_ENV = "DMAE_DISABLE_NUMBA"


def _resolve_backend() -> str:
    if os.environ.get(DISABLE_ENV, "").strip() not in ("", "0"):
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


BACKEND = _resolve_backend()


def maybe_jit(func):
    """Apply ``numba.njit(cache=True)`` when the numba backend is active.

    With the numpy backend the function is returned unchanged, so the exact
    same source runs either way.
    """
    if BACKEND == "numba":
        import numba

        return numba.njit(cache=True)(func)
    return func
