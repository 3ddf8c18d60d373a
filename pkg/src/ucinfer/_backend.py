"""Backend selection for the hot numerical kernels.

Kernels are written once as plain numpy functions.  When numba is
importable and not disabled through the environment variable
``UCINFER_DISABLE_NUMBA`` (values ``1``/``true``/``yes``), the package
compiles them with ``numba.njit`` and uses the compiled variants by
default.  Both variants remain importable side by side so they can be
compared directly (see ``benchmarks/bench_backends.py`` and the
cross-backend tests).
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised on numba-free installs
    numba = None
    HAVE_NUMBA = False

_disable = os.environ.get("UCINFER_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _disable not in ("1", "true", "yes")


def jit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
