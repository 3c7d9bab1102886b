"""Numba switch.

Set ``RIDEPROFIT_NO_NUMBA=1`` before import to route every hot kernel through
its pure-numpy twin. The compiled kernels stay importable either way so the
two paths can be compared side by side.
"""

import os

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency here
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


def _flag_disabled() -> bool:
    return os.environ.get("RIDEPROFIT_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _flag_disabled()


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
