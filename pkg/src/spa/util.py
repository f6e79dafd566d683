"""Small numeric helpers shared across modules."""

import os

import numpy as np

from .errors import ParameterError


def sign_pm(x):
    """Sign with the convention sign(0) = +1, elementwise; returns int array."""
    return np.where(np.asarray(x) >= 0, 1, -1)


def readonly(a, dtype=float):
    """Copy `a` into a read-only array (immutability for frozen dataclasses)."""
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


def next_pow2(n):
    """Smallest power of two >= n (n >= 1)."""
    return 1 << max(0, int(n) - 1).bit_length()


def worker_count(default=1):
    """Worker cap from the SPA_THREADS environment variable (>= 1)."""
    raw = os.environ.get("SPA_THREADS")
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(f"SPA_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ParameterError(f"SPA_THREADS must be >= 1, got {n}")
    return n
