"""Dense float64 arrays and the handful of operations the attacks rely on.

Tensors are plain :class:`numpy.ndarray` objects of dtype float64 and rank
1 or 2. The helpers here add the validation the rest of the package expects
(finite values, matching shapes) on top of numpy arithmetic.
"""

import numpy as np

from .exceptions import DegenerateGradientError, UsageError

_BINARY_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def as_tensor(data, *, ndim=None, name="tensor"):
    """Convert ``data`` to a contiguous float64 array and validate it.

    Parameters
    ----------
    data : array_like
        Values to convert.
    ndim : int or None
        Required rank. ``None`` accepts rank 1 or 2.
    name : str
        Used in error messages.

    Returns
    -------
    ndarray of float64
    """
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise UsageError(f"{name} must have rank {ndim}, got shape {arr.shape}")
    if arr.ndim not in (1, 2):
        raise UsageError(f"{name} must have rank 1 or 2, got shape {arr.shape}")
    if arr.size == 0:
        raise UsageError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return arr


def l2_norm(t):
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0:
        raise UsageError("l2_norm of an empty tensor")
    return float(np.sqrt(np.sum(t * t)))


def normalize_l2(t):
    """Return ``t / ||t||_2``.

    Raises
    ------
    DegenerateGradientError
        If ``t`` is all zeros.
    """
    t = np.asarray(t, dtype=np.float64)
    norm = l2_norm(t)
    if norm == 0.0:
        raise DegenerateGradientError("cannot normalize a zero vector")
    return t / norm


def elementwise(a, b, kind):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"shape mismatch: {a.shape} vs {b.shape}")
    try:
        op = _BINARY_OPS[kind]
    except KeyError:
        raise UsageError(f"unknown elementwise op {kind!r}") from None
    return op(a, b)


def scale(a, s):
    return np.asarray(a, dtype=np.float64) * float(s)


def clamp(a, lo, hi):
    if lo > hi:
        raise UsageError(f"clamp bounds reversed: lo={lo} > hi={hi}")
    return np.clip(np.asarray(a, dtype=np.float64), lo, hi)
