"""Seeded random streams.

Every random draw in the package goes through :func:`make_rng`, which
returns a numpy ``Generator`` backed by PCG64 and seeded through
``SeedSequence``. The same integer seed yields the same stream on every
platform numpy supports.
"""

import numpy as np


def make_rng(seed):
    """Return a ``Generator`` for ``seed``; generators pass through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or int(seed) < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.Generator(np.random.PCG64(int(seed)))
