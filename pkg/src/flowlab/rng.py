"""Deterministic counter-based random streams.

Every random quantity in the package is drawn from a Philox (counter-based)
bit generator keyed by ``(seed, stream index)``.  Streams are therefore
independent of evaluation order and of the number of worker threads, and a
fixed ``(seed, index, step)`` triple always yields the same variate on every
platform.  Normal variates are produced by the inverse CDF applied to
uniforms on the open unit interval, so they inherit the same guarantee.

Stream index layout:

* ``0 .. 2**62 - 1``      trajectory substreams (one per trajectory)
* ``2**62``               initial points drawn from the standard Gaussian
* ``2**62 + 1``           inverse-CDF sampling of grid densities
* ``2**62 + 2``           Monte-Carlo quadrature fallback nodes
"""

import numpy as np
from scipy.special import ndtri

INITIALS_STREAM = 1 << 62
GRID_SAMPLER_STREAM = (1 << 62) + 1
MC_QUAD_STREAM = (1 << 62) + 2

_DENOM = float(1 << 53)


def substream(seed, index):
    """Generator for stream ``index`` under ``seed`` (Philox, key = [seed, index])."""
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def uniform_open(gen, size):
    """Uniforms in the open interval (0, 1); safe as ndtri arguments."""
    return gen.integers(1, 1 << 53, size=size).astype(np.float64) / _DENOM


def standard_normals(seed, index, shape):
    """Standard normal variates for stream ``index`` via inverse CDF."""
    return ndtri(uniform_open(substream(seed, index), shape))


def brownian_increments(seed, index, n_steps, m, dt):
    """Increments of an m-dimensional Brownian path on a uniform grid."""
    z = standard_normals(seed, index, (n_steps, m))
    return z * np.sqrt(dt)


def gaussian_points(seed, n, d, stream=INITIALS_STREAM):
    """n γ_d-distributed points from a dedicated stream."""
    return standard_normals(seed, stream, (n, d))
