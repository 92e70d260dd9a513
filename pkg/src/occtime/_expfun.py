"""Cancellation-free exponential remainders.

``phi(k, z) = (e^z - sum_{j<k} z^j / j!) / z^k``, so ``phi(0) = exp``,
``phi(1) = (e^z - 1)/z`` and so on; ``phi(k, 0) = 1/k!``.
"""

from math import factorial

import numpy as np

_TAYLOR_RADIUS = 1.0
_TAYLOR_TERMS = 24


def phi(k, z):
    z = np.asarray(z)
    dtype = np.result_type(z.dtype, np.float64)
    z = z.astype(dtype)
    out = np.empty_like(z)
    small = np.abs(z) < _TAYLOR_RADIUS
    if np.any(small):
        zs = z[small]
        acc = np.zeros_like(zs)
        # Horner on sum_j z^j / (j+k)!
        for j in range(_TAYLOR_TERMS, -1, -1):
            acc = acc * zs + 1.0 / factorial(j + k)
        out[small] = acc
    big = ~small
    if np.any(big):
        zb = z[big]
        num = np.expm1(zb) if k >= 1 else np.exp(zb)
        for j in range(1, k):
            num = num - zb**j / factorial(j)
        out[big] = num / zb**k if k >= 1 else num
    return out[()] if out.ndim == 0 else out
