"""Finite-difference oracle used across the test suite.

Fourth-order central stencils, nested per variable, so that third partials
can be checked well below the 1e-6 relative target without hitting the
float64 roundoff floor.
"""

from __future__ import annotations

import numpy as np

# f'(x) ~ (f(x-2h) - 8 f(x-h) + 8 f(x+h) - f(x+2h)) / (12 h), error O(h^4)
_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def fd_partial(fn, point, multi_index, h=None):
    """Mixed partial of ``fn`` at ``point`` for an exponent tuple."""
    order = int(sum(multi_index))
    if order == 0:
        return fn(np.asarray(point, dtype=float))
    if h is None:
        # balances O(h^4) truncation against eps/h^order roundoff
        h = {1: 2e-3, 2: 4e-3, 3: 8e-3, 4: 2e-2}.get(order, 2e-2)
    axis = next(i for i, m in enumerate(multi_index) if m > 0)
    rest = list(multi_index)
    rest[axis] -= 1

    total = 0.0
    for off, w in zip(_OFFSETS, _WEIGHTS):
        shifted = np.asarray(point, dtype=float).copy()
        shifted[axis] += off * h
        total += w * fd_partial(fn, shifted, tuple(rest), h)
    return total / h


def fd_gradient(fn, point, h=1e-5):
    point = np.asarray(point, dtype=float)
    grad = np.empty(point.size)
    for a in range(point.size):
        mi = tuple(int(i == a) for i in range(point.size))
        grad[a] = fd_partial(fn, point, mi, h)
    return grad
