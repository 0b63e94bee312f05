"""Reproducible sample points over chart domains.

Generic-point checks all draw from a seeded low-discrepancy sequence so that
identical invocations produce identical reports.  The CLI resolves the
PROJCALC_SEED environment variable; library callers pass seeds explicitly.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.stats import qmc

DEFAULT_SEED = 20260810


def resolve_seed(seed=None):
    """Explicit seed, else PROJCALC_SEED from the environment, else default."""
    if seed is not None:
        return int(seed)
    env = os.environ.get("PROJCALC_SEED")
    if env is not None:
        return int(env)
    return DEFAULT_SEED


def sample_points(chart, count, seed=DEFAULT_SEED, margin=0.1):
    """Interior low-discrepancy points, shrunk away from the boundary."""
    lo = np.array([a for a, _ in chart.domain])
    hi = np.array([b for _, b in chart.domain])
    pad = margin * (hi - lo)
    eng = qmc.Halton(d=chart.dim, scramble=True, seed=seed)
    u = eng.random(count)
    return (lo + pad) + u * (hi - lo - 2 * pad)


def grid_points(chart, per_axis, margin=0.05):
    """Regular collocation grid over the chart domain."""
    axes = []
    for lo, hi in chart.domain:
        pad = margin * (hi - lo)
        axes.append(np.linspace(lo + pad, hi - pad, per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)
