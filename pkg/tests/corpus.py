"""Seeded random expression corpus shared by the jet tests and acceptance run."""

from __future__ import annotations

import numpy as np


def _poly_source(rng, names, degree=4, terms=5):
    parts = []
    for _ in range(terms):
        c = rng.uniform(-2.0, 2.0)
        exps = rng.integers(0, degree + 1, size=len(names))
        while exps.sum() > degree:
            exps[rng.integers(len(names))] = max(0, exps[rng.integers(len(names))] - 1)
        factors = [f"{c:.6f}"]
        for name, k in zip(names, exps):
            factors.extend([name] * int(k))
        parts.append("*".join(factors))
    return " + ".join(parts)


def random_expressions(count, names=("x", "y"), seed=7):
    """Polynomial and trig expressions with derivatives of moderate size."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        kind = rng.integers(4)
        p = _poly_source(rng, names, degree=4, terms=4)
        a, b = rng.uniform(-1.0, 1.0, size=2)
        lin = f"{a:.6f}*{names[0]} + {b:.6f}*{names[-1]}"
        if kind == 0:
            src = p
        elif kind == 1:
            src = f"({p}) + {rng.uniform(0.5, 2.0):.6f}*sin({lin})"
        elif kind == 2:
            src = f"cos({lin})*({_poly_source(rng, names, degree=2, terms=3)})"
        else:
            src = f"exp({0.3 * a:.6f}*{names[0]}) + ({p})/(4 + {names[0]}^2)"
        out.append(src)
    return out


def interior_points(count, dim=2, lo=-0.8, hi=0.8, seed=11):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(count, dim))
