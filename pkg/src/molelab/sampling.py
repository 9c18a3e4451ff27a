"""Direct exploration designs: Latin hypercube and full-factorial grids."""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .params import ParameterSpace


def lhs_unit(n: int, d: int, rng: np.random.Generator, centered: bool = False) -> np.ndarray:
    """``n`` points in ``[0, 1)^d`` with one point per stratum ``[k/n, (k+1)/n)`` per axis."""
    if n < 1:
        raise ValueError(f"LHS needs n >= 1, got {n}")
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    offset = np.full((n, d), 0.5) if centered else rng.random((n, d))
    u = (strata + offset) / n
    # float rounding of (n - 1 + r) / n can reach 1.0 for r close to 1
    return np.minimum(u, np.nextafter(1.0, 0.0))


def lhs(space: ParameterSpace, n: int, seed: int, centered: bool = False) -> np.ndarray:
    """Latin hypercube design, one row per point, in parameter units."""
    rng = np.random.default_rng(seed)
    return space.from_unit(lhs_unit(n, space.dim, rng, centered))


def grid_unit(levels_per_dim: Sequence[int]) -> np.ndarray:
    """Endpoint-inclusive factorial levels in unit space; one level means the midpoint."""
    axes = []
    for k, m in enumerate(levels_per_dim):
        if int(m) != m or m < 1:
            raise ValueError(f"level count for dimension {k} must be an integer >= 1, got {m}")
        axes.append(np.array([0.5]) if m == 1 else np.linspace(0.0, 1.0, int(m)))
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, len(axes))


def grid(space: ParameterSpace, levels_per_dim: Sequence[int]) -> np.ndarray:
    """Full factorial in scaled space, lexicographic order (last parameter varies fastest)."""
    if len(levels_per_dim) != space.dim:
        raise ValueError(f"need one level count per parameter ({space.dim}), got {len(levels_per_dim)}")
    return space.from_unit(grid_unit(levels_per_dim))
