"""Pattern Space Exploration: evolutionary search for diverse model behaviors.

The output (pattern) space is cut into a regular grid. Every evaluated
genome lands in one cell; the first genome to reach a cell becomes its
exemplar. Parents are drawn among exemplars with weight ``1 / (1 + hits)``,
so rarely reached behaviors are bred more; a fraction of each batch is fresh
uniform genomes. Patterns outside the grid are clamped to its boundary cells,
which are then flagged as overflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .io import emit_csv
from .nsga2 import Problem, evaluation_seed
from .parallel import Failure, WorkerPool, serial_pool
from .params import ParameterSpace
from .sampling import lhs_unit

log = logging.getLogger(__name__)

SIGMA_RANGE = (1e-2, 0.3)


@dataclass(frozen=True)
class GridSpec:
    lower: tuple
    upper: tuple
    n_bins: tuple

    def __post_init__(self):
        lo, hi, nb = (tuple(float(v) for v in self.lower), tuple(float(v) for v in self.upper),
                      tuple(int(v) for v in self.n_bins))
        if not (len(lo) == len(hi) == len(nb)) or not lo:
            raise ValueError("grid needs matching, non-empty lower, upper and n_bins")
        for k, (a, b, m) in enumerate(zip(lo, hi, nb)):
            if not a < b:
                raise ValueError(f"grid dimension {k}: lower {a} must be < upper {b}")
            if m < 1:
                raise ValueError(f"grid dimension {k}: n_bins must be >= 1")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "n_bins", nb)

    @property
    def dim(self) -> int:
        return len(self.n_bins)

    @property
    def size(self) -> int:
        return math.prod(self.n_bins)

    def cell_bounds(self, cell: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        lo, hi, nb = np.array(self.lower), np.array(self.upper), np.array(self.n_bins)
        w = (hi - lo) / nb
        c = np.asarray(cell)
        return lo + c * w, lo + (c + 1) * w


def _locate(grid: GridSpec, pattern) -> tuple[tuple[int, ...], bool]:
    x = np.asarray(pattern, dtype=float).ravel()
    if x.size != grid.dim:
        raise ValueError(f"pattern has {x.size} components, grid has {grid.dim}")
    if np.any(np.isnan(x)):
        raise ValueError("pattern has NaN components")
    lo, hi, nb = np.array(grid.lower), np.array(grid.upper), np.array(grid.n_bins)
    with np.errstate(invalid="ignore", over="ignore"):
        raw = np.floor((x - lo) / ((hi - lo) / nb))
    out = bool(np.any((x < lo) | (x > hi)))
    idx = np.clip(raw, 0, nb - 1)
    return tuple(int(v) for v in idx), out


def discretize(grid: GridSpec, pattern: Sequence[float]) -> tuple[int, ...]:
    """Cell index per dimension: ``floor((x - lower) / width)`` clamped to ``[0, n_bins - 1]``."""
    return _locate(grid, pattern)[0]


@dataclass
class Cell:
    hits: int
    genome: np.ndarray
    pattern: np.ndarray
    overflow: bool = False


@dataclass
class PatternGrid:
    spec: GridSpec
    cells: dict = field(default_factory=dict)
    evaluations: int = 0
    failures: int = 0

    def add(self, genome, pattern) -> tuple[int, ...]:
        cell, out = _locate(self.spec, pattern)
        entry = self.cells.get(cell)
        if entry is None:
            self.cells[cell] = Cell(1, np.asarray(genome, dtype=float).copy(),
                                    np.asarray(pattern, dtype=float).copy(), out)
        else:
            entry.hits += 1
            entry.overflow = entry.overflow or out
        return cell

    def coverage(self) -> int:
        return len(self.cells)


def coverage(grid: PatternGrid) -> int:
    return grid.coverage()


@dataclass(frozen=True)
class PseConfig:
    budget: int = 3000
    batch_size: int = 50
    fresh_fraction: float = 0.1
    seed: int = 0
    sigma_min: float = SIGMA_RANGE[0]
    sigma_max: float = SIGMA_RANGE[1]

    def __post_init__(self):
        if not 0 < self.sigma_min <= self.sigma_max:
            raise ValueError("mutation scales need 0 < sigma_min <= sigma_max")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.budget < self.batch_size:
            raise ValueError(f"budget {self.budget} must be >= batch_size {self.batch_size}")
        if not 0.0 <= self.fresh_fraction <= 1.0:
            raise ValueError("fresh_fraction must be in [0, 1]")


def rarity_weights(grid: PatternGrid) -> tuple[list, np.ndarray]:
    cells = list(grid.cells)
    w = np.array([1.0 / (1.0 + grid.cells[c].hits) for c in cells])
    return cells, w / w.sum()


def select_parents(grid: PatternGrid, n: int, rng: np.random.Generator) -> list:
    """``n`` cells drawn with replacement, probability proportional to ``1 / (1 + hits)``."""
    cells, p = rarity_weights(grid)
    return [cells[k] for k in rng.choice(len(cells), size=n, p=p)]


def _mutate(u: np.ndarray, rng: np.random.Generator, sigma_range=SIGMA_RANGE) -> np.ndarray:
    # log-uniform step size: mostly local moves, with occasional long jumps
    sigma = math.exp(rng.uniform(math.log(sigma_range[0]), math.log(sigma_range[1])))
    c = u + sigma * rng.standard_normal(u.size)
    c = np.where(c < 0.0, -c, c)
    c = np.where(c > 1.0, 2.0 - c, c)
    return np.clip(c, 0.0, 1.0)


def evaluate_into(grid: PatternGrid, problem: Problem, space: ParameterSpace, units, seed: int,
                  pool: WorkerPool) -> None:
    """Evaluate unit-cube genomes and file their patterns in submission order."""
    genomes = [space.from_unit(u) for u in units]
    seeds = [evaluation_seed(seed, grid.evaluations + k) for k in range(len(genomes))]
    results = pool.starmap(problem, list(zip(genomes, seeds)))
    grid.evaluations += len(genomes)
    for g, r in zip(genomes, results):
        if isinstance(r, Failure):
            log.warning("pattern evaluation failed at %s: %s", g, r.error)
            grid.failures += 1
            continue
        try:
            grid.add(g, r)
        except ValueError as exc:
            log.warning("pattern discarded at %s: %s", g, exc)
            grid.failures += 1


def pse_run(problem: Problem, space: ParameterSpace, grid: GridSpec, config: PseConfig,
            pool: WorkerPool | None = None) -> PatternGrid:
    pool = pool or serial_pool()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0x95E,)))
    out = PatternGrid(grid)
    evaluate_into(out, problem, space, list(lhs_unit(config.batch_size, space.dim, rng)), config.seed, pool)
    while out.evaluations < config.budget:
        n = config.batch_size
        fresh = rng.random(n) < config.fresh_fraction
        units = []
        parents = select_parents(out, n, rng) if out.cells else []
        for k in range(n):
            if fresh[k] or not parents:
                units.append(rng.random(space.dim))
            else:
                units.append(_mutate(space.to_unit(out.cells[parents[k]].genome), rng,
                                     (config.sigma_min, config.sigma_max)))
        evaluate_into(out, problem, space, units[: config.budget - out.evaluations], config.seed, pool)
    return out


def grid_schema(grid: PatternGrid, genome_names: Sequence[str], pattern_names: Sequence[str] | None = None):
    pattern_names = list(pattern_names or [f"pattern_{k}" for k in range(grid.spec.dim)])
    return [*(f"cell_{k}" for k in range(grid.spec.dim)), "hit_count", "overflow", *genome_names, *pattern_names]


def write_grid(grid: PatternGrid, genome_names: Sequence[str], path, pattern_names=None):
    rows = [[*cell, c.hits, c.overflow, *c.genome, *c.pattern] for cell, c in sorted(grid.cells.items())]
    return emit_csv(rows, grid_schema(grid, genome_names, pattern_names), path)
