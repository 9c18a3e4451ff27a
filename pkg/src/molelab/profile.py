"""Calibration profiles: the lowest attainable error as one parameter is held in each bin.

The profiled parameter's range is cut into bins of equal width in unit
space. A niching evolutionary search keeps one elite per bin: each child is
a Gaussian mutation of a random elite, every coordinate included, and it
replaces the elite of the bin it lands in when its error is lower. A small
share of children is sent into still-empty bins so the whole range gets
covered. Multi-objective problems are profiled on their Chebyshev aggregate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .io import emit_csv
from .nsga2 import Problem, evaluation_seed
from .objectives import aggregate_scalar
from .parallel import Failure, WorkerPool, serial_pool
from .params import ParameterSpace

log = logging.getLogger(__name__)

DEFAULT_BINS = 32
DEFAULT_FLATNESS_TOL = 0.05
SIGMA_RANGE = (1e-4, 0.3)
NICHING = "niching"
PER_BIN = "per_bin"


@dataclass
class ProfileCurve:
    parameter: str
    edges: np.ndarray
    best_error: np.ndarray
    best_genome: np.ndarray
    evaluations: int = 0

    @property
    def n_bins(self) -> int:
        return self.best_error.size

    @property
    def filled(self) -> np.ndarray:
        return np.isfinite(self.best_error)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def bin_of(u: float, n_bins: int) -> int:
    return min(int(u * n_bins), n_bins - 1)


def _call_scalar(problem, genome, seed):
    return aggregate_scalar(np.atleast_1d(np.asarray(problem(genome, seed), dtype=float)))


def _mutate(u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    sigma = math.exp(rng.uniform(math.log(SIGMA_RANGE[0]), math.log(SIGMA_RANGE[1])))
    c = u + sigma * rng.standard_normal(u.size)
    # reflect once, then clip, to stay in the cube without piling mass on the faces
    c = np.where(c < 0.0, -c, c)
    c = np.where(c > 1.0, 2.0 - c, c)
    return np.clip(c, 0.0, 1.0)


def profile_run(problem: Problem, space: ParameterSpace, param_index: int, n_bins: int = DEFAULT_BINS,
                budget: int = 10_000, seed: int = 0, batch_size: int | None = None,
                coverage_rate: float = 0.1, mode: str = NICHING,
                pool: WorkerPool | None = None) -> ProfileCurve:
    """Profile parameter ``param_index``; deterministic in ``seed`` for a deterministic problem.

    ``mode="per_bin"`` is a validation variant: every child stays in the
    bin of its parent, so the bins are optimized independently.
    """
    if not 0 <= param_index < space.dim:
        raise IndexError(f"param_index {param_index} out of range for {space.dim} parameters")
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    if budget < n_bins:
        raise ValueError(f"budget {budget} must be >= n_bins {n_bins}")
    if mode not in (NICHING, PER_BIN):
        raise ValueError(f"mode must be {NICHING!r} or {PER_BIN!r}")
    pool = pool or serial_pool()
    batch_size = batch_size or n_bins
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x9F,)))
    d = space.dim
    best = np.full(n_bins, np.inf)
    best_u = np.full((n_bins, d), np.nan)
    done = 0

    def submit(units: list[np.ndarray]):
        nonlocal done
        genomes = [space.from_unit(u) for u in units]
        seeds = [evaluation_seed(seed, done + k) for k in range(len(units))]
        results = pool.starmap(_call_scalar, [(problem, g, s) for g, s in zip(genomes, seeds)])
        done += len(units)
        for u, r in zip(units, results):
            if isinstance(r, Failure) or not math.isfinite(r):
                log.warning("profile evaluation failed at %s: %s", u, getattr(r, "error", r))
                continue
            b = bin_of(u[param_index], n_bins)
            if r < best[b]:
                best[b] = r
                best_u[b] = u

    # one stratified point per bin to start
    init = rng.random((n_bins, d))
    init[:, param_index] = (np.arange(n_bins) + rng.random(n_bins)) / n_bins
    submit(list(init))
    while done < budget:
        filled = np.flatnonzero(np.isfinite(best))
        empty = np.flatnonzero(~np.isfinite(best))
        units = []
        for _ in range(batch_size):
            if filled.size == 0:
                units.append(rng.random(d))
                continue
            if empty.size and rng.random() < coverage_rate:
                parent = best_u[filled[rng.integers(filled.size)]]
                child = _mutate(parent, rng)
                b = empty[rng.integers(empty.size)]
                child[param_index] = min((b + rng.random()) / n_bins, 1.0)
            elif mode == PER_BIN:
                b = filled[rng.integers(filled.size)]
                child = _mutate(best_u[b], rng)
                lo, hi = b / n_bins, (b + 1) / n_bins
                child[param_index] = min(max(child[param_index], lo), np.nextafter(hi, lo) if b < n_bins - 1 else 1.0)
            else:
                child = _mutate(best_u[filled[rng.integers(filled.size)]], rng)
            units.append(child)
        submit(units[: budget - done])
    spec = space.specs[param_index]
    unit_edges = np.linspace(0.0, 1.0, n_bins + 1)
    probe = np.full((n_bins + 1, d), 0.5)
    probe[:, param_index] = unit_edges
    edges = space.from_unit(probe)[:, param_index]
    genomes = np.full((n_bins, d), np.nan)
    ok = np.isfinite(best)
    if ok.any():
        genomes[ok] = space.from_unit(best_u[ok])
    return ProfileCurve(spec.name, edges, np.where(ok, best, np.nan), genomes, evaluations=done)


def classify_profile(curve: ProfileCurve, flatness_tol: float = DEFAULT_FLATNESS_TOL) -> str:
    """``"flat"`` when the spread of bin errors is within ``flatness_tol * max(1, max_error)``."""
    if not curve.filled.all():
        missing = np.flatnonzero(~curve.filled).tolist()
        raise ValueError(f"profile has empty bins {missing}")
    hi, lo = float(curve.best_error.max()), float(curve.best_error.min())
    return "flat" if hi - lo <= flatness_tol * max(1.0, hi) else "informative"


def write_profile(curve: ProfileCurve, names: Sequence[str], path):
    rows = []
    for b in range(curve.n_bins):
        err = curve.best_error[b]
        rows.append([curve.edges[b], curve.edges[b + 1], "" if not np.isfinite(err) else err,
                     *("" if not np.isfinite(v) else v for v in curve.best_genome[b])])
    return emit_csv(rows, ["bin_lower", "bin_upper", "best_error", *names], path)
