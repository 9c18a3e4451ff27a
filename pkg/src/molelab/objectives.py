"""Calibration objectives and replication-aware evaluation.

Every objective is a normalized error: 0 is a perfect fit. SimpopLocal has
three, in this order: distance of the final size distribution to a fitted
lognormal (Kolmogorov-Smirnov D), relative error on the largest settlement
against 10,000 inhabitants, relative error on the run duration against 4,000
steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from . import simpoplocal as sl

log = logging.getLogger(__name__)

OBJECTIVE_NAMES = ("ks_lognormal", "largest_city_error", "duration_error")
TARGET_LARGEST = 10_000.0
TARGET_DURATION = 4000
DEFAULT_REPLICATIONS = 100
WORST = 1.0


def ks_lognormal(populations: Sequence[float]) -> float:
    """Kolmogorov-Smirnov distance to the lognormal with the sample's log moments.

    ``mu`` and ``sigma`` are the mean and the standard deviation (``ddof=1``)
    of ``log(populations)``. The supremum is taken on both sides of every
    step of the empirical CDF.
    """
    p = np.asarray(populations, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("ks_lognormal needs at least 2 values")
    if np.any(~(p > 0)) or not np.all(np.isfinite(p)):
        raise ValueError("ks_lognormal needs finite, strictly positive values")
    x = np.log(p)
    sigma = x.std(ddof=1)
    if not sigma > 0:
        raise ValueError("ks_lognormal: degenerate sample (zero log-variance)")
    n = x.size
    cdf = ndtr((np.sort(x) - x.mean()) / sigma)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf)
    d_minus = np.max(cdf - (i - 1) / n)
    return float(min(1.0, max(d_plus, d_minus, 0.0)))


def largest_city_error(populations: Sequence[float], target: float = TARGET_LARGEST) -> float:
    """``|max(P) - target| / target``."""
    p = np.asarray(populations, dtype=float)
    if p.size == 0:
        raise ValueError("largest_city_error needs at least one population")
    return float(abs(p.max() - target) / target)


def duration_error(duration: int, target: int = TARGET_DURATION) -> float:
    """``|duration - target| / target``."""
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    return abs(duration - target) / target


def aggregate_scalar(objectives: Sequence[float]) -> float:
    """Chebyshev aggregation: the worst component."""
    v = np.asarray(objectives, dtype=float)
    if v.size == 0:
        raise ValueError("cannot aggregate an empty objective vector")
    return float(v.max())


def aggregate_replications(values) -> np.ndarray:
    """Per-objective median over replications (rows)."""
    a = np.atleast_2d(np.asarray(values, dtype=float))
    if a.shape[0] == 0:
        raise ValueError("no replications to aggregate")
    return np.median(a, axis=0)


def replication_seed(base_seed: int, k: int) -> int:
    """Seed of replication ``k``: a hash of ``(base_seed, k)``."""
    return int(np.random.SeedSequence(int(base_seed), spawn_key=(int(k),)).generate_state(1, np.uint64)[0])


@dataclass
class EvaluationRecord:
    genome: np.ndarray
    objectives: np.ndarray
    replications: int
    base_seed: int
    failures: int = 0
    per_replication: np.ndarray | None = field(default=None, repr=False)


def outcome_objectives(outcome: sl.SimulationOutcome) -> np.ndarray:
    """The three objectives of one run; an objective that cannot be computed scores 1."""
    pops = outcome.populations
    out = np.empty(3)
    try:
        out[0] = ks_lognormal(pops)
    except ValueError as exc:
        log.debug("ks_lognormal undefined for this run: %s", exc)
        out[0] = WORST
    out[1] = largest_city_error(pops)
    out[2] = duration_error(outcome.duration)
    return out


def evaluate_simpoplocal(genome: Mapping[str, float] | Sequence[float],
                         replications: int = DEFAULT_REPLICATIONS,
                         base_seed: int = 0,
                         base_params: sl.SimpopLocalParams | None = None,
                         keep_replications: bool = False) -> EvaluationRecord:
    """Median objectives of ``replications`` seeded runs at one genome.

    ``genome`` is a mapping of SimpopLocal parameter names, or a sequence in
    ``simpoplocal.GENOME_FIELDS`` order. A replication that raises scores 1
    on every objective.
    """
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    if not isinstance(genome, Mapping):
        values = list(genome)
        if len(values) != len(sl.GENOME_FIELDS):
            raise ValueError(f"expected {len(sl.GENOME_FIELDS)} genome values, got {len(values)}")
        genome = dict(zip(sl.GENOME_FIELDS, values))
    params = (base_params or sl.SimpopLocalParams()).with_genome(genome)
    per = np.empty((replications, 3))
    failures = 0
    for k in range(replications):
        try:
            per[k] = outcome_objectives(sl.run(params, replication_seed(base_seed, k)))
        except Exception as exc:  # any model fault counts as a worst-case replication
            log.warning("replication %d of %s failed: %s", k, genome, exc)
            per[k] = WORST
            failures += 1
    return EvaluationRecord(
        genome=np.array([genome[k] for k in genome], dtype=float),
        objectives=aggregate_replications(per),
        replications=replications,
        base_seed=int(base_seed),
        failures=failures,
        per_replication=per if keep_replications else None,
    )
