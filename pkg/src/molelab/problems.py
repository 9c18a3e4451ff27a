"""Evaluators shared by the exploration methods.

All follow the ``problem(genome, seed) -> vector`` protocol and are plain
picklable objects so they can be shipped to worker processes. The analytic
ones serve as test problems with known answers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import interaction as ci
from . import objectives as obj
from . import regimes
from . import simpoplocal as sl

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BiObjective:
    """``f1 = x0 ** 2``, ``f2 = (1 - x0) ** 2``; the other coordinates are ignored.

    On ``x0`` in ``[0, 1]`` the Pareto set is the whole interval and the front
    is ``{(t ** 2, (1 - t) ** 2)}``.
    """

    n_objectives: int = 2

    def __call__(self, genome, seed=0):
        x = float(genome[0])
        return np.array([x * x, (1.0 - x) ** 2])

    @staticmethod
    def true_front(n: int = 2001) -> np.ndarray:
        t = np.linspace(0.0, 1.0, n)
        return np.column_stack([t * t, (1.0 - t) ** 2])


@dataclass(frozen=True)
class Quadratic:
    """``(x - 0.3) ** 2 + (y - 0.7) ** 2`` on the first two coordinates."""

    center: tuple = (0.3, 0.7)
    n_objectives: int = 1

    def __call__(self, genome, seed=0):
        g = np.asarray(genome, dtype=float)
        c = np.asarray(self.center)
        return np.array([float(((g[: c.size] - c) ** 2).sum())])


@dataclass(frozen=True)
class Banana:
    """Pattern ``(x, 10 (y - x ** 2))``: a curved map that squeezes most of the square."""

    def __call__(self, genome, seed=0):
        x, y = float(genome[0]), float(genome[1])
        return np.array([x, 10.0 * (y - x * x)])


@dataclass(frozen=True)
class Identity:
    def __call__(self, genome, seed=0):
        return np.asarray(genome, dtype=float).copy()


@dataclass(frozen=True)
class Constant:
    value: tuple = (0.5, 0.5)

    def __call__(self, genome, seed=0):
        return np.asarray(self.value, dtype=float)


ANALYTIC = {
    "biobjective": BiObjective,
    "quadratic": Quadratic,
    "banana": Banana,
    "identity": Identity,
}


@dataclass(frozen=True)
class SimpopLocalCalibration:
    """Median of ``replications`` runs of the three SimpopLocal objectives.

    ``names`` maps genome positions to SimpopLocal parameters; the
    evaluation seed is the replication base seed.
    """

    names: tuple
    base_params: sl.SimpopLocalParams = field(default_factory=sl.SimpopLocalParams)
    replications: int = obj.DEFAULT_REPLICATIONS
    n_objectives: int = 3

    def __call__(self, genome, seed=0):
        rec = obj.evaluate_simpoplocal(dict(zip(self.names, map(float, genome))),
                                       self.replications, seed, self.base_params)
        return rec.objectives


def simpoplocal_pattern(outcome: sl.SimulationOutcome) -> np.ndarray:
    """Behavior descriptor: (rank-size slope, log10 of the largest population, innovation count)."""
    pops = outcome.populations
    pos = pops[pops > 0]
    slope = sl.rank_size_slope(pos) if pos.size >= 2 else 0.0
    largest = float(pops.max())
    return np.array([slope, np.log10(largest) if largest > 0 else 0.0, float(outcome.n_innovations)])


@dataclass(frozen=True)
class SimpopLocalPattern:
    """Median behavior descriptor over replications."""

    names: tuple
    base_params: sl.SimpopLocalParams = field(default_factory=sl.SimpopLocalParams)
    replications: int = obj.DEFAULT_REPLICATIONS

    def __call__(self, genome, seed=0):
        params = self.base_params.with_genome(dict(zip(self.names, map(float, genome))))
        rows = [simpoplocal_pattern(sl.run(params, obj.replication_seed(seed, k)))
                for k in range(self.replications)]
        return np.median(np.array(rows), axis=0)


@dataclass(frozen=True)
class CityCalibration:
    """Population MSE and log-population MSE of the interaction model against observations."""

    system: ci.CitySystem
    observed: np.ndarray
    base_params: ci.InteractionParams
    names: tuple
    n_objectives: int = 2

    def __call__(self, genome, seed=0):
        params = self.base_params.with_values(dict(zip(self.names, map(float, genome))))
        traj = ci.simulate(self.system, params)
        sim = traj.population[: self.observed.shape[0]]
        return np.array([ci.mse_population(sim, self.observed), ci.mse_log_population(sim, self.observed)])


@dataclass(frozen=True)
class CityRegime:
    """Regime code of one interaction-model trajectory as a vector in ``{-1, 0, 1} ** 6``."""

    system: ci.CitySystem
    base_params: ci.InteractionParams
    names: tuple
    tau_max: int = 5
    threshold: float = 0.5

    def __call__(self, genome, seed=0):
        params = self.base_params.with_values(dict(zip(self.names, map(float, genome))))
        traj = ci.simulate(self.system, params)
        code = regimes.classify_regime(regimes.VariableSet.from_trajectory(traj), self.tau_max, self.threshold)
        return regimes.code_to_vector(code)
