"""SimpopLocal: emergence of a settlement hierarchy through innovation.

About a hundred fixed places, each with a population, a resource level measured
in inhabitants (the carrying capacity) and a set of acquired innovations.
Every step applies, in this order and each phase synchronously on the state at
the start of the phase:

1. logistic growth of every population towards its resource level;
2. diffusion of innovations between every ordered pair of places, each
   transferable innovation passing independently;
3. creation of at most one new innovation per place;
4. the resource impact of every innovation acquired during the step.

The run stops after ``max_steps`` steps or once ``max_innovations`` innovations
exist. Innovations are interchangeable tokens: they carry an identity (so a
place cannot receive the same one twice) but no type.

The four mechanism formulas live in :func:`growth_step`,
:func:`creation_probability`, :func:`diffusion_probability` and
:func:`apply_innovation`; the compiled loop in ``_simpop_kernel`` uses the same
expressions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _simpop_kernel as _k

GENOME_FIELDS = ("p_creation", "p_diffusion", "distance_decay", "innovation_impact", "r_max")


@dataclass
class Place:
    id: int
    x: float
    y: float
    population: float
    resource: float
    innovations: frozenset = field(default_factory=frozenset)

    @property
    def n_innovations(self) -> int:
        return len(self.innovations)


@dataclass(frozen=True)
class SimpopLocalParams:
    """Free parameters (the calibration genome) plus the fixed context of a run.

    ``p_creation`` is per pair of inhabitants of the same place and per step,
    ``p_diffusion`` per effective pair of inhabitants of two places and per step.
    The initial-state fields describe a uniform set of villages plus one
    larger place; ``initial_state_file`` overrides them.
    """

    p_creation: float = 1e-6
    p_diffusion: float = 1e-6
    distance_decay: float = 2.0
    innovation_impact: float = 0.01
    r_max: float = 10_000.0
    n_places: int = 100
    growth_rate: float = 0.02
    max_steps: int = 4000
    max_innovations: int = 10_000
    village_population: float = 50.0
    village_resource: float = 75.0
    leader_population: float = 100.0
    leader_resource: float = 150.0
    k_neighbors: int | None = None
    initial_state_file: str | None = None

    def __post_init__(self):
        for name in ("p_creation", "p_diffusion"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.distance_decay < 0:
            raise ValueError("distance_decay must be >= 0")
        if self.innovation_impact < 0:
            raise ValueError("innovation_impact must be >= 0")
        if self.r_max <= 0:
            raise ValueError("r_max must be > 0")
        if self.growth_rate < 0:
            raise ValueError("growth_rate must be >= 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.max_innovations < 1:
            raise ValueError("max_innovations must be >= 1")
        if self.village_resource <= 0 or self.leader_resource <= 0:
            raise ValueError("initial resources must be > 0")
        if self.village_population < 0 or self.leader_population < 0:
            raise ValueError("initial populations must be >= 0")
        if self.k_neighbors is not None and self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")

    def with_genome(self, genome: dict) -> "SimpopLocalParams":
        unknown = set(genome) - set(GENOME_FIELDS)
        if unknown:
            raise KeyError(f"not SimpopLocal genome parameters: {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in genome.items()})


@dataclass
class SimulationOutcome:
    final_places: list[Place]
    duration: int
    n_innovations: int
    termination: str
    trajectory: dict | None = None

    @property
    def populations(self) -> np.ndarray:
        return np.array([p.population for p in self.final_places])


def growth_step(population: float, resource: float, growth_rate: float) -> float:
    """One logistic step ``P + r P (1 - P / R)``, floored at zero."""
    if resource <= 0:
        raise ValueError(f"resource must be > 0, got {resource}")
    if population < 0:
        raise ValueError(f"population must be >= 0, got {population}")
    return float(_k.growth_kernel(float(population), float(resource), float(growth_rate)))


def creation_probability(population: float, p_creation: float) -> float:
    """Chance that at least one of the ``P (P - 1) / 2`` resident pairs innovates."""
    if not 0.0 <= p_creation <= 1.0:
        raise ValueError(f"p_creation must be in [0, 1], got {p_creation}")
    if population < 0:
        raise ValueError(f"population must be >= 0, got {population}")
    if population < 2 or p_creation == 0.0:
        return 0.0
    if p_creation == 1.0:
        return 1.0
    h = _k.creation_hazard(float(population), math.log1p(-p_creation))
    return min(1.0, max(0.0, -math.expm1(-h)))


def diffusion_probability(pop_i: float, pop_j: float, distance: float,
                          p_diffusion: float, decay: float) -> float:
    """Chance that one given innovation passes between two places in a step.

    The number of effective pairs is ``pop_i * pop_j / (1 + distance) ** decay``.
    """
    if not 0.0 <= p_diffusion <= 1.0:
        raise ValueError(f"p_diffusion must be in [0, 1], got {p_diffusion}")
    if decay < 0:
        raise ValueError(f"decay must be >= 0, got {decay}")
    if distance <= 0:
        raise ValueError(f"distance must be > 0, got {distance}")
    if pop_i < 0 or pop_j < 0:
        raise ValueError("populations must be >= 0")
    m = pop_i * pop_j * (1.0 + distance) ** -decay
    if p_diffusion == 0.0 or m == 0.0:
        return 0.0
    if p_diffusion == 1.0:
        return 1.0
    return -math.expm1(m * math.log1p(-p_diffusion))


def apply_innovation(resource: float, innovation_impact: float, r_max: float) -> float:
    """Resource after one acquisition: ``R (1 + impact (1 - R / r_max))``, capped at r_max."""
    if resource <= 0:
        raise ValueError(f"resource must be > 0, got {resource}")
    if resource > r_max:
        raise ValueError(f"resource {resource} exceeds r_max {r_max}")
    return float(_k.impact_kernel(float(resource), float(innovation_impact), float(r_max)))


def read_initial_state(path) -> list[Place]:
    """Read places from a CSV with columns ``id,x,y,population,resource``."""
    places = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "x", "y", "population", "resource"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            places.append(Place(int(row["id"]), float(row["x"]), float(row["y"]),
                                float(row["population"]), float(row["resource"])))
    return places


def init_state(params: SimpopLocalParams, seed: int) -> list[Place]:
    """Initial places: uniform random positions in the unit square.

    Place 0 is the leader settlement; all others are identical villages.
    """
    if params.initial_state_file:
        places = read_initial_state(params.initial_state_file)
        if len(places) < 2:
            raise ValueError("initial state needs at least 2 places")
    else:
        if params.n_places < 2:
            raise ValueError(f"n_places must be >= 2, got {params.n_places}")
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x1A17,)))
        xy = rng.random((params.n_places, 2))
        places = [Place(i, float(xy[i, 0]), float(xy[i, 1]),
                        params.village_population, params.village_resource)
                  for i in range(params.n_places)]
        places[0].population = params.leader_population
        places[0].resource = params.leader_resource
    for p in places:
        if p.resource <= 0 or p.population < 0:
            raise ValueError(f"place {p.id}: needs resource > 0 and population >= 0")
        if p.resource > params.r_max:
            raise ValueError(f"place {p.id}: initial resource {p.resource} exceeds r_max {params.r_max}")
    return places


def interaction_weights(places: Sequence[Place], decay: float, k_neighbors: int | None = None) -> np.ndarray:
    """Distance deterrence ``(1 + d_ij) ** -decay``; zero diagonal.

    With ``k_neighbors`` only pairs where one place is among the other's k
    nearest neighbours interact.
    """
    xy = np.array([[p.x, p.y] for p in places])
    d = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))
    w = (1.0 + d) ** -decay
    np.fill_diagonal(w, 0.0)
    if k_neighbors is not None:
        n = len(places)
        k = min(k_neighbors, n - 1)
        order = np.argsort(np.where(np.eye(n, dtype=bool), np.inf, d), axis=1, kind="stable")[:, :k]
        mask = np.zeros((n, n), dtype=bool)
        mask[np.repeat(np.arange(n), k), order.ravel()] = True
        w = np.where(mask | mask.T, w, 0.0)
    return np.ascontiguousarray(w)


def run(params: SimpopLocalParams, seed: int, record: bool = False) -> SimulationOutcome:
    """Simulate until ``max_steps`` or ``max_innovations``; deterministic in ``(params, seed)``."""
    places = init_state(params, seed)
    pop0 = np.array([p.population for p in places], dtype=float)
    res0 = np.array([p.resource for p in places], dtype=float)
    weights = interaction_weights(places, params.distance_decay, params.k_neighbors)
    kseed = int(np.random.SeedSequence(seed, spawn_key=(0x5EED,)).generate_state(1)[0])
    pop, res, held, has, steps, n_innov, term, tp, tr, ti = _k.run_kernel(
        pop0, res0, weights, float(params.p_creation), float(params.p_diffusion),
        float(params.innovation_impact), float(params.r_max), float(params.growth_rate),
        int(params.max_steps), int(params.max_innovations), kseed, bool(record),
    )
    bits = np.unpackbits(has.view(np.uint8), axis=1, bitorder="little")
    final = [Place(p.id, p.x, p.y, float(pop[i]), float(res[i]), frozenset(np.flatnonzero(bits[i]).tolist()))
             for i, p in enumerate(places)]
    trajectory = {"population": tp, "resource": tr, "n_innovations": ti} if record else None
    return SimulationOutcome(
        final_places=final,
        duration=int(steps),
        n_innovations=int(n_innov),
        termination="max_innovations" if term == _k.TERM_MAX_INNOVATIONS else "max_steps",
        trajectory=trajectory,
    )


def write_trajectory(outcome: SimulationOutcome, path) -> Path:
    """Dump a recorded run as ``step,place_id,population,resource,n_innovations``."""
    if outcome.trajectory is None:
        raise ValueError("run was not recorded; call run(..., record=True)")
    from .io import format_float

    path = Path(path)
    tp = outcome.trajectory["population"]
    tr = outcome.trajectory["resource"]
    ti = outcome.trajectory["n_innovations"]
    ids = [p.id for p in outcome.final_places]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "place_id", "population", "resource", "n_innovations"])
        for s in range(tp.shape[0]):
            for i, pid in enumerate(ids):
                w.writerow([s + 1, pid, format_float(tp[s, i]), format_float(tr[s, i]), int(ti[s, i])])
    return path


def rank_size_slope(populations: Sequence[float]) -> float:
    """OLS slope of log(population) on log(rank), ranks 1..n by decreasing size."""
    p = np.asarray(populations, dtype=float)
    if p.size < 2:
        raise ValueError("rank-size slope needs at least 2 values")
    if np.any(~(p > 0)):
        raise ValueError("rank-size slope needs strictly positive values")
    y = np.log(np.sort(p)[::-1])
    x = np.log(np.arange(1, p.size + 1))
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
