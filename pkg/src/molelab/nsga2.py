"""NSGA-II multi-objective calibration and its island-parallel variant.

Problems are callables ``problem(genome, seed) -> objectives`` with genomes in
parameter units; objectives are minimized. Deterministic problems ignore the
seed; stochastic ones aggregate their own replications. Variation acts in the
unit cube of the :class:`ParameterSpace`, so logarithmic parameters mutate
multiplicatively.

Every random stream is keyed by ``(seed, epoch, island, ...)`` through
``numpy.random.SeedSequence`` and evaluations are merged in submission order,
so a run is reproducible whatever the worker count.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .io import emit_csv, write_json
from .parallel import Failure, WorkerPool, serial_pool
from .params import ParameterSpace
from .sampling import lhs_unit

log = logging.getLogger(__name__)

Problem = Callable[[np.ndarray, int], Sequence[float]]

_VARIATION = 0x7A
_EVAL = 0xE7
_COORD = 0xC0


@dataclass(frozen=True)
class EvolutionConfig:
    """NSGA-II settings. ``budget`` (evaluations) takes precedence over ``generations``.

    ``mutation_rate`` is the per-gene probability; ``None`` means ``1 / dim``.
    ``replications`` is recorded on every individual; the problem is expected
    to aggregate that many runs itself.
    """

    population_size: int = 200
    generations: int | None = None
    budget: int | None = None
    crossover_rate: float = 0.9
    mutation_rate: float | None = None
    eta_crossover: float = 2.0
    eta_mutation: float = 20.0
    replications: int = 1
    seed: int = 0
    failure_value: float = 1.0

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError(f"population_size must be even and >= 4, got {self.population_size}")
        if self.budget is not None and self.budget < self.population_size:
            raise ValueError(f"budget {self.budget} is smaller than population_size {self.population_size}")
        if self.generations is not None and self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.eta_crossover < 0 or self.eta_mutation < 0:
            raise ValueError("distribution indices must be >= 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    def n_generations(self) -> int:
        if self.budget is not None:
            return (self.budget - self.population_size) // self.population_size
        return 100 if self.generations is None else self.generations


@dataclass(frozen=True)
class IslandConfig:
    """Island scheme: ``epochs`` rounds of ``island_generations`` per island.

    ``island_generations=None`` spreads the evolution config's budget evenly.
    Each reseeded island gets ``fresh_fraction`` of new random genomes, the
    rest sampled from the global archive, capped at ``archive_size``
    (default ``n_islands * population_size``).
    """

    n_islands: int = 4
    epochs: int = 5
    island_generations: int | None = None
    fresh_fraction: float = 0.1
    archive_size: int | None = None
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.n_islands < 1:
            raise ValueError(f"n_islands must be >= 1, got {self.n_islands}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.fresh_fraction <= 1.0:
            raise ValueError("fresh_fraction must be in [0, 1]")


@dataclass
class Individual:
    genome: np.ndarray
    objectives: np.ndarray | None = None
    rank: int = 0
    crowding: float = 0.0
    replications: int = 1
    seed: int = 0

    def to_json(self) -> dict:
        return {"genome": [float(v) for v in self.genome],
                "objectives": None if self.objectives is None else [float(v) for v in self.objectives],
                "replications": self.replications, "seed": self.seed}

    @classmethod
    def from_json(cls, d: dict) -> "Individual":
        obj = d.get("objectives")
        return cls(np.array(d["genome"], dtype=float), None if obj is None else np.array(obj, dtype=float),
                   replications=int(d.get("replications", 1)), seed=int(d.get("seed", 0)))


@dataclass
class ParetoArchive:
    """Mutually non-dominated individuals, plus bookkeeping of the run that produced them."""

    individuals: list[Individual]
    evaluations: int = 0
    population: list[Individual] = field(default_factory=list, repr=False)
    history: list[np.ndarray] = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.individuals)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([ind.objectives for ind in self.individuals])

    @property
    def genomes(self) -> np.ndarray:
        return np.array([ind.genome for ind in self.individuals])


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Pareto dominance for minimization."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"objective arity mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def _objective_matrix(population) -> np.ndarray:
    if isinstance(population, np.ndarray):
        return np.atleast_2d(population.astype(float))
    rows = []
    for k, ind in enumerate(population):
        obj = ind.objectives if isinstance(ind, Individual) else ind
        if obj is None:
            raise ValueError(f"individual {k} has not been evaluated")
        rows.append(np.asarray(obj, dtype=float))
    if not rows:
        return np.empty((0, 0))
    return np.array(rows)


def non_dominated_sort(population) -> list[list[int]]:
    """Fronts as lists of indices into ``population`` (Individuals or objective rows)."""
    f = _objective_matrix(population)
    n = f.shape[0]
    if n == 0:
        return []
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    n_dominators = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(n_dominators == 0)
    while current.size:
        fronts.append(current.tolist())
        n_dominators = n_dominators - dom[current].sum(axis=0)
        n_dominators[current] = -1
        current = np.flatnonzero(n_dominators == 0)
    return fronts


def crowding_distance(front) -> np.ndarray:
    """Crowding distance of each member of one front.

    Boundary points of every objective get ``+inf``; a front of at most 2
    members is all ``+inf``. Repeated objective vectors are measured once:
    the first copy gets the distance, the others 0.
    """
    f = _objective_matrix(front)
    n = f.shape[0]
    if n == 0:
        raise ValueError("crowding distance of an empty front")
    if n <= 2:
        return np.full(n, np.inf)
    uniq, first_idx, inverse = np.unique(f, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    u = uniq.shape[0]
    d = np.zeros(u)
    if u <= 2:
        d[:] = np.inf
    else:
        for m in range(f.shape[1]):
            order = np.argsort(uniq[:, m], kind="stable")
            col = uniq[order, m]
            d[order[0]] = d[order[-1]] = np.inf
            span = col[-1] - col[0]
            if span > 0:
                d[order[1:-1]] += (col[2:] - col[:-2]) / span
    out = np.zeros(n)
    out[first_idx] = d
    return out


def assign_rank_crowding(population: list[Individual]) -> list[list[int]]:
    fronts = non_dominated_sort(population)
    for r, front in enumerate(fronts):
        cd = crowding_distance([population[i] for i in front])
        for i, c in zip(front, cd):
            population[i].rank = r
            population[i].crowding = float(c)
    return fronts


def _better(a: Individual, b: Individual) -> bool:
    return a.rank < b.rank or (a.rank == b.rank and a.crowding > b.crowding)


def tournament(population: list[Individual], rng: np.random.Generator) -> Individual:
    i, j = rng.integers(len(population), size=2)
    a, b = population[i], population[j]
    return b if _better(b, a) else a


def _sbx(u1, u2, eta, rng):
    # bounded simulated binary crossover on [0, 1], each gene with probability 1/2
    c1, c2 = u1.copy(), u2.copy()
    for k in range(u1.size):
        if rng.random() > 0.5 or abs(u1[k] - u2[k]) < 1e-14:
            continue
        y1, y2 = min(u1[k], u2[k]), max(u1[k], u2[k])
        r = rng.random()
        out = []
        for beta in (1.0 + 2.0 * y1 / (y2 - y1), 1.0 + 2.0 * (1.0 - y2) / (y2 - y1)):
            alpha = 2.0 - beta ** -(eta + 1.0)
            if r <= 1.0 / alpha:
                bq = (r * alpha) ** (1.0 / (eta + 1.0))
            else:
                bq = (1.0 / (2.0 - r * alpha)) ** (1.0 / (eta + 1.0))
            out.append(bq)
        lo = 0.5 * ((y1 + y2) - out[0] * (y2 - y1))
        hi = 0.5 * ((y1 + y2) + out[1] * (y2 - y1))
        lo, hi = min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0)
        if rng.random() < 0.5:
            lo, hi = hi, lo
        c1[k], c2[k] = lo, hi
    return c1, c2


def _polynomial_mutation(u, rate, eta, rng):
    c = u.copy()
    for k in range(u.size):
        if rng.random() >= rate:
            continue
        y = c[k]
        r = rng.random()
        mpow = 1.0 / (eta + 1.0)
        if r < 0.5:
            xy = 1.0 - y
            val = 2.0 * r + (1.0 - 2.0 * r) * xy ** (eta + 1.0)
            dq = val ** mpow - 1.0
        else:
            xy = y
            val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * xy ** (eta + 1.0)
            dq = 1.0 - val ** mpow
        c[k] = min(max(y + dq, 0.0), 1.0)
    return c


def vary(parents, config: EvolutionConfig, rng: np.random.Generator, space: ParameterSpace | None = None):
    """SBX crossover then polynomial mutation in unit space; offspring are clamped to bounds.

    With ``space=None`` the parents are taken to be unit-cube points already.
    """
    p1, p2 = (np.asarray(p, dtype=float) for p in parents)
    u1, u2 = (p1, p2) if space is None else (space.to_unit(p1), space.to_unit(p2))
    rate = config.mutation_rate if config.mutation_rate is not None else 1.0 / u1.size
    if rng.random() < config.crossover_rate:
        u1, u2 = _sbx(u1, u2, config.eta_crossover, rng)
    else:
        u1, u2 = u1.copy(), u2.copy()
    if rate > 0:
        u1 = _polynomial_mutation(u1, rate, config.eta_mutation, rng)
        u2 = _polynomial_mutation(u2, rate, config.eta_mutation, rng)
    u1, u2 = np.clip(u1, 0.0, 1.0), np.clip(u2, 0.0, 1.0)
    if space is None:
        return u1, u2
    if config.crossover_rate == 0 and rate == 0:
        return p1.copy(), p2.copy()
    return space.from_unit(u1), space.from_unit(u2)


def evaluation_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=(_EVAL, *map(int, key))).generate_state(1, np.uint64)[0])


def _call(problem, genome, seed):
    return np.asarray(problem(genome, seed), dtype=float)


def evaluate_batch(problem: Problem, genomes: Sequence[np.ndarray], seeds: Sequence[int],
                   pool: WorkerPool, failure_value: float = 1.0, n_objectives: int | None = None) -> list[np.ndarray]:
    """Objectives for each genome in order; failed or non-finite evaluations get ``failure_value``."""
    results = pool.starmap(_call, [(problem, g, s) for g, s in zip(genomes, seeds)])
    if n_objectives is None:
        n_objectives = getattr(problem, "n_objectives", None)
    if n_objectives is None:
        shapes = [r.size for r in results if not isinstance(r, Failure)]
        n_objectives = shapes[0] if shapes else 1
    out = []
    for g, r in zip(genomes, results):
        if isinstance(r, Failure):
            log.warning("evaluation failed at %s: %s", np.array2string(np.asarray(g)), r.error)
            r = np.full(n_objectives, failure_value)
        elif r.size != n_objectives:
            raise ValueError(f"problem returned {r.size} objectives, expected {n_objectives}")
        elif not np.all(np.isfinite(r)):
            log.warning("non-finite objectives at %s; scored as failure", np.array2string(np.asarray(g)))
            r = np.where(np.isfinite(r), r, failure_value)
        out.append(r)
    return out


def environmental_selection(population: list[Individual], size: int) -> list[Individual]:
    """Elitist truncation: whole fronts first, the last one by decreasing crowding."""
    fronts = assign_rank_crowding(population)
    chosen: list[Individual] = []
    for front in fronts:
        if len(chosen) + len(front) <= size:
            chosen.extend(population[i] for i in front)
            continue
        members = [population[i] for i in front]
        order = sorted(range(len(members)), key=lambda k: -members[k].crowding)
        chosen.extend(members[k] for k in order[: size - len(chosen)])
        break
    assign_rank_crowding(chosen)
    return chosen


def first_front(population: list[Individual]) -> list[Individual]:
    if not population:
        return []
    front = non_dominated_sort(population)[0]
    members = [population[i] for i in front]
    # drop exact duplicates so the archive holds distinct compromises
    seen = set()
    unique = []
    for ind in members:
        key = tuple(ind.objectives.tolist()) + tuple(ind.genome.tolist())
        if key not in seen:
            seen.add(key)
            unique.append(ind)
    return unique


@dataclass
class _Stream:
    seed: int
    epoch: int
    island: int


def _evaluate_new(problem, space, config, units, keys, stream: _Stream, pool, n_obj):
    genomes = [space.from_unit(u) for u in units]
    seeds = [evaluation_seed(stream.seed, stream.epoch, stream.island, *k) for k in keys]
    objs = evaluate_batch(problem, genomes, seeds, pool, config.failure_value, n_obj)
    return [Individual(g, o, replications=config.replications, seed=s) for g, o, s in zip(genomes, objs, seeds)]


def _evolve(problem, space, config: EvolutionConfig, start: list[Individual], generations: int,
            stream: _Stream, pool: WorkerPool, history: list | None = None):
    rng = np.random.default_rng(np.random.SeedSequence(stream.seed, spawn_key=(_VARIATION, stream.epoch, stream.island)))
    population = list(start)
    assign_rank_crowding(population)
    n = config.population_size
    evaluations = 0
    n_obj = population[0].objectives.size
    for gen in range(1, generations + 1):
        children = []
        while len(children) < n:
            a, b = tournament(population, rng), tournament(population, rng)
            c1, c2 = vary((space.to_unit(a.genome), space.to_unit(b.genome)), config, rng)
            children.extend((c1, c2))
        offspring = _evaluate_new(problem, space, config, children[:n], [(gen, k) for k in range(n)], stream, pool, n_obj)
        evaluations += n
        population = environmental_selection(population + offspring, n)
        if history is not None:
            history.append(np.min([ind.objectives for ind in population], axis=0))
    return population, evaluations


def _initial_population(problem, space, config, stream: _Stream, pool, size=None):
    size = config.population_size if size is None else size
    rng = np.random.default_rng(np.random.SeedSequence(stream.seed, spawn_key=(_VARIATION, stream.epoch, stream.island, 0)))
    units = lhs_unit(size, space.dim, rng)
    return _evaluate_new(problem, space, config, units, [(0, k) for k in range(size)], stream, pool,
                         getattr(problem, "n_objectives", None))


def nsga2_run(problem: Problem, space: ParameterSpace, config: EvolutionConfig,
              pool: WorkerPool | None = None) -> ParetoArchive:
    """Generational NSGA-II; returns the first front of the final population."""
    pool = pool or serial_pool()
    stream = _Stream(config.seed, 0, 0)
    population = _initial_population(problem, space, config, stream, pool)
    history = [np.min([ind.objectives for ind in population], axis=0)]
    population, evals = _evolve(problem, space, config, population, config.n_generations(), stream, pool, history)
    assign_rank_crowding(population)
    return ParetoArchive(first_front(population), evaluations=config.population_size + evals,
                         population=population, history=history)


def _island_task(problem, space, config, start_json, fresh_units, generations, seed, epoch, island):
    """One island epoch; args and results are plain data so islands can run in worker processes."""
    stream = _Stream(seed, epoch, island)
    pool = serial_pool()
    start = [Individual.from_json(d) for d in start_json]
    evals = 0
    if epoch == 0:
        start = _initial_population(problem, space, config, stream, pool)
        evals += len(start)
    elif len(fresh_units):
        n_obj = start[0].objectives.size if start else getattr(problem, "n_objectives", None)
        fresh = _evaluate_new(problem, space, config, fresh_units,
                              [(0, k) for k in range(len(fresh_units))], stream, pool, n_obj)
        start = start + fresh
        evals += len(fresh)
    population, e = _evolve(problem, space, config, start, generations, stream, pool)
    return [ind.to_json() for ind in population], evals + e


def _truncate_archive(members: list[Individual], size: int) -> list[Individual]:
    members = first_front(members)
    if len(members) <= size:
        return members
    cd = crowding_distance(members)
    order = sorted(range(len(members)), key=lambda k: -cd[k])[:size]
    return [members[k] for k in sorted(order)]


def _island_generations(config: EvolutionConfig, islands: IslandConfig) -> list[int]:
    """Generations per epoch; a budget's remainder goes one generation at a time to the first epochs."""
    if islands.island_generations is not None:
        return [islands.island_generations] * islands.epochs
    if config.budget is None:
        return [max(0, config.n_generations() // islands.epochs)] * islands.epochs
    n = config.population_size
    fresh = int(round(islands.fresh_fraction * n))
    per_island = config.budget // islands.n_islands - n - (islands.epochs - 1) * fresh
    total = max(0, per_island // n)
    q, r = divmod(total, islands.epochs)
    return [q + (e < r) for e in range(islands.epochs)]


def _checkpoint_path(directory, epoch) -> Path:
    return Path(directory) / f"checkpoint_epoch_{epoch:04d}.json"


def latest_checkpoint(directory) -> Path | None:
    if directory is None or not Path(directory).is_dir():
        return None
    found = sorted(Path(directory).glob("checkpoint_epoch_*.json"))
    return found[-1] if found else None


def _run_fingerprint(space: ParameterSpace, config: EvolutionConfig, islands: IslandConfig) -> dict:
    isl = {k: v for k, v in asdict(islands).items() if k != "checkpoint_dir"}
    # round trip through JSON so a fresh fingerprint compares equal to a stored one
    return json.loads(json.dumps({"evolution": asdict(config), "islands": isl, "space": space.to_dict()}))


def island_run(problem: Problem, space: ParameterSpace, config: EvolutionConfig, islands: IslandConfig,
               pool: WorkerPool | None = None, resume: bool = True) -> ParetoArchive:
    """Hub-and-spoke island model.

    Each epoch every island evolves on its own; the coordinator then merges
    the returned populations in island order into the global archive and
    reseeds every island from it. With ``checkpoint_dir`` set, a JSON file is
    written per epoch and a later call resumes after the last one found.
    """
    pool = pool or serial_pool()
    n = config.population_size
    gens = _island_generations(config, islands)
    n_fresh = int(round(islands.fresh_fraction * n))
    cap = islands.archive_size or islands.n_islands * n
    archive: list[Individual] = []
    starts: list[list[dict]] = [[] for _ in range(islands.n_islands)]
    fresh: list[np.ndarray] = [np.empty((0, space.dim)) for _ in range(islands.n_islands)]
    last_pops: list[list[Individual]] = []
    evaluations = 0
    first_epoch = 0
    fingerprint = _run_fingerprint(space, config, islands)
    ckpt = latest_checkpoint(islands.checkpoint_dir) if resume else None
    if ckpt is not None:
        state = json.loads(ckpt.read_text())
        if state.get("fingerprint") != fingerprint:
            raise ValueError(f"{ckpt}: checkpoint belongs to another run (settings or parameter space differ)")
        archive = [Individual.from_json(d) for d in state["archive"]]
        evaluations = state["evaluations"]
        first_epoch = state["epoch"] + 1
        log.info("resuming island run after epoch %d from %s", state["epoch"], ckpt)
        last_pops = [[Individual.from_json(d) for d in pop] for pop in state.get("populations", [])]
        if first_epoch < islands.epochs:
            starts, fresh = _reseed(archive, state.get("populations", []), space, islands, config, first_epoch, n, n_fresh)
    for epoch in range(first_epoch, islands.epochs):
        tasks = [(problem, space, config, starts[i], fresh[i], gens[epoch], config.seed, epoch, i)
                 for i in range(islands.n_islands)]
        results = pool.starmap(_island_task, tasks)
        last_pops = []
        for i, r in enumerate(results):
            if isinstance(r, Failure):
                log.warning("island %d failed in epoch %d: %s", i, epoch, r.error)
                last_pops.append([])
                continue
            pop_json, e = r
            evaluations += e
            last_pops.append([Individual.from_json(d) for d in pop_json])
        merged = archive + [ind for pop in last_pops for ind in pop]
        if not merged:
            raise RuntimeError(f"every island failed in epoch {epoch}")
        archive = _truncate_archive(merged, cap)
        pops_json = [[ind.to_json() for ind in pop] for pop in last_pops]
        if islands.checkpoint_dir is not None:
            write_json({"epoch": epoch, "seed": config.seed, "n_islands": islands.n_islands,
                        "evaluations": evaluations, "fingerprint": fingerprint,
                        "archive": [ind.to_json() for ind in archive], "populations": pops_json},
                       _checkpoint_path(islands.checkpoint_dir, epoch))
        if epoch + 1 < islands.epochs:
            starts, fresh = _reseed(archive, pops_json, space, islands, config, epoch + 1, n, n_fresh)
    assign_rank_crowding(archive)
    population = [ind for pop in last_pops for ind in pop]
    return ParetoArchive(archive, evaluations=evaluations, population=population)


def _reseed(archive, pops_json, space, islands, config, epoch, n, n_fresh):
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_COORD, epoch)))
    # backfill pool when the archive is smaller than a population: the merged
    # populations ranked by the usual elitist order
    backfill = [Individual.from_json(d) for pop in pops_json for d in pop]
    n_keep = n - n_fresh
    starts, fresh = [], []
    for _ in range(islands.n_islands):
        if len(archive) >= n_keep:
            picked = [archive[k] for k in sorted(rng.choice(len(archive), size=n_keep, replace=False))]
        else:
            picked = list(archive)
            if backfill:
                extra = environmental_selection([Individual(b.genome, b.objectives, replications=b.replications, seed=b.seed)
                                                 for b in backfill], min(len(backfill), n_keep))
                keys = {tuple(p.genome.tolist()) for p in picked}
                for e in extra:
                    if len(picked) >= n_keep:
                        break
                    if tuple(e.genome.tolist()) not in keys:
                        picked.append(e)
                        keys.add(tuple(e.genome.tolist()))
        n_new = n - len(picked)
        starts.append([p.to_json() for p in picked])
        fresh.append(rng.random((n_new, space.dim)))
    return starts, fresh


def front_schema(space: ParameterSpace, objective_names: Sequence[str]) -> list[str]:
    return [*space.names, *objective_names, "replications"]


def write_front(archive: ParetoArchive, space: ParameterSpace, objective_names: Sequence[str], path) -> Path:
    """One row per archive member: parameters, objectives, replications; sorted by objectives."""
    members = sorted(archive.individuals, key=lambda ind: (tuple(ind.objectives), tuple(ind.genome)))
    rows = [[*ind.genome, *ind.objectives, ind.replications] for ind in members]
    return emit_csv(rows, front_schema(space, objective_names), path)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point sets (rows)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
