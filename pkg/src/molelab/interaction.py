"""Deterministic city-system model: endogenous growth, gravity interactions and network feedback.

Growth rate of city ``i`` at each step::

    r0 + w_gravity * sum_j (P_j / P_total) * exp(-d_ij / d_gravity)
       + w_network * through_flow_i / total_flow

Gravity flows ``P_i P_j / P_total**2 * exp(-d_ij / d_gravity)`` between every
pair are routed along shortest network paths; ``through_flow_i`` is the flow
crossing ``i`` as an intermediate node. Distances are shortest paths on the
effective link lengths ``length / capacity``, so capacity changes feed back
into every term. Link capacities evolve as
``c <- c * (1 + capacity_rate * (flow_share - 1 / n_links))``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

OVERFLOW_FACTOR = 1e12
CAPACITY_FLOOR = 1e-9


@dataclass(frozen=True)
class CitySystem:
    xy: np.ndarray
    population: np.ndarray
    links: np.ndarray
    length: np.ndarray
    capacity: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        pop = np.asarray(self.population, dtype=float)
        links = np.asarray(self.links, dtype=np.int64).reshape(-1, 2)
        length = np.asarray(self.length, dtype=float)
        cap = np.asarray(self.capacity, dtype=float)
        n = pop.size
        if xy.shape[0] != n:
            raise ValueError("one position per city required")
        if n < 2:
            raise ValueError("a city system needs at least 2 cities")
        if np.any(~(pop > 0)) or not np.all(np.isfinite(pop)):
            raise ValueError("populations must be finite and > 0")
        if not (links.shape[0] == length.size == cap.size):
            raise ValueError("links, length and capacity must have one entry per link")
        if np.any(links < 0) or np.any(links >= n) or np.any(links[:, 0] == links[:, 1]):
            raise ValueError("links must join two distinct existing cities")
        if np.any(~(length > 0)) or np.any(~(cap > 0)):
            raise ValueError("link lengths and capacities must be > 0")
        if not self.ids:
            object.__setattr__(self, "ids", tuple(range(n)))
        for name, val in (("xy", xy), ("population", pop), ("links", links), ("length", length), ("capacity", cap)):
            object.__setattr__(self, name, val)
        if not is_connected(n, links):
            raise ValueError("network is disconnected")

    @property
    def n_cities(self) -> int:
        return self.population.size

    def with_state(self, population=None, capacity=None) -> "CitySystem":
        """Same cities and links with new populations and/or capacities (no re-validation)."""
        out = object.__new__(CitySystem)
        for f in fields(self):
            object.__setattr__(out, f.name, getattr(self, f.name))
        if population is not None:
            object.__setattr__(out, "population", np.asarray(population, dtype=float))
        if capacity is not None:
            object.__setattr__(out, "capacity", np.asarray(capacity, dtype=float))
        return out


@dataclass(frozen=True)
class InteractionParams:
    r0: float = 0.01
    w_gravity: float = 0.0
    d_gravity: float = 0.3
    w_network: float = 0.0
    capacity_rate: float = 0.0
    steps: int = 30

    def __post_init__(self):
        if not self.d_gravity > 0:
            raise ValueError(f"d_gravity must be > 0, got {self.d_gravity}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.capacity_rate < 0:
            raise ValueError("capacity_rate must be >= 0")

    def with_values(self, values: Mapping[str, float]) -> "InteractionParams":
        known = {f.name for f in fields(self)} - {"steps"}
        unknown = set(values) - known
        if unknown:
            raise KeyError(f"not interaction-model parameters: {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in values.items()})


@dataclass
class SystemTrajectory:
    """Per-step state after each update; rows are steps, columns cities."""

    population: np.ndarray
    closeness: np.ndarray
    accessibility: np.ndarray
    capacity: np.ndarray = field(repr=False)


def is_connected(n: int, links: np.ndarray) -> bool:
    if n == 1:
        return True
    g = csr_matrix((np.ones(len(links)), (links[:, 0], links[:, 1])), shape=(n, n))
    return connected_components(g, directed=False)[0] == 1


def _effective_weights(system: CitySystem) -> tuple[np.ndarray, np.ndarray]:
    """Dense effective-length matrix (inf off the network) and the link used by each city pair."""
    n = system.n_cities
    eff = system.length / system.capacity
    w = np.full((n, n), np.inf)
    link_id = np.full((n, n), -1, dtype=np.int64)
    a, b = system.links[:, 0], system.links[:, 1]
    # longest first so the shortest of parallel links is written last
    for k in np.argsort(-eff, kind="stable"):
        w[a[k], b[k]] = w[b[k], a[k]] = eff[k]
        link_id[a[k], b[k]] = link_id[b[k], a[k]] = k
    return w, link_id


@njit(cache=True)
def _floyd_warshall(w):
    n = w.shape[0]
    d = w.copy()
    pred = np.full((n, n), -9999, dtype=np.int64)
    for i in range(n):
        d[i, i] = 0.0
        for j in range(n):
            if i != j and np.isfinite(w[i, j]):
                pred[i, j] = i
    for k in range(n):
        for i in range(n):
            dik = d[i, k]
            if not np.isfinite(dik):
                continue
            for j in range(n):
                alt = dik + d[k, j]
                if alt < d[i, j]:
                    d[i, j] = alt
                    pred[i, j] = pred[k, j]
    return d, pred


def network_distances(system: CitySystem) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs shortest-path distances on effective lengths, and the predecessor matrix.

    ``pred[s, t]`` is the city before ``t`` on the path from ``s``; ``-9999``
    marks ``t == s``.
    """
    w, _ = _effective_weights(system)
    d, pred = _floyd_warshall(w)
    if not np.all(np.isfinite(d)):
        raise ValueError("network is disconnected")
    return d, pred


def gravity_flows(population: np.ndarray, d: np.ndarray, d_gravity: float) -> np.ndarray:
    """Symmetric pairwise flows ``P_i P_j / P_total**2 * exp(-d_ij / d_gravity)``, zero diagonal."""
    p = population / population.sum()
    g = np.outer(p, p) * np.exp(-d / d_gravity)
    np.fill_diagonal(g, 0.0)
    return g


@njit(cache=True)
def _route_kernel(flows, d, pred, link_id, n_links):
    n = flows.shape[0]
    through = np.zeros(n)
    link_flow = np.zeros(n_links)
    acc = np.empty(n)
    for s in range(n):
        for t in range(n):
            acc[t] = flows[s, t] if t > s else 0.0
        order = np.argsort(-d[s], kind="mergesort")
        for t in order:
            if t == s or acc[t] == 0.0:
                continue
            p = pred[s, t]
            through[t] += acc[t] - (flows[s, t] if t > s else 0.0)
            link_flow[link_id[p, t]] += acc[t]
            acc[p] += acc[t]
    return through, link_flow


def route_flows(system: CitySystem, flows: np.ndarray, d: np.ndarray, pred: np.ndarray):
    """Assign each unordered pair's flow to its shortest path.

    Returns ``(through_flow per city, flow per link)``. Endpoints of a path
    do not count towards their own through-flow.
    """
    _, link_id = _effective_weights(system)
    return _route_kernel(np.ascontiguousarray(flows, dtype=float), np.ascontiguousarray(d),
                         np.ascontiguousarray(pred, dtype=np.int64), link_id, len(system.links))


def _rates_and_flows(system: CitySystem, params: InteractionParams, d=None, pred=None):
    if d is None:
        d, pred = network_distances(system)
    pop = system.population
    n = pop.size
    rates = np.full(n, float(params.r0))
    link_flow = np.zeros(len(system.links))
    if params.w_gravity == 0.0 and params.w_network == 0.0 and params.capacity_rate == 0.0:
        return rates, link_flow, d
    decay = np.exp(-d / params.d_gravity)
    np.fill_diagonal(decay, 0.0)
    if params.w_gravity != 0.0:
        rates += params.w_gravity * decay @ (pop / pop.sum())
    flows = gravity_flows(pop, d, params.d_gravity)
    total = np.triu(flows, 1).sum()
    if total > 0 and (params.w_network != 0.0 or params.capacity_rate != 0.0):
        through, link_flow = route_flows(system, flows, d, pred)
        if params.w_network != 0.0:
            rates += params.w_network * through / total
        link_flow = link_flow / total
    return rates, link_flow, d


def growth_rates(state: CitySystem, params: InteractionParams) -> np.ndarray:
    return _rates_and_flows(state, params)[0]


def closeness(d: np.ndarray) -> np.ndarray:
    n = d.shape[0]
    return (n - 1) / d.sum(axis=1)


def accessibility(population: np.ndarray, d: np.ndarray, d_gravity: float) -> np.ndarray:
    """Gravity potential ``sum_{j != i} P_j exp(-d_ij / d_gravity)``."""
    k = np.exp(-d / d_gravity)
    np.fill_diagonal(k, 0.0)
    return k @ population


def simulate(state: CitySystem, params: InteractionParams) -> SystemTrajectory:
    """Iterate ``params.steps`` synchronous updates of populations and capacities."""
    n, m = state.n_cities, len(state.links)
    limit = OVERFLOW_FACTOR * state.population.sum()
    cap_floor = CAPACITY_FLOOR * state.capacity
    pop_t = np.empty((params.steps, n))
    clo_t = np.empty((params.steps, n))
    acc_t = np.empty((params.steps, n))
    cap_t = np.empty((params.steps, m))
    system = state
    d, pred = network_distances(system)
    for t in range(params.steps):
        rates, share, _ = _rates_and_flows(system, params, d, pred)
        pop = system.population * (1.0 + rates)
        if not np.all(np.isfinite(pop)) or np.any(pop > limit):
            i = int(np.argmax(np.where(np.isfinite(pop), pop, np.inf)))
            raise OverflowError(f"step {t + 1}: population of city {state.ids[i]} exceeds "
                                f"{OVERFLOW_FACTOR:g} x initial total (rate {rates[i]:.6g})")
        if np.any(pop <= 0):
            i = int(np.argmin(pop))
            raise ValueError(f"step {t + 1}: population of city {state.ids[i]} collapsed (rate {rates[i]:.6g})")
        cap = system.capacity
        if params.capacity_rate != 0.0 and m:
            cap = np.maximum(cap * (1.0 + params.capacity_rate * (share - 1.0 / m)), cap_floor)
        system = system.with_state(pop, cap)
        d, pred = network_distances(system)
        pop_t[t], cap_t[t] = pop, cap
        clo_t[t] = closeness(d)
        acc_t[t] = accessibility(pop, d, params.d_gravity)
    return SystemTrajectory(pop_t, clo_t, acc_t, cap_t)


def _check_pair(sim, obs):
    sim = np.asarray(sim, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if sim.shape != obs.shape:
        raise ValueError(f"dimension mismatch: simulated {sim.shape} vs observed {obs.shape}")
    if sim.size == 0:
        raise ValueError("empty trajectories")
    return sim, obs


def mse_population(simulated, observed) -> float:
    sim, obs = _check_pair(simulated, observed)
    return float(np.mean((sim - obs) ** 2))


def mse_log_population(simulated, observed) -> float:
    sim, obs = _check_pair(simulated, observed)
    if np.any(~(sim > 0)) or np.any(~(obs > 0)):
        raise ValueError("log-population error needs strictly positive populations")
    return float(np.mean((np.log(sim) - np.log(obs)) ** 2))


def random_system(n_cities: int, seed: int, capacity: float = 1.0) -> CitySystem:
    """Cities uniform in the unit square, lognormal sizes, Delaunay road network."""
    from scipy.spatial import Delaunay

    if n_cities < 3:
        raise ValueError("random_system needs at least 3 cities")
    rng = np.random.default_rng(seed)
    xy = rng.random((n_cities, 2))
    pop = np.exp(rng.normal(np.log(1e4), 1.0, n_cities))
    edges = set()
    for simplex in Delaunay(xy).simplices:
        for a in range(3):
            i, j = sorted((int(simplex[a]), int(simplex[(a + 1) % 3])))
            edges.add((i, j))
    links = np.array(sorted(edges), dtype=np.int64)
    length = np.sqrt(((xy[links[:, 0]] - xy[links[:, 1]]) ** 2).sum(1))
    return CitySystem(xy, pop, links, length, np.full(len(links), float(capacity)))


def read_cities_csv(path) -> tuple[list, np.ndarray, np.ndarray]:
    """Read ``city_id,x,y,pop_t0,pop_t1,...``; returns ids, positions and a (T, n) population matrix."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["city_id", "x", "y"] or len(header) < 4:
            raise ValueError(f"{path}: expected columns city_id,x,y,pop_t0[,pop_t1,...]")
        rows = [r for r in reader if r]
    ids = [r[0] for r in rows]
    xy = np.array([[float(r[1]), float(r[2])] for r in rows])
    pops = np.array([[float(v) for v in r[3:]] for r in rows]).T
    return ids, xy, pops


def read_network_csv(path, ids: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read ``i,j,length,capacity`` with city ids; returns index pairs, lengths, capacities."""
    pos = {str(c): k for k, c in enumerate(ids)}
    links, length, cap = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if set(reader.fieldnames or ()) < {"i", "j", "length", "capacity"}:
            raise ValueError(f"{path}: expected columns i,j,length,capacity")
        for r in reader:
            try:
                links.append((pos[r["i"]], pos[r["j"]]))
            except KeyError as exc:
                raise ValueError(f"{path}: unknown city id {exc.args[0]!r}") from None
            length.append(float(r["length"]))
            cap.append(float(r["capacity"]))
    return np.array(links, dtype=np.int64).reshape(-1, 2), np.array(length), np.array(cap)


def load_system(cities_csv, network_csv) -> tuple[CitySystem, np.ndarray]:
    """System at the first observed date, plus the observed populations of later dates."""
    ids, xy, pops = read_cities_csv(cities_csv)
    links, length, cap = read_network_csv(network_csv, ids)
    return CitySystem(xy, pops[0], links, length, cap, ids=tuple(ids)), pops[1:]
