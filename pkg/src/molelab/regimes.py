"""Causality regimes from lagged correlations of variations.

Three variables: population (territorial), closeness and accessibility
(network). For each of the six ordered pairs ``x -> y`` the sign of the
strongest correlation between ``dx_t`` and ``dy_{t+tau}`` over positive lags
``tau`` gives ``+``, ``-``, or ``0`` when it stays below the threshold. The six
signs, in the order of :data:`PAIRS`, form a regime code such as ``"+0-000"``.

Series may be 1-D (one unit) or 2-D ``(T, units)``; with several units the
correlation at each lag is the mean of the per-unit Pearson correlations.
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .io import emit_csv

log = logging.getLogger(__name__)

VARIABLES = ("population", "closeness", "accessibility")
SHORT = {"population": "P", "closeness": "C", "accessibility": "A"}
TERRITORIAL = ("population",)
NETWORK = ("closeness", "accessibility")
PAIRS = (
    ("population", "closeness"),
    ("population", "accessibility"),
    ("closeness", "population"),
    ("closeness", "accessibility"),
    ("accessibility", "population"),
    ("accessibility", "closeness"),
)
SIGNS = ("+", "0", "-")
N_REGIMES = len(SIGNS) ** len(PAIRS)
DEFAULT_TAU_MAX = 5
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class VariableSet:
    population: np.ndarray
    closeness: np.ndarray
    accessibility: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(getattr(self, v)) for v in VARIABLES}
        if len(shapes) != 1:
            raise ValueError(f"series must share one shape, got {sorted(shapes)}")
        for v in VARIABLES:
            object.__setattr__(self, v, np.asarray(getattr(self, v), dtype=float))

    @classmethod
    def from_trajectory(cls, traj) -> "VariableSet":
        return cls(traj.population, traj.closeness, traj.accessibility)

    def series(self, name: str) -> np.ndarray:
        return getattr(self, name)

    @property
    def length(self) -> int:
        return self.population.shape[0]


@dataclass(frozen=True)
class LaggedCorrelation:
    lags: np.ndarray
    values: np.ndarray

    def at(self, tau: int) -> float:
        return float(self.values[int(np.flatnonzero(self.lags == tau)[0])])


def _as_2d(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("series must be 1-D or 2-D (time, units)")
    return a


def _pearson_columns(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    den = np.sqrt((ac * ac).sum(axis=0) * (bc * bc).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (ac * bc).sum(axis=0) / den
    return np.where(den > 0, r, np.nan)


def min_length(tau_max: int) -> int:
    return 2 * tau_max + 8


def lagged_correlation(x, y, tau_max: int = DEFAULT_TAU_MAX, difference: bool = True) -> LaggedCorrelation:
    """Correlation of ``dx_t`` with ``dy_{t+tau}`` for ``tau`` in ``[-tau_max, tau_max]``.

    ``difference=False`` correlates the levels instead of the variations.
    """
    if tau_max < 0:
        raise ValueError("tau_max must be >= 0")
    a, b = _as_2d(x), _as_2d(y)
    if a.shape != b.shape:
        raise ValueError(f"series shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < min_length(tau_max):
        raise ValueError(f"series of length {a.shape[0]} too short for tau_max={tau_max} "
                         f"(need {min_length(tau_max)})")
    if difference:
        a, b = np.diff(a, axis=0), np.diff(b, axis=0)
    n = a.shape[0]
    lags = np.arange(-tau_max, tau_max + 1)
    vals = np.empty(lags.size)
    for k, tau in enumerate(lags):
        if tau >= 0:
            r = _pearson_columns(a[: n - tau], b[tau:])
        else:
            r = _pearson_columns(a[-tau:], b[: n + tau])
        if np.all(np.isnan(r)):
            raise ValueError(f"zero-variance window at lag {tau}")
        vals[k] = np.clip(np.nanmean(r), -1.0, 1.0)
    return LaggedCorrelation(lags, vals)


def classify_pair(rho: LaggedCorrelation, threshold: float = DEFAULT_THRESHOLD) -> str:
    """Sign of the strongest positive-lag correlation, or ``"0"`` below the threshold."""
    pos = rho.lags > 0
    if not pos.any():
        return "0"
    v = rho.values[pos]
    k = int(np.argmax(np.abs(v)))
    if abs(v[k]) < threshold:
        return "0"
    return "+" if v[k] > 0 else "-"


def classify_regime(variables: VariableSet, tau_max: int = DEFAULT_TAU_MAX,
                    threshold: float = DEFAULT_THRESHOLD, difference: bool = True) -> str:
    return "".join(
        classify_pair(lagged_correlation(variables.series(x), variables.series(y), tau_max, difference), threshold)
        for x, y in PAIRS
    )


def validate_code(code: str) -> str:
    if len(code) != len(PAIRS) or any(c not in SIGNS for c in code):
        raise ValueError(f"regime code must be {len(PAIRS)} characters over {SIGNS}, got {code!r}")
    return code


def all_codes() -> list[str]:
    return ["".join(c) for c in itertools.product(SIGNS, repeat=len(PAIRS))]


def is_coevolution(code: str) -> bool:
    """Some territorial-network pair has a nonzero sign in both directions."""
    validate_code(code)
    sign = dict(zip(PAIRS, code))
    return any(sign[(t, n)] != "0" and sign[(n, t)] != "0" for t in TERRITORIAL for n in NETWORK)


def code_to_vector(code: str) -> np.ndarray:
    validate_code(code)
    return np.array([{"+": 1.0, "0": 0.0, "-": -1.0}[c] for c in code])


def vector_to_code(v: Sequence[float]) -> str:
    return "".join("+" if x > 0.5 else "-" if x < -0.5 else "0" for x in v)


def pair_labels() -> list[str]:
    return [f"{SHORT[x]}->{SHORT[y]}" for x, y in PAIRS]


@dataclass
class Census:
    counts: dict
    n_runs: int
    n_skipped: int

    @property
    def distinct(self) -> int:
        return len(self.counts)

    @property
    def coevolution_codes(self) -> list[str]:
        return [c for c in self.counts if is_coevolution(c)]

    @property
    def coevolution_fraction(self) -> float:
        """Distinct co-evolution regimes found, as a share of the whole regime space."""
        return len(self.coevolution_codes) / N_REGIMES

    @property
    def coevolution_run_fraction(self) -> float:
        classified = self.n_runs - self.n_skipped
        if classified == 0:
            return 0.0
        return sum(n for c, n in self.counts.items() if is_coevolution(c)) / classified


def census_from_codes(codes: Iterable[str], n_skipped: int = 0) -> Census:
    codes = [validate_code(c) for c in codes]
    counter = Counter(codes)
    ordered = dict(sorted(counter.items(), key=lambda kv: (-kv[1], kv[0])))
    return Census(ordered, len(codes) + n_skipped, n_skipped)


def regime_census(runs: Sequence[VariableSet], tau_max: int = DEFAULT_TAU_MAX,
                  threshold: float = DEFAULT_THRESHOLD) -> Census:
    """Count regime codes over runs; degenerate runs are skipped and logged."""
    if len(runs) == 0:
        raise ValueError("regime census needs at least one run")
    codes, skipped = [], 0
    for k, run in enumerate(runs):
        try:
            codes.append(classify_regime(run, tau_max, threshold))
        except ValueError as exc:
            log.warning("run %d skipped in regime census: %s", k, exc)
            skipped += 1
    return census_from_codes(codes, skipped)


def write_census(census: Census, path):
    rows = [[code, n, is_coevolution(code)] for code, n in census.counts.items()]
    return emit_csv(rows, ["code", "count", "is_coevolution"], path)


def null_threshold(length: int, tau_max: int = DEFAULT_TAU_MAX, units: int = 1, quantile: float = 0.99,
                   n_sim: int = 2000, seed: int = 0, difference: bool = True) -> float:
    """Monte-Carlo threshold for the positive-lag maximum of ``|rho|`` between independent series.

    Series are random walks (white-noise variations) of ``length`` points.
    The returned value is exceeded with probability ``1 - quantile`` under
    the null of no relation.
    """
    rng = np.random.default_rng(seed)
    peaks = np.empty(n_sim)
    for k in range(n_sim):
        x = np.cumsum(rng.standard_normal((length, units)), axis=0)
        y = np.cumsum(rng.standard_normal((length, units)), axis=0)
        rho = lagged_correlation(x, y, tau_max, difference)
        peaks[k] = np.abs(rho.values[rho.lags > 0]).max()
    return float(np.quantile(peaks, quantile))
