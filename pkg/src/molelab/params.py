"""Bounded parameter spaces and the genome layout shared by every exploration method.

Evolutionary operators and samplers work in the unit cube; ``to_unit`` and
``from_unit`` map between that cube and the model's natural units. Logarithmic
parameters are interpolated geometrically so a uniform step in unit space is a
multiplicative step in the parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

LINEAR = "linear"
LOGARITHMIC = "logarithmic"
SCALES = (LINEAR, LOGARITHMIC)


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    lower: float
    upper: float
    scale: str = LINEAR

    def __post_init__(self):
        if not self.name.isidentifier():
            raise ValueError(f"parameter name {self.name!r} is not an identifier")
        if self.scale not in SCALES:
            raise ValueError(f"parameter {self.name!r}: scale must be one of {SCALES}, got {self.scale!r}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError(f"parameter {self.name!r}: bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"parameter {self.name!r}: lower bound {self.lower} must be < upper bound {self.upper}")
        if self.scale == LOGARITHMIC and self.lower <= 0:
            raise ValueError(f"parameter {self.name!r}: logarithmic scale needs a positive lower bound")


class ParameterSpace:
    """Ordered collection of :class:`ParameterSpec`; the order is the genome layout."""

    def __init__(self, specs: Iterable[ParameterSpec]):
        self.specs: tuple[ParameterSpec, ...] = tuple(specs)
        if not self.specs:
            raise ValueError("a parameter space needs at least one parameter")
        names = [s.name for s in self.specs]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValueError(f"duplicate parameter names: {dupes}")
        self._lower = np.array([s.lower for s in self.specs], dtype=float)
        self._upper = np.array([s.upper for s in self.specs], dtype=float)
        self._log = np.array([s.scale == LOGARITHMIC for s in self.specs])
        self._lo_t = np.where(self._log, np.log(np.where(self._log, self._lower, 1.0)), self._lower)
        self._hi_t = np.where(self._log, np.log(np.where(self._log, self._upper, 1.0)), self._upper)

    @classmethod
    def from_dict(cls, mapping: dict) -> "ParameterSpace":
        """Build from ``{name: [lower, upper]}`` or ``{name: {lower, upper, scale}}``."""
        specs = []
        for name, decl in mapping.items():
            if isinstance(decl, dict):
                specs.append(ParameterSpec(name, float(decl["lower"]), float(decl["upper"]), decl.get("scale", LINEAR)))
            else:
                lo, hi, *rest = decl
                specs.append(ParameterSpec(name, float(lo), float(hi), rest[0] if rest else LINEAR))
        return cls(specs)

    def to_dict(self) -> dict:
        return {s.name: {"lower": s.lower, "upper": s.upper, "scale": s.scale} for s in self.specs}

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    @property
    def dim(self) -> int:
        return len(self.specs)

    @property
    def lower(self) -> np.ndarray:
        return self._lower.copy()

    @property
    def upper(self) -> np.ndarray:
        return self._upper.copy()

    def __len__(self):
        return len(self.specs)

    def __eq__(self, other):
        return isinstance(other, ParameterSpace) and self.specs == other.specs

    def __hash__(self):
        return hash(self.specs)

    def __repr__(self):
        return f"ParameterSpace({list(self.specs)!r})"

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown parameter {name!r}; known: {self.names}") from None

    def _check_dim(self, x: np.ndarray):
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {x.shape[-1]}")

    def validate(self, v: Sequence[float]) -> np.ndarray:
        """Return ``v`` as an array, raising if it is not a point of this space."""
        x = np.asarray(v, dtype=float)
        self._check_dim(x)
        bad = ~((x >= self._lower) & (x <= self._upper))
        if np.any(bad):
            i = int(np.flatnonzero(bad.reshape(-1, self.dim).any(axis=0))[0])
            s = self.specs[i]
            raise ValueError(f"parameter {s.name!r} out of bounds [{s.lower}, {s.upper}]")
        return x

    def to_unit(self, v: Sequence[float]) -> np.ndarray:
        """Map a point (or a batch of points, last axis = parameters) into ``[0, 1]^d``."""
        x = self.validate(v)
        t = np.where(self._log, np.log(np.where(self._log, x, 1.0)), x)
        u = (t - self._lo_t) / (self._hi_t - self._lo_t)
        return np.clip(u, 0.0, 1.0)

    def from_unit(self, u: Sequence[float]) -> np.ndarray:
        """Inverse of :meth:`to_unit`."""
        u = np.asarray(u, dtype=float)
        self._check_dim(u)
        if np.any(~((u >= 0.0) & (u <= 1.0))):
            raise ValueError("unit-cube coordinates must lie in [0, 1]")
        t = self._lo_t + u * (self._hi_t - self._lo_t)
        x = np.where(self._log, np.exp(np.where(self._log, t, 0.0)), t)
        # exp/log round-off must not push endpoints outside the declared bounds
        return np.clip(x, self._lower, self._upper)

    def clamp(self, raw: Sequence[float]) -> np.ndarray:
        x = np.asarray(raw, dtype=float)
        self._check_dim(x)
        if np.any(np.isnan(x)):
            raise ValueError("cannot clamp NaN coordinates")
        return np.clip(x, self._lower, self._upper)

    def random(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Uniform draw in unit space, mapped to parameter space."""
        shape = (self.dim,) if n is None else (n, self.dim)
        return self.from_unit(rng.random(shape))

    def as_dict(self, v: Sequence[float]) -> dict[str, float]:
        x = self.validate(v)
        return {name: float(val) for name, val in zip(self.names, x)}


def to_unit(space: ParameterSpace, v) -> np.ndarray:
    return space.to_unit(v)


def from_unit(space: ParameterSpace, u) -> np.ndarray:
    return space.from_unit(u)


def clamp(space: ParameterSpace, raw) -> np.ndarray:
    return space.clamp(raw)
