"""
Uniform tensor grids and the gridded fields that live on them.

Nodes are cell centres: a grid with ``n`` nodes on ``[lo, hi]`` has spacing
``(hi - lo) / (n - 1)`` and every node owns a cell of that width. Densities are
stored as node values and normalized so that ``sum(values) * cell_volume == 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParam

__all__ = ["Grid", "DensityEstimate", "GriddedField", "parse_grid"]


@dataclass(frozen=True)
class Grid:
    """Axis-aligned uniform grid.

    Parameters
    ----------
    lower, upper : sequence of float
        Per-axis bounds (inclusive, they are nodes).
    counts : sequence of int
        Per-axis node counts, each at least 3.
    """

    lower: tuple
    upper: tuple
    counts: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        counts = tuple(int(v) for v in np.atleast_1d(self.counts))
        if not (len(lower) == len(upper) == len(counts)):
            raise InvalidParam("grid bounds and counts must have the same length")
        for lo, hi, n in zip(lower, upper, counts):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise InvalidParam("grid bounds must be finite")
            if n < 3:
                raise InvalidParam(f"grid needs at least 3 nodes per axis, got {n}")
            if not hi > lo:
                raise InvalidParam(f"grid upper bound {hi} must exceed lower bound {lo}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def uniform(cls, lo, hi, n, dim=1):
        """Same bounds and node count on every axis."""
        return cls((lo,) * dim, (hi,) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.counts)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def axes(self) -> list:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.counts)]

    def edges(self) -> list:
        """Cell boundaries per axis (``n + 1`` values)."""
        out = []
        for ax, h in zip(self.axes, self.spacing):
            out.append(np.concatenate([ax - h / 2, [ax[-1] + h / 2]]))
        return out

    def mesh(self) -> np.ndarray:
        """Node coordinates with shape ``(*counts, dim)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def points(self) -> np.ndarray:
        """Node coordinates flattened to ``(size, dim)`` in C order."""
        return self.mesh().reshape(-1, self.dim)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def describe(self) -> str:
        return ",".join(f"{lo:g}:{hi:g}:{n}" for lo, hi, n in zip(self.lower, self.upper, self.counts))


def parse_grid(text: str, dim: int | None = None) -> Grid:
    """Parse ``lo:hi:n[,lo:hi:n...]``; a single axis spec is broadcast to ``dim`` axes."""
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    try:
        specs = [tuple(s.split(":")) for s in parts]
        lower = [float(s[0]) for s in specs]
        upper = [float(s[1]) for s in specs]
        counts = [int(s[2]) for s in specs]
    except (IndexError, ValueError) as exc:
        raise InvalidParam(f"cannot parse grid {text!r}; expected lo:hi:n[,lo:hi:n...]") from exc
    if dim is not None and len(specs) == 1 and dim > 1:
        lower, upper, counts = lower * dim, upper * dim, counts * dim
    if dim is not None and len(lower) != dim:
        raise InvalidParam(f"grid {text!r} has {len(lower)} axes, model needs {dim}")
    return Grid(tuple(lower), tuple(upper), tuple(counts))


@dataclass(frozen=True)
class GriddedField:
    """Scalar field sampled at the nodes of ``grid`` (values shaped ``grid.shape``)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise InvalidParam(f"field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    def gradient(self) -> np.ndarray:
        """Central differences inside, second-order one-sided at the walls; shape ``(*grid.shape, dim)``."""
        grads = np.gradient(self.values, *self.grid.spacing, edge_order=2)
        if self.grid.dim == 1:
            grads = [grads]
        return np.stack(grads, axis=-1)


@dataclass(frozen=True)
class DensityEstimate:
    """Probability density on a grid, tagged with the noise level and time it belongs to."""

    grid: Grid
    values: np.ndarray
    epsilon: float
    time: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise InvalidParam(f"density shape {values.shape} does not match grid {self.grid.shape}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidParam("density values must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def normalized(self) -> "DensityEstimate":
        m = self.mass
        if m <= 0:
            raise InvalidParam("cannot normalize a density with zero mass")
        return DensityEstimate(self.grid, self.values / m, self.epsilon, self.time, dict(self.meta))

    def moments(self):
        """Mean vector and covariance matrix of the gridded density."""
        pts = self.grid.points()
        w = self.values.reshape(-1) * self.grid.cell_volume
        w = w / w.sum()
        mean = w @ pts
        dev = pts - mean
        cov = (dev * w[:, None]).T @ dev
        return mean, cov

    @classmethod
    def from_function(cls, grid: Grid, fn, epsilon: float, time: float = 0.0, normalize=True):
        """Sample ``fn`` (vectorized over ``(..., dim)`` points) at the nodes."""
        vals = np.asarray(fn(grid.mesh()), dtype=float).reshape(grid.shape)
        dens = cls(grid, vals, epsilon, time)
        return dens.normalized() if normalize else dens

    @classmethod
    def gaussian(cls, grid: Grid, mean: Sequence[float], cov, epsilon: float, time: float = 0.0):
        """Normalized Gaussian sampled on the grid."""
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        prec = np.linalg.inv(cov)

        def fn(x):
            d = x - mean
            return np.exp(-0.5 * np.einsum("...i,ij,...j->...", d, prec, d))

        return cls.from_function(grid, fn, epsilon, time)
