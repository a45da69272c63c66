"""Time grids on [0, 1) and functions sampled on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError

GRID_KINDS = ("uniform", "geometric")


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing nodes ``0 = t_0 < ... < t_n = 1 - eps_min``.

    ``geometric`` grids satisfy ``1 - t_k = eps_min ** (k / n)``, i.e. a constant
    ratio of distances to the singular endpoint t = 1.  ``custom`` grids come
    from :meth:`from_nodes` and carry whatever nodes the caller supplied.
    """

    nodes: np.ndarray
    kind: str
    eps_min: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ConfigurationError("a grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ConfigurationError(f"first node must be 0, got {nodes[0]!r}")
        if not np.all(np.diff(nodes) > 0):
            raise ConfigurationError("grid nodes must be strictly increasing")
        if not nodes[-1] < 1.0:
            raise ConfigurationError("all grid nodes must be < 1")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def from_nodes(cls, nodes) -> "TimeGrid":
        nodes = np.asarray(nodes, dtype=float)
        return cls(nodes, "custom", float(1.0 - nodes[-1]))

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def n(self) -> int:
        """Number of intervals."""
        return len(self.nodes) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def tau(self) -> np.ndarray:
        """Distance of every node to the endpoint, ``1 - t``."""
        return 1.0 - self.nodes

    def index_of(self, t: float, tol: float = 1e-12) -> int:
        """Index of the node equal to ``t`` (within ``tol``)."""
        k = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[k] - t) > tol * max(1.0, abs(t)):
            raise ConfigurationError(f"t={t!r} is not a node of this grid")
        return k

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (len(self) == len(other)
                                 and bool(np.array_equal(self.nodes, other.nodes)))

    def with_endpoint(self) -> np.ndarray:
        """Nodes with t = 1 appended (for operators defined on all of [0, 1])."""
        return np.append(self.nodes, 1.0)

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.n, "eps_min": self.eps_min}


def make_grid(kind: str, n: int, eps_min: float) -> TimeGrid:
    """Build a uniform or geometric grid with ``n + 1`` nodes ending at ``1 - eps_min``."""
    if kind not in GRID_KINDS:
        raise ConfigurationError(f"grid kind must be one of {GRID_KINDS}, got {kind!r}")
    if int(n) != n or n < 2:
        raise ConfigurationError(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    if not 0.0 < eps_min < 1.0:
        raise ConfigurationError(f"eps_min must lie in (0, 1), got {eps_min!r}")
    k = np.arange(n + 1)
    if kind == "uniform":
        nodes = (1.0 - eps_min) * k / n
    else:
        nodes = -np.expm1(k / n * np.log(eps_min))
    nodes[0] = 0.0
    return TimeGrid(nodes, kind, float(eps_min))


INTERPRETATIONS = ("function", "derivative")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values attached to the nodes of a :class:`TimeGrid`.

    ``values`` has shape ``(len(grid), dim)``.  A ``derivative`` is read as a
    piecewise-constant function equal to its left-node value on each interval.
    """

    grid: TimeGrid
    values: np.ndarray
    interpretation: str = "function"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != len(self.grid):
            raise ConfigurationError(
                f"values of shape {values.shape} do not match a grid of {len(self.grid)} nodes")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("grid function values must be finite")
        if self.interpretation not in INTERPRETATIONS:
            raise ConfigurationError(f"interpretation must be one of {INTERPRETATIONS}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn: Callable, interpretation: str = "function"):
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float), interpretation)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def check_partner(self, other: "GridFunction") -> None:
        if not self.grid.same_as(other.grid):
            raise ConfigurationError("grid functions live on different grids")
