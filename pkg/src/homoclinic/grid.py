"""Truncated uniform grid on [-T, T] with Dirichlet ends and grid L^p norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Discretization:
    """Uniform interior grid of ``[-T, T]``; the end points carry u = 0."""

    T: float
    n_interior: int
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.T > 0) or not math.isfinite(self.T):
            raise ValueError(f"T must be a positive finite number, got {self.T!r}")
        if int(self.n_interior) != self.n_interior or self.n_interior < 3:
            raise ValueError(f"n_interior must be an integer >= 3, got {self.n_interior!r}")
        h = 2.0 * self.T / (self.n_interior + 1)
        i = np.arange(1, self.n_interior + 1)
        # symmetric construction: node i and node n+1-i are exact negatives
        nodes = h * (i - (self.n_interior + 1) / 2.0)
        weights = np.full(self.n_interior, h)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.n_interior

    def widened(self, factor: float) -> "Discretization":
        """Same spacing, about ``factor`` times the half-width.

        The window grows by the same whole number of cells on each side, so
        every node of ``self`` is also a node of the result.
        """
        if not factor >= 1:
            raise ValueError(f"widening factor must be >= 1, got {factor!r}")
        pad = int(round((factor - 1.0) * (self.n_interior + 1) / 2.0))
        return Discretization(self.T + pad * self.h, self.n_interior + 2 * pad)

    def embed(self, u: np.ndarray, other: "Discretization", dim: int = 1) -> np.ndarray:
        """Zero-pad a field on ``self`` onto the wider grid ``other``."""
        pad = (other.n_interior - self.n_interior) // 2
        out = np.zeros(other.n_interior * dim)
        out[pad * dim:(pad + self.n_interior) * dim] = np.asarray(u, dtype=float).reshape(-1)
        return out

    def restrict(self, u: np.ndarray, other: "Discretization", dim: int = 1) -> np.ndarray:
        """Inverse of :meth:`embed`: the part of a field on ``other`` lying on ``self``."""
        pad = (other.n_interior - self.n_interior) // 2
        return np.asarray(u, dtype=float).reshape(-1)[pad * dim:(pad + self.n_interior) * dim].copy()


def make_grid(T: float, n_interior: int) -> Discretization:
    return Discretization(float(T), int(n_interior))


def pointwise_norm(u: np.ndarray, dim: int = 1) -> np.ndarray:
    """Euclidean norm |u(t_i)| in R^dim at every node of a flat, node-major field."""
    u = np.asarray(u, dtype=float)
    if dim == 1:
        return np.abs(u.reshape(-1))
    return np.linalg.norm(u.reshape(-1, dim), axis=1)


def lp_norm(u: np.ndarray, p: float, grid: Discretization, dim: int = 1) -> float:
    """Quadrature L^p norm ``(sum_i w_i |u(t_i)|^p)^(1/p)``; ``p = inf`` gives the max."""
    if not p >= 1:
        raise ValueError(f"L^p norm needs p >= 1 (or inf), got {p!r}")
    r = pointwise_norm(u, dim)
    if r.size != grid.n_interior:
        raise ValueError(f"field has {r.size} nodes, grid has {grid.n_interior}")
    if math.isinf(p):
        return float(r.max(initial=0.0))
    m = r.max(initial=0.0)
    if m == 0.0:
        return 0.0
    # scale by the max so large p does not overflow
    return float(m * np.sum(grid.weights * (r / m) ** p) ** (1.0 / p))
