"""Checks of computed solutions against the differential equation itself.

Nothing here uses the spectral machinery or the smoothing of the solver:
the residual is the raw 3-point stencil with the exact nonlinearity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import functional as fn
from .grid import Discretization, lp_norm, pointwise_norm
from .operator import SpectralDecomposition, assemble, e_norm
from .problem import ProblemSpec, weight_norm

ZERO_NODE = 1e-14
STABILITY_RTOL = 1e-4


def nonlinearity(u: np.ndarray, spec: ProblemSpec, grid: Discretization, a: np.ndarray | None = None) -> np.ndarray:
    """nu a(t)|u|^(nu-2) u at the nodes; 0 where |u| < 1e-14."""
    a = spec.sample_a(grid.nodes) if a is None else a
    U = np.asarray(u, dtype=float).reshape(-1, spec.dim)
    r = np.linalg.norm(U, axis=1)
    f = np.zeros_like(r)
    big = r >= ZERO_NODE
    f[big] = spec.nu * a[big] * r[big] ** (spec.nu - 2.0)
    return (f[:, None] * U).reshape(-1)


def residual_field(u: np.ndarray, spec: ProblemSpec, grid: Discretization) -> np.ndarray:
    """u'' - L(t) u + W_u(t, u) with u = 0 beyond the window."""
    N, h = spec.dim, grid.h
    U = np.asarray(u, dtype=float).reshape(-1, N)
    pad = np.zeros((1, N))
    Up = np.vstack([pad, U, pad])
    upp = (Up[2:] - 2.0 * Up[1:-1] + Up[:-2]) / (h * h)
    Ls = spec.sample_L(grid.nodes)
    Lu = np.einsum("iab,ib->ia", Ls, U)
    return (upp - Lu).reshape(-1) + nonlinearity(u, spec, grid)


def residual(u: np.ndarray, spec: ProblemSpec, grid: Discretization) -> tuple[float, float]:
    """(weighted L^2 norm, sup norm) of the ODE residual over the interior nodes."""
    R = pointwise_norm(residual_field(u, spec, grid), spec.dim)
    return lp_norm(R, 2.0, grid), float(R.max(initial=0.0))


def _tail_mask(grid: Discretization, fraction: float) -> np.ndarray:
    if not 0.0 < fraction < 0.5:
        raise ValueError(f"fraction must lie in (0, 0.5), got {fraction!r}")
    return np.abs(grid.nodes) >= (1.0 - fraction) * grid.T


def decay_check(u: np.ndarray, grid: Discretization, fraction: float = 0.1, tol: float = 1e-4,
                dim: int = 1) -> tuple[float, bool]:
    """Largest |u| and centered-difference |u'| on the outer ``fraction`` of [-T, T]."""
    U = np.asarray(u, dtype=float).reshape(-1, dim)
    pad = np.zeros((1, dim))
    Up = np.vstack([pad, U, pad])
    du = (Up[2:] - Up[:-2]) / (2.0 * grid.h)
    mask = _tail_mask(grid, fraction)
    if not mask.any():
        return 0.0, True
    sup_u = float(np.linalg.norm(U[mask], axis=1).max())
    sup_du = float(np.linalg.norm(du[mask], axis=1).max())
    sup = max(sup_u, sup_du)
    return sup, bool(sup <= tol)


@dataclass(frozen=True)
class RegularityBound:
    lhs: float
    rhs: float
    passed: bool
    exponent: float
    beta: float

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.passed))


def regularity_bound(u: np.ndarray, sd: SpectralDecomposition, spec: ProblemSpec, grid: Discretization,
                     trials: int = 4, seed: int = 0) -> RegularityBound:
    """lhs = ||A u||_2^2 against rhs = nu^2 beta_p^(2(nu-1)) ||u||^(2(nu-1)) ||a||_mu^2.

    p = inf for mu = 2; otherwise p = 2(nu-1) mubar with 2/mu + 1/mubar = 1
    (Hölder).  beta_p is the best ratio found by ascent, with u itself among
    the starting points.  For a solution A u = W_u(t, u), so lhs is
    ||W_u(t, u)||_2^2.
    """
    nu, mu = spec.nu, spec.mu
    A = assemble(spec, grid)
    Au = A.matvec(u)
    lhs = lp_norm(pointwise_norm(Au, spec.dim), 2.0, grid) ** 2
    if math.isinf(mu):
        mubar = 1.0
    elif mu == 2.0:
        mubar = math.inf
    else:
        mubar = mu / (mu - 2.0)
    p = math.inf if math.isinf(mubar) else 2.0 * (nu - 1.0) * mubar
    norm = e_norm(u, sd)
    if norm == 0.0:
        return RegularityBound(lhs, 0.0, lhs <= 0.0, p, 0.0)
    beta = fn.embedding_ascent(max(p, 1.0), sd, trials, seed=seed, starts=[u]).value
    if p < 1.0:
        # ||u||_p for p < 1 is not a norm; measure the ratio of u directly
        beta = _quasi_norm(u, p, grid, spec.dim) / norm
    rhs = nu ** 2 * beta ** (2.0 * (nu - 1.0)) * norm ** (2.0 * (nu - 1.0)) * weight_norm(spec, grid) ** 2
    return RegularityBound(lhs, rhs, bool(lhs <= rhs * (1.0 + 1e-6)), p, beta)


def _quasi_norm(u, p, grid, dim):
    r = pointwise_norm(u, dim)
    return float(np.sum(grid.weights * r ** p) ** (1.0 / p))


@dataclass(frozen=True)
class StabilityResult:
    delta_sup: float
    passed: bool
    converged: bool
    residual: float
    T_wide: float

    def __iter__(self):
        return iter((self.delta_sup, self.passed))


def truncation_stability(u: np.ndarray, spec: ProblemSpec, grid: Discretization, cfg=None,
                         factor: float = 1.5) -> StabilityResult:
    """Re-solve on the window widened by ``factor`` (same h) and compare on [-T, T].

    The field is zero-padded onto the wider grid and refined with the same
    Newton continuation as the solver.  Passes when the sup-norm change is at
    most 1e-4 (1 + ||u||_inf) and the re-solve converged.
    """
    from .solver import SolverConfig, polish_field

    if not factor > 1.0:
        raise ValueError(f"factor must exceed 1, got {factor!r}")
    cfg = cfg or SolverConfig()
    u = np.asarray(u, dtype=float)
    wide = grid.widened(factor)
    sup_u = float(np.max(np.abs(u), initial=0.0))
    if sup_u == 0.0:
        return StabilityResult(0.0, True, True, 0.0, wide.T)
    A = assemble(spec, wide)
    res = polish_field(grid.embed(u, wide, spec.dim), A, spec.sample_a(wide.nodes), spec.nu, cfg)
    back = grid.restrict(res.u, wide, spec.dim)
    delta = float(np.max(np.abs(back - u)))
    ok = res.converged and delta <= STABILITY_RTOL * (1.0 + sup_u)
    return StabilityResult(delta, bool(ok), res.converged, res.residual, wide.T)
