"""Sphere geometry on the subspace ladder Y_k = span{e_1..e_k}, Z_k = span{e_k..e_M}.

For every tested k the report holds the tail embedding constant eta_k, the
radii rho_k > r_k, and the three level bounds

    a_lower = rho^2/2 - 2 eta^nu ||a||_mu rho^nu           (inf of Phi_2 on the rho-sphere of Z_k)
    b_upper = sampled max of Phi_1 on the r-sphere of Y_k
    d_lower = min over [0, rho] of s^2/2 - 2 eta^nu ||a||_mu s^nu

eta and the measure constant are found by sampling and ascent, so the report
is a heuristic certificate; trial counts and witnesses are kept with it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import functional as fn
from .grid import Discretization
from .operator import SpectralDecomposition
from .problem import ProblemSpec, weight_norm

SAFETY = 0.9


def _require_tail(k: int, sd: SpectralDecomposition) -> None:
    if k <= sd.n_bar:
        raise ValueError(f"k={k} must exceed n_bar={sd.n_bar}: Z_k would meet E^- + E^0")
    if k > sd.size:
        raise ValueError(f"k={k} exceeds the discrete dimension {sd.size}")


def estimate_eta(k: int, sd: SpectralDecomposition, grid: Discretization, spec: ProblemSpec,
                 trials: int = 8, *, seed: int = 0, starts: Sequence[np.ndarray] = ()) -> fn.EmbeddingEstimate:
    """Best-found sup of ||u||_q over the unit sphere of Z_k, q = nu * mu*."""
    _require_tail(k, sd)
    q = spec.nu_mu_star
    return fn.embedding_ascent(q, sd, trials, start=k, seed=seed, starts=starts, alpha=spec.alpha)


def rho_k(eta_k: float, a_norm_mu: float, nu: float) -> float:
    if not 1.0 < nu < 2.0:
        raise ValueError(f"nu must lie in (1, 2), got {nu!r}")
    return (8.0 * eta_k ** nu * a_norm_mu) ** (1.0 / (2.0 - nu))


def r_k(rho: float, eps0: float, nu: float) -> float:
    if not (rho > 0 and eps0 > 0):
        raise ValueError("rho and eps0 must be positive")
    return SAFETY * min(rho, eps0 ** (2.0 / (2.0 - nu)))


def lower_profile(s, eta_k: float, a_norm_mu: float, nu: float):
    """s^2/2 - 2 eta^nu ||a|| s^nu: lower bound of Phi_lambda on the s-sphere of Z_k."""
    return 0.5 * np.square(s) - 2.0 * eta_k ** nu * a_norm_mu * np.power(s, nu)


def d_lower_bound(eta_k: float, a_norm_mu: float, nu: float, rho: float) -> float:
    """Minimum of :func:`lower_profile` over [0, rho] (interior critical point in closed form)."""
    c = 2.0 * eta_k ** nu * a_norm_mu
    if c == 0:
        return 0.0
    s = min(rho, (nu * c) ** (1.0 / (2.0 - nu)))
    return float(min(0.0, lower_profile(s, eta_k, a_norm_mu, nu), lower_profile(rho, eta_k, a_norm_mu, nu)))


def measure_eps_of(values: np.ndarray, weights: np.ndarray) -> float:
    """Largest eps with  sum{w_i : values_i >= eps} >= eps  (exact; values already divided by ||u||^nu)."""
    order = np.argsort(values)[::-1]
    v = values[order]
    m = np.cumsum(weights[order])
    return float(np.max(np.minimum(v, m), initial=0.0))


def _unit_sphere_samples(sd: SpectralDecomposition, k: int, count: int, seed: int) -> np.ndarray:
    """Isometric coordinates of the canonical directions e_1..e_k plus ``count`` uniform samples."""
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((count, k))
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    return np.vstack([np.eye(k), Y])


def estimate_measure_eps(k: int, sd: SpectralDecomposition, grid: Discretization, spec: ProblemSpec,
                         dir_samples: int = 200, *, seed: int = 0, P: fn.Problem | None = None) -> float:
    """Sampled measure constant of Y_k with a 10% margin (covers both mu < inf and mu = inf)."""
    if dir_samples < 100:
        raise ValueError("dir_samples must be >= 100")
    if not 1 <= k <= sd.size:
        raise ValueError(f"k={k} outside 1..{sd.size}")
    P = P or fn.Problem(spec, grid, sd)
    if not np.any(P.a > 0):
        raise ValueError("a(t) vanishes on every grid node; the measure condition cannot hold")
    B = fn._isometric_block(sd, 1, k)
    w = grid.weights
    best = math.inf
    for y in _unit_sphere_samples(sd, k, dir_samples, seed):
        r = P.pointwise(B @ y)
        best = min(best, measure_eps_of(P.a * r ** spec.nu, w))
    if not best > 0:
        raise ValueError(f"measure condition degenerate on Y_{k}: sampled eps = {best}")
    return SAFETY * best


def sphere_max(k: int, radius: float, P: fn.Problem, lam: float = 1.0, dir_samples: int = 200,
               *, seed: int = 0, refine: int = 3, iters: int = 60) -> tuple[float, np.ndarray]:
    """Sampled max of Phi_lambda on the radius-sphere of Y_k, refined by Riemannian ascent."""
    sd = P.sd
    B = fn._isometric_block(sd, 1, k)
    sq = np.sqrt(sd.omega[:k])
    Ys = _unit_sphere_samples(sd, k, dir_samples, seed + 7919)
    vals = np.array([fn.phi_lambda(radius * (B @ y), lam, P) for y in Ys])
    order = np.argsort(vals)[::-1][:refine]
    best_val, best_u = -math.inf, None
    for i in order:
        y, val = Ys[i].copy(), vals[i]
        step = 1.0
        for _ in range(iters):
            u = radius * (B @ y)
            g = fn.gradient_coefficients(sd.coefficients(u), u, lam, P)[:k] * sq * radius
            g -= (g @ y) * y
            gn = np.linalg.norm(g)
            if gn < 1e-14 * max(1.0, abs(val)):
                break
            while step > 1e-12:
                yn = y + step * g / gn
                yn /= np.linalg.norm(yn)
                vn = fn.phi_lambda(radius * (B @ yn), lam, P)
                if vn > val:
                    y, val = yn, vn
                    step *= 2.0
                    break
                step *= 0.5
            else:
                break
        if val > best_val:
            best_val, best_u = val, radius * (B @ y)
    return float(best_val), best_u


@dataclass
class FountainReport:
    k_range: list
    eta: np.ndarray
    rho: np.ndarray
    r: np.ndarray
    eps_measure: float
    a_lower: np.ndarray
    b_upper: np.ndarray
    d_lower: np.ndarray
    f3_pass: np.ndarray
    a_norm_mu: float = math.nan
    b_bound: np.ndarray = field(default=None)
    b_consistent: np.ndarray = field(default=None)
    trials: int = 0
    dir_samples: int = 0
    eta_witnesses: list = field(default_factory=list, repr=False)
    b_witnesses: list = field(default_factory=list, repr=False)

    def index(self, k: int) -> int:
        return self.k_range.index(k)

    def radius(self, k: int) -> float:
        return float(self.r[self.index(k)])

    def rows(self):
        for i, k in enumerate(self.k_range):
            yield {"k": k, "eta": self.eta[i], "rho": self.rho[i], "r": self.r[i],
                   "a_lower": self.a_lower[i], "b_upper": self.b_upper[i],
                   "d_lower": self.d_lower[i], "f3_pass": bool(self.f3_pass[i])}

    def bracket(self, phi: float) -> list[int]:
        """Indices k whose interval [d_k(2), b_k(1)] contains phi."""
        return [k for i, k in enumerate(self.k_range)
                if self.d_lower[i] <= phi <= self.b_upper[i]]


def verify_f3(k_range: Sequence[int], sd: SpectralDecomposition, grid: Discretization,
              spec: ProblemSpec, trials: int = 8, dir_samples: int = 200, *,
              seed: int = 0, jobs: int = 1) -> FountainReport:
    ks = sorted(set(int(k) for k in k_range))
    for k in ks:
        _require_tail(k, sd)
    P = fn.Problem(spec, grid, sd)
    nu = spec.nu
    a_norm = weight_norm(spec, grid)

    def eta_of(k):
        return estimate_eta(k, sd, grid, spec, trials, seed=seed + k)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        etas = list(pool.map(eta_of, ks))
    # Z_k shrinks as k grows, so a witness for a larger k is feasible for every smaller one
    vals = [e.value for e in etas]
    wits = [e.witness for e in etas]
    for i in range(len(ks) - 2, -1, -1):
        if vals[i + 1] > vals[i]:
            vals[i], wits[i] = vals[i + 1], wits[i + 1]
    eta = np.array(vals)

    if a_norm > 0:
        rho = np.array([rho_k(e, a_norm, nu) for e in eta])
        eps0 = estimate_measure_eps(ks[-1], sd, grid, spec, dir_samples, seed=seed, P=P)
        r = np.array([r_k(p, eps0, nu) for p in rho])
    else:
        # no nonlinearity: the radii degenerate; keep positive placeholders so the
        # quadratic part is visible in b_upper
        rho = np.ones(len(ks))
        eps0 = 0.0
        r = SAFETY * rho
    a_lower = np.array([float(lower_profile(p, e, a_norm, nu)) for p, e in zip(rho, eta)])
    d_lower = np.array([d_lower_bound(e, a_norm, nu, p) for p, e in zip(rho, eta)])

    def b_of(i):
        return sphere_max(ks[i], r[i], P, 1.0, dir_samples, seed=seed + ks[i])

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        bs = list(pool.map(b_of, range(len(ks))))
    b_upper = np.array([b for b, _ in bs])
    b_bound = 0.5 * r ** 2 - eps0 ** 2 * r ** nu
    b_consistent = b_upper <= b_bound + 1e-9
    f3 = (a_lower >= 0) & (b_upper < 0) & (rho > r) & (r > 0)
    return FountainReport(ks, eta, rho, r, float(eps0), a_lower, b_upper, d_lower, f3,
                          a_norm_mu=float(a_norm), b_bound=b_bound, b_consistent=b_consistent,
                          trials=trials, dir_samples=dir_samples, eta_witnesses=wits,
                          b_witnesses=[u for _, u in bs])
