"""Multi-start search for critical points of Phi on the subspace ladder.

Pipeline per seed (seeds live on the r_k-spheres of Y_k, where Phi < 0):

1. ``descend``: gradient flow of Phi_lambda in the E-geometry, restricted to a
   subspace of Y_k, through the (lambda, eps) continuation stages.  The
   finite block E^- + E^0 inside the subspace is held at its maximizer (Phi is
   strictly concave there), so the flow runs on the reduced functional
   J(w) = max_v Phi_lambda(w + v) and decreases it monotonically.
2. ``polish``: the candidate is refined on the full space at lambda = 1 by a
   damped Newton iteration on the discrete Euler-Lagrange equation
   A u = W_u(t, u), with the smoothing eps taken to ``eps_final``.  Critical
   points of this kind are saddles, which a descent method cannot converge to.
3. duplicates (modulo sign) and the trivial solution are discarded.
"""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import zip_longest
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from . import functional as fn
from .fountain import FountainReport, estimate_measure_eps
from .grid import pointwise_norm
from .operator import OperatorMatrix, assemble, e_norm

log = logging.getLogger(__name__)

ARMIJO = 1e-4


@dataclass(frozen=True)
class SolverConfig:
    lambda_schedule: tuple = (1.5, 1.2, 1.05, 1.0)
    eps_schedule: tuple = (1e-2, 1e-4, 1e-6, 0.0)
    y_dims: tuple = ()
    starts_per_sphere: int = 4
    grad_tol: float = 1e-8
    stage_tol: float = 1e-6
    max_iters: int = 400
    polish_iters: int = 60
    dedup_tol: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambda_schedule)
        eps = tuple(float(x) for x in self.eps_schedule)
        object.__setattr__(self, "lambda_schedule", lam)
        object.__setattr__(self, "eps_schedule", eps)
        object.__setattr__(self, "y_dims", tuple(int(k) for k in self.y_dims))
        if not lam or lam[-1] != 1.0 or any(not 1.0 <= x <= 2.0 for x in lam):
            raise ValueError(f"lambda_schedule must lie in [1, 2] and end at 1, got {lam}")
        if any(b > a for a, b in zip(lam, lam[1:])):
            raise ValueError("lambda_schedule must be non-increasing")
        if not eps or any(x < 0 for x in eps) or any(b > a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"eps_schedule must be non-increasing and nonnegative, got {eps}")
        if list(self.y_dims) != sorted(set(self.y_dims)):
            raise ValueError("y_dims must be strictly increasing")
        for name in ("grad_tol", "stage_tol", "dedup_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("starts_per_sphere", "max_iters", "polish_iters"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def eps_final(self) -> float:
        return self.eps_schedule[-1]

    def stages(self) -> list[tuple[float, float]]:
        """(lambda, eps) pairs; the shorter schedule is padded with its last value."""
        lam, eps = self.lambda_schedule, self.eps_schedule
        return [(a if a is not None else lam[-1], b if b is not None else eps[-1])
                for a, b in zip_longest(lam, eps)]


@dataclass
class SolutionRecord:
    u: np.ndarray = field(repr=False)
    phi: float
    grad_norm: float
    residual_l2: float
    decay_sup: float
    k_origin: int
    iters: int
    seed_id: str = ""
    e_norm: float = 0.0
    checks: dict = field(default_factory=dict)


# --- boundedness monitor ------------------------------------------------------------

@dataclass
class BoundednessReport:
    M5: float
    constants: dict
    observed: int = 0
    max_plus: float = 0.0
    max_minus_zero: float = 0.0
    flagged: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flagged


class BoundednessMonitor:
    """Tracks ||u^+|| and ||u^- + u^0|| along iterates against an a-priori bound M5.

    The bound chains three estimates for critical points of Phi_lambda on Y_n:

      ||u^+||^2 <= C1 ||u||^nu,                  C1 = 2 nu ||a||_mu beta_2^(nu-1) beta_q
      ||u^- + u^0||^nu <= C2 P + C3 ||u^+||^nu,  C2 = 2^(nu-1) / (eps^2 (1 - nu/2)),
                                                 C3 = 2^(nu-1) ||a||_mu beta_{nu mu*}^nu / eps^2
      ||u||^2 = ||u^+||^2 + ||u^- + u^0||^2

    with q = 2mu*/(2 + mu* - mu* nu), eps the measure constant of E^- + E^0 and
    P = -min_k d_k(2) bounding -Phi_lambda at the critical levels.  M5 is the
    largest ||u||^2 compatible with all three.  Exceeding it is flagged, not fatal.
    """

    def __init__(self, M5: float, constants: dict, n_bar: int):
        self.report = BoundednessReport(M5, constants)
        self.n_bar = n_bar
        self._lock = threading.Lock()

    @classmethod
    def from_problem(cls, P: fn.Problem, fr: FountainReport, trials: int = 4, dir_samples: int = 200,
                     seed: int = 0) -> "BoundednessMonitor":
        spec, sd = P.spec, P.sd
        nu, ms = spec.nu, spec.mu_star
        a_norm = fr.a_norm_mu
        q = 2.0 * ms / (2.0 + ms - ms * nu)
        beta2 = fn.embedding_ascent(2.0, sd, trials, seed=seed).value
        beta_q = fn.embedding_ascent(q, sd, trials, seed=seed).value
        beta_nm = fn.embedding_ascent(spec.nu_mu_star, sd, trials, seed=seed).value
        C1 = 2.0 * nu * a_norm * beta2 ** (nu - 1.0) * beta_q
        level = max(0.0, -float(np.min(fr.d_lower))) if len(fr.d_lower) else 0.0
        consts = {"beta_2": beta2, "q": q, "beta_q": beta_q, "beta_nu_mu_star": beta_nm,
                  "a_norm_mu": a_norm, "C1": C1, "level": level}
        if sd.n_bar == 0 or a_norm == 0:
            M5 = C1 ** (2.0 / (2.0 - nu)) if C1 > 0 else 0.0
            if sd.n_bar:
                M5 = math.inf
            return cls(M5, consts, sd.n_bar)
        eps = estimate_measure_eps(sd.n_bar, sd, P.grid, spec, dir_samples, seed=seed, P=P)
        C2 = 2.0 ** (nu - 1.0) / (eps ** 2 * (1.0 - nu / 2.0))
        C3 = 2.0 ** (nu - 1.0) * a_norm * beta_nm ** nu / eps ** 2

        def excess(X):
            plus2 = C1 * X ** nu
            mz2 = (C2 * level + C3 * plus2 ** (nu / 2.0)) ** (2.0 / nu)
            return X * X - plus2 - mz2

        hi = 1.0
        while excess(hi) <= 0:
            hi *= 2.0
        X = brentq(excess, 0.0, hi) if excess(0.0) < 0 else 0.0
        # the root is the last crossing: excess < 0 below it, > 0 above (RHS grows like X^nu)
        consts.update({"eps_measure": eps, "C2": C2, "C3": C3})
        return cls(X * X, consts, sd.n_bar)

    def observe_coefficients(self, c: np.ndarray, omega: np.ndarray, tag: str = "") -> bool:
        c2 = omega * c * c
        plus = math.sqrt(float(c2[self.n_bar:].sum()))
        mz = math.sqrt(float(c2[:self.n_bar].sum()))
        r = self.report
        with self._lock:
            return self._record(r, plus, mz, tag)

    @staticmethod
    def _record(r: BoundednessReport, plus: float, mz: float, tag: str) -> bool:
        r.observed += 1
        r.max_plus = max(r.max_plus, plus)
        r.max_minus_zero = max(r.max_minus_zero, mz)
        if plus * plus + mz * mz > r.M5:
            r.flagged.append({"tag": tag, "norm_sq": plus * plus + mz * mz})
            return False
        return True


def boundedness_monitor(P: fn.Problem, fr: FountainReport, **kw) -> BoundednessMonitor:
    return BoundednessMonitor.from_problem(P, fr, **kw)


# --- seeds ------------------------------------------------------------------------------

def seed_points(k: int, r_k: float, sd, count: int, rng_seed: int) -> list[np.ndarray]:
    """Canonical seeds r_k e_j/||e_j|| (j = 1..k) followed by ``count`` uniform points
    on the r_k-sphere of Y_k.  Deterministic in (rng_seed, k)."""
    if k <= sd.n_bar:
        raise ValueError(f"k={k} must exceed n_bar={sd.n_bar}")
    if not r_k > 0:
        raise ValueError("r_k must be positive")
    B = fn._isometric_block(sd, 1, k)
    out = [r_k * B[:, j].copy() for j in range(k)]
    rng = np.random.default_rng([int(rng_seed), int(k)])
    for _ in range(count):
        y = rng.standard_normal(k)
        out.append(r_k * (B @ (y / np.linalg.norm(y))))
    return out


# --- restricted gradient flow ---------------------------------------------------------------

class _Subspace:
    """Coefficient-space view of span{e_j : j in idx} for fast restricted evaluations."""

    def __init__(self, P: fn.Problem, active: Sequence[int], inner: Sequence[int]):
        sd = P.sd
        self.P = P
        self.active = np.asarray(active, dtype=int)
        self.inner = np.asarray(inner, dtype=int)
        self.idx = np.concatenate([self.inner, self.active])
        self.E = sd.eigenvectors[:, self.idx]
        self.lam = sd.eigenvalues[self.idx]
        self.omega = sd.omega[self.idx]
        self.n_in = self.inner.size
        n_minus = sd.n_minus
        # coefficient of the quadratic part: lambda_n for plus and kernel modes,
        # lambda * lambda_n for minus modes (those belong to B)
        self.is_minus = self.idx < n_minus
        self.wa = P.w * P.a

    def field(self, c):
        return self.E @ c

    def value(self, c, lam, eps):
        u = self.E @ c
        quad = self.lam * c * c
        quad = np.where(self.is_minus, lam * quad, quad)
        return 0.5 * float(quad.sum()) - lam * fn.psi(u, self.P, fn.Regularization(eps)), u

    def dvalue(self, c, u, lam, eps):
        """Partial derivatives of Phi_lambda with respect to the coefficients."""
        p = self.E.T @ (self.P.w.repeat(self.P.dim) * fn.grad_psi(u, self.P, fn.Regularization(eps)))
        lin = np.where(self.is_minus, lam * self.lam * c, self.lam * c)
        return lin - lam * p

    def inner_hessian(self, c, u, lam, eps):
        Ein = self.E[:, :self.n_in]
        d2 = _psi_second(u, self.P, eps)
        H = -lam * (Ein.T @ _apply_block(d2, Ein, self.P.dim, self.P.w))
        lamin = self.lam[:self.n_in]
        H[np.diag_indices(self.n_in)] += np.where(self.is_minus[:self.n_in], lam * lamin, lamin)
        return H


def _psi_second(u, P: fn.Problem, eps: float):
    """Pointwise second derivative of a|u|_eps^nu: scalar per node (dim 1) or dim x dim blocks."""
    nu, dim = P.spec.nu, P.dim
    U = np.asarray(u, dtype=float).reshape(-1, dim)
    s = np.maximum(np.sum(U * U, axis=1) + eps * eps, 1e-300)
    f = nu * P.a * s ** ((nu - 2.0) / 2.0)
    if dim == 1:
        return f * (1.0 + (nu - 2.0) * U[:, 0] ** 2 / s)
    return f[:, None, None] * (np.eye(dim)[None] + (nu - 2.0) * np.einsum("ia,ib->iab", U, U) / s[:, None, None])


def _apply_block(d2, X, dim, w):
    if dim == 1:
        return (w * d2)[:, None] * X
    n = d2.shape[0]
    Xr = X.reshape(n, dim, -1)
    return (w[:, None, None] * np.einsum("iab,ibk->iak", d2, Xr)).reshape(n * dim, -1)


def _maximize_inner(S: _Subspace, c, lam, eps, iters: int = 50):
    """Newton ascent on the strictly concave E^- + E^0 block, active part fixed."""
    if S.n_in == 0:
        val, u = S.value(c, lam, eps)
        return c, val, u
    val, u = S.value(c, lam, eps)
    for _ in range(iters):
        g = S.dvalue(c, u, lam, eps)[:S.n_in]
        if np.linalg.norm(g) <= 1e-15 * (1.0 + abs(val)):
            break
        H = S.inner_hessian(c, u, lam, eps)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = g
        if g @ step <= 0:
            step = g / max(1.0, np.max(np.abs(np.diag(H))))
        t = 1.0
        while t > 1e-12:
            cn = c.copy()
            cn[:S.n_in] += t * step
            vn, un = S.value(cn, lam, eps)
            if vn >= val:
                break
            t *= 0.5
        else:
            break
        done = vn - val <= 1e-15 * (1.0 + abs(val))
        c, val, u = cn, vn, un
        if done:
            break
    return c, val, u


@dataclass
class DescentResult:
    u: np.ndarray = field(repr=False)
    converged: bool
    iters: int
    phi_history: list = field(default_factory=list, repr=False)
    grad_norm: float = math.nan
    diverged: bool = False


def descend(u0: np.ndarray, lam: float, eps: float, subspace_dim: int, cfg: SolverConfig,
            P: fn.Problem, *, modes: Optional[Sequence[int]] = None, tol: Optional[float] = None,
            rtol: float = 0.0, monitor: Optional[BoundednessMonitor] = None) -> DescentResult:
    """Gradient flow of Phi_lambda restricted to Y_{subspace_dim}.

    ``modes`` (1-based) selects the E^+ directions that move; by default all E^+
    modes of Y_n.  The E^- + E^0 modes of Y_n are kept at their maximizer, so
    the recorded values Phi_lambda(u_k) are non-increasing.  Armijo backtracking
    (constant 1e-4) halves the step until the decrease condition holds.
    Stops when the E-norm of the projected gradient is at most
    max(tol, rtol * ||u||); the relative form suits seeds far below unit size.
    """
    sd = P.sd
    if not 1 <= subspace_dim <= sd.size:
        raise ValueError(f"subspace_dim must lie in 1..{sd.size}")
    inner = list(range(min(sd.n_bar, subspace_dim)))
    if modes is None:
        active = list(range(sd.n_bar, subspace_dim))
    else:
        active = sorted(int(j) - 1 for j in modes)
        if any(j < sd.n_bar or j >= subspace_dim for j in active):
            raise ValueError("modes must be E^+ indices inside Y_n")
    tol = cfg.grad_tol if tol is None else tol
    S = _Subspace(P, active, inner)
    c = sd.coefficients(u0)[S.idx]
    c, val, u = _maximize_inner(S, c, lam, eps)
    hist = [val]
    om_act = S.omega[S.n_in:]
    step = 1.0
    gnorm = math.nan
    if monitor is not None:
        monitor.observe_coefficients(_full(c, S, sd), sd.omega, "descend:start")
    for it in range(cfg.max_iters + 1):
        d = S.dvalue(c, u, lam, eps)[S.n_in:]
        g = d / om_act                      # E-gradient coefficients on the active block
        gnorm = math.sqrt(float(np.sum(om_act * g * g)))
        if not math.isfinite(gnorm) or not math.isfinite(val):
            return DescentResult(S.field(c), False, it, hist, gnorm, diverged=True)
        unorm = math.sqrt(float(np.sum(S.omega * c * c)))
        if gnorm <= max(tol, rtol * unorm) or S.active.size == 0:
            return DescentResult(S.field(c), True, it, hist, gnorm)
        if it == cfg.max_iters:
            break
        step = min(step * 2.0, 1e6)
        while True:
            cn = c.copy()
            cn[S.n_in:] -= step * g
            cn, vn, un = _maximize_inner(S, cn, lam, eps)
            if math.isfinite(vn) and vn <= val - ARMIJO * step * gnorm * gnorm:
                break
            step *= 0.5
            if step < 1e-14:
                return DescentResult(S.field(c), False, it, hist, gnorm)
        c, val, u = cn, vn, un
        hist.append(val)
        if monitor is not None:
            monitor.observe_coefficients(_full(c, S, sd), sd.omega, "descend")
    return DescentResult(S.field(c), False, cfg.max_iters, hist, gnorm)


def _full(c, S: _Subspace, sd):
    out = np.zeros(sd.size)
    out[S.idx] = c
    return out


# --- full-space polish --------------------------------------------------------------------

def _full_band(A: OperatorMatrix, d2, dim):
    """Full (2 dim + 1)-row band of  A - D^2 Psi  for scipy.linalg.solve_banded."""
    n = A.size
    ab = np.zeros((2 * dim + 1, n))
    for d in range(dim + 1):
        ab[dim + d, :n - d] = A.band[d, :n - d]
        if d:
            ab[dim - d, d:] = A.band[d, :n - d]
    if dim == 1:
        ab[dim] -= d2
    else:
        for a in range(dim):
            for b in range(dim):
                d = a - b
                # entry (i*dim+a, i*dim+b) sits in row dim + a - b, column i*dim + b
                ab[dim + d, b::dim] -= d2[:, a, b]
    return ab


@dataclass
class PolishResult:
    u: np.ndarray = field(repr=False)
    converged: bool
    iters: int
    residual: float


def newton_solve(u0: np.ndarray, A: OperatorMatrix, a: np.ndarray, nu: float, eps: float,
                 iters: int = 60, rtol: float = 1e-12) -> PolishResult:
    """Damped Newton iteration for  A u = nu a |u|_eps^(nu-2) u  on a full grid.

    The merit function is the weighted L^2 norm of the residual; steps are
    halved until it decreases.  If no step length decreases it, the full
    step is taken anyway, which lets the iteration leave shallow stalls.
    Converged when the residual is below ``rtol * (1 + ||A u||)``.
    """
    dim, w = A.dim, np.repeat(A.grid.weights, A.dim)
    pw = _PointwiseData(a, dim, nu)
    u = np.asarray(u0, dtype=float).copy()

    def residual(u):
        return A.matvec(u) - pw.grad(u, eps)

    def wnorm(r):
        return math.sqrt(float(np.sum(w * r * r)))

    F = residual(u)
    f = wnorm(F)
    best = (f, u)
    for it in range(iters):
        if f <= rtol * (1.0 + wnorm(A.matvec(u))):
            return PolishResult(u, True, it, f)
        d2 = _psi_second(u, pw, eps)
        try:
            du = sla.solve_banded((dim, dim), _full_band(A, d2, dim), F, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            break
        if not np.all(np.isfinite(du)):
            break
        t = 1.0
        while t > 1e-6:
            un = u - t * du
            Fn = residual(un)
            fn_ = wnorm(Fn)
            if fn_ < (1.0 - ARMIJO * t) * f:
                break
            t *= 0.5
        else:
            un = u - du
            Fn = residual(un)
            fn_ = wnorm(Fn)
            if not math.isfinite(fn_):
                break
        u, F, f = un, Fn, fn_
        if f < best[0]:
            best = (f, u)
    f, u = best
    return PolishResult(u, f <= rtol * (1.0 + wnorm(A.matvec(u))), iters, f)


class _PointwiseData:
    """Minimal stand-in for :class:`functional.Problem` in pointwise formulas."""

    def __init__(self, a, dim, nu):
        self.a, self.dim = a, dim
        self.spec = type("S", (), {"nu": nu})()

    def grad(self, u, eps):
        U = u.reshape(-1, self.dim)
        r = np.sqrt(np.sum(U * U, axis=1) + eps * eps)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(r > 0, self.spec.nu * self.a * r ** (self.spec.nu - 2.0), 0.0)
        return (f[:, None] * U).reshape(-1)


# eps / amplitude along the continuation; steps of sqrt(10) keep Newton inside its basin
POLISH_EPS_FACTORS = tuple(10.0 ** (-k / 2.0) for k in range(2, 21))


def polish_field(u0: np.ndarray, A: OperatorMatrix, a: np.ndarray, nu: float, cfg: SolverConfig) -> PolishResult:
    """Newton continuation in eps down to ``cfg.eps_final``.

    The intermediate eps values scale with the amplitude of the field, since a
    fixed eps larger than |u| would linearize the nonlinearity.
    """
    amp = float(np.max(pointwise_norm(u0, A.dim), initial=0.0))
    if amp == 0.0:
        return PolishResult(np.zeros_like(u0), True, 0, 0.0)
    u, total = np.asarray(u0, dtype=float), 0
    eps_list = [amp * f for f in POLISH_EPS_FACTORS if amp * f > cfg.eps_final] + [cfg.eps_final]
    res = None
    for eps in eps_list:
        res = newton_solve(u, A, a, nu, eps, cfg.polish_iters)
        u, total = res.u, total + res.iters
    return PolishResult(u, res.converged, total, res.residual)


def polish(u0: np.ndarray, P: fn.Problem, cfg: SolverConfig, A: Optional[OperatorMatrix] = None) -> PolishResult:
    """Full-space refinement of a candidate at lambda = 1."""
    A = A if A is not None else assemble(P.spec, P.grid)
    return polish_field(u0, A, P.a, P.spec.nu, cfg)


# --- the ladder ---------------------------------------------------------------------------------

@dataclass
class SeedTask:
    seed_id: str
    k: int
    index: int
    u0: np.ndarray = field(repr=False)
    modes: Optional[tuple] = None


@dataclass
class SeedOutcome:
    seed_id: str
    k: int
    u: Optional[np.ndarray] = field(default=None, repr=False)
    converged: bool = False
    iters: int = 0
    grad_norm: float = math.nan
    descent_iters: int = 0


def ladder_tasks(cfg: SolverConfig, sd, fr: FountainReport) -> list[SeedTask]:
    """All seeds of the run in canonical order.

    A canonical seed r_k e_j flows along the ray through e_j only; the ray
    minimizer does not depend on the starting radius, so each j is used at the
    first sphere that contains it.
    """
    ys = cfg.y_dims or tuple(fr.k_range)
    tasks, seen = [], set()
    for k in ys:
        if k not in fr.k_range:
            raise ValueError(f"fountain report does not cover k={k}")
        seeds = seed_points(k, fr.radius(k), sd, cfg.starts_per_sphere, cfg.rng_seed)
        for j, u0 in enumerate(seeds):
            if j < k:
                jj = j + 1
                if jj <= sd.n_bar or jj in seen:
                    continue
                seen.add(jj)
                tasks.append(SeedTask(f"k{k}-e{jj}", k, j, u0, (jj,)))
            else:
                tasks.append(SeedTask(f"k{k}-r{j - k}", k, j, u0, None))
    return tasks


def run_seed(task: SeedTask, cfg: SolverConfig, P: fn.Problem, A: OperatorMatrix,
             monitor: Optional[BoundednessMonitor] = None) -> SeedOutcome:
    u, total = task.u0, 0
    for lam, eps in cfg.stages():
        res = descend(u, lam, eps, task.k, cfg, P, modes=task.modes, tol=cfg.grad_tol,
                      rtol=cfg.stage_tol, monitor=monitor)
        total += res.iters
        if res.diverged:
            log.info("seed %s diverged at lambda=%g eps=%g", task.seed_id, lam, eps)
            return SeedOutcome(task.seed_id, task.k, None, False, 0, math.nan, total)
        u = res.u
    pol = polish(u, P, cfg, A)
    gn = fn.grad_norm(pol.u, 1.0, P, fn.Regularization(cfg.eps_final))
    ok = pol.converged or gn <= cfg.grad_tol
    return SeedOutcome(task.seed_id, task.k, pol.u, bool(ok and gn <= cfg.grad_tol), pol.iters, gn, total)


def canonical_sign(u: np.ndarray, sd) -> np.ndarray:
    """Representative of {u, -u} whose first significant eigen-coefficient is positive."""
    c = sd.coefficients(u)
    big = np.flatnonzero(np.abs(c) > 1e-8 * np.max(np.abs(c), initial=0.0))
    if big.size and c[big[0]] < 0:
        return -u
    return u


def same_solution(u: np.ndarray, v: np.ndarray, tol: float) -> bool:
    scale = max(np.max(np.abs(u)), np.max(np.abs(v)))
    if scale == 0:
        return True
    d = min(np.max(np.abs(u - v)), np.max(np.abs(u + v)))
    return d <= tol * scale


def collect(outcomes: Iterable[SeedOutcome], cfg: SolverConfig, P: fn.Problem,
            residual_fn: Callable, decay_fn: Callable) -> list[SolutionRecord]:
    """Deflate converged outcomes (taken in canonical seed order) into sorted records."""
    records: list[SolutionRecord] = []
    for out in outcomes:
        if out.u is None or not out.converged:
            continue
        u = canonical_sign(out.u, P.sd)
        en = e_norm(u, P.sd)
        if en < 10.0 * cfg.grad_tol:
            continue
        phi = fn.energy(u, 1.0, P, fn.Regularization(cfg.eps_final)).phi
        if not phi < 0:
            continue
        if any(same_solution(u, r.u, cfg.dedup_tol) for r in records):
            continue
        l2, _ = residual_fn(u)
        records.append(SolutionRecord(u, phi, out.grad_norm, l2, decay_fn(u), out.k, out.iters,
                                      out.seed_id, en))
    records.sort(key=lambda r: (r.phi, r.seed_id))
    return records


def run_ladder(cfg: SolverConfig, P: fn.Problem, fr: FountainReport, *, jobs: int = 1,
               done: Optional[dict] = None, on_outcome: Optional[Callable[[SeedOutcome], None]] = None,
               stop_after: Optional[int] = None, monitor: Optional[BoundednessMonitor] = None,
               residual_fn: Optional[Callable] = None, decay_fn: Optional[Callable] = None):
    """Run every seed of the ladder and return (records, outcomes, finished).

    ``done`` maps seed ids to outcomes of an earlier, interrupted run; those
    seeds are not repeated.  ``stop_after`` limits how many new seeds are run
    (the run is then reported as unfinished).
    """
    from .verify import decay_check, residual

    A = assemble(P.spec, P.grid)
    tasks = ladder_tasks(cfg, P.sd, fr)
    done = dict(done or {})
    todo = [t for t in tasks if t.seed_id not in done]
    finished = True
    if stop_after is not None and stop_after < len(todo):
        todo, finished = todo[:stop_after], False

    def work(task):
        return run_seed(task, cfg, P, A, monitor)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for out in pool.map(work, todo):
            done[out.seed_id] = out
            if on_outcome is not None:
                on_outcome(out)
    residual_fn = residual_fn or (lambda u: residual(u, P.spec, P.grid))
    decay_fn = decay_fn or (lambda u: decay_check(u, P.grid, 0.1, dim=P.dim)[0])
    ordered = [done[t.seed_id] for t in tasks if t.seed_id in done]
    records = collect(ordered, cfg, P, residual_fn, decay_fn) if finished else []
    return records, ordered, finished
