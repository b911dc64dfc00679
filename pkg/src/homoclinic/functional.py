"""Energy functional Phi_lambda = A - lambda B on the discrete energy space.

    A(u) = 1/2 ||u^+||^2 (+ the kernel term, below)
    B(u) = 1/2 ||u^-||^2 + Psi(u),   Psi(u) = int a(t) |u|^nu dt

Discrete kernel modes carry eigenvalues that are small but not exactly zero
(|lambda| <= zero_tol).  Their contribution 1/2 sum lambda_n c_n^2 is kept as
``kernel_part`` inside A, so that Phi_1(u) = 1/2 (Au, u)_2 - Psi(u) exactly and
critical points of Phi_1 are exact solutions of the discrete equation.

The nonlinearity may be smoothed with |u|_eps = (|u|^2 + eps^2)^(1/2); Psi is
offset so that Psi(0) = 0 for every eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import Discretization, pointwise_norm
from .operator import SpectralDecomposition
from .problem import ProblemSpec


@dataclass(frozen=True)
class Regularization:
    eps: float = 0.0

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps!r}")


EXACT = Regularization(0.0)


@dataclass(frozen=True)
class EnergyBreakdown:
    plus_part: float
    minus_part: float
    kernel_part: float
    psi: float
    lam: float

    @property
    def phi(self) -> float:
        return self.plus_part + self.kernel_part - self.minus_part - self.psi

    @property
    def A(self) -> float:
        return self.plus_part + self.kernel_part

    @property
    def B(self) -> float:
        return self.minus_part + self.psi

    @property
    def phi_lambda(self) -> float:
        return self.A - self.lam * self.B


class Problem:
    """Pre-sampled coefficients of one (spec, grid, decomposition) triple.

    All functional evaluations go through this object so a(t_i) is sampled once.
    """

    def __init__(self, spec: ProblemSpec, grid: Discretization, sd: SpectralDecomposition):
        if sd.size != grid.n_interior * spec.dim:
            raise ValueError("spectral decomposition does not match grid and dimension")
        self.spec, self.grid, self.sd = spec, grid, sd
        self.a = spec.sample_a(grid.nodes)
        self.w = grid.weights

    @property
    def dim(self) -> int:
        return self.spec.dim

    def pointwise(self, u: np.ndarray) -> np.ndarray:
        return pointwise_norm(u, self.dim)


def _abs_eps(r: np.ndarray, eps: float) -> np.ndarray:
    return np.sqrt(r * r + eps * eps) if eps > 0 else r


def psi(u: np.ndarray, P: Problem, reg: Regularization = EXACT) -> float:
    r = P.pointwise(u)
    nu, eps = P.spec.nu, reg.eps
    vals = _abs_eps(r, eps) ** nu
    if eps > 0:
        vals = vals - eps ** nu
    return float(np.sum(P.w * P.a * vals))


def grad_psi(u: np.ndarray, P: Problem, reg: Regularization = EXACT) -> np.ndarray:
    """L^2-gradient density nu a(t) |u|_eps^(nu-2) u; pair with v using the quadrature weights."""
    u = np.asarray(u, dtype=float)
    r = _abs_eps(P.pointwise(u), reg.eps)
    nu = P.spec.nu
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(r > 0, nu * P.a * r ** (nu - 2.0), 0.0)
    if P.dim == 1:
        return f * u
    return (f[:, None] * u.reshape(-1, P.dim)).reshape(-1)


def energy(u: np.ndarray, lam: float, P: Problem, reg: Regularization = EXACT) -> EnergyBreakdown:
    if not 1.0 <= lam <= 2.0:
        raise ValueError(f"lambda must lie in [1, 2], got {lam!r}")
    sd = P.sd
    c = sd.coefficients(u)
    q = sd.eigenvalues * c * c
    return EnergyBreakdown(
        plus_part=0.5 * float(q[sd.n_bar:].sum()),
        minus_part=-0.5 * float(q[:sd.n_minus].sum()),
        kernel_part=0.5 * float(q[sd.n_minus:sd.n_bar].sum()),
        psi=psi(u, P, reg),
        lam=float(lam))


def phi_lambda(u: np.ndarray, lam: float, P: Problem, reg: Regularization = EXACT) -> float:
    return energy(u, lam, P, reg).phi_lambda


def gradient_coefficients(c: np.ndarray, u: np.ndarray, lam: float, P: Problem,
                          reg: Regularization = EXACT) -> np.ndarray:
    """Eigen-coefficients of the E-gradient of Phi_lambda at u (with c = coefficients of u)."""
    sd = P.sd
    lamn = sd.eigenvalues
    p = sd.coefficients(grad_psi(u, P, reg))
    g = np.empty_like(c)
    m, b = sd.n_minus, sd.n_bar
    g[:m] = lam * (lamn[:m] * c[:m] - p[:m]) / np.abs(lamn[:m])
    g[m:b] = lamn[m:b] * c[m:b] - lam * p[m:b]
    g[b:] = c[b:] - lam * p[b:] / lamn[b:]
    return g


def grad_phi_lambda(u: np.ndarray, lam: float, P: Problem, reg: Regularization = EXACT) -> np.ndarray:
    """Riesz representative of Phi_lambda'(u) in the E-inner product."""
    c = P.sd.coefficients(u)
    return P.sd.synthesize(gradient_coefficients(c, u, lam, P, reg))


def grad_norm(u: np.ndarray, lam: float, P: Problem, reg: Regularization = EXACT) -> float:
    """E-norm of the full-space gradient of Phi_lambda."""
    c = P.sd.coefficients(u)
    g = gradient_coefficients(c, u, lam, P, reg)
    return float(np.sqrt(np.sum(P.sd.omega * g * g)))


# --- embedding constants ---------------------------------------------------------

def check_admissible(p: float, alpha: float) -> None:
    if not p >= 1 or not p > 2.0 / (3.0 - alpha):
        raise ValueError(
            f"exponent p={p!r} is outside the compact embedding range "
            f"(2/(3-alpha), inf] with alpha={alpha!r}")


def _isometric_block(sd: SpectralDecomposition, start: int, stop: Optional[int] = None) -> np.ndarray:
    """Columns e_n / sqrt(omega_n), n = start..stop (1-based): y -> u is an isometry onto the span."""
    stop = sd.size if stop is None else stop
    sl = slice(start - 1, stop)
    return sd.eigenvectors[:, sl] / np.sqrt(sd.omega[sl])


def _sup_ratio(B: np.ndarray, dim: int) -> tuple[float, np.ndarray]:
    """Exact sup of |u(t_i)| / ||u|| over the span, with a maximizer (Cauchy-Schwarz)."""
    if dim == 1:
        s = np.einsum("ij,ij->i", B, B)
        i = int(np.argmax(s))
        y = B[i].copy()
        return float(np.sqrt(s[i])), y / np.linalg.norm(y)
    best, arg = -1.0, None
    for i in range(B.shape[0] // dim):
        rows = B[i * dim:(i + 1) * dim]
        vals, vecs = np.linalg.eigh(rows @ rows.T)
        if vals[-1] > best:
            best, arg = vals[-1], rows.T @ vecs[:, -1]
    return float(np.sqrt(max(best, 0.0))), arg / np.linalg.norm(arg)


def _power_ascent(B: np.ndarray, p: float, w: np.ndarray, dim: int, y: np.ndarray,
                  max_iter: int = 500, rtol: float = 1e-12) -> tuple[float, np.ndarray]:
    """Maximize ||B y||_p on |y| = 1 by gradient steps followed by projection.

    The step length is taken to infinity (y <- grad / |grad|), which increases a
    convex objective monotonically; ||.||_p^p is convex for p >= 1.  ``w`` are
    the node weights.
    """

    def objective(y):
        u = B @ y
        r = pointwise_norm(u, dim)
        return float(np.sum(w * r ** p)), u, r

    y = y / np.linalg.norm(y)
    val, u, r = objective(y)
    for _ in range(max_iter):
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(r > 0, w * r ** (p - 2.0), 0.0)
        g = B.T @ (np.repeat(f, dim) * u)
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        y_new = g / gn
        val_new, u_new, r_new = objective(y_new)
        if val_new <= val * (1.0 + rtol):
            if val_new > val:
                y, val = y_new, val_new
            break
        y, val, u, r = y_new, val_new, u_new, r_new
    return val ** (1.0 / p), y


@dataclass(frozen=True)
class EmbeddingEstimate:
    value: float
    witness: np.ndarray
    history: tuple
    trials: int


def embedding_ascent(p: float, sd: SpectralDecomposition, trials: int = 8, *,
                     start: int = 1, stop: Optional[int] = None, seed: int = 0,
                     starts: Sequence[np.ndarray] = (), alpha: Optional[float] = None) -> EmbeddingEstimate:
    """Best value of ||u||_p / ||u|| found over span{e_start..e_stop}.

    Deterministic starts (``starts`` projected onto the span, then the lowest
    mode of the span) come first, followed by Gaussian random starts.  The
    running maximum is recorded in ``history``; the value is a lower bound for
    the discrete supremum.  p = inf is solved exactly.
    """
    if alpha is not None:
        check_admissible(p, alpha)
    elif not p >= 1:
        raise ValueError(f"p must be >= 1, got {p!r}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    B = _isometric_block(sd, start, stop)
    w = sd.weights[::sd.dim]
    if math.isinf(p):
        val, y = _sup_ratio(B, sd.dim)
        return EmbeddingEstimate(val, B @ y, (val,) * trials, trials)
    sl = slice(start - 1, sd.size if stop is None else stop)
    omega_sqrt = np.sqrt(sd.omega[sl])
    inits = []
    for u0 in starts:
        y0 = sd.coefficients(u0)[sl] * omega_sqrt
        if np.linalg.norm(y0) > 0:
            inits.append(y0)
    e0 = np.zeros(B.shape[1])
    e0[0] = 1.0
    inits.append(e0)
    rng = np.random.default_rng(seed)
    best, arg, hist = -math.inf, None, []
    for k in range(trials):
        y0 = inits[k] if k < len(inits) else rng.standard_normal(B.shape[1])
        val, y = _power_ascent(B, p, w, sd.dim, y0)
        if val > best:
            best, arg = val, y
        hist.append(best)
    return EmbeddingEstimate(best, B @ arg, tuple(hist), trials)


def embedding_constant(p: float, sd: SpectralDecomposition, grid: Discretization, trials: int = 8,
                       spec: Optional[ProblemSpec] = None, *, start: int = 1, seed: int = 0) -> float:
    """Estimate beta_p with ||u||_p <= beta_p ||u|| on the discrete space (or on the tail Z_start)."""
    if sd.size != grid.n_interior * sd.dim:
        raise ValueError("decomposition does not match the grid")
    alpha = spec.alpha if spec is not None else None
    return embedding_ascent(p, sd, trials, start=start, seed=seed, alpha=alpha).value
