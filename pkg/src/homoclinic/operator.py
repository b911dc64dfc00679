"""Discrete Schrödinger operator  -d^2/dt^2 + L(t)  and its spectral geometry.

Fields are flat, node-major vectors of length ``n_interior * dim``.  The
eigenvectors are orthonormal in the quadrature-weighted L^2 inner product,
so coefficient sums reproduce the integrals of the continuous setting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .grid import Discretization
from .problem import ProblemSpec

DEFAULT_ZERO_TOL = 1e-3


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class OperatorMatrix:
    """Symmetric block-tridiagonal matrix stored in LAPACK lower band form.

    ``band[d, p] = A[p + d, p]`` for ``d = 0..dim``; the off-diagonal blocks are
    ``-I/h^2`` and the diagonal blocks ``2I/h^2 + L(t_i)``.
    """

    grid: Discretization
    dim: int
    band: np.ndarray = field(repr=False)
    L_samples: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.grid.n_interior * self.dim

    def to_sparse(self) -> sp.csr_matrix:
        n = self.size
        diags = [self.band[0]]
        offsets = [0]
        for d in range(1, self.dim + 1):
            diags += [self.band[d, :n - d], self.band[d, :n - d]]
            offsets += [-d, d]
        return sp.diags(diags, offsets, shape=(n, n), format="csr")

    def matvec(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.band[0] * u
        for d in range(1, self.dim + 1):
            b = self.band[d, :self.size - d]
            out[d:] += b * u[:-d]
            out[:-d] += b * u[d:]
        return out


def assemble(spec: ProblemSpec, grid: Discretization) -> OperatorMatrix:
    n, N, h = grid.n_interior, spec.dim, grid.h
    Ls = spec.sample_L(grid.nodes)
    band = np.zeros((N + 1, n * N))
    for d in range(N):
        for a in range(N - d):
            band[d, a::N] = Ls[:, a + d, a]
    band[0] += 2.0 / h ** 2
    band[N, :(n - 1) * N] = -1.0 / h ** 2
    return OperatorMatrix(grid, N, band, Ls)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    zero_tol: float
    n_minus: int
    n_zero: int
    dim: int = 1

    @property
    def n_bar(self) -> int:
        return self.n_minus + self.n_zero

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def n_plus(self) -> int:
        return self.size - self.n_bar

    @property
    def U_signs(self) -> np.ndarray:
        s = np.sign(self.eigenvalues).astype(int)
        s[self.n_minus:self.n_bar] = 0
        return s

    @property
    def omega(self) -> np.ndarray:
        """E-geometry weights: |lambda_n| off the kernel and 1 on it."""
        w = np.abs(self.eigenvalues).copy()
        w[self.n_minus:self.n_bar] = 1.0
        return w

    def classification(self) -> list[str]:
        return ["minus"] * self.n_minus + ["zero"] * self.n_zero + ["plus"] * self.n_plus

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """Weighted-L^2 eigen-coefficients c_n = (u, e_n)_2."""
        return self.eigenvectors.T @ (self.weights * np.asarray(u, dtype=float))

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ np.asarray(c, dtype=float)

    def mode(self, k: int) -> np.ndarray:
        """e_k with 1-based k, as in lambda_1 <= lambda_2 <= ..."""
        return self.eigenvectors[:, k - 1].copy()


def eigendecompose(A: OperatorMatrix, zero_tol: float = DEFAULT_ZERO_TOL) -> SpectralDecomposition:
    if not zero_tol > 0:
        raise ValueError(f"zero_tol must be positive, got {zero_tol!r}")
    try:
        if A.dim == 1:
            lam, V = sla.eigh_tridiagonal(A.band[0], A.band[1, :-1])
        else:
            lam, V = sla.eig_banded(A.band, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(
            f"eigendecomposition failed for size {A.size}: diag range "
            f"[{A.band[0].min():.3g}, {A.band[0].max():.3g}], h = {A.grid.h:.3g}: {exc}") from exc
    order = np.argsort(lam, kind="stable")
    lam, V = lam[order], V[:, order]
    w = np.repeat(A.grid.weights, A.dim)
    E = V / np.sqrt(w)[:, None]
    n_minus = int(np.count_nonzero(lam < -zero_tol))
    n_zero = int(np.count_nonzero(np.abs(lam) <= zero_tol))
    return SpectralDecomposition(lam, E, w, float(zero_tol), n_minus, n_zero, A.dim)


def split(u: np.ndarray, sd: SpectralDecomposition):
    """u = u_minus + u_zero + u_plus along the spectral splitting."""
    c = sd.coefficients(u)
    parts = []
    for lo, hi in ((0, sd.n_minus), (sd.n_minus, sd.n_bar), (sd.n_bar, sd.size)):
        parts.append(sd.eigenvectors[:, lo:hi] @ c[lo:hi])
    return tuple(parts)


def e_norm(u: np.ndarray, sd: SpectralDecomposition) -> float:
    """||u||^2 = || |A|^(1/2) u ||_2^2 + ||u^0||_2^2."""
    c = sd.coefficients(u)
    return float(np.sqrt(np.sum(sd.omega * c * c)))


def e_inner(u: np.ndarray, v: np.ndarray, sd: SpectralDecomposition) -> float:
    return float(np.sum(sd.omega * sd.coefficients(u) * sd.coefficients(v)))


def plus_minus_norms(u: np.ndarray, sd: SpectralDecomposition) -> tuple[float, float, float]:
    """(||u^+||, ||u^-||, ||u^0||) in the E-norm."""
    c2 = sd.omega * sd.coefficients(u) ** 2
    return (float(np.sqrt(c2[sd.n_bar:].sum())), float(np.sqrt(c2[:sd.n_minus].sum())),
            float(np.sqrt(c2[sd.n_minus:sd.n_bar].sum())))


def quadratic_form(u: np.ndarray, v: np.ndarray, sd: SpectralDecomposition,
                   A: OperatorMatrix | None = None, grid: Discretization | None = None) -> float:
    """O(u, v) = (|A|^(1/2) U u, |A|^(1/2) v)_2 in the eigenbasis.

    The polar factor U vanishes on the kernel, so O(u, u) equals
    ||u^+||^2 - ||u^-||^2 to rounding.  The integral form is :func:`sbp_form`;
    the two differ only by the discrete kernel eigenvalues (|lambda| <= zero_tol),
    see :func:`kernel_defect`.
    """
    cu, cv = sd.coefficients(u), sd.coefficients(v)
    return float(np.sum(sd.U_signs * np.abs(sd.eigenvalues) * cu * cv))


def sbp_form(u: np.ndarray, v: np.ndarray, A: OperatorMatrix) -> float:
    """Discrete  int (u'.v' + (L u, v)) dt  with u = v = 0 at +-T (summation by parts)."""
    g, N = A.grid, A.dim
    U = np.asarray(u, dtype=float).reshape(-1, N)
    Vv = np.asarray(v, dtype=float).reshape(-1, N)
    pad = np.zeros((1, N))
    du = np.diff(np.vstack([pad, U, pad]), axis=0) / g.h
    dv = np.diff(np.vstack([pad, Vv, pad]), axis=0) / g.h
    kinetic = g.h * np.sum(du * dv)
    potential = np.sum(g.weights * np.einsum("iab,ib,ia->i", A.L_samples, U, Vv))
    return float(kinetic + potential)


def kernel_defect(u: np.ndarray, v: np.ndarray, sd: SpectralDecomposition) -> float:
    """sum over kernel modes of lambda_n c_n d_n: the gap between sbp_form and quadratic_form."""
    k = slice(sd.n_minus, sd.n_bar)
    return float(np.sum(sd.eigenvalues[k] * sd.coefficients(u)[k] * sd.coefficients(v)[k]))


def norm_equivalence_constants(sd: SpectralDecomposition) -> tuple[float, float]:
    """c1, c2 with c1 ||u||_0 <= ||u|| <= c2 ||u||_0, ||u||_0^2 = || |A|^(1/2) u ||^2 + ||u||_2^2."""
    r = np.sqrt(sd.omega / (np.abs(sd.eigenvalues) + 1.0))
    return float(r.min()), float(r.max())
