"""Problem instances  u'' - L(t) u + W_u(t, u) = 0  with  W(t, u) = a(t)|u|^nu.

A :class:`ProblemSpec` bundles the coefficient samplers with the exponents
(nu, mu, alpha) and the constants (abar, rbar) of the growth hypotheses on L.
The ``check_*`` functions test those hypotheses on finite samples; they give
numerical evidence, never proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import Discretization, lp_norm

MatrixSampler = Callable[[float], np.ndarray]
ScalarSampler = Callable[[float], float]

SYMMETRY_RTOL = 1e-12
FD_STEP = 1e-5
# second differences lose twice the digits; a larger step keeps roundoff near 1e-8
FD_STEP_SECOND = 1e-4


class HypothesisViolation(ValueError):
    """A sampled coefficient breaks a hard structural requirement."""


def nu_bar(nu: float) -> float:
    """Upper end of the admissible mu range for a given nu."""
    return 2.0 / (3.0 - 2.0 * nu) if nu < 1.5 else math.inf


def conjugate(p: float) -> float:
    """Hölder conjugate p* with 1/p + 1/p* = 1 (inf <-> 1)."""
    if math.isinf(p):
        return 1.0
    if p == 1.0:
        return math.inf
    return p / (p - 1.0)


@dataclass(frozen=True)
class ProblemSpec:
    dim: int
    L: MatrixSampler
    a: ScalarSampler
    nu: float
    mu: float
    alpha: float = 0.5
    abar: float = 1.0
    rbar: float = 1.0
    Lp: Optional[MatrixSampler] = None
    Lpp: Optional[MatrixSampler] = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not 1.0 < self.nu < 2.0:
            raise ValueError(f"nu must lie in (1, 2), got {self.nu!r}")
        if not self.mu >= 2.0:
            raise ValueError(f"mu must be >= 2, got {self.mu!r}")
        if self.mu > nu_bar(self.nu) * (1 + 1e-12):
            raise ValueError(
                f"mu={self.mu!r} exceeds nu_bar={nu_bar(self.nu)!r} for nu={self.nu!r}")
        if not self.alpha < 1.0:
            raise ValueError(f"alpha must be < 1, got {self.alpha!r}")
        if not (self.abar > 0 and self.rbar > 0):
            raise ValueError("abar and rbar must be positive")

    @property
    def mu_star(self) -> float:
        return conjugate(self.mu)

    @property
    def nu_mu_star(self) -> float:
        """Exponent q with Psi(u) <= ||a||_mu ||u||_q^nu (q = nu when mu = inf)."""
        return self.nu * self.mu_star

    def L_at(self, t: float) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.L(float(t)), dtype=float)).reshape(self.dim, self.dim)

    def Lp_at(self, t: float) -> np.ndarray:
        if self.Lp is not None:
            return np.atleast_2d(np.asarray(self.Lp(float(t)), dtype=float)).reshape(self.dim, self.dim)
        h = FD_STEP
        return (self.L_at(t + h) - self.L_at(t - h)) / (2.0 * h)

    def Lpp_at(self, t: float) -> np.ndarray:
        if self.Lpp is not None:
            return np.atleast_2d(np.asarray(self.Lpp(float(t)), dtype=float)).reshape(self.dim, self.dim)
        h = FD_STEP_SECOND
        return (self.L_at(t + h) - 2.0 * self.L_at(t) + self.L_at(t - h)) / (h * h)

    def sample_L(self, nodes: np.ndarray) -> np.ndarray:
        """L(t_i) stacked into shape (n, dim, dim); raises on asymmetric samples."""
        out = np.empty((len(nodes), self.dim, self.dim))
        for i, t in enumerate(nodes):
            m = self.L_at(t)
            _require_symmetric(m, t)
            out[i] = m
        return out

    def sample_a(self, nodes: np.ndarray) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=float)
        try:
            vals = np.asarray(self.a(nodes), dtype=float)
            if vals.shape != nodes.shape:
                raise ValueError
        except Exception:
            vals = np.array([float(self.a(float(t))) for t in nodes])
        bad = np.flatnonzero(~(vals >= 0))
        if bad.size:
            i = bad[0]
            raise HypothesisViolation(f"a(t) must be nonnegative; a({nodes[i]!r}) = {vals[i]!r}")
        return vals


def _require_symmetric(m: np.ndarray, t: float) -> None:
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
        raise HypothesisViolation(f"L(t) is not symmetric at t = {t!r}")


# --- built-in families -------------------------------------------------------

def harmonic_L(dim: int = 1, c: float = 0.0):
    """L(t) = (t^2 - c) I together with its exact derivatives."""
    eye = np.eye(dim)
    return (lambda t: (t * t - c) * eye,
            lambda t: 2.0 * t * eye,
            lambda t: 2.0 * eye)


def gaussian_weight(t):
    return np.exp(-np.square(t))


def zero_weight(t):
    return np.zeros_like(np.asarray(t, dtype=float))


WEIGHTS = {"gaussian": gaussian_weight, "zero": zero_weight}
FAMILIES = ("harmonic", "shifted")


def builtin_problem(family: str = "shifted", *, c: float = 3.0, weight: str = "gaussian",
                    dim: int = 1, nu: float = 1.25, mu: float = 2.0, alpha: float = 0.5,
                    abar: float = 1.0, rbar: float = 3.0, weight_scale: float = 1.0) -> ProblemSpec:
    """Built-in problem library.

    ``harmonic``: L(t) = t^2 I.  ``shifted``: L(t) = (t^2 - c) I, with c in {1, 3}
    being the intended cases (other values are accepted).  The weight is
    ``gaussian`` (a = exp(-t^2)) or ``zero`` (the linear problem), multiplied
    by ``weight_scale``.  A negative scale is not rejected here; sampling a
    then raises :class:`HypothesisViolation`.
    """
    if family == "harmonic":
        c = 0.0
    elif family != "shifted":
        raise ValueError(f"unknown problem family {family!r}; expected one of {FAMILIES}")
    if weight not in WEIGHTS:
        raise ValueError(f"unknown weight {weight!r}; expected one of {sorted(WEIGHTS)}")
    L, Lp, Lpp = harmonic_L(dim, c)
    base = WEIGHTS[weight]
    a = base if weight_scale == 1.0 else (lambda t: weight_scale * base(t))
    return ProblemSpec(dim=dim, L=L, Lp=Lp, Lpp=Lpp, a=a, nu=nu, mu=mu,
                       alpha=alpha, abar=abar, rbar=rbar, name=family,
                       params={"family": family, "c": c, "weight": weight, "weight_scale": weight_scale})


# --- hypothesis checks ----------------------------------------------------------

@dataclass
class HypothesisReport:
    name: str
    passed: bool
    heuristic: bool
    message: str
    data: dict = field(default_factory=dict)

    def summary(self) -> str:
        tag = " (heuristic)" if self.heuristic else ""
        return f"{self.name}: {'pass' if self.passed else 'FAIL'}{tag} - {self.message}"


def check_L1(spec: ProblemSpec, t_samples: Sequence[float], threshold: float = 1.0) -> HypothesisReport:
    """Trend evidence for  l(t)|t|^(alpha-2) -> inf  (l = smallest eigenvalue of L).

    The sequence is ordered by increasing |t|.  The verdict is "consistent with
    divergence" when its last half (at least two values) is strictly increasing
    and the final value exceeds ``threshold``.
    """
    ts = np.asarray(sorted((float(t) for t in t_samples), key=abs))
    if ts.size == 0:
        raise ValueError("check_L1 needs at least one sample")
    if np.any(ts == 0.0):
        raise ValueError("t = 0 has no growth rate; drop it from the samples")
    lmin = np.empty(ts.size)
    for i, t in enumerate(ts):
        m = spec.L_at(t)
        _require_symmetric(m, t)
        lmin[i] = np.linalg.eigvalsh(m)[0]
    seq = lmin * np.abs(ts) ** (spec.alpha - 2.0)
    tail = seq[-max(2, (seq.size + 1) // 2):]
    increasing = tail.size >= 2 and bool(np.all(np.diff(tail) > 0))
    ok = increasing and seq[-1] > threshold
    msg = ("consistent with divergence" if ok else "not consistent with divergence")
    return HypothesisReport("L1", ok, True, msg,
                            {"t": ts.tolist(), "l": lmin.tolist(), "sequence": seq.tolist(),
                             "threshold": threshold})


def check_L2(spec: ProblemSpec, t_samples: Sequence[float],
             unit_dirs: Sequence[np.ndarray], tol: float = 1e-9) -> HypothesisReport:
    """Sampled form of (L2): variant (i) |L'u| <= abar|Lu|, variant (ii) ((L'' - abar L)u, u) <= 0.

    Passes when either variant holds on every sample (the hypothesis is a
    disjunction).  Margins are the worst values over samples and directions.
    """
    if len(unit_dirs) == 0:
        raise ValueError("check_L2 needs at least one direction")
    ts = [float(t) for t in t_samples]
    if not ts:
        raise ValueError("check_L2 needs at least one sample")
    low = [t for t in ts if not abs(t) > spec.rbar]
    if low:
        raise ValueError(f"samples must satisfy |t| > rbar = {spec.rbar}; got {low}")
    dirs = [np.asarray(u, dtype=float).reshape(spec.dim) for u in unit_dirs]
    m1 = m2 = -math.inf
    for t in ts:
        L, Lp, Lpp = spec.L_at(t), spec.Lp_at(t), spec.Lpp_at(t)
        for u in dirs:
            m1 = max(m1, float(np.linalg.norm(Lp @ u) - spec.abar * np.linalg.norm(L @ u)))
            m2 = max(m2, float(u @ ((Lpp - spec.abar * L) @ u)))
    pass_i, pass_ii = m1 <= tol, m2 <= tol
    ok = pass_i or pass_ii
    msg = f"variant (i) margin {m1:.6g} ({'ok' if pass_i else 'violated'}), " \
          f"variant (ii) margin {m2:.6g} ({'ok' if pass_ii else 'violated'})"
    return HypothesisReport("L2", ok, False, msg,
                            {"margin_i": m1, "margin_ii": m2, "pass_i": pass_i, "pass_ii": pass_ii,
                             "analytic_Lp": spec.Lp is not None, "analytic_Lpp": spec.Lpp is not None})


def weight_norm(spec: ProblemSpec, grid: Discretization, p: Optional[float] = None) -> float:
    """Quadrature ||a||_p on the grid window (p defaults to mu)."""
    p = spec.mu if p is None else p
    return lp_norm(spec.sample_a(grid.nodes), p, grid)


def check_W(spec: ProblemSpec, grid: Discretization, rtol: float = 1e-3) -> HypothesisReport:
    """Integrability of a in L^mu: the norm must not move when the window doubles."""
    inner = weight_norm(spec, grid)
    outer = weight_norm(spec, grid.widened(2.0))
    rel = abs(outer - inner) / max(outer, 1e-300)
    ok = rel < rtol
    if inner == 0:
        msg = "integrable (a vanishes on the grid)"
    else:
        msg = "integrable" if ok else f"norm grows with the window (rel. change {rel:.3g})"
    return HypothesisReport("W", ok, True, msg,
                            {"a_norm_mu": inner, "a_norm_mu_wide": outer, "rel_change": rel,
                             "mu": spec.mu})
