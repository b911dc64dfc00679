"""Run configuration: a TOML file with a fixed, strictly checked key set.

    [problem]   family, c, weight, weight_scale, dim, nu, mu, alpha, abar, rbar
    [grid]      T, n_interior
    [operator]  zero_tol
    [fountain]  k_range, trials, dir_samples, seed
    [solver]    lambda_schedule, eps_schedule, y_dims, starts_per_sphere, grad_tol,
                stage_tol, max_iters, polish_iters, dedup_tol, rng_seed
    [verify]    decay_fraction, decay_tol, truncation_factor
    [output]    dir, resume

Every key is optional.  ``mu = inf`` selects the bounded-weight branch.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .grid import Discretization, make_grid
from .operator import DEFAULT_ZERO_TOL
from .problem import ProblemSpec, builtin_problem
from .solver import SolverConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or file."""


@dataclass
class ProblemSection:
    family: str = "shifted"
    c: float = 3.0
    weight: str = "gaussian"
    weight_scale: float = 1.0
    dim: int = 1
    nu: float = 1.25
    mu: float = 2.0
    alpha: float = 0.5
    abar: float = 1.0
    rbar: float = 3.0


@dataclass
class GridSection:
    T: float = 8.0
    n_interior: int = 800


@dataclass
class OperatorSection:
    zero_tol: float = DEFAULT_ZERO_TOL


@dataclass
class FountainSection:
    k_range: list = field(default_factory=lambda: [3, 7, 12, 17, 22])
    trials: int = 4
    dir_samples: int = 200
    seed: int = 0


@dataclass
class SolverSection:
    lambda_schedule: list = field(default_factory=lambda: [1.5, 1.2, 1.05, 1.0])
    eps_schedule: list = field(default_factory=lambda: [1e-2, 1e-4, 1e-6, 0.0])
    y_dims: list = field(default_factory=list)
    starts_per_sphere: int = 1
    grad_tol: float = 1e-8
    stage_tol: float = 1e-6
    max_iters: int = 400
    polish_iters: int = 60
    dedup_tol: float = 1e-4
    rng_seed: int = 0


@dataclass
class VerifySection:
    decay_fraction: float = 0.1
    decay_tol: float = 1e-4
    truncation_factor: float = 1.5


@dataclass
class OutputSection:
    dir: str = "run"
    resume: bool = False


SECTIONS = {
    "problem": ProblemSection,
    "grid": GridSection,
    "operator": OperatorSection,
    "fountain": FountainSection,
    "solver": SolverSection,
    "verify": VerifySection,
    "output": OutputSection,
}


@dataclass
class RunConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    grid: GridSection = field(default_factory=GridSection)
    operator: OperatorSection = field(default_factory=OperatorSection)
    fountain: FountainSection = field(default_factory=FountainSection)
    solver: SolverSection = field(default_factory=SolverSection)
    verify: VerifySection = field(default_factory=VerifySection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: Path = field(default=Path("."), compare=False)

    def make_spec(self) -> ProblemSpec:
        p = self.problem
        return builtin_problem(p.family, c=p.c, weight=p.weight, dim=p.dim, nu=p.nu, mu=p.mu,
                               alpha=p.alpha, abar=p.abar, rbar=p.rbar, weight_scale=p.weight_scale)

    def make_grid(self) -> Discretization:
        return make_grid(self.grid.T, self.grid.n_interior)

    def solver_config(self) -> SolverConfig:
        s = asdict(self.solver)
        s["y_dims"] = tuple(s["y_dims"] or self.fountain.k_range)
        return SolverConfig(**s)

    @property
    def output_dir(self) -> Path:
        d = Path(self.output.dir)
        return d if d.is_absolute() else self.base_dir / d

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def fingerprint(self) -> str:
        """Hash of everything that influences results (output location excluded)."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, default=_json_default)
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_toml(self) -> str:
        lines = []
        for name, d in self.to_dict().items():
            lines.append(f"[{name}]")
            for k, v in d.items():
                lines.append(f"{k} = {_toml_value(v)}")
            lines.append("")
        return "\n".join(lines)


def _json_default(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    raise TypeError(type(x))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {v!r} to TOML")


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        if key.endswith(("k_range", "y_dims")):
            if any(isinstance(x, bool) or not isinstance(x, int) for x in value):
                raise ConfigError(f"{key}: expected a list of integers, got {value!r}")
            return list(value)
        if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in value):
            raise ConfigError(f"{key}: expected a list of numbers, got {value!r}")
        return [float(x) for x in value]
    raise ConfigError(f"{key}: unsupported value {value!r}")


def from_dict(data: dict, base_dir: Path = Path(".")) -> RunConfig:
    cfg = RunConfig(base_dir=Path(base_dir))
    for name, section in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]; expected one of {sorted(SECTIONS)}")
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        target = getattr(cfg, name)
        known = {f.name for f in fields(target)}
        for key, value in section.items():
            full = f"{name}.{key}"
            if key not in known:
                raise ConfigError(f"unknown key {full!r}; expected one of {sorted(known)}")
            setattr(target, key, _coerce(full, value, getattr(target, key)))
    validate(cfg)
    return cfg


def load(path) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc.strerror or exc}") from exc
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from exc
    return from_dict(data, path.resolve().parent)


def _check(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def validate(cfg: RunConfig) -> None:
    """Re-check every constraint of the referenced types; errors name the key."""
    try:
        cfg.make_spec()
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from exc
    try:
        cfg.make_grid()
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc
    _check(cfg.operator.zero_tol > 0, "operator.zero_tol", "must be positive")
    f = cfg.fountain
    _check(len(f.k_range) > 0, "fountain.k_range", "must not be empty")
    _check(all(k >= 1 for k in f.k_range), "fountain.k_range", "entries must be positive")
    _check(all(a < b for a, b in zip(f.k_range, f.k_range[1:])), "fountain.k_range", "must be strictly increasing")
    _check(f.trials >= 1, "fountain.trials", "must be >= 1")
    _check(f.dir_samples >= 100, "fountain.dir_samples", "must be >= 100")
    size = cfg.grid.n_interior * cfg.problem.dim
    _check(max(f.k_range) <= size, "fountain.k_range", f"entries must not exceed the grid dimension {size}")
    try:
        sc = cfg.solver_config()
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc
    missing = sorted(set(sc.y_dims) - set(f.k_range))
    _check(not missing, "solver.y_dims", f"{missing} not covered by fountain.k_range")
    v = cfg.verify
    _check(0 < v.decay_fraction < 0.5, "verify.decay_fraction", "must lie in (0, 0.5)")
    _check(v.decay_tol > 0, "verify.decay_tol", "must be positive")
    _check(v.truncation_factor > 1, "verify.truncation_factor", "must exceed 1")
    _check(bool(cfg.output.dir), "output.dir", "must not be empty")
