"""Command line: ``homoclinic run <config>`` and ``homoclinic resume <dir>``.

Exit status: 0 on completion (also with zero solutions or after a requested
early stop), 1 on configuration, I/O or checkpoint errors, 2 when a sampled
coefficient breaks a hard hypothesis (asymmetric L, negative a), 130 on
keyboard interrupt.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import threading
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import export
from . import functional as fn
from .config import ConfigError, RunConfig, load
from .fountain import verify_f3
from .operator import EigensolverError, assemble, eigendecompose
from .problem import HypothesisViolation, check_L1, check_L2, check_W
from .solver import BoundednessMonitor, SeedOutcome, run_ladder
from .verify import decay_check, regularity_bound, residual, truncation_stability

log = logging.getLogger("homoclinic")

CHECKPOINT = "checkpoint.npz"
CONFIG_COPY = "config.toml"
CHECKPOINT_VERSION = 1

MANIFEST_COLUMNS = [
    "id", "phi", "grad_norm", "residual_l2", "residual_sup", "decay_sup", "k_origin", "seed_id",
    "iters", "e_norm", "decay_pass", "regularity_lhs", "regularity_rhs", "regularity_pass",
    "truncation_delta", "truncation_pass", "bracket", "file",
]


class CheckpointError(RuntimeError):
    pass


# --- checkpoint ------------------------------------------------------------------------

class Checkpoint:
    """Completed seeds of one run, rewritten atomically after every seed."""

    def __init__(self, path: Path, rng_seed: int, fingerprint: str):
        self.path = path
        self.rng_seed = rng_seed
        self.fingerprint = fingerprint
        self.outcomes: dict[str, SeedOutcome] = {}
        self.monitor: dict = {}
        self.finished = False
        self._lock = threading.Lock()

    def meta(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "rng_seed": self.rng_seed,
            "fingerprint": self.fingerprint,
            "finished": self.finished,
            "monitor": self.monitor,
            "outcomes": [
                {"seed_id": o.seed_id, "k": o.k, "converged": o.converged, "iters": o.iters,
                 "grad_norm": o.grad_norm if math.isfinite(o.grad_norm) else None,
                 "descent_iters": o.descent_iters, "has_u": o.u is not None}
                for o in self.outcomes.values()
            ],
        }

    def save(self) -> None:
        with self._lock:
            arrays = {f"u{i}": o.u for i, o in enumerate(self.outcomes.values()) if o.u is not None}
            export.write_npz(self.path, meta=np.array(json.dumps(self.meta())), **arrays)

    def add(self, out: SeedOutcome, monitor: BoundednessMonitor | None = None) -> None:
        with self._lock:
            self.outcomes[out.seed_id] = out
            if monitor is not None:
                self.monitor = _monitor_state(monitor)
        self.save()

    @classmethod
    def load(cls, path: Path) -> "Checkpoint":
        try:
            with np.load(path, allow_pickle=False) as z:
                meta = json.loads(str(z["meta"]))
                arrays = {k: z[k] for k in z.files if k != "meta"}
            if meta.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(f"unsupported checkpoint version {meta.get('version')!r}")
            ck = cls(path, int(meta["rng_seed"]), str(meta["fingerprint"]))
            ck.finished = bool(meta["finished"])
            ck.monitor = dict(meta.get("monitor") or {})
            for i, m in enumerate(meta["outcomes"]):
                u = arrays[f"u{i}"] if m["has_u"] else None
                gn = m["grad_norm"] if m["grad_norm"] is not None else math.nan
                ck.outcomes[m["seed_id"]] = SeedOutcome(m["seed_id"], int(m["k"]), u, bool(m["converged"]),
                                                        int(m["iters"]), float(gn), int(m["descent_iters"]))
            return ck
        except CheckpointError:
            raise
        except Exception as exc:  # any unreadable or inconsistent file
            raise CheckpointError(f"corrupt checkpoint {str(path)!r}: {exc}") from exc


def _monitor_state(mon: BoundednessMonitor) -> dict:
    r = mon.report
    return {"observed": r.observed, "max_plus": r.max_plus, "max_minus_zero": r.max_minus_zero,
            "flagged": len(r.flagged)}


def _restore_monitor(mon: BoundednessMonitor, state: dict) -> None:
    if not state:
        return
    r = mon.report
    r.observed += int(state.get("observed", 0))
    r.max_plus = max(r.max_plus, float(state.get("max_plus", 0.0)))
    r.max_minus_zero = max(r.max_minus_zero, float(state.get("max_minus_zero", 0.0)))
    r.flagged.extend({"tag": "earlier run"} for _ in range(int(state.get("flagged", 0))))


# --- pipeline ---------------------------------------------------------------------------

def hypothesis_reports(spec, grid) -> list:
    """Sampled checks of the growth and integrability hypotheses (soft: reported only)."""
    reports = []
    lo = max(spec.rbar, 1.0)
    if grid.T > lo:
        ts = np.linspace(lo, grid.T, 17)[1:]
        reports.append(check_L1(spec, ts))
        dirs = list(np.eye(spec.dim))
        rng = np.random.default_rng(0)
        for _ in range(4):
            d = rng.standard_normal(spec.dim)
            dirs.append(d / np.linalg.norm(d))
        reports.append(check_L2(spec, np.concatenate([ts, -ts]), dirs))
    else:
        log.warning("window T=%g does not reach beyond rbar=%g; L1/L2 checks skipped", grid.T, spec.rbar)
    reports.append(check_W(spec, grid))
    return reports


def execute(cfg: RunConfig, run_dir: Path, *, jobs: int = 1, stop_after: int | None = None,
            checkpoint: Checkpoint | None = None) -> int:
    t0 = time.perf_counter()
    spec, grid = cfg.make_spec(), cfg.make_grid()
    run_dir.mkdir(parents=True, exist_ok=True)

    reports = hypothesis_reports(spec, grid)
    for r in reports:
        log.info("%s", r.summary())

    A = assemble(spec, grid)
    sd = eigendecompose(A, cfg.operator.zero_tol)
    export.write_spectrum(run_dir / "spectrum.csv", sd)
    log.info("spectrum: n_minus=%d n_zero=%d (zero_tol=%g)", sd.n_minus, sd.n_zero, sd.zero_tol)
    low = [k for k in cfg.fountain.k_range if k <= sd.n_bar]
    if low:
        raise ConfigError(f"fountain.k_range: {low} must exceed n_bar = {sd.n_bar}")

    P = fn.Problem(spec, grid, sd)
    f = cfg.fountain
    fr = verify_f3(f.k_range, sd, grid, spec, f.trials, f.dir_samples, seed=f.seed, jobs=jobs)
    export.write_fountain(run_dir / "fountain.csv", fr)
    log.info("fountain: f3_pass=%s", [bool(x) for x in fr.f3_pass])

    monitor = BoundednessMonitor.from_problem(P, fr, trials=f.trials, dir_samples=f.dir_samples, seed=f.seed)
    scfg = cfg.solver_config()
    ck = checkpoint or Checkpoint(run_dir / CHECKPOINT, scfg.rng_seed, cfg.fingerprint())
    _restore_monitor(monitor, ck.monitor)

    def on_outcome(out: SeedOutcome):
        ck.add(out, monitor)
        log.debug("seed %s: converged=%s grad_norm=%.3g", out.seed_id, out.converged, out.grad_norm)

    records, outcomes, finished = run_ladder(
        scfg, P, fr, jobs=jobs, done=ck.outcomes, on_outcome=on_outcome, stop_after=stop_after,
        monitor=monitor, residual_fn=lambda u: residual(u, spec, grid),
        decay_fn=lambda u: decay_check(u, grid, cfg.verify.decay_fraction, cfg.verify.decay_tol, spec.dim)[0])
    if not finished:
        ck.save()
        log.info("stopped after %d of the seeds; continue with: homoclinic resume %s", len(outcomes), run_dir)
        return 0

    v = cfg.verify
    rows = []
    for i, rec in enumerate(records, start=1):
        _, res_sup = residual(rec.u, spec, grid)
        dec_sup, dec_ok = decay_check(rec.u, grid, v.decay_fraction, v.decay_tol, spec.dim)
        reg = regularity_bound(rec.u, sd, spec, grid, trials=f.trials, seed=f.seed)
        st = truncation_stability(rec.u, spec, grid, scfg, v.truncation_factor)
        rec.checks = {"decay_pass": dec_ok, "regularity": reg, "truncation": st}
        name = f"solution_{i:03d}.csv"
        export.write_solution(run_dir / name, grid, rec.u, spec.dim)
        rows.append([i, rec.phi, rec.grad_norm, rec.residual_l2, res_sup, dec_sup, rec.k_origin, rec.seed_id,
                     rec.iters, rec.e_norm, dec_ok, reg.lhs, reg.rhs, reg.passed, st.delta_sup, st.passed,
                     fr.bracket(rec.phi), name])
    export.write_csv(run_dir / "manifest.csv", MANIFEST_COLUMNS, rows)

    mon = monitor.report
    export.write_json(run_dir / "summary.json", {
        "version": __version__,
        "problem": {"name": spec.name, **spec.params, "dim": spec.dim, "nu": spec.nu, "mu": spec.mu},
        "grid": {"T": grid.T, "n_interior": grid.n_interior, "h": grid.h},
        "spectrum": {"n_minus": sd.n_minus, "n_zero": sd.n_zero, "zero_tol": sd.zero_tol,
                     "lowest": sd.eigenvalues[:8].tolist()},
        "hypotheses": [{"name": r.name, "passed": r.passed, "heuristic": r.heuristic, "message": r.message}
                       for r in reports],
        "fountain": {"f3_pass": fr.f3_pass.tolist(), "eps_measure": fr.eps_measure,
                     "a_norm_mu": fr.a_norm_mu, "b_consistent": fr.b_consistent.tolist()},
        "boundedness": {"M5": mon.M5, "max_plus": mon.max_plus, "max_minus_zero": mon.max_minus_zero,
                        "flagged": len(mon.flagged), "observed": mon.observed},
        "seeds": {"total": len(outcomes), "converged": sum(o.converged for o in outcomes)},
        "solutions": len(records),
        "all_checks_pass": all(r[10] and r[13] and r[15] for r in rows),
        "elapsed_seconds": time.perf_counter() - t0,
    })
    ck.finished = True
    ck.save()
    log.info("%d solutions written to %s", len(records), run_dir)
    return 0


def _prepare_run_dir(cfg: RunConfig) -> Path:
    run_dir = cfg.output_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    copy = RunConfig(**{name: getattr(cfg, name) for name in
                        ("problem", "grid", "operator", "fountain", "solver", "verify")})
    copy.output.dir = "."
    export.atomic_write_text(run_dir / CONFIG_COPY, copy.to_toml())
    return run_dir


def cmd_run(config_path: str, jobs: int, stop_after: int | None) -> int:
    cfg = load(config_path)
    run_dir = cfg.output_dir
    ck = None
    ck_path = run_dir / CHECKPOINT
    if cfg.output.resume and ck_path.exists():
        ck = _checked_checkpoint(ck_path, cfg)
        if ck.finished:
            log.info("run in %s is already complete", run_dir)
            return 0
    elif ck_path.exists():
        ck_path.unlink()
    run_dir = _prepare_run_dir(cfg)
    return execute(cfg, run_dir, jobs=jobs, stop_after=stop_after, checkpoint=ck)


def _checked_checkpoint(path: Path, cfg: RunConfig) -> Checkpoint:
    ck = Checkpoint.load(path)
    if ck.rng_seed != cfg.solver.rng_seed:
        raise CheckpointError(f"checkpoint was written with rng_seed={ck.rng_seed}, "
                              f"config has solver.rng_seed={cfg.solver.rng_seed}; refusing to resume")
    if ck.fingerprint != cfg.fingerprint():
        raise CheckpointError("checkpoint was written with a different configuration; refusing to resume")
    return ck


def cmd_resume(run_dir: str, jobs: int, stop_after: int | None) -> int:
    run_dir = Path(run_dir)
    cfg_path = run_dir / CONFIG_COPY
    if not cfg_path.exists():
        raise ConfigError(f"{str(cfg_path)!r} not found: not a run directory")
    cfg = load(cfg_path)
    ck_path = run_dir / CHECKPOINT
    if not ck_path.exists():
        raise CheckpointError(f"no checkpoint in {str(run_dir)!r}")
    ck = _checked_checkpoint(ck_path, cfg)
    if ck.finished:
        log.info("run in %s is already complete; nothing to do", run_dir)
        return 0
    return execute(cfg, run_dir, jobs=jobs, stop_after=stop_after, checkpoint=ck)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1, help="worker threads for seeds and fountain estimates")
    common.add_argument("--verbose", "-v", action="store_true", help="log every seed")
    common.add_argument("--stop-after", type=int, default=None, help=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="homoclinic", parents=[common],
                                description="Multiple homoclinic solutions of u'' - L(t)u + W_u(t,u) = 0 "
                                            "with subquadratic W = a(t)|u|^nu.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run the pipeline described by a TOML config")
    r.add_argument("config")
    s = sub.add_parser("resume", parents=[common], help="continue an interrupted run")
    s.add_argument("run_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    logging.getLogger("homoclinic").setLevel(logging.DEBUG if args.verbose else logging.INFO)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            return cmd_run(args.config, args.jobs, args.stop_after)
        return cmd_resume(args.run_dir, args.jobs, args.stop_after)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 1
    except HypothesisViolation as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return 2
    except EigensolverError as exc:
        print(f"operator stage failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted; completed seeds are checkpointed, continue with 'homoclinic resume'",
              file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
