"""Command line interface.

Commands: ``validate``, ``brake``, ``solve``, ``sweep``, ``verify`` and
``config-reference``.  Exit codes: 0 ok, 1 configuration error, 2 failed
hypothesis, 3 solver non-convergence, 4 conformance-gate failure.

All files except ``timing.json`` are deterministic functions of the
configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np
import yaml

from . import _backend
from .action import action_value, fd_check
from .config import RunConfig, load, reference
from .continuation import cold_solve, sweep_eps, sweep_mu
from .errors import (ConfigError, DomainError, EvaluationError, NoConvergenceError,
                     UnsupportedOperationError)
from .kepler import brake_orbit, brake_residual, energy_drift
from .mountainpass import MinimaxReport, build_endpoints, deform, initial_path, \
    refine_critical_point
from .potentials import validate_hypotheses
from .trajectory import CSV_FMT, Trajectory
from .verify import energy_profile, make_solution, populate

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_SOLVER, EXIT_GATE = 0, 1, 2, 3, 4
OUT_ENV = "FROZEN_PLANET_OUT"


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception, code: int):
        super().__init__(f"{stage}: {type(exc).__name__}: {exc}")
        self.stage, self.exc, self.code = stage, exc, code


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, cfg: RunConfig, out: Optional[str]):
        self.cfg = cfg
        self.dir = out or os.environ.get(OUT_ENV) or cfg.output
        os.makedirs(self.dir, exist_ok=True)
        self.files = {}
        self.timing = {"workers": cfg.workers}
        self.write("config", "config.yaml", yaml.safe_dump(config_echo(cfg), sort_keys=False))

    def path(self, name: str) -> str:
        return os.path.join(self.dir, name)

    def write(self, key: str, name: str, text: str) -> None:
        with open(self.path(name), "w") as fh:
            fh.write(text)
        self.files[key] = name

    def csv(self, key: str, name: str, header: str, cols) -> None:
        np.savetxt(self.path(name), np.column_stack(cols), delimiter=",", header=header,
                   comments="", fmt=CSV_FMT)
        self.files[key] = name

    def stage(self, name: str, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        except ConfigError as exc:
            raise StageError(name, exc, EXIT_CONFIG) from exc
        except (NoConvergenceError, DomainError, EvaluationError) as exc:
            raise StageError(name, exc, EXIT_SOLVER) from exc
        except UnsupportedOperationError as exc:
            raise StageError(name, exc, EXIT_CONFIG) from exc
        finally:
            self.timing[f"{name}_s"] = round(time.perf_counter() - t0, 6)

    def finish(self, report: dict) -> None:
        report["files"] = dict(sorted(self.files.items()))
        self.write("report", "report.json", _json(report))
        with open(self.path("timing.json"), "w") as fh:
            fh.write(_json(self.timing))


def fd_probe(traj: Trajectory, seed: int, amp: float = 0.05) -> Trajectory:
    """Smooth seeded perturbation of ``traj`` used as the gradient-check point.

    A critical point makes every directional derivative tiny, so the check
    there measures roundoff in the action difference instead of the gradient.
    """
    rng = np.random.default_rng(seed)
    t = traj.t / traj.T
    k = np.arange(1, 5)
    modes = np.sin(0.5 * np.pi * np.outer(t, 2 * k - 1))
    scale = amp * np.abs(traj.q2).max()
    q1 = traj.q1 + scale * modes @ (rng.standard_normal(4) / k ** 2)
    q2 = traj.q2 + scale * np.cos(np.pi * np.outer(t, k - 1)) @ (rng.standard_normal(4) / k ** 2)
    return Trajectory(traj.T, q1, q2)


def config_echo(cfg: RunConfig) -> dict:
    """Configuration without execution-only settings (``workers`` goes to timing.json)."""
    out = cfg.to_dict()
    out.pop("workers")
    return out


def hypothesis_grid(family) -> np.ndarray:
    return np.geomspace(1e-4 * family.s_bar, 1e4 * family.s_bar, 801)


def _hypotheses(run: Run):
    fam = run.cfg.family.build()
    rep = run.stage("hypotheses", validate_hypotheses, fam, hypothesis_grid(fam))
    run.write("hypotheses", "hypotheses.json", _json(rep.to_dict()))
    return rep


def _trajectory_plot(run: Run, key: str, name: str, traj: Trajectory) -> None:
    run.csv(key, name, "t,q1,q2,gap", [traj.t, traj.q1, traj.q2, traj.gap])


def cmd_validate(run: Run) -> int:
    rep = _hypotheses(run)
    for k, c in rep.checks.items():
        print(f"{k:16s} {'pass' if c.passed else 'FAIL'}  margin={c.worst_margin:.3e}"
              f"{'  ' + c.detail if c.detail else ''}")
    run.finish({"command": "validate", "config": config_echo(run.cfg),
                "hypotheses": rep.to_dict()})
    return EXIT_OK if rep.passed else EXIT_HYPOTHESIS


def cmd_brake(run: Run) -> int:
    cfg = run.cfg
    sp = cfg.potentials()
    b = run.stage("brake", brake_orbit, sp, cfg.T, cfg.n)
    b.to_csv(run.path("brake.csv"))
    run.files["brake"] = "brake.csv"
    info = {"T": b.T, "w": b.w, "a_eps": b.a, "h": b.h, "energy_drift": energy_drift(b),
            "residual": brake_residual(b)}
    print(f"brake orbit: w={b.w:.12g} a_eps={b.a:.12g} h={b.h:.12g}")
    run.finish({"command": "brake", "config": config_echo(cfg), "brake": info})
    return EXIT_OK


def _pipeline(run: Run):
    """Minimax and refinement at ``cfg.n``; returns (solution, report or None, brake)."""
    cfg = run.cfg
    ctx = cfg.context()
    mcfg = cfg.minimax_config()
    if ctx.n > cfg.coarse_n:
        sol, c_est, src = run.stage("minimax", cold_solve, ctx, mcfg, cfg.coarse_n,
                                    mcfg.refine_tol)
        return make_solution(sol.traj, ctx, c_est, {**sol.info, "c_source": src}), None, None
    b = run.stage("brake", brake_orbit, ctx.sp, ctx.T, ctx.n)
    lo, hi, info = run.stage("endpoints", build_endpoints, b, ctx, mcfg, return_info=True)
    path = initial_path(lo, hi, mcfg.M, ctx, mcfg.ridge_weight)
    path, rep = run.stage("deform", deform, path, ctx, mcfg, a_eps=b.a)
    rep.endpoints = info
    sol = run.stage("refine", refine_critical_point, rep.maximizer, ctx, mcfg.refine_tol,
                    rep.c_est, mcfg.refine_max_iters)
    return sol, rep, b


def cmd_solve(run: Run) -> int:
    cfg = run.cfg
    hyp = _hypotheses(run)
    if not hyp.passed:
        print(f"hypotheses failed: {', '.join(hyp.failed())}", file=sys.stderr)
        run.finish({"command": "solve", "config": config_echo(cfg), "hypotheses": hyp.to_dict()})
        return EXIT_HYPOTHESIS
    sol, rep, b = _pipeline(run)
    sol = populate(sol)
    ctx = sol.ctx
    fd = None
    if cfg.fd_trials > 0:
        fd = fd_check(ctx, fd_probe(sol.traj, cfg.seed), trials=cfg.fd_trials,
                      seed=cfg.seed)
    sol.traj.to_csv(run.path("solution.csv"))
    run.files["solution"] = "solution.csv"
    _trajectory_plot(run, "plot_trajectory", "plot_trajectory.csv", sol.traj)
    prof = energy_profile(sol)
    run.csv("plot_energy", "plot_energy.csv", "t,h", [prof.t, prof.h])
    report = {"command": "solve", "config": config_echo(cfg), "hypotheses": hyp.to_dict(),
              "backend": _backend.name(), "fd_check": fd, "c_est": sol.c_est,
              "action": action_value(ctx, sol.traj), "h": sol.h,
              "solution": sol.to_dict()}
    if rep is not None:
        rep.maximizer.to_csv(run.path("maximizer.csv"))
        run.files["maximizer"] = "maximizer.csv"
        b.to_csv(run.path("brake.csv"))
        run.files["brake"] = "brake.csv"
        run.write("minimax", "minimax.json", rep.to_json() + "\n")
        hist = rep.level_history
        run.csv("plot_levels", "plot_levels.csv", "iter,level", [np.arange(hist.size), hist])
        report.update({"a_eps": rep.a_eps, "margin": rep.margin, "minimax_status": rep.status,
                       "minimax_flags": rep.flags})
    gate = sol.checks
    print(f"c_est={sol.c_est:.12g} h={sol.h:.12g} grad_inf={gate.diagnostics['grad_inf']:.3e}"
          f" gate={'pass' if gate.passed else 'FAIL'}")
    if not gate.passed:
        print(f"failed checks: {', '.join(gate.failed())}", file=sys.stderr)
    run.finish(report)
    return EXIT_OK if gate.passed else EXIT_GATE


def cmd_sweep(run: Run) -> int:
    cfg = run.cfg
    if cfg.schedule is None:
        raise StageError("sweep", ConfigError("sweep needs a schedule"), EXIT_CONFIG)
    sched = run.stage("schedule", cfg.schedule.build)
    ctx = cfg.context()
    mcfg = cfg.minimax_config()
    if sched.kind == "eps":
        ctx = ctx.with_eps(sched.values[0], sched.link * sched.values[0])
        rec = run.stage("sweep", sweep_eps, sched, ctx, mcfg, cfg.coarse_n, mcfg.refine_tol)
    else:
        ctx = ctx.with_mu(sched.values[0])
        rec = run.stage("sweep", sweep_mu, sched, ctx, mcfg, cfg.coarse_n, mcfg.refine_tol,
                        cfg.schedule.substeps)
    jl = rec.write(run.dir, "sweep")
    run.files["sweep"] = os.path.basename(jl)
    for k, s in enumerate(rec.steps):
        if s.solution is not None:
            run.files[f"sweep_{k:03d}"] = f"sweep_{k:03d}.csv"
    run.csv("plot_sweep", "plot_sweep.csv",
            f"{sched.kind},gap_T,h,c_est,q1_T,dist_c0,dist_c2", rec.plot_rows().T)
    for s in rec.steps:
        print(f"{sched.kind}={s.value:.6g} gap_T={s.gap_T:.6g} h={s.h:.8g} "
              f"dist_c0={s.dist_c0:.3e} gate={'pass' if s.gate_passed else 'FAIL'}")
    run.finish({"command": "sweep", "config": config_echo(cfg), "failed": rec.failed,
                "notes": rec.notes, "steps": [s.to_dict() for s in rec.steps]})
    if rec.failed is not None:
        print(f"sweep failed: {rec.failed}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK if all(s.gate_passed for s in rec.steps) else EXIT_GATE


def cmd_verify(run: Run, trajectory: str, c_est: Optional[float]) -> int:
    cfg = run.cfg
    try:
        traj = Trajectory.from_csv(trajectory)
    except (OSError, ValueError) as exc:
        raise StageError("verify", ConfigError(f"cannot read {trajectory!r}: {exc}"),
                         EXIT_CONFIG) from exc
    ctx = cfg.context().with_grid(T=traj.T, n=traj.n)
    run.stage("verify", ctx.check, traj)
    level = c_est if c_est is not None else action_value(ctx, traj)
    sol = populate(make_solution(traj, ctx, level))
    run.write("verify", "verify.json", _json(sol.to_dict()))
    gate = sol.checks
    print(f"gate={'pass' if gate.passed else 'FAIL'}"
          + (f" failed: {', '.join(gate.failed())}" if not gate.passed else ""))
    run.finish({"command": "verify", "config": config_echo(cfg), "trajectory": trajectory,
                "c_est": level, "c_source": "given" if c_est is not None else "action",
                "checks": gate.to_dict()})
    return EXIT_OK if gate.passed else EXIT_GATE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (dotted path)")
    common.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else config)")
    common.add_argument("--workers", type=int, help="threads for node evaluations")
    p = argparse.ArgumentParser(prog="frozen-planet",
                                description="Frozen planet orbits by a mountain-pass search.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check the potential hypotheses")
    sub.add_parser("brake", parents=[common], help="compute the reference brake orbit")
    sub.add_parser("solve", parents=[common], help="run the full pipeline")
    sub.add_parser("sweep", parents=[common], help="continuation along the schedule")
    v = sub.add_parser("verify", parents=[common], help="check a trajectory CSV")
    v.add_argument("trajectory", help="CSV with columns t,q1,q2")
    v.add_argument("--c-est", type=float, help="minimax level for the energy bounds")
    sub.add_parser("config-reference", help="print every config key with its default")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "config-reference":
        sys.stdout.write(reference())
        return EXIT_OK
    try:
        overrides = list(args.overrides)
        if args.workers is not None:
            overrides.append(f"workers={args.workers}")
        cfg = load(args.config, overrides)
        _backend.set_workers(cfg.workers)
        run = Run(cfg, args.out)
        if args.command == "validate":
            return cmd_validate(run)
        if args.command == "brake":
            return cmd_brake(run)
        if args.command == "solve":
            return cmd_solve(run)
        if args.command == "sweep":
            return cmd_sweep(run)
        return cmd_verify(run, args.trajectory, args.c_est)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage {exc}", file=sys.stderr)
        if isinstance(exc.exc, NoConvergenceError) and exc.exc.diagnostics:
            print(f"diagnostics: {_json(exc.exc.diagnostics)}", file=sys.stderr, end="")
        return exc.code
    finally:
        _backend.set_workers(1)


if __name__ == "__main__":
    sys.exit(main())
