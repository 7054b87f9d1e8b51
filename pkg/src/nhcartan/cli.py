"""Command-line interface: simulate, noether, integral, frame."""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Sequence

import numpy as np

from . import expr as ex
from .conservation import (
    ConservationReport,
    higher_degree_check,
    noether_triple,
    quadratic_integral_check,
    reaction_annihilator_test,
    restricted_tensor_check,
    thm_int_check,
)
from .constraint import adapted_frame, characteristic_kernel, omega_ab_rank, pullback_blocks
from .dynamics import IntegrationError, Monitor, Trajectory, integrate
from .geometry import RankError, SingularFrameError, derived_flag
from .lagrangian import RegularityError, UnsupportedOperationError
from .scenarios import ENERGY_NAME, Scenario, ScenarioError, builtin, builtin_names, load

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4

ENERGY_DRIFT_TOL = 1e-8
CONSTRAINT_DRIFT_TOL = 1e-6
FRAME_TOL = 1e-10
DTILDE_COND_MAX = 1e8


class UsageError(Exception):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n"


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _positive_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text!r}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative number, got {text!r}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text!r}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", metavar="NAME", help=f"built-in scenario ({', '.join(builtin_names())})")
    src.add_argument("--scenario", metavar="PATH", help="scenario JSON file")
    common.add_argument("--t-end", type=_nonneg_float, metavar="F", help="integration horizon")
    common.add_argument("--step", type=_positive_float, metavar="F", help="fixed RK4 step")
    common.add_argument("--samples", type=_positive_int, default=256, metavar="N", help="sample states (256)")
    common.add_argument("--seed", type=_nonneg_int, default=42, metavar="N", help="sampling seed (42)")
    common.add_argument("--tol", type=_positive_float, metavar="F", help="residual tolerance (1e-9)")
    common.add_argument("--project-drift", action="store_true", help="re-project velocities onto D each step")
    common.add_argument("--output", metavar="PATH", help="write the artifact here, summary to stdout")
    common.add_argument("--format", choices=["csv", "json"], help="artifact format")

    parser = argparse.ArgumentParser(prog="nhcartan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate the constrained flow")
    p = sub.add_parser("noether", parents=[common], help="Noether triple and reaction-annihilator test")
    p.add_argument("field", metavar="FIELD")
    p = sub.add_parser("integral", parents=[common], help="first-integral conditions")
    p.add_argument("name", metavar="NAME", help=f"integral or tensor name, or {ENERGY_NAME}")
    sub.add_parser("frame", parents=[common], help="adapted-frame and rank diagnostics")
    return parser


class _Run:
    def __init__(self, args, scenario: Scenario):
        self.args = args
        self.sc = scenario
        d = scenario.defaults
        self.t_end = args.t_end if args.t_end is not None else float(d["t_end"])
        self.step = args.step if args.step is not None else float(d["step"])
        self.tol = args.tol if args.tol is not None else float(d["tol"])
        self._traj: Trajectory | None = None

    @property
    def system(self):
        return self.sc.system

    def samples(self):
        return self.system.sample_states(self.args.samples, self.args.seed)

    def trajectory(self) -> Trajectory:
        if self._traj is None:
            monitors = [Monitor(name, (lambda f: lambda st: f.value(self.system, st))(f))
                        for name, f in self.sc.integrals.items()]
            self._traj = integrate(self.system, self.sc.initial_state(), self.t_end, self.step,
                                   project_drift=self.args.project_drift, monitors=monitors)
        return self._traj

    def provenance(self) -> dict:
        return {"scenario": self.sc.name, "samples": self.args.samples, "seed": self.args.seed,
                "t_end": self.t_end, "step": self.step, "project_drift": self.args.project_drift}


def _simulate(run: _Run):
    traj = run.trajectory()
    summary = {
        "run": run.provenance(),
        "energy_drift": {"value": traj.energy_drift, "tolerance": ENERGY_DRIFT_TOL},
        "constraint_drift": {"value": traj.constraint_drift, "tolerance": CONSTRAINT_DRIFT_TOL},
        "monitor_drifts": traj.monitor_drifts(),
        "samples_recorded": len(traj),
    }
    ok = traj.energy_drift <= ENERGY_DRIFT_TOL and traj.constraint_drift <= CONSTRAINT_DRIFT_TOL
    summary["verdict"] = "pass" if ok else "fail"
    fmt = run.args.format or "csv"
    artifact = traj.to_csv() if fmt == "csv" else _dumps(summary)
    human = (f"{run.sc.name}: {len(traj)} samples to t={run.t_end:g}; "
             f"energy drift {traj.energy_drift:.3e}, constraint drift {traj.constraint_drift:.3e}; "
             f"{summary['verdict'].upper()}\n")
    for k, v in summary["monitor_drifts"].items():
        human += f"  drift of {k}: {v:.3e}\n"
    return artifact, human, ok


def _report_human(title: str, rep: ConservationReport) -> str:
    lines = [f"{title}: {'PASS' if rep.verdict else 'FAIL'}"]
    for k, ch in list(rep.channels.items()) + [(f"drift:{k}", v) for k, v in rep.drifts.items()]:
        mark = "ok " if ch.passed else "BAD"
        lines.append(f"  [{mark}] {k:<24} max {ch.max_residual:.3e}  (tol {ch.tolerance:.1e})")
    return "\n".join(lines) + "\n"


def _noether(run: _Run):
    name = run.args.field
    if name not in run.sc.fields:
        raise UsageError(f"unknown field '{name}'; available: {', '.join(sorted(run.sc.fields))}")
    cand = run.sc.fields[name]
    states = run.samples()
    rep = noether_triple(run.system, cand, states, tol=run.tol)
    rep.provenance.update(seed=run.args.seed)
    if rep["complete_lift"].passed and rep["reaction"].passed:
        rep = noether_triple(run.system, cand, states, trajectory=run.trajectory(), tol=run.tol)
        rep.provenance.update(seed=run.args.seed)
    ra = reaction_annihilator_test(run.system, cand, states, tol=run.tol)
    ra.provenance.update(seed=run.args.seed)
    out = {"run": run.provenance(), "field": name, "noether": rep.to_dict(),
           "reaction_annihilator": ra.to_dict(), "verdict": "pass" if rep.verdict else "fail"}
    human = _report_human(f"noether {name}", rep) + _report_human(f"reaction annihilator {name}", ra)
    return _dumps(out), human, rep.verdict


def _integral(run: _Run):
    name = run.args.name
    sc = run.sc
    states = run.samples()
    if name == ENERGY_NAME or name in sc.integrals:
        f = sc.integral(name)
        rep = thm_int_check(run.system, f, states, tol=run.tol)
        kind = "scalar"
        if rep.verdict:
            traj = run.trajectory()
            rep.add_drift("integral", traj.drift([f.value(run.system, s) for s in traj.states()]),
                          ENERGY_DRIFT_TOL)
    elif name in sc.tensors:
        T = sc.tensors[name]
        if T.basis == "coordinates":
            check, kind = restricted_tensor_check, "restricted"
        elif T.degree == 2:
            check, kind = quadratic_integral_check, "quadratic"
        else:
            check, kind = higher_degree_check, "higher_degree"
        rep = check(run.system, T, states, tol=run.tol)
        if rep.verdict:
            rep = check(run.system, T, states, trajectory=run.trajectory(), tol=run.tol)
    else:
        known = [ENERGY_NAME] + sorted(sc.integrals) + sorted(sc.tensors)
        raise UsageError(f"unknown integral or tensor '{name}'; available: {', '.join(known)}")
    rep.provenance.update(seed=run.args.seed)
    out = {"run": run.provenance(), "name": name, "kind": kind, "report": rep.to_dict(),
           "verdict": "pass" if rep.verdict else "fail"}
    return _dumps(out), _report_human(f"integral {name} ({kind})", rep), rep.verdict


def _frame(run: _Run):
    system = run.system
    n, m = system.n, system.m
    worst: dict[str, float] = {}
    kernel_dims, omega_ranks, pull_ranks, flags = set(), set(), set(), set()
    kernel_consistent = True
    max_cond = 0.0
    for st in run.samples():
        fr = adapted_frame(system, st)
        for k, v in fr.invariant_residuals().items():
            worst[k] = max(worst.get(k, 0.0), v)
        W = fr.d_tilde.T @ fr.omega @ fr.d_tilde
        max_cond = max(max_cond, float(np.linalg.cond(W)))
        ker = characteristic_kernel(system, st, frame=fr)
        r = omega_ab_rank(fr)
        dim = ker.shape[1]
        kernel_consistent &= dim == (n - m) - r
        kernel_dims.add(dim)
        omega_ranks.add(r)
        pull_ranks.add(pullback_blocks(fr).rank)
        flags.add(tuple(derived_flag(system.distribution, st.q)))
    ok = all(v <= FRAME_TOL for v in worst.values()) and max_cond < DTILDE_COND_MAX and kernel_consistent
    out = {
        "run": run.provenance(),
        "dimensions": {"n": n, "m": m},
        "invariants": {k: {"max_residual": v, "tolerance": FRAME_TOL,
                           "verdict": "pass" if v <= FRAME_TOL else "fail"} for k, v in sorted(worst.items())},
        "d_tilde_condition": {"max": max_cond, "limit": DTILDE_COND_MAX},
        "characteristic_kernel_dimension": sorted(kernel_dims),
        "omega_ab_rank": sorted(omega_ranks),
        "pullback_rank": sorted(pull_ranks),
        "kernel_dimension_consistent": kernel_consistent,
        "derived_flag": [list(f) for f in sorted(flags)],
        "verdict": "pass" if ok else "fail",
    }
    human = (f"frame {run.sc.name}: {'PASS' if ok else 'FAIL'}; kernel dim {sorted(kernel_dims)}, "
             f"derived flag {[list(f) for f in sorted(flags)]}, worst invariant "
             f"{max(worst.values(), default=0.0):.3e}\n")
    return _dumps(out), human, ok


COMMANDS = {"simulate": _simulate, "noether": _noether, "integral": _integral, "frame": _frame}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    err = sys.stderr
    try:
        if args.format == "csv" and args.command != "simulate":
            raise UsageError("--format csv is only available for simulate")
        if args.builtin is not None:
            try:
                sc = builtin(args.builtin)
            except KeyError as e:
                raise UsageError(e.args[0]) from e
        else:
            sc = load(args.scenario)
        artifact, human, ok = COMMANDS[args.command](_Run(args, sc))
        if args.output:
            with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(artifact)
            sys.stdout.write(human)
        else:
            sys.stdout.write(artifact)
            err.write(human)
        return EXIT_PASS if ok else EXIT_FAIL
    except (UsageError, ScenarioError, UnsupportedOperationError, RankError, ex.ExpressionError) as e:
        if isinstance(e, ex.EvaluationError):
            err.write(f"numeric error: {e}\n")
            return EXIT_NUMERIC
        err.write(f"usage error: {e}\n")
        return EXIT_USAGE
    except OSError as e:
        err.write(f"I/O error: {e}\n")
        return EXIT_IO
    except (RegularityError, SingularFrameError, IntegrationError, np.linalg.LinAlgError,
            ArithmeticError) as e:
        err.write(f"numeric error: {type(e).__name__}: {e}\n")
        return EXIT_NUMERIC
    except ValueError as e:
        err.write(f"error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
