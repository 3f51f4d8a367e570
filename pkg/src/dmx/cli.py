"""Command-line front end.

::

    dmx <command> --model <path|builtin:NAME> --out <dir> [--seed S]
        [--directions FILE] [--measurements FILE] [--convention paper|dual]
        [--horizon N] [--step H]

Commands: ``simulate``, ``filter``, ``observability``, ``compare`` for
discrete models and ``riccati`` for continuous ones. ``DMX_RANK_TOL``
overrides the rank cutoff. Exit codes: 0 success, 1 runtime failure,
2 configuration or parse error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import continuous as cont
from .discrete import (directional_error, estimate, in_observable_subspace,
                       kalman_fullrank_step, kalman_init, run_filter)
from .errors import ContractViolation, DmxError, PreconditionViolation
from .io import ContinuousSpec, load_model, read_directions, read_measurements, write_csv
from .linalg import ToleranceConfig, numeric_rank
from .model import propagate, sample_disturbance
from .scenarios import Scenario

__all__ = ["RunConfig", "COMMANDS", "run", "main"]

COMMANDS = ("simulate", "filter", "observability", "riccati", "compare")


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: str
    out: Path
    seed: int = 0
    directions: Optional[Path] = None
    measurements: Optional[Path] = None
    convention: str = cont.DEFAULT_CONVENTION.value
    horizon: Optional[int] = None
    step: Optional[float] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ContractViolation(f"unknown command {self.command!r}")
        if self.horizon is not None and self.horizon < 0:
            raise ContractViolation("horizon must be non-negative")
        if self.step is not None and not self.step > 0:
            raise ContractViolation("step must be positive")
        if self.command != "riccati" and self.step is not None:
            raise ContractViolation("--step only applies to riccati")
        if self.command != "filter" and self.measurements is not None:
            raise ContractViolation("--measurements only applies to filter")


# -- helpers -----------------------------------------------------------------

def _discrete(cfg, tol) -> Scenario:
    scenario = load_model(cfg.model, cfg.horizon, tol)
    if not isinstance(scenario, Scenario):
        raise ContractViolation(f"{cfg.command} needs a discrete model")
    return scenario


def _directions(cfg, n) -> List[np.ndarray]:
    if cfg.directions is None:
        return list(np.eye(n))
    return read_directions(cfg.directions, n)


def _simulate(scenario, seed, tol):
    d = sample_disturbance(scenario.model, seed, q=scenario.q)
    return d, propagate(scenario.model, d, scenario.free, tol)


def _xy_header(n, p):
    return [f"x{i}" for i in range(1, n + 1)] + [f"y{i}" for i in range(1, p + 1)]


# -- commands ----------------------------------------------------------------

def run_simulate(cfg: RunConfig, tol: ToleranceConfig) -> List[Path]:
    scenario = _discrete(cfg, tol)
    model = scenario.model
    d, traj = _simulate(scenario, cfg.seed, tol)
    traj_path = cfg.out / "trajectory.csv"
    write_csv(traj_path, ["k"] + _xy_header(model.n, model.p),
              ([k, *traj.x[k], *traj.y[k]] for k in range(model.N + 1)))
    header = (["k"] + [f"q{i}" for i in range(1, model.m + 1)]
              + [f"f{i}" for i in range(1, model.m + 1)]
              + [f"g{i}" for i in range(1, model.p + 1)])
    rows = []
    for k in range(model.N + 1):
        q = list(d.q) if k == 0 else [None] * model.m
        f = list(d.f[k]) if k < model.N else [None] * model.m
        rows.append([k, *q, *f, *d.g[k]])
    real_path = cfg.out / "realization.csv"
    write_csv(real_path, header, rows)
    return [traj_path, real_path]


def run_filter_cmd(cfg: RunConfig, tol: ToleranceConfig) -> List[Path]:
    scenario = _discrete(cfg, tol)
    model = scenario.model
    if cfg.measurements is not None:
        y, x_true = read_measurements(cfg.measurements, model)
    else:
        _, traj = _simulate(scenario, cfg.seed, tol)
        y, x_true = traj.y, traj.x
    dirs = _directions(cfg, model.n)
    reports = [estimate(s, tol) for s in run_filter(model, y, tol)]

    header = (["k"] + [f"x_hat_{i}" for i in range(1, model.n + 1)] + ["beta_hat", "index"]
              + [f"rho_{j}" for j in range(1, len(dirs) + 1)])
    if x_true is not None:
        header += [f"abs_err_{i}" for i in range(1, model.n + 1)]
    rows = []
    for rep in reports:
        row = [rep.k, *rep.x_hat, rep.beta_hat, rep.index]
        row += [directional_error(rep, l) for l in dirs]
        if x_true is not None:
            row += list(np.abs(x_true[rep.k] - rep.x_hat))
        rows.append(row)
    paths = [cfg.out / "estimates.csv"]
    write_csv(paths[0], header, rows)

    if x_true is not None:
        # per-component plot data: state, estimate, real and worst-case error
        for i in range(model.n):
            e = np.eye(model.n)[i]
            path = cfg.out / f"component_{i + 1}.csv"
            write_csv(path, ["k", "x", "x_hat", "real_error", "minimax_error", "pinv_form"],
                      ([rep.k, x_true[rep.k, i], rep.x_hat[i],
                        abs(x_true[rep.k, i] - rep.x_hat[i]),
                        directional_error(rep, e), float(e @ rep.p_pinv @ e)]
                       for rep in reports))
            paths.append(path)
    inconsistent = [rep.k for rep in reports if rep.inconsistent]
    if inconsistent:
        print(f"data inconsistent with the uncertainty set at steps {inconsistent}",
              file=sys.stderr)
    return paths


def run_observability(cfg: RunConfig, tol: ToleranceConfig) -> List[Path]:
    scenario = _discrete(cfg, tol)
    model = scenario.model
    dirs = _directions(cfg, model.n)
    # P does not depend on the measurements
    states = run_filter(model, np.zeros((model.N + 1, model.p)), tol)
    header = (["k", "rank", "index", "rank_warning", "stacked_rank"]
              + [f"observable_{j}" for j in range(1, len(dirs) + 1)])
    rows = []
    for s in states:
        rep = estimate(s, tol)
        stacked = numeric_rank(np.vstack([model.F[s.k], model.H[s.k]]), tol)
        rows.append([s.k, rep.rank, rep.index, rep.rank_warning, stacked]
                    + [in_observable_subspace(rep, l) for l in dirs])
    path = cfg.out / "observability.csv"
    write_csv(path, header, rows)
    return [path]


def run_compare(cfg: RunConfig, tol: ToleranceConfig) -> List[Path]:
    scenario = _discrete(cfg, tol)
    model = scenario.model
    _, traj = _simulate(scenario, cfg.seed, tol)
    y = traj.y
    states = run_filter(model, y, tol)
    kalman = None
    rows, worst, first_failure = [], 0.0, None
    for s in states:
        k = s.k
        rep = estimate(s, tol)
        full_rank = numeric_rank(np.vstack([model.F[k], model.H[k]]), tol) == model.n
        if first_failure is None:
            try:
                if k == 0:
                    kalman = kalman_init(model, y[0], tol=tol)
                else:
                    kalman = kalman_fullrank_step(kalman, model.F[k], model.C[k - 1], model.H[k],
                                                  model.S_seq[k - 1], model.R_seq[k], y[k], tol)
            except PreconditionViolation:
                first_failure = k
        if first_failure is None:
            dev = float(np.linalg.norm(rep.x_hat - kalman.x_filt))
            rel = dev / (1.0 + float(np.linalg.norm(kalman.x_filt)))
            worst = max(worst, rel)
            rows.append([k, rep.index, full_rank, True, dev, rel])
        else:
            rows.append([k, rep.index, full_rank, False, None, None])
    path = cfg.out / "compare.csv"
    write_csv(path, ["k", "index", "full_rank", "kalman", "deviation", "relative_deviation"],
              rows)
    if first_failure is None:
        print(f"max relative deviation {worst!r} over {len(states)} steps")
    else:
        flagged = [r[0] for r in rows if not r[2]]
        print(f"rank([F; H]) < n at steps {flagged}; Kalman comparison stopped at step "
              f"{first_failure}, max relative deviation before that {worst!r}")
    return [path]


def run_riccati(cfg: RunConfig, tol: ToleranceConfig) -> List[Path]:
    spec = load_model(cfg.model, None, tol)
    if not isinstance(spec, ContinuousSpec):
        raise ContractViolation("riccati needs a continuous model")
    if cfg.horizon is not None:
        raise ContractViolation("--horizon does not apply to continuous models")
    reduced = cont.svd_reduce(spec.model, tol)
    step = cfg.step if cfg.step is not None else float(np.min(np.diff(spec.model.grid))) / 100
    solution = cont.riccati_integrate(reduced, step, cont.Convention(cfg.convention))
    result = cont.filter_integrate(reduced, solution, spec.y)
    r = reduced.r
    header = (["t"] + [f"K_{i}{j}" for i in range(1, r + 1) for j in range(1, r + 1)]
              + [f"x_hat_{i}" for i in range(1, r + 1)])
    K = solution.on_grid()
    path = cfg.out / "riccati.csv"
    write_csv(path, header, ([t, *K[i].ravel(), *result.x_hat[i]]
                             for i, t in enumerate(result.times)))
    paths = [path]
    if cfg.directions is not None:
        dirs = read_directions(cfg.directions, reduced.m)
        path = cfg.out / "riccati_errors.csv"
        rows = []
        for j, l in enumerate(dirs, 1):
            l1 = reduced.split_direction(l)
            rows.append([j, result.estimate(l1), result.error(l1)])
        write_csv(path, ["direction", "estimate", "error"], rows)
        paths.append(path)
    return paths


HANDLERS = {
    "simulate": run_simulate,
    "filter": run_filter_cmd,
    "observability": run_observability,
    "compare": run_compare,
    "riccati": run_riccati,
}


def run(cfg: RunConfig, tol: Optional[ToleranceConfig] = None) -> List[Path]:
    """Execute one command; returns the files written."""
    tol = tol or ToleranceConfig.from_env()
    cfg.out.mkdir(parents=True, exist_ok=True)
    return HANDLERS[cfg.command](cfg, tol)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmx", description="Minimax filtering for "
                                     "descriptor systems.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--model", required=True, help="JSON file or builtin:NAME")
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--directions", type=Path,
                        help="file with one direction vector per line")
    parser.add_argument("--measurements", type=Path,
                        help="CSV with y1..yp columns (filter only)")
    parser.add_argument("--convention", choices=[c.value for c in cont.Convention],
                        default=cont.DEFAULT_CONVENTION.value)
    parser.add_argument("--horizon", type=int)
    parser.add_argument("--step", type=float)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log numerical warnings")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig(command=args.command, model=args.model, out=args.out, seed=args.seed,
                        directions=args.directions, measurements=args.measurements,
                        convention=args.convention, horizon=args.horizon, step=args.step)
        tol = ToleranceConfig.from_env()
        for path in run(cfg, tol):
            print(path)
    except ContractViolation as exc:
        print(f"dmx: error: {exc}", file=sys.stderr)
        return 2
    except (DmxError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"dmx: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
