"""Command-line entry point: simulate, sweep, verify-qk, phase-diagnostics,
calibrate-coupon.

Exit codes: 0 success, 1 validation error (one-line diagnostic on stderr),
2 when a check-style command finds a violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import analysis
from .coupling import PhaseConfig, run_phase1_coupled, run_phase2_coupled
from .harness import ExperimentConfig, run_trials
from .rng import split_streams

DEFAULT_OUT_DIR_ENV = "MDL_OUT_DIR"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map to exit 1
        raise CliError(message)


def _default_out_dir() -> str:
    return os.environ.get(DEFAULT_OUT_DIR_ENV, "mdlab-out")


def _parse_snapshot_times(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise CliError(f"--snapshot-times must be comma-separated integers: {exc}")


def _parse_p_grid(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise CliError(f"--p-grid must be comma-separated floats: {exc}")
    if not values:
        raise CliError("--p-grid must contain at least one value")
    return values


def _regime_internal(value: Optional[str]) -> Optional[str]:
    return value.replace("-", "_") if value else None


def _add_common_run_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--n", type=int, required=True, help="number of nodes")
    sp.add_argument("--delta", type=float, required=True,
                    help="private-signal bias, in (0, 1/2)")
    sp.add_argument("--trials", type=int, default=100, help="independent trials (default 100)")
    sp.add_argument("--seed", type=int, default=1, help="base seed (default 1)")
    sp.add_argument("--workers", type=int, default=1, help="trial worker processes (default 1)")
    sp.add_argument("--out-dir", default=None,
                    help=f"output directory (default ${DEFAULT_OUT_DIR_ENV} or ./mdlab-out)")


def build_parser() -> _Parser:
    parser = _Parser(prog="mdlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one configuration to stabilization",
                         description="Monte Carlo trials of the dynamics at one (n, p, delta).")
    _add_common_run_flags(sim)
    sim.add_argument("--p", type=float, default=None, help="edge probability (overrides --regime)")
    sim.add_argument("--regime", choices=["dense", "sparse", "very-sparse"], default=None,
                     help="preset for p: dense=0.5, sparse=(ln n)^2/n, very-sparse=(ln n+5)/n")
    sim.add_argument("--budget-factor", type=float, default=20.0,
                     help="step budget = factor * n^2 (default 20)")
    sim.add_argument("--step-budget", type=int, default=None,
                     help="absolute step budget (overrides --budget-factor)")
    sim.add_argument("--coupling-checks", action=argparse.BooleanOptionalAction, default=False,
                     help="run shadow processes with exact per-round checks (default off)")
    sim.add_argument("--phase-checks", action=argparse.BooleanOptionalAction, default=False,
                     help="evaluate the per-window predicates (default off)")
    sim.add_argument("--trajectory-stride", type=int, default=None,
                     help="rounds between trajectory samples (default n/100; n for dense)")
    sim.add_argument("--snapshot-times", default="",
                     help="comma-separated rounds at which to snapshot announcements")
    sim.add_argument("--connected-only", action="store_true", default=False,
                     help="resample any disconnected instance (default off)")
    sim.add_argument("--write-trajectories", action="store_true", default=False,
                     help="write trajectory_<trial>.csv files (default off)")
    sim.add_argument("--fixed-point-sweeps", type=int, default=0,
                     help="forced post-termination sweeps to verify the fixed point (default 0)")
    sim.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="simulate over a grid of p values",
                        description="Run one configuration per p and write per-p outputs.")
    _add_common_run_flags(sw)
    sw.add_argument("--p-grid", required=True, help="comma-separated p values")
    sw.add_argument("--budget-factor", type=float, default=20.0,
                    help="step budget = factor * n^2 (default 20)")
    sw.add_argument("--write-trajectories", action="store_true", default=False,
                    help="write trajectory files per trial (default off)")
    sw.set_defaults(func=cmd_sweep)

    vq = sub.add_parser("verify-qk", help="exact sweep of the tie-break majority bound",
                        description="Exact check that q(k, delta) >= 1/2 + 51*delta/100.")
    vq.add_argument("--k-max", type=int, default=500, help="largest k checked (default 500)")
    vq.add_argument("--delta-max", type=float, default=0.1,
                    help="largest delta on the grid (default 0.1)")
    vq.add_argument("--delta-step", type=float, default=0.01,
                    help="grid spacing in delta (default 0.01)")
    vq.set_defaults(func=cmd_verify_qk)

    pd = sub.add_parser("phase-diagnostics", help="coupled shadow runs and window predicates",
                        description="Run coupled trials and report per-window predicate rates.")
    _add_common_run_flags(pd)
    pd.add_argument("--p", type=float, default=None, help="edge probability (overrides --regime)")
    pd.add_argument("--regime", choices=["dense", "sparse", "very-sparse"], default=None,
                    help="preset for p (see simulate)")
    pd.add_argument("--through", choices=["1", "2", "full"], default="full",
                    help="run the early window, both windows, or to termination (default full)")
    pd.add_argument("--slack", type=float, default=2.0,
                    help="cushion on O(1/omega) correction terms (default 2.0)")
    pd.add_argument("--coupling-checks", action=argparse.BooleanOptionalAction, default=True,
                    help="exact per-round consistency checks (default on)")
    pd.set_defaults(func=cmd_phase_diagnostics)

    cc = sub.add_parser("calibrate-coupon", help="selection-coverage time vs closed form",
                        description="Sample the coverage time directly and compare to n*H_n.")
    cc.add_argument("--n", type=int, required=True, help="number of nodes")
    cc.add_argument("--trials", type=int, default=1000, help="samples (default 1000)")
    cc.add_argument("--seed", type=int, default=1, help="base seed (default 1)")
    cc.set_defaults(func=cmd_calibrate_coupon)

    return parser


def _config_from_args(args, p: Optional[float] = None, regime: Optional[str] = None) -> ExperimentConfig:
    return ExperimentConfig(
        n=args.n,
        delta=args.delta,
        trials=args.trials,
        p=p if p is not None else getattr(args, "p", None),
        regime=regime if regime is not None else _regime_internal(getattr(args, "regime", None)),
        base_seed=args.seed,
        step_budget=getattr(args, "step_budget", None),
        budget_factor=getattr(args, "budget_factor", 20.0),
        trajectory_stride=getattr(args, "trajectory_stride", None),
        snapshot_times=_parse_snapshot_times(getattr(args, "snapshot_times", "")),
        coupling_checks=getattr(args, "coupling_checks", False),
        phase_checks=getattr(args, "phase_checks", False),
        connected_only=getattr(args, "connected_only", False),
        fixed_point_sweeps=getattr(args, "fixed_point_sweeps", 0),
        workers=args.workers,
        out_dir=args.out_dir or _default_out_dir(),
        write_trajectories=getattr(args, "write_trajectories", False),
    )


def _print_summary(stats) -> None:
    counts = " ".join(f"{k}={v}" for k, v in stats.outcome_counts.items())
    print(f"trials={stats.trials} {counts}")
    if stats.t_hat:
        print(f"mean_termination={stats.termination_time['mean']:.1f} "
              f"mean_t_hat={stats.t_hat['mean']:.1f} "
              f"terminated_at_t_hat={stats.terminated_at_t_hat_rate:.3f}")


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    stats = run_trials(cfg)
    _print_summary(stats)
    print(f"wrote {os.path.join(cfg.out_dir, 'trials.csv')}")
    return 0


def cmd_sweep(args) -> int:
    grid = _parse_p_grid(args.p_grid)
    out_root = args.out_dir or _default_out_dir()
    index = []
    for i, p in enumerate(grid):
        sub_dir = os.path.join(out_root, f"p_{i:02d}")
        cfg = ExperimentConfig(
            n=args.n, delta=args.delta, trials=args.trials, p=p,
            base_seed=args.seed, budget_factor=args.budget_factor,
            workers=args.workers, out_dir=sub_dir,
            write_trajectories=args.write_trajectories,
        )
        stats = run_trials(cfg)
        index.append({"p": p, "dir": f"p_{i:02d}",
                      "consensus_1": stats.outcome_counts["consensus_1"],
                      "consensus_0": stats.outcome_counts["consensus_0"]})
        print(f"p={p!r}: " + " ".join(f"{k}={v}" for k, v in stats.outcome_counts.items()))
    os.makedirs(out_root, exist_ok=True)
    with open(os.path.join(out_root, "sweep_index.json"), "w") as fh:
        json.dump({"n": args.n, "delta": args.delta, "points": index}, fh, indent=2)
    return 0


def cmd_verify_qk(args) -> int:
    steps = max(1, round(args.delta_max / args.delta_step))
    grid = [round((i + 1) * args.delta_step, 12) for i in range(steps)]
    report = analysis.verify_qk_bound(args.k_max, grid)
    k_min, d_min = report.argmin
    print(f"checked {report.checked} (k, delta) pairs; "
          f"min slack {report.min_slack:.6g} at k={k_min}, delta={d_min}")
    if not report.passed:
        for k, d, q, floor_val in report.violations[:10]:
            print(f"violation: k={k} delta={d} q={q:.12f} < {floor_val:.12f}", file=sys.stderr)
        return 2
    return 0


def cmd_phase_diagnostics(args) -> int:
    regime = _regime_internal(args.regime)
    if args.through == "full":
        cfg = _config_from_args(args, regime=regime)
        cfg.phase_checks = True
        cfg.coupling_checks = args.coupling_checks
        cfg.predicate_slack = args.slack
        stats = run_trials(cfg)
        _print_summary(stats)
        for name, info in stats.predicate_pass_rates.items():
            rate = "n/a" if info["rate"] is None else f"{info['rate']:.3f}"
            print(f"{name}: {info['passed']}/{info['evaluated']} rate={rate}")
        return 0

    temp_cfg = ExperimentConfig(n=args.n, delta=args.delta, trials=args.trials,
                                p=args.p, regime=regime, base_seed=args.seed)
    temp_cfg.validate()
    p = temp_cfg.resolved_p()
    pcfg = PhaseConfig.from_params(args.n, p, args.delta,
                                   pipeline="very_sparse" if regime == "very_sparse" else "sparse")
    results = []
    for i in range(args.trials):
        rngs = split_streams(args.seed, i, 0)
        if args.through == "1":
            res = run_phase1_coupled(args.n, p, args.delta, rngs, t1=pcfg.t1,
                                     checks=args.coupling_checks)
        else:
            res = run_phase2_coupled(args.n, p, args.delta, rngs, cfg=pcfg,
                                     checks=args.coupling_checks)
        if args.coupling_checks and not res.checks_ok:
            print(f"coupling check violated in trial {i} at round {res.first_violation}",
                  file=sys.stderr)
            return 2
        report = analysis.phase_predicates_from_snapshots(
            res.ann_snapshots, res.d_snapshots, pcfg, slack=args.slack)
        results.append(report)
    for name in sorted(results[0].checks):
        evaluated = [r.checks[name] for r in results if r.checks[name].evaluated]
        if not evaluated:
            print(f"{name}: not evaluated")
            continue
        passed = sum(bool(c.passed) for c in evaluated)
        print(f"{name}: {passed}/{len(evaluated)} rate={passed / len(evaluated):.3f}")
    return 0


def cmd_calibrate_coupon(args) -> int:
    if args.n < 1 or args.trials < 1:
        raise CliError("--n and --trials must be positive")
    rng = split_streams(args.seed, 0, 0).selection
    n, trials = args.n, args.trials
    totals = np.zeros(trials, dtype=np.int64)
    for k in range(n):
        totals += rng.geometric((n - k) / n, size=trials)
    expected = analysis.coupon_collector_mean(n)
    mean = float(totals.mean())
    rel_err = abs(mean - expected) / expected
    tail_cut = n * math.log(n) - 3 * n
    tail_freq = float(np.mean(totals < tail_cut))
    print(f"mean coverage time {mean:.1f} vs closed form {expected:.1f} "
          f"(rel err {rel_err:.4f}); P(T < n ln n - 3n) = {tail_freq:.4f}")
    if rel_err > 0.03 or tail_freq > 0.10:
        return 2
    return 0


def parse_and_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
