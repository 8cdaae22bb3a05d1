"""Monte Carlo experiment driver: seeded trials, aggregation, persistence.

Trials are independently seeded by a counter-based split of the base seed,
so results never depend on worker count or on how many other trials run.
Outputs are a trials.csv (fixed column order), an aggregate.json with Wilson
intervals and time statistics, and optional per-trial trajectory files; all
files are written atomically.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .analysis import cascade_bounds, phase_predicates
from .coupling import PhaseConfig, run_coupled_full
from .dynamics import StopPolicy, fixed_point_sweeps, init_beliefs, run_dynamics
from .graph import generate_gnp, is_connected
from .rng import split_streams

__all__ = [
    "ExperimentConfig",
    "TrialRow",
    "AggregateStats",
    "wilson_interval",
    "run_trials",
    "write_results",
    "load_trials",
    "TRIALS_CSV_COLUMNS",
]

TRIALS_CSV_COLUMNS = [
    "trial_id", "seed", "n", "p", "delta", "outcome", "termination_time",
    "t_hat", "terminated_at_t_hat", "y1_final", "y0_final",
    "phase1_pass", "phase2_pass", "phase3_pass",
]

OUTCOME_KEYS = ["consensus_1", "consensus_0", "mixed_stable", "step_budget_exhausted"]

REGIMES = ("dense", "sparse", "very_sparse")


@dataclass
class ExperimentConfig:
    """One sweep point: graph family, dynamics parameters, and run plan."""

    n: int
    delta: float
    trials: int
    p: Optional[float] = None
    regime: Optional[str] = None
    base_seed: int = 1
    step_budget: Optional[int] = None
    budget_factor: float = 20.0
    trajectory_stride: Optional[int] = None
    snapshot_times: tuple[int, ...] = ()
    coupling_checks: bool = False
    phase_checks: bool = False
    connected_only: bool = False
    fixed_point_sweeps: int = 0
    workers: int = 1
    out_dir: Optional[str] = None
    write_trajectories: bool = False
    predicate_slack: float = 2.0

    def resolved_p(self) -> float:
        if self.p is not None:
            return float(self.p)
        if self.regime is None:
            raise ValueError("either p or a regime preset is required")
        n = self.n
        if self.regime == "dense":
            return 0.5
        if self.regime == "sparse":
            return min(1.0, math.log(n) ** 2 / n)
        if self.regime == "very_sparse":
            return min(1.0, (math.log(n) + 5.0) / n)
        raise ValueError(f"unknown regime {self.regime!r}")

    def pipeline(self) -> str:
        return "very_sparse" if self.regime == "very_sparse" else "sparse"

    def validate(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not (0.0 < self.delta < 0.5):
            raise ValueError("delta must lie in (0, 1/2)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.regime is not None and self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        p = self.resolved_p()
        if not (0.0 <= p <= 1.0):
            raise ValueError("p must lie in [0, 1]")
        if self.regime == "very_sparse" and self.n >= 3 and p * self.n < math.log(self.n) + 1.0:
            raise ValueError("very_sparse regime needs p*n >= ln(n) + 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.step_budget is not None and self.step_budget < 1:
            raise ValueError("step_budget must be >= 1")
        if self.coupling_checks and self.connected_only:
            raise ValueError("coupled trials sample edges on demand; "
                             "connected_only requires the eager generator")
        if self.coupling_checks and not (0.0 < p < 1.0):
            raise ValueError("coupled trials need p in (0, 1)")

    def resolved_stride(self) -> int:
        if self.trajectory_stride is not None:
            return int(self.trajectory_stride)
        if self.regime == "dense":
            return self.n
        return max(1, self.n // 100)


@dataclass
class TrialRow:
    trial_id: int
    seed: int
    n: int
    p: float
    delta: float
    outcome: str
    termination_time: int
    t_hat: Optional[int]
    terminated_at_t_hat: bool
    y1_final: int
    y0_final: int
    phase1_pass: Optional[bool] = None
    phase2_pass: Optional[bool] = None
    phase3_pass: Optional[bool] = None
    fixed_point_ok: Optional[bool] = None
    attempts: int = 1
    trajectory: Optional[list] = None
    zq_by_t: Optional[dict] = None


def _phase_policy(cfg: ExperimentConfig, pcfg: Optional[PhaseConfig]) -> StopPolicy:
    snapshot_times = set(int(t) for t in cfg.snapshot_times)
    track_first = False
    batch_start = batch_len = None
    if pcfg is not None:
        snapshot_times |= {pcfg.t1, pcfg.t2, pcfg.t3}
        if pcfg.pipeline == "very_sparse":
            batch_start = pcfg.t3
            batch_len = math.floor(2.0 * cfg.n * math.log(cfg.n))
        else:
            track_first = True
    return StopPolicy(
        step_budget=cfg.step_budget,
        budget_factor=cfg.budget_factor,
        trajectory_stride=cfg.resolved_stride() if cfg.write_trajectories else 0,
        snapshot_times=tuple(sorted(snapshot_times)),
        track_first_announcements=track_first,
        batch_start=batch_start,
        batch_len=batch_len,
    )


def _run_single_trial(cfg: ExperimentConfig, trial_index: int) -> TrialRow:
    p = cfg.resolved_p()
    pcfg = None
    if cfg.phase_checks or cfg.coupling_checks:
        pcfg = PhaseConfig.from_params(cfg.n, p, cfg.delta, pipeline=cfg.pipeline())
    policy = _phase_policy(cfg, pcfg)

    aux_snapshots = None
    if cfg.coupling_checks:
        rngs = split_streams(cfg.base_seed, trial_index, 0)
        record, ph1, ph2 = run_coupled_full(
            cfg.n, p, cfg.delta, rngs, cfg=pcfg, checks=True,
            stop_policy=policy, seed=rngs.trial_seed,
        )
        if not record.phase_flags.get("coupling_checks_ok", True):
            raise RuntimeError(
                f"coupling check violated in trial {trial_index} "
                f"(phase1 at {ph1.first_violation}, phase2 at {ph2.first_violation})"
            )
        aux_snapshots = dict(ph1.d_snapshots)
        aux_snapshots.update(ph2.d_snapshots)
        attempts = 1
        g = record._graph
    else:
        attempt = 0
        while True:
            rngs = split_streams(cfg.base_seed, trial_index, attempt)
            g = generate_gnp(cfg.n, p, rngs.edges)
            if not cfg.connected_only or is_connected(g):
                break
            attempt += 1
            if attempt > 200:
                raise RuntimeError(f"no connected instance found for trial {trial_index}")
        beliefs = init_beliefs(cfg.n, cfg.delta, rngs.beliefs)
        record = run_dynamics(g, beliefs, rngs.selection, policy, seed=rngs.trial_seed)
        attempts = attempt + 1

    fixed_point_ok = None
    if cfg.fixed_point_sweeps > 0 and record.outcome != "step_budget_exhausted":
        fixed_point_ok = fixed_point_sweeps(record._state, g, sweeps=cfg.fixed_point_sweeps)
        if not fixed_point_ok:
            raise RuntimeError(f"stabilized trial {trial_index} failed forced update sweeps")

    phase1 = phase2 = phase3 = None
    if pcfg is not None:
        report = phase_predicates(record, pcfg, slack=cfg.predicate_slack,
                                  aux_snapshots=aux_snapshots)
        phase1, phase2, phase3 = report.phase1_pass, report.phase2_pass, report.phase3_pass

    return TrialRow(
        trial_id=trial_index,
        seed=record.seed,
        n=cfg.n,
        p=p,
        delta=cfg.delta,
        outcome=record.outcome,
        termination_time=record.termination_time,
        t_hat=record.t_hat,
        terminated_at_t_hat=record.terminated_at_t_hat,
        y1_final=record.y_final[2],
        y0_final=record.y_final[1],
        phase1_pass=phase1,
        phase2_pass=phase2,
        phase3_pass=phase3,
        fixed_point_ok=fixed_point_ok,
        attempts=attempts,
        trajectory=record.trajectory if cfg.write_trajectories else None,
        zq_by_t=record.phase_flags.get("zq_by_t") if cfg.write_trajectories else None,
    )


def _worker(args) -> TrialRow:
    cfg, trial_index = args
    return _run_single_trial(cfg, trial_index)


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (0 <= successes <= trials):
        raise ValueError("successes must lie in [0, trials]")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2.0 * trials)) / denom
    half = (z / denom) * math.sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials))
    return (max(0.0, center - half), min(1.0, center + half))


def _time_stats(values: list[int]) -> Optional[dict]:
    if not values:
        return None
    arr = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(arr.mean()),
        "min": float(arr.min()),
        "p10": float(np.percentile(arr, 10)),
        "p50": float(np.percentile(arr, 50)),
        "p90": float(np.percentile(arr, 90)),
        "max": float(arr.max()),
    }


def _rate(passed: int, evaluated: int) -> Optional[float]:
    return passed / evaluated if evaluated else None


@dataclass
class AggregateStats:
    """Order-independent summary of one configuration's trials."""

    config: dict
    trials: int
    outcome_counts: dict
    probabilities: dict
    termination_time: Optional[dict]
    t_hat: Optional[dict]
    terminated_at_t_hat_rate: float
    predicate_pass_rates: dict
    fixed_point: dict
    cascade_bounds: dict
    rows: list = field(default_factory=list, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "trials": self.trials,
            "outcome_counts": self.outcome_counts,
            "probabilities": self.probabilities,
            "termination_time": self.termination_time,
            "t_hat": self.t_hat,
            "terminated_at_t_hat_rate": self.terminated_at_t_hat_rate,
            "predicate_pass_rates": self.predicate_pass_rates,
            "fixed_point": self.fixed_point,
            "cascade_bounds": self.cascade_bounds,
        }


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = asdict(cfg)
    echo["snapshot_times"] = list(cfg.snapshot_times)
    echo["resolved_p"] = cfg.resolved_p()
    return echo


def aggregate(cfg: ExperimentConfig, rows: list[TrialRow]) -> AggregateStats:
    rows = sorted(rows, key=lambda r: r.trial_id)
    counts = {k: 0 for k in OUTCOME_KEYS}
    for r in rows:
        counts[r.outcome] += 1
    total = len(rows)
    probabilities = {}
    for k in OUTCOME_KEYS:
        lo95, hi95 = wilson_interval(counts[k], total, 1.96)
        lo3, hi3 = wilson_interval(counts[k], total, 3.0)
        probabilities[k] = {
            "estimate": counts[k] / total,
            "wilson95": [lo95, hi95],
            "wilson3sigma": [lo3, hi3],
        }
    predicate_rates = {}
    for name in ("phase1_pass", "phase2_pass", "phase3_pass"):
        evaluated = [getattr(r, name) for r in rows if getattr(r, name) is not None]
        predicate_rates[name] = {
            "evaluated": len(evaluated),
            "passed": sum(evaluated),
            "rate": _rate(sum(evaluated), len(evaluated)),
        }
    fp_rows = [r.fixed_point_ok for r in rows if r.fixed_point_ok is not None]
    p = cfg.resolved_p()
    if 0.0 < p <= 1.0:
        p0, p1 = cascade_bounds(p, cfg.delta)
        cb = {"p0": p0, "p1": p1}
    else:
        cb = {"p0": None, "p1": None}
    return AggregateStats(
        config=_config_echo(cfg),
        trials=total,
        outcome_counts=counts,
        probabilities=probabilities,
        termination_time=_time_stats([r.termination_time for r in rows]),
        t_hat=_time_stats([r.t_hat for r in rows if r.t_hat is not None]),
        terminated_at_t_hat_rate=sum(r.terminated_at_t_hat for r in rows) / total,
        predicate_pass_rates=predicate_rates,
        fixed_point={"checked": len(fp_rows), "ok": sum(fp_rows)},
        cascade_bounds=cb,
        rows=rows,
    )


def _fmt_opt_bool(v: Optional[bool]) -> str:
    return "" if v is None else ("1" if v else "0")


def _row_to_csv(r: TrialRow) -> list[str]:
    return [
        str(r.trial_id),
        str(r.seed),
        str(r.n),
        repr(r.p),
        repr(r.delta),
        r.outcome,
        str(r.termination_time),
        "" if r.t_hat is None else str(r.t_hat),
        "1" if r.terminated_at_t_hat else "0",
        str(r.y1_final),
        str(r.y0_final),
        _fmt_opt_bool(r.phase1_pass),
        _fmt_opt_bool(r.phase2_pass),
        _fmt_opt_bool(r.phase3_pass),
    ]


def _atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(stats: AggregateStats, rows: list[TrialRow], out_dir: str) -> dict:
    """Emit trials.csv, aggregate.json, and any trajectory files; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRIALS_CSV_COLUMNS)
    for r in rows:
        writer.writerow(_row_to_csv(r))
    trials_path = os.path.join(out_dir, "trials.csv")
    _atomic_write(trials_path, buf.getvalue())

    agg_path = os.path.join(out_dir, "aggregate.json")
    _atomic_write(agg_path, json.dumps(stats.to_json_dict(), indent=2) + "\n")

    paths = {"trials": trials_path, "aggregate": agg_path, "trajectories": []}
    for r in rows:
        if r.trajectory is None:
            continue
        tbuf = io.StringIO()
        twriter = csv.writer(tbuf, lineterminator="\n")
        twriter.writerow(["t", "y_perp", "y0", "y1", "z_qmark"])
        zq = r.zq_by_t or {}
        for point in r.trajectory:
            t, y_perp, y0, y1 = point
            z = zq.get(t)
            twriter.writerow([t, y_perp, y0, y1, "" if z is None else z])
        tpath = os.path.join(out_dir, f"trajectory_{r.trial_id}.csv")
        _atomic_write(tpath, tbuf.getvalue())
        paths["trajectories"].append(tpath)
    return paths


def load_trials(path: str) -> list[dict]:
    """Read trials.csv back into typed dicts (the inverse of write_results)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRIALS_CSV_COLUMNS:
            raise ValueError(f"unexpected trials.csv columns: {reader.fieldnames}")
        for rec in reader:
            out.append({
                "trial_id": int(rec["trial_id"]),
                "seed": int(rec["seed"]),
                "n": int(rec["n"]),
                "p": float(rec["p"]),
                "delta": float(rec["delta"]),
                "outcome": rec["outcome"],
                "termination_time": int(rec["termination_time"]),
                "t_hat": None if rec["t_hat"] == "" else int(rec["t_hat"]),
                "terminated_at_t_hat": rec["terminated_at_t_hat"] == "1",
                "y1_final": int(rec["y1_final"]),
                "y0_final": int(rec["y0_final"]),
                "phase1_pass": None if rec["phase1_pass"] == "" else rec["phase1_pass"] == "1",
                "phase2_pass": None if rec["phase2_pass"] == "" else rec["phase2_pass"] == "1",
                "phase3_pass": None if rec["phase3_pass"] == "" else rec["phase3_pass"] == "1",
            })
    return out


def run_trials(cfg: ExperimentConfig) -> AggregateStats:
    """Run cfg.trials independent trials and aggregate deterministically."""
    cfg.validate()
    jobs = [(cfg, i) for i in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_worker, jobs, chunksize=max(1, cfg.trials // (cfg.workers * 4))))
    else:
        rows = [_run_single_trial(cfg, i) for i in range(cfg.trials)]
    stats = aggregate(cfg, rows)
    if cfg.out_dir:
        write_results(stats, stats.rows, cfg.out_dir)
    return stats
