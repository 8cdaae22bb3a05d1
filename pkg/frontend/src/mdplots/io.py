"""Readers and schema validation for mdlab output files.

This package never recomputes simulation quantities: everything plotted is
read from aggregate.json / CSV files produced by the experiment harness.
Unknown columns are ignored; missing required columns are reported by name.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass


class SchemaError(Exception):
    pass


TRIALS_REQUIRED = [
    "trial_id", "seed", "n", "p", "delta", "outcome", "termination_time",
    "t_hat", "terminated_at_t_hat", "y1_final", "y0_final",
]

TRAJECTORY_REQUIRED = ["t", "y_perp", "y0", "y1", "z_qmark"]

AGGREGATE_REQUIRED = ["config", "trials", "outcome_counts", "probabilities",
                      "cascade_bounds", "termination_time"]


def validate_trials_csv(path: str) -> int:
    """Header and row-count sanity for a trials.csv; returns the row count."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty trials file (missing header row)")
        missing = [c for c in TRIALS_REQUIRED if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}")
        rows = sum(1 for _ in reader)
    if rows == 0:
        raise SchemaError(f"{path}: no trial rows")
    return rows


def read_aggregate(path: str) -> dict:
    with open(path) as fh:
        agg = json.load(fh)
    missing = [k for k in AGGREGATE_REQUIRED if k not in agg]
    if missing:
        raise SchemaError(f"{path}: missing required keys {missing}")
    return agg


@dataclass
class Trajectory:
    t: list[float]
    y_perp: list[float]
    y0: list[float]
    y1: list[float]
    z_qmark: list[tuple[float, float]]  # (t, value) rows where present


def read_trajectory(path: str) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty trajectory file (missing header row)")
        missing = [c for c in TRAJECTORY_REQUIRED if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}")
        out = Trajectory([], [], [], [], [])
        for rec in reader:
            t = float(rec["t"])
            out.t.append(t)
            out.y_perp.append(float(rec["y_perp"]))
            out.y0.append(float(rec["y0"]))
            out.y1.append(float(rec["y1"]))
            if rec["z_qmark"] not in ("", None):
                out.z_qmark.append((t, float(rec["z_qmark"])))
    if not out.t:
        raise SchemaError(f"{path}: no trajectory rows")
    return out


def discover_runs(root: str) -> list[dict]:
    """All run directories under root: an aggregate.json next to a trials.csv."""
    runs = []
    for dirpath, _dirnames, filenames in os.walk(root):
        if "aggregate.json" in filenames:
            agg_path = os.path.join(dirpath, "aggregate.json")
            trials_path = os.path.join(dirpath, "trials.csv")
            if not os.path.exists(trials_path):
                raise SchemaError(f"{dirpath}: aggregate.json without trials.csv")
            validate_trials_csv(trials_path)
            runs.append({"dir": dirpath, "aggregate": read_aggregate(agg_path)})
    if not runs:
        raise SchemaError(f"{root}: no run directories (aggregate.json) found")
    runs.sort(key=lambda r: (r["aggregate"]["config"].get("resolved_p", 0.0),
                             r["aggregate"]["config"].get("n", 0)))
    return runs


def find_trajectory_file(path: str) -> str:
    if os.path.isfile(path):
        return path
    candidates = sorted(
        os.path.join(path, f) for f in os.listdir(path)
        if f.startswith("trajectory_") and f.endswith(".csv")
    )
    if not candidates:
        raise SchemaError(f"{path}: no trajectory_<trial>.csv files found")
    return candidates[0]
