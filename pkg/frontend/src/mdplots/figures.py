"""The four figure kinds, each built from an extracted data-series table.

Series extraction is separated from rendering so the plotted numbers can be
dumped to CSV and compared back against the inputs (the self-check mode).
"""

from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .io import SchemaError, Trajectory, discover_runs, find_trajectory_file, read_aggregate, read_trajectory  # noqa: E402

KINDS = ("consensus_vs_p", "time_vs_nlogn", "trajectory", "phase_passrates")


def extract_series(kind: str, in_path: str) -> list[tuple[str, float, float]]:
    """(series, x, y) rows for the figure, exactly as they will be plotted."""
    if kind == "consensus_vs_p":
        rows = []
        for run in discover_runs(in_path):
            agg = run["aggregate"]
            p = float(agg["config"]["resolved_p"])
            prob = agg["probabilities"]
            rows.append(("consensus_1", p, float(prob["consensus_1"]["estimate"])))
            rows.append(("consensus_0", p, float(prob["consensus_0"]["estimate"])))
            rows.append(("bound_p1", p, float(agg["cascade_bounds"]["p1"])))
            rows.append(("bound_p0", p, float(agg["cascade_bounds"]["p0"])))
        return rows
    if kind == "time_vs_nlogn":
        rows = []
        for run in discover_runs(in_path):
            agg = run["aggregate"]
            n = int(agg["config"]["n"])
            rows.append(("mean_termination_time", n * math.log(n),
                         float(agg["termination_time"]["mean"])))
        return rows
    if kind == "trajectory":
        traj = read_trajectory(find_trajectory_file(in_path))
        rows = []
        for name in ("y_perp", "y0", "y1"):
            for t, v in zip(traj.t, getattr(traj, name)):
                rows.append((name, t, v))
        for t, v in traj.z_qmark:
            rows.append(("z_qmark", t, v))
        return rows
    if kind == "phase_passrates":
        import os

        agg_path = in_path if in_path.endswith(".json") else None
        if agg_path is None:
            runs = discover_runs(in_path)
            agg = runs[0]["aggregate"]
        else:
            agg = read_aggregate(agg_path)
        rates = agg.get("predicate_pass_rates", {})
        rows = []
        for i, (name, info) in enumerate(sorted(rates.items())):
            if info.get("rate") is None:
                continue
            rows.append((name, float(i), float(info["rate"])))
        if not rows:
            raise SchemaError(f"{in_path}: no evaluated predicate pass rates to plot")
        return rows
    raise SchemaError(f"unknown figure kind {kind!r}")


def _wilson_bars(in_path: str, outcome: str):
    xs, los, his = [], [], []
    for run in discover_runs(in_path):
        agg = run["aggregate"]
        xs.append(float(agg["config"]["resolved_p"]))
        lo, hi = agg["probabilities"][outcome]["wilson95"]
        los.append(lo)
        his.append(hi)
    return xs, los, his


def render(kind: str, in_path: str, out_path: str, title: str = "", dpi: int = 150) -> list[tuple[str, float, float]]:
    """Render one figure kind to out_path; returns the plotted series rows."""
    series = extract_series(kind, in_path)
    by_name: dict[str, tuple[list[float], list[float]]] = {}
    for name, x, y in series:
        by_name.setdefault(name, ([], []))
        by_name[name][0].append(x)
        by_name[name][1].append(y)

    fig, ax = plt.subplots(figsize=(7.5, 5))
    if kind == "consensus_vs_p":
        for name, style in (("consensus_1", "o-"), ("consensus_0", "s-")):
            xs, ys = by_name[name]
            ax.plot(xs, ys, style, label=name)
        xs, los, his = _wilson_bars(in_path, "consensus_1")
        ax.fill_between(xs, los, his, alpha=0.15)
        xs, los, his = _wilson_bars(in_path, "consensus_0")
        ax.fill_between(xs, los, his, alpha=0.15)
        for name, style in (("bound_p1", "--"), ("bound_p0", ":")):
            xs, ys = by_name[name]
            ax.plot(xs, ys, style, label=name + " (closed form)")
        ax.set_xlabel("edge probability p")
        ax.set_ylabel("frequency")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
    elif kind == "time_vs_nlogn":
        xs, ys = by_name["mean_termination_time"]
        ax.plot(xs, ys, "o-", label="mean termination time")
        lim = max(max(xs), max(ys)) * 1.05
        ax.plot([0, lim], [0, lim], "--", color="gray", label="identity")
        ax.set_xlabel("n ln n")
        ax.set_ylabel("rounds")
        ax.legend()
    elif kind == "trajectory":
        for name in ("y_perp", "y0", "y1", "z_qmark"):
            if name in by_name:
                xs, ys = by_name[name]
                ax.plot(xs, ys, label=name)
        ax.set_xlabel("round")
        ax.set_ylabel("node count")
        ax.legend()
    elif kind == "phase_passrates":
        names = list(by_name)
        rates = [by_name[name][1][0] for name in names]
        ax.bar(range(len(names)), rates)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel("pass rate")
        ax.set_ylim(0, 1.05)
    ax.set_title(title or kind)
    fig.tight_layout()
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)
    return series


def dump_series(series: list[tuple[str, float, float]], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["series", "x", "y"])
        for name, x, y in series:
            writer.writerow([name, repr(x), repr(y)])
