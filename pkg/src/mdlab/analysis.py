"""Exact combinatorial quantities and per-phase diagnostic predicates.

q_value is the probability that a node with k announced neighbours, each
independently holding opinion 1 with probability 1/2 + delta/2, announces 1
under majority-with-tie-break. cascade_bounds gives the closed-form lower
bounds on all-0 / all-1 consensus for dense graphs. The predicate helpers
re-derive their inputs from raw announcement snapshots, never from counts
maintained inside the run loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .coupling import PhaseConfig
from .dynamics import RunRecord, UNANNOUNCED
from .graph import DegreeClassification

__all__ = [
    "q_value",
    "QkReport",
    "verify_qk_bound",
    "cascade_bounds",
    "coupon_collector_mean",
    "CheckResult",
    "PhaseReport",
    "phase_predicates",
    "phase_predicates_from_snapshots",
    "BatchCheck",
    "batch_shrink_check",
]

_LOGFACT_CACHE: dict[int, np.ndarray] = {}


def _log_factorials(k: int) -> np.ndarray:
    """Table of log(j!) for j in 0..k."""
    table = _LOGFACT_CACHE.get(k)
    if table is None:
        table = gammaln(np.arange(k + 1, dtype=np.float64) + 1.0)
        _LOGFACT_CACHE[k] = table
    return table


def _binomial_pmf_terms(k: int, a: float, i: np.ndarray) -> np.ndarray:
    """P(Bin(k, a) = i) for an index array, via log-gamma."""
    lf = _log_factorials(k)
    log_terms = lf[k] - lf[i] - lf[k - i] + i * math.log(a) + (k - i) * math.log1p(-a)
    return np.exp(log_terms)


def q_value(k: int, delta: float) -> float:
    """P(X > k/2) + P(X = k/2) * (1/2 + delta) for X ~ Bin(k, 1/2 + delta/2).

    Half-count comparisons are done on integers (2i vs k), and terms are
    accumulated with compensated summation; absolute error <= 1e-12 over the
    tested range.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if not (0.0 < delta < 0.5):
        raise ValueError("delta must lie in (0, 1/2)")
    if k == 0:
        return 0.5 + delta
    a = 0.5 + delta / 2.0
    strict = np.arange(k // 2 + 1, k + 1, dtype=np.int64)
    terms = list(_binomial_pmf_terms(k, a, strict))
    if k % 2 == 0:
        terms.append(float(_binomial_pmf_terms(k, a, np.array([k // 2]))[0]) * (0.5 + delta))
    return math.fsum(terms)


@dataclass
class QkReport:
    """Result of sweeping q_value against the 1/2 + 51*delta/100 floor."""

    k_max: int
    deltas: tuple[float, ...]
    checked: int
    violations: list[tuple[int, float, float, float]]  # (k, delta, q, floor)
    min_slack: float
    argmin: tuple[int, float]

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_qk_bound(k_max: int, delta_grid) -> QkReport:
    """Check q_value(k, d) >= 1/2 + 51*d/100 for all 2 <= k <= k_max, d in grid."""
    deltas = tuple(float(d) for d in delta_grid)
    for d in deltas:
        if not (0.0 < d <= 0.1):
            raise ValueError("delta grid must lie in (0, 1/10]")
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    violations = []
    min_slack = math.inf
    argmin = (2, deltas[0])
    checked = 0
    for d in deltas:
        floor_val = 0.5 + 0.51 * d
        for k in range(2, k_max + 1):
            q = q_value(k, d)
            slack = q - floor_val
            checked += 1
            if slack < min_slack:
                min_slack = slack
                argmin = (k, d)
            if slack < -1e-12:
                violations.append((k, d, q, floor_val))
    return QkReport(k_max=k_max, deltas=deltas, checked=checked,
                    violations=violations, min_slack=min_slack, argmin=argmin)


def cascade_bounds(p: float, delta: float) -> tuple[float, float]:
    """Lower bounds ((1/2-delta)*p^(1/p), (1/2+delta)*p^(1/p)) on all-0 / all-1 consensus."""
    if not (0.0 < p <= 1.0):
        raise ValueError("p must lie in (0, 1]")
    if not (0.0 < delta < 0.5):
        raise ValueError("delta must lie in (0, 1/2)")
    base = p ** (1.0 / p)
    return ((0.5 - delta) * base, (0.5 + delta) * base)


def coupon_collector_mean(n: int) -> float:
    """n * (1 + 1/2 + ... + 1/n): expected rounds until every node is selected."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return n * math.fsum(1.0 / i for i in range(1, n + 1))


@dataclass
class CheckResult:
    name: str
    evaluated: bool
    passed: Optional[bool] = None
    measured: Optional[float] = None
    bound: Optional[float] = None
    note: str = ""


@dataclass
class PhaseReport:
    checks: dict[str, CheckResult] = field(default_factory=dict)

    def _phase_pass(self, prefix: str) -> Optional[bool]:
        evaluated = [c for c in self.checks.values() if c.name.startswith(prefix) and c.evaluated]
        if not evaluated:
            return None
        return all(c.passed for c in evaluated)

    @property
    def phase1_pass(self) -> Optional[bool]:
        return self._phase_pass("phase1")

    @property
    def phase2_pass(self) -> Optional[bool]:
        return self._phase_pass("phase2")

    @property
    def phase3_pass(self) -> Optional[bool]:
        return self._phase_pass("phase3")


def _count(arr: np.ndarray, value: int) -> int:
    return int(np.count_nonzero(arr == value))


def phase_predicates_from_snapshots(ann_snapshots: dict[int, np.ndarray],
                                    aux_snapshots: Optional[dict[int, np.ndarray]],
                                    cfg: PhaseConfig, slack: float = 2.0,
                                    ann_t3: Optional[np.ndarray] = None,
                                    first_value: Optional[np.ndarray] = None,
                                    first_time: Optional[np.ndarray] = None) -> PhaseReport:
    """Evaluate the per-window inequalities from raw snapshots.

    The multiplicative cushion `slack` widens only the O(1/omega)-style
    correction terms, never the leading constants. Missing snapshots leave a
    check marked not-evaluated.
    """
    report = PhaseReport()
    snaps = ann_snapshots or {}
    aux_snapshots = aux_snapshots or {}
    delta, omega = cfg.delta, cfg.omega
    correction = 1.0 + slack / omega

    def add(name: str, evaluated: bool, passed=None, measured=None, bound=None, note=""):
        report.checks[name] = CheckResult(name, evaluated, passed, measured, bound, note)

    ann_t1 = snaps.get(cfg.t1)
    if ann_t1 is not None:
        y1 = _count(ann_t1, 1)
        bound = (0.5 + 3.0 * delta / 5.0) * cfg.t1
        add("phase1_y1", True, y1 >= bound, float(y1), bound)
    else:
        add("phase1_y1", False, note="no announcement snapshot at t1")

    d_t1 = aux_snapshots.get(cfg.t1)
    if d_t1 is not None:
        zq = _count(d_t1, 2)
        bound = (delta * cfg.t1 / 4.0) * correction
        add("phase1_zq", True, zq <= bound, float(zq), bound)
        covered = d_t1.size - _count(d_t1, -1)
        cover_bound = cfg.t1 * (1.0 - slack / omega)
        add("phase1_coverage", True, covered >= cover_bound, float(covered), cover_bound)
    else:
        add("phase1_zq", False, note="no shadow snapshot at t1")
        add("phase1_coverage", False, note="no shadow snapshot at t1")

    ann_t2 = snaps.get(cfg.t2)
    if ann_t2 is not None:
        y1 = _count(ann_t2, 1)
        bound = (0.5 + delta / 2.0) * cfg.t2
        add("phase2_y1", True, y1 >= bound, float(y1), bound)
    else:
        add("phase2_y1", False, note="no announcement snapshot at t2")

    d_t2 = aux_snapshots.get(cfg.t2)
    if d_t2 is not None:
        z1 = _count(d_t2, 1)
        bound = (0.5 + delta / 2.0) * cfg.t2
        add("phase2_z1", True, z1 >= bound, float(z1), bound)
    else:
        add("phase2_z1", False, note="no shadow snapshot at t2")

    if ann_t3 is None:
        ann_t3 = snaps.get(cfg.t3)
    if ann_t3 is not None:
        if cfg.pipeline == "very_sparse":
            unannounced = _count(ann_t3, -1)
            zeros = _count(ann_t3, 0)
            add("phase3_all_announced", True, unannounced == 0, float(unannounced), 0.0)
            add("phase3_zero_cap", True, zeros <= cfg.zero_cap, float(zeros), float(cfg.zero_cap))
        else:
            if first_value is not None and first_time is not None:
                window = (first_time > cfg.t2) & (first_time <= cfg.t3)
                total = int(window.sum())
                correct = int((first_value[window] == 1).sum())
                add("phase3_first_window_correct", True, correct == total,
                    float(correct), float(total),
                    note="first announcements in (t2, t3] all equal 1")
            else:
                add("phase3_first_window_correct", False, note="first announcements not tracked")
    else:
        name = "phase3_zero_cap" if cfg.pipeline == "very_sparse" else "phase3_first_window_correct"
        add(name, False, note="no snapshot at t3")

    return report


def phase_predicates(record: RunRecord, cfg: PhaseConfig, slack: float = 2.0,
                     aux_snapshots: Optional[dict[int, np.ndarray]] = None) -> PhaseReport:
    """Evaluate the per-window inequalities for one finished trial."""
    return phase_predicates_from_snapshots(
        record.snapshots, aux_snapshots, cfg, slack=slack,
        ann_t3=_snapshot_or_final(record, cfg.t3),
        first_value=record.first_value, first_time=record.first_time,
    )


def _snapshot_or_final(record: RunRecord, t: int) -> Optional[np.ndarray]:
    """Snapshot at time t; falls back to the stable final state past the run."""
    snap = (record.snapshots or {}).get(t)
    if snap is not None:
        return snap
    batch = (record.batch_snapshots or {}).get(t)
    if batch is not None:
        return batch
    if record.final_announcements is not None and record.rounds_run <= t \
            and record.phase_flags.get("stable"):
        return record.final_announcements
    return None


@dataclass
class BatchCheck:
    boundary: int
    zero_count: int
    prev_count: Optional[int]
    shrink_ok: Optional[bool]
    all_selected: Optional[bool]


def batch_shrink_check(record: RunRecord, cfg: PhaseConfig,
                       classification: DegreeClassification,
                       max_batches: int = 16) -> list[BatchCheck]:
    """Per-window counts of large-degree opinion-0 nodes after t3.

    Each window spans 2*n*ln(n) rounds; it passes when the count shrinks by
    at least a (ln ln n)^(1/4) factor (trivially, when it is already zero).
    Selection coverage is reported only for windows the run actually spanned.
    """
    n = cfg.n
    batch_len = math.floor(2.0 * n * math.log(n))
    factor = (math.log(math.log(n))) ** 0.25
    large = ~classification.small_mask
    out: list[BatchCheck] = []
    prev: Optional[int] = None
    coverage = {b: ok for b, ok in zip(record.batch_boundaries, record.batch_all_selected)}
    for j in range(max_batches + 1):
        boundary = cfg.t3 + j * batch_len
        ann = _snapshot_or_final(record, boundary)
        if ann is None:
            break
        count = int(np.count_nonzero((ann == 0) & large))
        if prev is None:
            shrink_ok = None
        elif prev == 0:
            shrink_ok = count == 0
        else:
            shrink_ok = count <= prev / factor
        out.append(BatchCheck(
            boundary=boundary,
            zero_count=count,
            prev_count=prev,
            shrink_ok=shrink_ok,
            all_selected=coverage.get(boundary),
        ))
        if count == 0 and j > 0:
            break
        prev = count
    return out
