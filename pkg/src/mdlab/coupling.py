"""Shadow processes coupled round-for-round with the main dynamics.

The early-window shadow (phase 1) only tracks nodes that announce before any
neighbour has; everything else is marked untracked ("?"). The growth-window
shadow (phase 2) starts from the real announcements and pessimistically
treats untracked neighbours as holding opinion 0. Both run on the same
randomness as the main process, never feed back into it, and admit exact
per-round consistency checks plus an exposure audit for the deferred graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .dynamics import (
    LazyBeliefs,
    OpinionState,
    UNANNOUNCED,
    _SelectionFeed,
    apply_update,
    eval_with_tie,
)
from .graph import DeferredGraph, Graph
from .rng import RngBundle

__all__ = [
    "AUX_UNTRACKED",
    "AuxState",
    "PhaseConfig",
    "phase1_aux_step",
    "phase2_aux_step",
    "check_coupling_phase1",
    "check_coupling_phase2",
    "audit_exposure",
    "CoupledPhaseResult",
    "run_phase1_coupled",
    "run_phase2_coupled",
    "run_coupled_full",
]

AUX_UNTRACKED = np.int8(2)  # the "?" marker; -1/0/1 match announcement codes


class AuxState:
    """Shadow announcements D(v) in {unannounced, 0, 1, ?} with counts."""

    __slots__ = ("n", "d", "z", "phase", "t", "_announced_buf", "_announced_len")

    def __init__(self, n: int, phase: int = 1):
        self.n = n
        self.d = np.full(n, UNANNOUNCED, dtype=np.int8)
        self.z = [n, 0, 0, 0]  # indexed by value + 1: bot, 0, 1, ?
        self.phase = phase
        self.t = 0
        self._announced_buf = np.empty(n, dtype=np.int64)
        self._announced_len = 0

    @classmethod
    def from_announcements(cls, ann: np.ndarray, phase: int = 2) -> "AuxState":
        aux = cls(ann.size, phase=phase)
        aux.d = ann.astype(np.int8).copy()
        aux.z = [
            int(np.count_nonzero(aux.d == UNANNOUNCED)),
            int(np.count_nonzero(aux.d == 0)),
            int(np.count_nonzero(aux.d == 1)),
            0,
        ]
        announced = np.flatnonzero(aux.d != UNANNOUNCED)
        aux._announced_buf[:announced.size] = announced
        aux._announced_len = announced.size
        return aux

    @property
    def z_bot(self) -> int:
        return self.z[0]

    @property
    def z0(self) -> int:
        return self.z[1]

    @property
    def z1(self) -> int:
        return self.z[2]

    @property
    def zq(self) -> int:
        return self.z[3]

    def announced_ids(self) -> np.ndarray:
        return self._announced_buf[:self._announced_len]

    def set(self, v: int, value: int) -> None:
        old = int(self.d[v])
        if old == value:
            return
        if old == -1:
            self._announced_buf[self._announced_len] = v
            self._announced_len += 1
        self.z[old + 1] -= 1
        self.z[value + 1] += 1
        self.d[v] = np.int8(value)

    def recount(self) -> tuple[int, int, int, int]:
        return (
            int(np.count_nonzero(self.d == UNANNOUNCED)),
            int(np.count_nonzero(self.d == 0)),
            int(np.count_nonzero(self.d == 1)),
            int(np.count_nonzero(self.d == AUX_UNTRACKED)),
        )

    def unannounced_mask(self) -> np.ndarray:
        return self.d == UNANNOUNCED


def phase1_aux_step(aux: AuxState, dg: DeferredGraph, v: int, beliefs) -> int:
    """Early-window shadow update for the selected node v.

    Repeat selections become untracked; a fresh node becomes untracked when
    any edge to an already-announced node is revealed, and otherwise adopts
    its private belief (drawn lazily, so untracked beliefs stay unread).
    """
    if aux.d[v] != UNANNOUNCED:
        aux.set(v, int(AUX_UNTRACKED))
        return int(AUX_UNTRACKED)
    hits = dg.reveal_edges(v, aux.announced_ids())
    if hits.size:
        aux.set(v, int(AUX_UNTRACKED))
        return int(AUX_UNTRACKED)
    value = beliefs.x(v)
    aux.set(v, value)
    return value


def phase2_aux_step(aux: AuxState, g: Union[Graph, DeferredGraph], v: int, beliefs) -> int:
    """Growth-window shadow update: untracked neighbours count as opinion 0."""
    if aux.d[v] != UNANNOUNCED:
        aux.set(v, int(AUX_UNTRACKED))
        return int(AUX_UNTRACKED)
    if isinstance(g, DeferredGraph):
        neigh = g.reveal_edges(v, aux.announced_ids())
    else:
        neigh = g.neighbors(v)
    dvals = aux.d[neigh]
    n1 = int(np.count_nonzero(dvals == 1))
    n0q = int(np.count_nonzero(dvals == 0)) + int(np.count_nonzero(dvals == AUX_UNTRACKED))
    if n1 > n0q:
        value = 1
    elif n1 < n0q:
        value = 0
    else:
        value = beliefs.x(v)
    aux.set(v, value)
    return value


def check_coupling_phase1(state: OpinionState, aux: AuxState) -> bool:
    """Exact early-window consistency: tracked shadow values match reality.

    Shadow unannounced/0/1 must equal the real announcement; untracked nodes
    must have announced something. Implies the count sandwich
    z_i <= y_i <= z_i + z_? for i in {0, 1}, which is asserted as well.
    """
    c, d = state.ann, aux.d
    if not (
        np.all(c[d == UNANNOUNCED] == UNANNOUNCED)
        and np.all(c[d == 0] == 0)
        and np.all(c[d == 1] == 1)
        and np.all(c[d == AUX_UNTRACKED] != UNANNOUNCED)
    ):
        return False
    for zi, yi in ((aux.z0, state.y0), (aux.z1, state.y1)):
        if not (zi <= yi <= zi + aux.zq):
            return False
    return True


def check_coupling_phase2(state: OpinionState, aux: AuxState) -> bool:
    """Exact growth-window consistency: shadow 1s and unannounced match reality.

    Shadow 0/? nodes must have announced something, and y1 >= z1.
    """
    c, d = state.ann, aux.d
    if not (
        np.all(c[d == UNANNOUNCED] == UNANNOUNCED)
        and np.all(c[d == 1] == 1)
        and np.all(c[d == 0] != UNANNOUNCED)
        and np.all(c[d == AUX_UNTRACKED] != UNANNOUNCED)
    ):
        return False
    return state.y1 >= aux.z1


def audit_exposure(dg: DeferredGraph, tracker: Union[AuxState, OpinionState]) -> bool:
    """True iff no revealed pair touches a node the tracker still holds at bot."""
    bot = tracker.unannounced_mask()
    return not bool(np.any(dg.queried_degree[bot] > 0))


@dataclass
class PhaseConfig:
    """Concrete integer phase boundaries for one (n, p, delta) instance."""

    n: int
    p: float
    delta: float
    omega: float
    t1: int
    t2: int
    t3: int
    zero_cap: int  # straggler budget for opinion-0 nodes at t3
    pipeline: str = "sparse"  # or "very_sparse"

    @classmethod
    def from_params(cls, n: int, p: float, delta: float, pipeline: str = "sparse",
                    omega: Optional[float] = None) -> "PhaseConfig":
        if pipeline not in ("sparse", "very_sparse"):
            raise ValueError("pipeline must be 'sparse' or 'very_sparse'")
        if not (0.0 < p < 1.0):
            raise ValueError("phase boundaries need p in (0, 1)")
        if not (0.0 < delta < 0.5):
            raise ValueError("delta must lie in (0, 1/2)")
        cap = min(p * n, (1.0 / p) ** 0.5)
        if omega is None:
            omega = math.sqrt(cap)
            # shrink until an integer t2 exists with omega/p <= t2 <= n/omega
            for _ in range(200):
                if math.floor(n / omega) >= math.ceil(omega / p):
                    break
                omega *= 0.9
            else:
                raise ValueError("no feasible window for t2 at these parameters")
        if omega > cap + 1e-12 or omega <= 1.0:
            raise ValueError("omega must lie in (1, min(p*n, (1/p)^(1/2))]")
        t1 = math.floor(delta / (2.0 * p))
        t2 = math.floor(n / omega)
        if t2 < math.ceil(omega / p):
            raise ValueError("t2 window is empty for the given omega")
        logn = math.log(n)
        t3 = math.floor(2.0 * n * logn) if pipeline == "very_sparse" else math.floor(n / math.sqrt(omega))
        zero_cap = math.floor(n * omega / logn)
        cfg = cls(n=n, p=p, delta=delta, omega=omega, t1=t1, t2=t2, t3=t3,
                  zero_cap=zero_cap, pipeline=pipeline)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not (self.t1 < self.t2 < self.t3):
            raise ValueError(f"phase boundaries must increase: {self.t1}, {self.t2}, {self.t3}")
        cap = min(self.p * self.n, (1.0 / self.p) ** 0.5)
        if self.omega > cap + 1e-12:
            raise ValueError("omega exceeds min(p*n, (1/p)^(1/2))")


@dataclass
class CoupledPhaseResult:
    """Outcome of one coupled (main + shadow) phase run."""

    n: int
    p: float
    delta: float
    phase: int
    rounds: int
    checks_enabled: bool
    checks_ok: bool
    first_violation: Optional[int]
    y_counts: tuple[int, int, int]
    z_counts: tuple[int, int, int, int]
    ann_snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    d_snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    trajectory: list[tuple[int, int, int, int, int]] = field(default_factory=list)
    belief_draws: int = 0
    consulted_nodes: frozenset[int] = frozenset()
    expected_consulted: frozenset[int] = frozenset()
    state: Optional[OpinionState] = None
    aux: Optional[AuxState] = None
    dg: Optional[DeferredGraph] = None


def _record_point(result_traj, t, state, aux, stride) -> None:
    if stride and t % stride == 0:
        result_traj.append((t, state.y_perp, state.y0, state.y1, aux.zq if aux is not None else 0))


def run_phase1_coupled(n: int, p: float, delta: float, rngs: RngBundle,
                       t1: Optional[int] = None, checks: bool = True,
                       stride: int = 0, snapshot_times: tuple[int, ...] = ()) -> CoupledPhaseResult:
    """Run main dynamics and the early-window shadow together through t1."""
    if t1 is None:
        t1 = math.floor(delta / (2.0 * p))
    dg = DeferredGraph(n, p, rngs.edges)
    beliefs = LazyBeliefs(n, delta, rngs.beliefs)
    state = OpinionState(n, beliefs)
    aux = AuxState(n, phase=1)
    feed = _SelectionFeed(rngs.selection, n)
    snapshot_set = set(int(t) for t in snapshot_times) | {t1}
    trajectory: list[tuple[int, int, int, int, int]] = []
    ann_snapshots: dict[int, np.ndarray] = {}
    d_snapshots: dict[int, np.ndarray] = {}
    expected: set[int] = set()
    ok = True
    first_violation = None

    for t in range(1, t1 + 1):
        v = feed.next()
        state.t = t
        aux.t = t
        state.mark_selected(v)
        shadow_val = phase1_aux_step(aux, dg, v, beliefs)
        if shadow_val in (0, 1):
            expected.add(v)
        new, was_tie = eval_with_tie(state, dg, v)
        if was_tie:
            expected.add(v)
        state.set_announcement(v, new)
        if checks:
            if not (check_coupling_phase1(state, aux) and audit_exposure(dg, aux)):
                ok = False
                if first_violation is None:
                    first_violation = t
        _record_point(trajectory, t, state, aux, stride)
        if t in snapshot_set:
            ann_snapshots[t] = state.ann.copy()
            d_snapshots[t] = aux.d.copy()

    return CoupledPhaseResult(
        n=n, p=p, delta=delta, phase=1, rounds=t1,
        checks_enabled=checks, checks_ok=ok, first_violation=first_violation,
        y_counts=(state.y_perp, state.y0, state.y1),
        z_counts=(aux.z_bot, aux.z0, aux.z1, aux.zq),
        ann_snapshots=ann_snapshots, d_snapshots=d_snapshots,
        trajectory=trajectory,
        belief_draws=beliefs.draws,
        consulted_nodes=frozenset(beliefs.consulted_nodes()),
        expected_consulted=frozenset(expected),
        state=state, aux=aux, dg=dg,
    )


def run_phase2_coupled(n: int, p: float, delta: float, rngs: RngBundle,
                       cfg: Optional[PhaseConfig] = None, checks: bool = True,
                       stride: int = 0,
                       snapshot_times: tuple[int, ...] = ()) -> CoupledPhaseResult:
    """Plain deferred run through t1, then coupled growth-window run to t2.

    At t1 the shadow is initialised to the real announcements, after which
    every round applies the shadow rule and (optionally) the exact checks.
    """
    if cfg is None:
        cfg = PhaseConfig.from_params(n, p, delta)
    dg = DeferredGraph(n, p, rngs.edges)
    beliefs = LazyBeliefs(n, delta, rngs.beliefs)
    state = OpinionState(n, beliefs)
    feed = _SelectionFeed(rngs.selection, n)
    snapshot_set = set(int(t) for t in snapshot_times) | {cfg.t1, cfg.t2}
    trajectory: list[tuple[int, int, int, int, int]] = []
    ann_snapshots: dict[int, np.ndarray] = {}
    d_snapshots: dict[int, np.ndarray] = {}
    ok = True
    first_violation = None

    for t in range(1, cfg.t1 + 1):
        v = feed.next()
        state.t = t
        state.mark_selected(v)
        apply_update(state, dg, v)
        if checks and not audit_exposure(dg, state):
            ok = False
            if first_violation is None:
                first_violation = t
        if t in snapshot_set:
            ann_snapshots[t] = state.ann.copy()

    # the growth-window shadow restarts from the real announcements; an
    # early-window shadow snapshot at t1 does not exist on this path
    aux = AuxState.from_announcements(state.ann, phase=2)
    _record_point(trajectory, cfg.t1, state, aux, stride)

    for t in range(cfg.t1 + 1, cfg.t2 + 1):
        v = feed.next()
        state.t = t
        aux.t = t
        state.mark_selected(v)
        phase2_aux_step(aux, dg, v, beliefs)
        new, _ = eval_with_tie(state, dg, v)
        state.set_announcement(v, new)
        if checks:
            if not (check_coupling_phase2(state, aux) and audit_exposure(dg, aux)):
                ok = False
                if first_violation is None:
                    first_violation = t
        _record_point(trajectory, t, state, aux, stride)
        if t in snapshot_set:
            ann_snapshots[t] = state.ann.copy()
            d_snapshots[t] = aux.d.copy()

    return CoupledPhaseResult(
        n=n, p=p, delta=delta, phase=2, rounds=cfg.t2,
        checks_enabled=checks, checks_ok=ok, first_violation=first_violation,
        y_counts=(state.y_perp, state.y0, state.y1),
        z_counts=(aux.z_bot, aux.z0, aux.z1, aux.zq),
        ann_snapshots=ann_snapshots, d_snapshots=d_snapshots,
        trajectory=trajectory,
        belief_draws=beliefs.draws,
        consulted_nodes=frozenset(beliefs.consulted_nodes()),
        expected_consulted=frozenset(),
        state=state, aux=aux, dg=dg,
    )


def run_coupled_full(n: int, p: float, delta: float, rngs: RngBundle,
                     cfg: Optional[PhaseConfig] = None, checks: bool = False,
                     stop_policy=None, seed: int = 0):
    """Coupled run through both shadow windows, then on to stabilization.

    Rounds 1..t1 couple the main dynamics with the early-window shadow; at t1
    the shadow restarts from the real announcements and runs the growth
    window to t2. The deferred graph is then completed (fresh draws only for
    never-queried pairs, so the graph law is unchanged) and the run continues
    eagerly to termination. Returns (RunRecord, phase1 result, phase2 result).
    """
    from .dynamics import StopPolicy, run_loop

    if cfg is None:
        cfg = PhaseConfig.from_params(n, p, delta)
    policy = stop_policy or StopPolicy()
    dg = DeferredGraph(n, p, rngs.edges)
    beliefs = LazyBeliefs(n, delta, rngs.beliefs)
    state = OpinionState(n, beliefs, track_first=policy.track_first_announcements)
    aux1 = AuxState(n, phase=1)
    feed = _SelectionFeed(rngs.selection, n)
    stride = policy.resolved_stride(n)
    snapshot_set = set(int(t) for t in policy.snapshot_times) | {cfg.t1, cfg.t2}
    trajectory: list = [(0, n, 0, 0)] if stride else []
    ann_snapshots: dict[int, np.ndarray] = {}
    d_snapshots: dict[int, np.ndarray] = {}
    zq_by_t: dict[int, int] = {}
    ok1 = ok2 = True
    fv1 = fv2 = None
    expected: set[int] = set()

    for t in range(1, cfg.t1 + 1):
        v = feed.next()
        state.t = t
        aux1.t = t
        state.mark_selected(v)
        shadow_val = phase1_aux_step(aux1, dg, v, beliefs)
        if shadow_val in (0, 1):
            expected.add(v)
        new, was_tie = eval_with_tie(state, dg, v)
        if was_tie:
            expected.add(v)
        state.set_announcement(v, new)
        if checks and not (check_coupling_phase1(state, aux1) and audit_exposure(dg, aux1)):
            ok1 = False
            if fv1 is None:
                fv1 = t
        if stride and t % stride == 0:
            zq_by_t[t] = aux1.zq
            trajectory.append((t, state.y_perp, state.y0, state.y1))
        if t in snapshot_set:
            ann_snapshots[t] = state.ann.copy()
        if t == cfg.t1:
            d_snapshots[t] = aux1.d.copy()

    phase1 = CoupledPhaseResult(
        n=n, p=p, delta=delta, phase=1, rounds=cfg.t1,
        checks_enabled=checks, checks_ok=ok1, first_violation=fv1,
        y_counts=(state.y_perp, state.y0, state.y1),
        z_counts=(aux1.z_bot, aux1.z0, aux1.z1, aux1.zq),
        ann_snapshots=dict(ann_snapshots), d_snapshots=dict(d_snapshots),
        belief_draws=beliefs.draws,
        consulted_nodes=frozenset(beliefs.consulted_nodes()),
        expected_consulted=frozenset(expected),
    )

    aux2 = AuxState.from_announcements(state.ann, phase=2)
    for t in range(cfg.t1 + 1, cfg.t2 + 1):
        v = feed.next()
        state.t = t
        aux2.t = t
        state.mark_selected(v)
        phase2_aux_step(aux2, dg, v, beliefs)
        new, _ = eval_with_tie(state, dg, v)
        state.set_announcement(v, new)
        if checks and not (check_coupling_phase2(state, aux2) and audit_exposure(dg, aux2)):
            ok2 = False
            if fv2 is None:
                fv2 = t
        if stride and t % stride == 0:
            zq_by_t[t] = aux2.zq
            trajectory.append((t, state.y_perp, state.y0, state.y1))
        if t in snapshot_set:
            ann_snapshots[t] = state.ann.copy()
        if t == cfg.t2:
            d_snapshots[t] = aux2.d.copy()

    phase2 = CoupledPhaseResult(
        n=n, p=p, delta=delta, phase=2, rounds=cfg.t2,
        checks_enabled=checks, checks_ok=ok2, first_violation=fv2,
        y_counts=(state.y_perp, state.y0, state.y1),
        z_counts=(aux2.z_bot, aux2.z0, aux2.z1, aux2.zq),
        ann_snapshots=dict(ann_snapshots), d_snapshots=dict(d_snapshots),
        belief_draws=beliefs.draws,
        consulted_nodes=frozenset(beliefs.consulted_nodes()),
    )

    g = dg.complete()
    record = run_loop(state, g, feed, policy, t_start=cfg.t2,
                      trajectory=trajectory, snapshots=ann_snapshots, seed=seed)
    record.phase_flags["zq_by_t"] = zq_by_t
    record.phase_flags["coupling_checks_ok"] = ok1 and ok2
    return record, phase1, phase2
