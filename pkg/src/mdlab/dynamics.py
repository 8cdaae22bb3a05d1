"""Asynchronous majority dynamics.

One uniformly random node per round updates its public announcement to the
majority announcement among its neighbours, breaking ties with its own
private belief; everyone else stays put. The run loop tracks the coverage
time (first round by which every node has been selected), detects
stabilization, and records trajectories and snapshots for later analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .graph import DeferredGraph, Graph

__all__ = [
    "UNANNOUNCED",
    "Beliefs",
    "LazyBeliefs",
    "init_beliefs",
    "OpinionState",
    "StopPolicy",
    "RunRecord",
    "eval_with_tie",
    "majority_eval",
    "apply_update",
    "is_stabilized",
    "run_loop",
    "run_dynamics",
    "run_scripted",
    "fixed_point_sweeps",
]

UNANNOUNCED = np.int8(-1)

OUTCOME_CONSENSUS_1 = "consensus_1"
OUTCOME_CONSENSUS_0 = "consensus_0"
OUTCOME_MIXED = "mixed_stable"
OUTCOME_BUDGET = "step_budget_exhausted"


def _check_delta(delta: float) -> None:
    if not (0.0 < delta < 0.5):
        raise ValueError("delta must lie in the open interval (0, 1/2)")


def init_beliefs(n: int, delta: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. private signals, each equal to 1 with probability 1/2 + delta."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_delta(delta)
    return (rng.random(n) < 0.5 + delta).astype(np.int8)


class Beliefs:
    """Belief provider backed by a fully materialised signal vector."""

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=np.int8)
        self.draws = 0  # eager vectors consume their randomness up front

    def x(self, v: int) -> int:
        return int(self.values[v])

    def consulted_nodes(self) -> set[int]:
        return set(range(self.values.size))


class LazyBeliefs:
    """Belief provider that draws each node's signal on first use.

    Keeps the count of stream draws and the set of materialised nodes so a
    run can certify that untracked nodes' beliefs were never touched.
    """

    def __init__(self, n: int, delta: float, rng: np.random.Generator):
        _check_delta(delta)
        self.n = n
        self.delta = delta
        self.rng = rng
        self.values = np.full(n, -1, dtype=np.int8)
        self.draws = 0

    def x(self, v: int) -> int:
        if self.values[v] < 0:
            self.values[v] = np.int8(1) if self.rng.random() < 0.5 + self.delta else np.int8(0)
            self.draws += 1
        return int(self.values[v])

    def consulted_nodes(self) -> set[int]:
        return set(np.flatnonzero(self.values >= 0).tolist())


BeliefProvider = Union[Beliefs, LazyBeliefs]


def as_belief_provider(beliefs) -> BeliefProvider:
    if isinstance(beliefs, (Beliefs, LazyBeliefs)):
        return beliefs
    return Beliefs(np.asarray(beliefs, dtype=np.int8))


class OpinionState:
    """Announcements, maintained counts, and selection bookkeeping."""

    __slots__ = ("n", "beliefs", "ann", "y", "selected_once", "num_selected",
                 "t", "t_hat", "last_change", "_announced_buf", "_announced_len",
                 "first_value", "first_time")

    def __init__(self, n: int, beliefs: BeliefProvider, track_first: bool = False):
        self.n = n
        self.beliefs = beliefs
        self.ann = np.full(n, UNANNOUNCED, dtype=np.int8)
        self.y = [n, 0, 0]  # counts of {unannounced, 0, 1}
        self.selected_once = np.zeros(n, dtype=bool)
        self.num_selected = 0
        self.t = 0
        self.t_hat: Optional[int] = None
        self.last_change = 0
        self._announced_buf = np.empty(n, dtype=np.int64)
        self._announced_len = 0
        self.first_value = np.full(n, -1, dtype=np.int8) if track_first else None
        self.first_time = np.zeros(n, dtype=np.int64) if track_first else None

    @property
    def y_perp(self) -> int:
        return self.y[0]

    @property
    def y0(self) -> int:
        return self.y[1]

    @property
    def y1(self) -> int:
        return self.y[2]

    def announced_ids(self) -> np.ndarray:
        return self._announced_buf[:self._announced_len]

    def announced_except(self, v: int) -> np.ndarray:
        ids = self.announced_ids()
        if self.ann[v] == UNANNOUNCED:
            return ids
        return ids[ids != v]

    def mark_selected(self, v: int) -> None:
        if not self.selected_once[v]:
            self.selected_once[v] = True
            self.num_selected += 1
            if self.num_selected == self.n:
                self.t_hat = self.t

    def set_announcement(self, v: int, value: int) -> None:
        old = int(self.ann[v])
        if old == value:
            return
        if old == -1:
            self._announced_buf[self._announced_len] = v
            self._announced_len += 1
            self.y[0] -= 1
            if self.first_value is not None:
                self.first_value[v] = value
                self.first_time[v] = self.t
        else:
            self.y[old + 1] -= 1
        self.ann[v] = np.int8(value)
        self.y[value + 1] += 1
        self.last_change = self.t

    def recount(self) -> tuple[int, int, int]:
        """Counts recomputed from the announcement vector (consistency oracle)."""
        return (
            int(np.count_nonzero(self.ann == UNANNOUNCED)),
            int(np.count_nonzero(self.ann == 0)),
            int(np.count_nonzero(self.ann == 1)),
        )

    def unannounced_mask(self) -> np.ndarray:
        return self.ann == UNANNOUNCED


def _tally(ann: np.ndarray, neigh: np.ndarray) -> tuple[int, int]:
    vals = ann[neigh]
    return int(np.count_nonzero(vals == 1)), int(np.count_nonzero(vals == 0))


def eval_with_tie(state: OpinionState, g: Union[Graph, DeferredGraph], v: int) -> tuple[int, bool]:
    """Announcement v would make if selected now, and whether the tie-break fired.

    On a deferred graph this reveals any not-yet-queried pair between v and
    the announced set, which is exactly the information the rule consumes.
    """
    if isinstance(g, DeferredGraph):
        neigh = g.reveal_edges(v, state.announced_except(v))
    else:
        neigh = g.neighbors(v)
    n1, n0 = _tally(state.ann, neigh)
    if n1 > n0:
        return 1, False
    if n1 < n0:
        return 0, False
    return state.beliefs.x(v), True


def majority_eval(state: OpinionState, g: Union[Graph, DeferredGraph], v: int) -> int:
    """Announcement v would make if selected now; does not mutate state."""
    return eval_with_tie(state, g, v)[0]


def apply_update(state: OpinionState, g: Union[Graph, DeferredGraph], v: int) -> int:
    """Apply the update rule at the selected node v; returns its new announcement."""
    value = majority_eval(state, g, v)
    state.set_announcement(v, value)
    return value


def _whole_graph_preference(state: OpinionState, g: Graph) -> np.ndarray:
    """For every node, the announcement it would adopt if selected now."""
    src, dst = g.directed_edge_arrays()
    ann = state.ann
    n1 = np.bincount(src, weights=(ann[dst] == 1).astype(np.float64), minlength=g.n)
    n0 = np.bincount(src, weights=(ann[dst] == 0).astype(np.float64), minlength=g.n)
    pref = np.empty(g.n, dtype=np.int8)
    tie = n1 == n0
    pref[n1 > n0] = 1
    pref[n1 < n0] = 0
    if np.any(tie):
        for v in np.flatnonzero(tie):
            pref[v] = state.beliefs.x(int(v))
    return pref


def is_stabilized(state: OpinionState, g: Graph) -> bool:
    """True iff every node has announced and no selection would change anything."""
    if state.y_perp != 0:
        return False
    return bool(np.array_equal(_whole_graph_preference(state, g), state.ann))


def fixed_point_sweeps(state: OpinionState, g: Graph, sweeps: int = 10) -> bool:
    """Force `sweeps` full passes of update evaluations; True iff nothing moves.

    While no evaluation changes an announcement the state is constant, so
    sequential per-node evaluation and a whole-graph recount coincide.
    """
    for _ in range(sweeps):
        if not is_stabilized(state, g):
            return False
    return True


@dataclass
class StopPolicy:
    """Step budget, stabilization-check cadence, and observation plan."""

    step_budget: Optional[int] = None          # default 20 * n^2
    budget_factor: float = 20.0                # used when step_budget is None
    check_cadence: Optional[int] = None        # default n quiet rounds
    trajectory_stride: Optional[int] = None    # None = max(1, n // 100); 0 = off
    snapshot_times: tuple[int, ...] = ()
    track_first_announcements: bool = False
    batch_start: Optional[int] = None          # selection-coverage windows
    batch_len: Optional[int] = None
    max_batches: int = 64

    def resolved_budget(self, n: int) -> int:
        if self.step_budget is not None:
            return int(self.step_budget)
        return int(self.budget_factor * n * n)

    def resolved_cadence(self, n: int) -> int:
        return int(self.check_cadence) if self.check_cadence is not None else n

    def resolved_stride(self, n: int) -> int:
        if self.trajectory_stride is None:
            return max(1, n // 100)
        return int(self.trajectory_stride)


@dataclass
class RunRecord:
    """Everything one trial produced."""

    outcome: str
    termination_time: int
    t_hat: Optional[int]
    terminated_at_t_hat: bool
    trajectory: list[tuple[int, int, int, int]]
    phase_flags: dict = field(default_factory=dict)
    seed: int = 0
    rounds_run: int = 0
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    final_announcements: Optional[np.ndarray] = None
    first_value: Optional[np.ndarray] = None
    first_time: Optional[np.ndarray] = None
    batch_boundaries: list[int] = field(default_factory=list)
    batch_all_selected: list[bool] = field(default_factory=list)
    batch_snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    y_final: tuple[int, int, int] = (0, 0, 0)


class _SelectionFeed:
    """Uniform node picks drawn in blocks from the selection stream."""

    __slots__ = ("rng", "n", "_buf", "_pos")

    def __init__(self, rng: np.random.Generator, n: int, block: int = 8192):
        self.rng = rng
        self.n = n
        self._buf = rng.integers(0, n, size=block, dtype=np.int64)
        self._pos = 0

    def next(self) -> int:
        if self._pos == self._buf.size:
            self._buf = self.rng.integers(0, self.n, size=self._buf.size, dtype=np.int64)
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return int(v)


def run_loop(state: OpinionState, g: Graph, feed: "_SelectionFeed", policy: StopPolicy,
             *, t_start: int = 0, trajectory: Optional[list] = None,
             snapshots: Optional[dict] = None, seed: int = 0) -> RunRecord:
    """Drive an existing state to stabilization (or budget) on an eager graph."""
    n = g.n
    budget = policy.resolved_budget(n)
    cadence = policy.resolved_cadence(n)
    stride = policy.resolved_stride(n)
    snapshot_times = set(int(t) for t in policy.snapshot_times)

    trajectory = trajectory if trajectory is not None else []
    snapshots = snapshots if snapshots is not None else {}
    if t_start == 0:
        if stride:
            trajectory.append((0, n, 0, 0))
        if 0 in snapshot_times:
            snapshots[0] = state.ann.copy()

    batching = policy.batch_start is not None and policy.batch_len is not None
    batch_boundaries: list[int] = []
    batch_all_selected: list[bool] = []
    batch_snapshots: dict[int, np.ndarray] = {}
    if batching:
        batch_edges = [policy.batch_start + k * policy.batch_len
                       for k in range(policy.max_batches + 1)]
        batch_seen = np.zeros(n, dtype=bool)
        batch_seen_count = 0
        next_edge_idx = 0
        first_tracked = max(policy.batch_start, t_start)
        while next_edge_idx < len(batch_edges) and batch_edges[next_edge_idx] <= first_tracked:
            next_edge_idx += 1

    quiet = 0
    stable = False
    t = t_start
    while t < budget:
        t += 1
        state.t = t
        v = feed.next()
        state.mark_selected(v)
        old = int(state.ann[v])
        new = apply_update(state, g, v)
        if new != old:
            quiet = 0
        else:
            quiet += 1

        if batching and t > policy.batch_start:
            if not batch_seen[v]:
                batch_seen[v] = True
                batch_seen_count += 1
            if next_edge_idx < len(batch_edges) and t == batch_edges[next_edge_idx]:
                batch_boundaries.append(t)
                batch_all_selected.append(batch_seen_count == n)
                batch_snapshots[t] = state.ann.copy()
                batch_seen[:] = False
                batch_seen_count = 0
                next_edge_idx += 1

        if stride and t % stride == 0:
            trajectory.append((t, state.y_perp, state.y0, state.y1))
        if t in snapshot_times:
            snapshots[t] = state.ann.copy()

        if quiet >= cadence and state.y_perp == 0:
            if is_stabilized(state, g):
                stable = True
                break
            quiet = 0

    if not stable and state.y_perp == 0 and is_stabilized(state, g):
        stable = True

    if stable:
        if state.y1 == n:
            outcome = OUTCOME_CONSENSUS_1
        elif state.y0 == n:
            outcome = OUTCOME_CONSENSUS_0
        else:
            outcome = OUTCOME_MIXED
    else:
        outcome = OUTCOME_BUDGET

    if stride and (not trajectory or trajectory[-1][0] != t):
        trajectory.append((t, state.y_perp, state.y0, state.y1))

    record = RunRecord(
        outcome=outcome,
        termination_time=state.last_change,
        t_hat=state.t_hat,
        terminated_at_t_hat=(state.t_hat is not None and state.last_change == state.t_hat),
        trajectory=trajectory,
        seed=seed,
        rounds_run=t,
        snapshots=snapshots,
        final_announcements=state.ann.copy(),
        first_value=None if state.first_value is None else state.first_value.copy(),
        first_time=None if state.first_time is None else state.first_time.copy(),
        batch_boundaries=batch_boundaries,
        batch_all_selected=batch_all_selected,
        batch_snapshots=batch_snapshots,
        y_final=(state.y_perp, state.y0, state.y1),
    )
    record.phase_flags["stable"] = stable
    record._state = state  # reused by post-run checks
    record._graph = g
    return record


def run_dynamics(g: Graph, beliefs, rng: np.random.Generator,
                 stop_policy: Optional[StopPolicy] = None, seed: int = 0) -> RunRecord:
    """Run to stabilization (or budget) on an eagerly generated graph."""
    policy = stop_policy or StopPolicy()
    provider = as_belief_provider(beliefs)
    state = OpinionState(g.n, provider, track_first=policy.track_first_announcements)
    feed = _SelectionFeed(rng, g.n)
    return run_loop(state, g, feed, policy, seed=seed)


def run_scripted(g: Graph, beliefs, selection: list[int]) -> list[np.ndarray]:
    """Apply a fixed selection sequence; returns announcements after each round.

    Deterministic given the belief vector; used to compare runs that share
    graph and selection randomness.
    """
    provider = as_belief_provider(beliefs)
    state = OpinionState(g.n, provider)
    out = [state.ann.copy()]
    for t, v in enumerate(selection, start=1):
        state.t = t
        state.mark_selected(int(v))
        apply_update(state, g, int(v))
        out.append(state.ann.copy())
    return out
