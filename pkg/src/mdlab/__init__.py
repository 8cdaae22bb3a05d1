"""Simulation laboratory for asynchronous majority dynamics on G(n, p)."""

from .analysis import (
    batch_shrink_check,
    cascade_bounds,
    coupon_collector_mean,
    phase_predicates,
    q_value,
    verify_qk_bound,
)
from .coupling import (
    AuxState,
    PhaseConfig,
    audit_exposure,
    check_coupling_phase1,
    check_coupling_phase2,
    phase1_aux_step,
    phase2_aux_step,
    run_coupled_full,
    run_phase1_coupled,
    run_phase2_coupled,
)
from .dynamics import (
    OpinionState,
    RunRecord,
    StopPolicy,
    apply_update,
    init_beliefs,
    is_stabilized,
    majority_eval,
    run_dynamics,
)
from .graph import (
    DeferredGraph,
    DegreeClassification,
    Graph,
    check_small_degree_separation,
    classify_degrees,
    degree_threshold,
    generate_gnp,
    is_connected,
    load_edge_list,
    reveal_edges,
    save_edge_list,
)
from .harness import (
    AggregateStats,
    ExperimentConfig,
    load_trials,
    run_trials,
    wilson_interval,
    write_results,
)
from .rng import RngBundle, split_streams

__version__ = "0.1.0"
