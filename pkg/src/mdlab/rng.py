"""Named, independent randomness substreams for reproducible trials.

Every trial owns three independent generators: one for edge indicators, one
for private beliefs, one for node selection. Streams are derived from
(base_seed, trial_index, attempt, stream_id) with a counter-based split, so
adding trials or resampling a rejected instance never perturbs the randomness
of any other trial or stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STREAM_EDGES = 0
STREAM_BELIEFS = 1
STREAM_SELECTION = 2


def _seed_sequence(base_seed: int, trial_index: int, attempt: int, stream_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(trial_index, attempt, stream_id))


def stream_rng(base_seed: int, trial_index: int = 0, attempt: int = 0, stream_id: int = 0) -> np.random.Generator:
    """One generator for a named substream of one trial."""
    return np.random.default_rng(_seed_sequence(base_seed, trial_index, attempt, stream_id))


def trial_fingerprint(base_seed: int, trial_index: int, attempt: int = 0) -> int:
    """Stable 64-bit id recorded per trial row; derived, not the base seed."""
    sq = np.random.SeedSequence(entropy=base_seed, spawn_key=(trial_index, attempt))
    return int(sq.generate_state(1, dtype=np.uint64)[0])


@dataclass
class RngBundle:
    """The three per-trial substreams plus the recorded trial seed."""

    edges: np.random.Generator
    beliefs: np.random.Generator
    selection: np.random.Generator
    trial_seed: int = 0
    base_seed: int = 0
    trial_index: int = 0
    attempt: int = 0
    extra: dict = field(default_factory=dict)


def split_streams(base_seed: int, trial_index: int = 0, attempt: int = 0) -> RngBundle:
    """Build the independent (edges, beliefs, selection) streams of one trial."""
    return RngBundle(
        edges=stream_rng(base_seed, trial_index, attempt, STREAM_EDGES),
        beliefs=stream_rng(base_seed, trial_index, attempt, STREAM_BELIEFS),
        selection=stream_rng(base_seed, trial_index, attempt, STREAM_SELECTION),
        trial_seed=trial_fingerprint(base_seed, trial_index, attempt),
        base_seed=base_seed,
        trial_index=trial_index,
        attempt=attempt,
    )
