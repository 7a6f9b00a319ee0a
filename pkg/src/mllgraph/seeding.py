"""Derivation of per-stage random streams from a single root seed."""

from __future__ import annotations

import numpy as np

# Fixed stage indices. Renumbering would silently change every derived
# stream, so new stages must be appended, never inserted.
STAGES = {
    "synthetic": 0,
    "prototypes": 1,
    "labels": 2,
    "noise": 3,
    "split": 4,
    "glove_init": 5,
    "encoder_init": 6,
    "classifier_init": 7,
    "kmeans": 8,
    "batches": 9,
}


def stage_seed(root_seed: int, stage: str) -> int:
    """Derive the 64-bit sub-seed of one named pipeline stage.

    Stages draw from independent streams, so adding randomness to one
    stage never perturbs another.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown seeding stage: {stage!r}")
    if root_seed < 0:
        raise ValueError("root seed must be a nonnegative integer")
    seq = np.random.SeedSequence(root_seed, spawn_key=(STAGES[stage],))
    lo, hi = (int(w) for w in seq.generate_state(2))
    return lo | (hi << 32)


def stage_rng(root_seed: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(stage_seed(root_seed, stage))
