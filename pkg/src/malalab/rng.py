"""Seedable counter-based random streams.

Every stochastic routine in this package draws from a Philox generator keyed
by (master_seed, stream index), so independent chains and independent
experiment stages never share or race a stream.
"""

from __future__ import annotations

import numpy as np

# Stream purposes used by experiment runners.  Chain streams use a bare
# (chain_index,) spawn key; purpose streams use (purpose, index) so the two
# families cannot collide (spawn keys of different lengths are distinct).
DATA_STREAM = 101
INIT_STREAM = 102
WARMUP_STREAM = 103
MISC_STREAM = 104


def chain_stream(master_seed: int, chain_index: int) -> np.random.Generator:
    """Generator for chain `chain_index` derived from `master_seed`."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(chain_index,))
    return np.random.Generator(np.random.Philox(seq))


def purpose_stream(master_seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Generator for a non-chain purpose (data generation, inits, tuning)."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, purpose: int, index: int = 0) -> int:
    """Integer sub-seed for routines that take a seed rather than a stream.

    Reserve each (purpose, index) pair for either purpose_stream or
    derive_seed, not both, to keep streams non-overlapping.
    """
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(purpose, index))
    return int(seq.generate_state(2, dtype=np.uint64)[0])
