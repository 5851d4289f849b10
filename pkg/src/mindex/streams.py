"""Deterministic counter-based random streams.

Every (master_seed, run_index, step_index) triple maps to an independent Philox
stream, so trajectories are reproducible no matter how runs are scheduled.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def mix64(*values: int) -> int:
    """Hash a tuple of integers into one 64-bit key."""
    acc = 0x243F6A8885A308D3
    for v in values:
        acc = splitmix64((acc ^ (int(v) & MASK64)) & MASK64)
    return acc


def stream(master_seed: int, run_index: int = 0, step_index: int = 0) -> np.random.Generator:
    """Independent generator for one (run, step) cell of an experiment."""
    key = np.array(
        [mix64(master_seed, run_index), mix64(master_seed, run_index, step_index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
