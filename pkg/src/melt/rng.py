"""Deterministic pseudo-random streams shared across the pipeline.

All stochastic stages (embedding training, mask sampling) draw from
splitmix64 streams so runs are bit-reproducible under a fixed seed,
independent of numpy/numba RNG internals.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + _GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    z = z ^ (z >> 31)
    return state, z


class SplitMix64:
    """Minimal counter-based generator (same sequence as the training kernel)."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state, z = splitmix64(self.state)
        return z

    def next_float(self) -> float:
        # 53 high bits -> double in [0, 1)
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is negligible for small n."""
        return self.next_u64() % n


def splitmix64_array(seed: int, n: int) -> "np.ndarray":
    """First n floats of the stream seeded at seed, as one vector op.

    The stream is counter-based (state_i = seed + i * gamma) so this
    matches n successive SplitMix64(seed).next_float() calls exactly.
    """
    import numpy as np

    idx = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def derive_seed(seed: int, *parts: int) -> int:
    """Derive an independent stream seed from a base seed and stream labels.

    Used for per-worker and per-(stage, shard) streams so parallel output
    equals single-threaded output after deterministic concatenation.
    """
    state = seed & MASK64
    _, state = splitmix64(state)
    for part in parts:
        state = (state ^ (part & MASK64)) & MASK64
        _, state = splitmix64(state)
    return state
