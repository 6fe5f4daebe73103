"""Numba-compiled inner loop for skip-gram negative-sampling training.

The kernel carries its own splitmix64 stream (same sequence as
melt.rng.SplitMix64) so training is bit-reproducible for a fixed seed in
single-worker mode, and so tests can replay every stochastic decision in
pure Python.  All math is strict IEEE float64; no fastmath.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, uint64

_GAMMA = uint64(0x9E3779B97F4A7C15)
_MIX1 = uint64(0xBF58476D1CE4E5B9)
_MIX2 = uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _next(state):
    state = state + _GAMMA
    z = state
    z = (z ^ (z >> uint64(30))) * _MIX1
    z = (z ^ (z >> uint64(27))) * _MIX2
    z = z ^ (z >> uint64(31))
    return state, z


@njit(cache=True, inline="always")
def _to_float(z):
    return (z >> uint64(11)) * 1.1102230246251565e-16  # 2**-53


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, inline="always")
def _softplus(x):
    # log(1 + e^x), stable on both tails
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True, inline="always")
def _bisect_right(cdf, u):
    lo = 0
    hi = cdf.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    if lo >= cdf.shape[0]:
        lo = cdf.shape[0] - 1
    return lo


@njit(cache=True, nogil=True)
def train_epochs(
    tokens,        # int64[:], in-vocab token ids, sentences concatenated
    offsets,       # int64[:], sentence boundaries, len = n_sentences + 1
    keep_prob,     # float64[:], subsampling keep probability per word
    neg_cdf,       # float64[:], cumulative unigram^(3/4) distribution
    vin,           # float64[:, :], input vectors, updated in place
    vout,          # float64[:, :], output vectors, updated in place
    window,        # int, max context window; realized size uniform in [1, window]
    negatives,     # int, negative samples per (center, context) pair
    lr_start,      # float
    lr_end,        # float
    planned_tokens,  # int, epochs * total in-vocab occurrences, for lr decay
    epochs,        # int
    seed,          # uint64 stream seed
    epoch_losses,  # float64[:], filled with mean pair loss per epoch
):
    state = uint64(seed)
    vocab_size = vin.shape[0]
    dim = vin.shape[1]
    win_u = uint64(window)
    processed = 0

    max_len = 0
    for si in range(offsets.shape[0] - 1):
        n = offsets[si + 1] - offsets[si]
        if n > max_len:
            max_len = n
    kept = np.empty(max_len, dtype=np.int64)
    grad_v = np.empty(dim, dtype=np.float64)

    for epoch in range(epochs):
        loss_sum = 0.0
        pair_count = 0
        for si in range(offsets.shape[0] - 1):
            if planned_tokens > 0:
                progress = processed / planned_tokens
            else:
                progress = 0.0
            alpha = lr_start + (lr_end - lr_start) * progress

            n_kept = 0
            for t in range(offsets[si], offsets[si + 1]):
                word = tokens[t]
                state, z = _next(state)
                processed += 1
                if _to_float(z) < keep_prob[word]:
                    kept[n_kept] = word
                    n_kept += 1

            for pos in range(n_kept):
                center = kept[pos]
                state, z = _next(state)
                win = 1 + int(z % win_u)
                lo = pos - win
                if lo < 0:
                    lo = 0
                hi = pos + win + 1
                if hi > n_kept:
                    hi = n_kept
                for cpos in range(lo, hi):
                    if cpos == pos:
                        continue
                    ctx = kept[cpos]

                    loss = 0.0
                    for d in range(dim):
                        grad_v[d] = 0.0

                    s = 0.0
                    for d in range(dim):
                        s += vout[ctx, d] * vin[center, d]
                    loss += _softplus(-s)
                    g = _sigmoid(s) - 1.0
                    for d in range(dim):
                        grad_v[d] += g * vout[ctx, d]
                        vout[ctx, d] -= alpha * g * vin[center, d]

                    for _ in range(negatives):
                        neg = ctx
                        for _attempt in range(1000):
                            state, z = _next(state)
                            neg = _bisect_right(neg_cdf, _to_float(z))
                            if neg != ctx:
                                break
                        if neg == ctx:
                            neg = (ctx + 1) % vocab_size
                        s = 0.0
                        for d in range(dim):
                            s += vout[neg, d] * vin[center, d]
                        loss += _softplus(s)
                        g = _sigmoid(s)
                        for d in range(dim):
                            grad_v[d] += g * vout[neg, d]
                            vout[neg, d] -= alpha * g * vin[center, d]

                    for d in range(dim):
                        vin[center, d] -= alpha * grad_v[d]

                    loss_sum += loss
                    pair_count += 1

        if pair_count > 0:
            epoch_losses[epoch] = loss_sum / pair_count
        else:
            epoch_losses[epoch] = 0.0
