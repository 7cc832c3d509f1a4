"""Event keys, the binary heap over them, and clock-edge arithmetic.

An event is a single int64 key; sorting keys sorts events by
(time, kind, core, neuron, polarity with +1 first). Layout, low bits first:
polarity 1 bit, neuron 9 bits, core 3 bits, kind 2 bits, then time.
"""

import numpy as np

from ._jit import njit

SPIKE = 0
FALL = 1
RISE = 2
ARB = 3

TIME_SHIFT = 15
KIND_SHIFT = 13
CORE_SHIFT = 10
IDX_SHIFT = 1


@njit
def make_key(t, kind, core, idx, polbit):
    return (t << TIME_SHIFT) | (kind << KIND_SHIFT) | (core << CORE_SHIFT) | (idx << IDX_SHIFT) | polbit


@njit
def key_time(key):
    return key >> TIME_SHIFT


@njit
def split_key(key):
    t = key >> TIME_SHIFT
    kind = (key >> KIND_SHIFT) & 3
    core = (key >> CORE_SHIFT) & 7
    idx = (key >> IDX_SHIFT) & 511
    polbit = key & 1
    return t, kind, core, idx, polbit


def spike_keys(times, cores, neurons, polarities):
    """Vectorised keys for a batch of spike events (+1 sorts before -1)."""
    times = np.asarray(times, dtype=np.int64)
    polbit = (np.asarray(polarities) < 0).astype(np.int64)
    return (
        (times << TIME_SHIFT)
        | (np.int64(SPIKE) << KIND_SHIFT)
        | (np.asarray(cores, dtype=np.int64) << CORE_SHIFT)
        | (np.asarray(neurons, dtype=np.int64) << IDX_SHIFT)
        | polbit
    )


@njit
def heap_push(heap, hstate, key):
    n = hstate[0]
    if n >= heap.shape[0]:
        hstate[1] = 1  # overflow flag
        return
    heap[n] = key
    hstate[0] = n + 1
    i = n
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent] <= heap[i]:
            break
        tmp = heap[parent]
        heap[parent] = heap[i]
        heap[i] = tmp
        i = parent


@njit
def heap_pop(heap, hstate):
    n = hstate[0] - 1
    top = heap[0]
    heap[0] = heap[n]
    hstate[0] = n
    i = 0
    while True:
        left = 2 * i + 1
        if left >= n:
            break
        child = left
        right = left + 1
        if right < n and heap[right] < heap[left]:
            child = right
        if heap[i] <= heap[child]:
            break
        tmp = heap[child]
        heap[child] = heap[i]
        heap[i] = tmp
        i = child
    return top


# A clock generator started at `anchor` spends its first ceil(P/2) ticks low,
# so rising edges sit at anchor + ceil(P/2) + kP and falling edges at
# anchor + (k + 1)P.


@njit
def next_rise(anchor, period, t, strict):
    base = anchor + period - period // 2
    if t < base:
        return base
    r = base + ((t - base) // period) * period
    if r < t or (strict and r == t):
        r += period
    return r


@njit
def next_fall(anchor, period, t):
    base = anchor + period
    if t < base:
        return base
    r = base + ((t - base) // period) * period
    if r <= t:
        r += period
    return r


# slots of the kernel's int64 stats vector
ST_COLLISIONS = 0
ST_ILLEGAL = 1
ST_MAX_WAKE_LATENCY = 2
ST_DUPLICATE_REQ = 3
ST_EVENTS = 4
ST_TRACE_LEN = 5
ST_TRACE_OVERFLOW = 6
ST_OUTPUT_SPIKES = 7
ST_SAME_TICK_PAIRS = 8
N_STATS = 9
