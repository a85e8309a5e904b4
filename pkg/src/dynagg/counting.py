"""Sketch-Count, Count-Sketch-Reset and Invert-Average.

Count-Sketch-Reset replaces every bit of a counting sketch with an age
counter.  A host holds zero at the indices its own identifiers hash to,
ages everything else by one per round, and merges incoming matrices by
elementwise minimum.  A bit is live while its counter is within the cutoff
``f(k) = a + b * k``; stale bits age past the cutoff and drop out on their
own once nobody sources them.

Counter matrices are ``uint8`` arrays of shape ``(m, L + 1)``.  ``INF`` is
reserved; ageing saturates one below it.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .fm_sketch import (
    SketchParams,
    estimate_from_runs,
    merge_or,
    positions,
    run_lengths,
)

COUNTER_DTYPE = np.uint8
INF = np.iinfo(COUNTER_DTYPE).max
SATURATE = INF - 1


@dataclass(frozen=True)
class CutoffFn:
    a: float = 7.0
    b: float = 0.25

    def __post_init__(self):
        if self.b < 0:
            raise ValueError(f"cutoff slope must be nonnegative, got {self.b}")

    def __call__(self, k):
        return self.a + self.b * np.asarray(k, dtype=np.float64)

    def table(self, L: int) -> np.ndarray:
        return self(np.arange(L + 1))


@dataclass(frozen=True)
class CountingHostState:
    owned: tuple[tuple[int, int], ...]
    counters: np.ndarray
    params: SketchParams
    cutoff: CutoffFn = CutoffFn()
    ids_per_host: int = 1


def _owned_positions(ids: Iterable[int], params: SketchParams) -> tuple[tuple[int, int], ...]:
    ids = list(ids)
    if not ids:
        return ()
    bins, ks = positions(np.asarray(ids, dtype=np.uint64), params)
    return tuple(sorted(set(zip(bins.tolist(), ks.tolist()))))


def infinite_matrix(params: SketchParams) -> np.ndarray:
    return np.full(params.shape, INF, dtype=COUNTER_DTYPE)


def init_counting_state(
    ids: Sequence[int],
    params: SketchParams,
    cutoff: CutoffFn = CutoffFn(),
    ids_per_host: int = 1,
) -> CountingHostState:
    owned = _owned_positions(ids, params)
    counters = infinite_matrix(params)
    for n, k in owned:
        counters[n, k] = 0
    return CountingHostState(owned, counters, params, cutoff, ids_per_host)


def age_counters(counters: np.ndarray) -> np.ndarray:
    return counters + (counters < SATURATE).astype(COUNTER_DTYPE)


def age(state: CountingHostState) -> CountingHostState:
    counters = age_counters(state.counters)
    for n, k in state.owned:
        counters[n, k] = 0
    return replace(state, counters=counters)


def min_merge(mine: np.ndarray, incoming: np.ndarray) -> np.ndarray:
    if mine.shape != incoming.shape:
        raise ValueError(f"cannot merge counter matrices of shapes {mine.shape} and {incoming.shape}")
    return np.minimum(mine, incoming)


def derive_bits(counters: np.ndarray, f: CutoffFn) -> np.ndarray:
    """Live-bit mask: counter <= f(k), compared against the real-valued cutoff.

    An infinite counter is never live, however large the cutoff.
    """
    thr, usable = _thresholds(f, counters.shape[-1] - 1)
    return (counters <= thr) & usable


def _thresholds(f: CutoffFn, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer form of the cutoff: counters are integers, so c <= f(k) iff c <= floor(f(k)).

    Capped below INF so an infinite counter never passes; ``usable`` is
    False where the cutoff is negative and nothing can pass.
    """
    t = np.floor(f.table(L))
    return np.clip(t, 0, SATURATE).astype(COUNTER_DTYPE), t >= 0


def reset_estimate(state: CountingHostState) -> float:
    runs = run_lengths(derive_bits(state.counters, state.cutoff))
    return float(estimate_from_runs(runs, state.params)) / state.ids_per_host


def reset_round(state: CountingHostState, incoming: Sequence[np.ndarray]) -> CountingHostState:
    """Merge already-aged incoming matrices into an already-aged local state."""
    counters = state.counters
    for other in incoming:
        counters = min_merge(counters, other)
    return replace(state, counters=counters)


def static_sketch_round(bits: np.ndarray, incoming: Sequence[np.ndarray]) -> np.ndarray:
    out = bits
    for other in incoming:
        out = merge_or(out, other)
    return out


def invert_average_sum(avg_estimate: float, count_estimate: float) -> float:
    if not count_estimate > 0:
        raise ValueError(f"count estimate must be positive, got {count_estimate}")
    return avg_estimate * count_estimate


class CountingPopulation:
    """Vectorised counting state for every host slot.

    With ``reset=True`` this runs Count-Sketch-Reset on ``counters``;
    otherwise it runs the static Sketch-Count on ``bits``.  ``ids_per_host``
    divides the estimate when every host registers that many identifiers to
    sharpen a small-network count.
    """

    def __init__(
        self,
        host_ids: Sequence[Sequence[int]],
        params: SketchParams,
        cutoff: CutoffFn = CutoffFn(),
        reset: bool = True,
        pull_response: bool = True,
        ids_per_host: int = 1,
    ):
        self.params = params
        self.cutoff = cutoff
        self.reset = reset
        self.pull_response = pull_response
        self.ids_per_host = ids_per_host
        self._thr, self._usable = _thresholds(cutoff, params.L)
        self.owned = self._owned_mask(host_ids)
        if reset:
            self.counters = np.where(self.owned, 0, INF).astype(COUNTER_DTYPE)
        else:
            self.bits = self.owned.copy()

    def _owned_mask(self, host_ids) -> np.ndarray:
        owned = np.zeros((len(host_ids),) + self.params.shape, dtype=bool)
        for slot, ids in enumerate(host_ids):
            for n, k in _owned_positions(ids, self.params):
                owned[slot, n, k] = True
        return owned

    def __len__(self):
        return len(self.owned)

    @property
    def data(self) -> np.ndarray:
        return self.counters if self.reset else self.bits

    def add_hosts(self, host_ids) -> None:
        owned = self._owned_mask(host_ids)
        self.owned = np.concatenate([self.owned, owned])
        if self.reset:
            fresh = np.where(owned, 0, INF).astype(COUNTER_DTYPE)
            self.counters = np.concatenate([self.counters, fresh])
        else:
            self.bits = np.concatenate([self.bits, owned])

    def remove_hosts(self, slots: np.ndarray) -> None:
        self.owned[slots] = False
        if self.reset:
            self.counters[slots] = INF
        else:
            self.bits[slots] = False

    def state(self, slot: int) -> CountingHostState:
        owned = tuple(zip(*(x.tolist() for x in np.nonzero(self.owned[slot]))))
        return CountingHostState(owned, self.counters[slot].copy(), self.params, self.cutoff, self.ids_per_host)

    def step(self, senders: np.ndarray, peer: np.ndarray) -> None:
        """One round: every sender pushes to ``peer`` (-1 for none); peers answer if ``pull_response``."""
        if self.reset:
            sent = age_counters(self.counters)
            sent[self.owned] = 0
            combine = np.minimum
        else:
            sent = self.bits
            combine = np.logical_or
        new = sent.copy()
        has = peer >= 0
        src, dst = senders[has], peer[has]
        # a receiver may be pushed to by several senders; merge in layers
        # so each fancy-indexed update touches distinct receivers
        order = np.argsort(dst, kind="stable")
        src, dst = src[order], dst[order]
        if len(dst):
            starts = np.r_[0, np.flatnonzero(np.diff(dst)) + 1]
            rank = np.arange(len(dst)) - np.repeat(starts, np.diff(np.r_[starts, len(dst)]))
            for r in range(int(rank.max()) + 1):
                sel = rank == r
                new[dst[sel]] = combine(new[dst[sel]], sent[src[sel]])
            if self.pull_response:
                new[src] = combine(new[src], sent[dst])
        if self.reset:
            self.counters = new
        else:
            self.bits = new

    def live_bits(self) -> np.ndarray:
        if not self.reset:
            return self.bits
        return (self.counters <= self._thr) & self._usable

    def estimates(self) -> np.ndarray:
        runs = run_lengths(self.live_bits())
        return estimate_from_runs(runs, self.params) / self.ids_per_host
