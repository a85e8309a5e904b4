"""Gossip environments: who may talk to whom in a given round.

Every environment exposes ``peers(live, alive, round, rng)``, returning for
each live slot (ascending) the slot it contacts this round, or -1.  Slots
are host positions in the world's arrays; for grid and trace environments a
host's slot equals its id.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .trace import ContactInterval, ContactTable


def uniform_peers(live: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(live)
    if n < 2:
        return np.full(n, -1, dtype=np.int64)
    j = rng.integers(0, n - 1, size=n)
    j += j >= np.arange(n)
    return live[j]


@dataclass(frozen=True)
class Uniform:
    """Full connectivity: any live host may be picked."""

    n: int

    def peers(self, live, alive, round, rng):
        return uniform_peers(live, rng)

    def select_one(self, host: int, live: np.ndarray, round: int, rng) -> int | None:
        others = live[live != host]
        if len(others) == 0:
            return None
        return int(others[rng.integers(len(others))])


def walk_distance_pmf(diameter: int) -> np.ndarray:
    d = np.arange(1, diameter + 1, dtype=np.float64)
    p = 1.0 / d**2
    return p / p.sum()


def sample_walk_distance(rng: np.random.Generator, size: int, diameter: int) -> np.ndarray:
    """Draw hop counts in ``[1, diameter]`` with P(d) proportional to 1/d**2."""
    cdf = np.cumsum(walk_distance_pmf(diameter))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right") + 1


@dataclass(frozen=True)
class Grid:
    """Hosts on a D-dimensional grid; slot = row-major position.

    With ``walk`` the contact is the end of a random walk whose length is
    drawn from the truncated 1/d**2 law; without it, a uniform grid neighbour.
    """

    dims: tuple[int, ...]
    walk: bool = True

    def __post_init__(self):
        if not self.dims or any(d < 1 for d in self.dims):
            raise ValueError(f"bad grid dims {self.dims}")
        if int(np.prod(self.dims)) < 2:
            raise ValueError("grid needs at least two cells")

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    @property
    def diameter(self) -> int:
        return sum(d - 1 for d in self.dims)

    def random_walk(self, start: np.ndarray, steps: np.ndarray, rng) -> np.ndarray:
        dims = np.asarray(self.dims)
        pos = np.stack(np.unravel_index(start, self.dims), axis=1)
        moves = np.concatenate([np.eye(len(dims), dtype=np.int64), -np.eye(len(dims), dtype=np.int64)])
        for s in range(int(steps.max(initial=0))):
            act = np.flatnonzero(steps > s)
            cand = pos[act, None, :] + moves[None, :, :]
            valid = np.all((cand >= 0) & (cand < dims), axis=2)
            pick = np.floor(rng.random(len(act)) * valid.sum(axis=1)).astype(np.int64)
            # index of the pick-th valid move in each row
            col = np.argmax(np.cumsum(valid, axis=1) > pick[:, None], axis=1)
            pos[act] = cand[np.arange(len(act)), col]
        return np.ravel_multi_index(tuple(pos.T), self.dims)

    def walk_targets(self, start: np.ndarray, rng) -> np.ndarray:
        if self.walk:
            steps = sample_walk_distance(rng, len(start), self.diameter)
        else:
            steps = np.ones(len(start), dtype=np.int64)
        return self.random_walk(start, steps, rng)

    def peers(self, live, alive, round, rng):
        end = self.walk_targets(live, rng)
        ok = (end != live) & alive[end]
        return np.where(ok, end, -1)

    def select_one(self, host: int, live, round, rng) -> int | None:
        alive = np.zeros(self.n, dtype=bool)
        alive[live] = True
        p = int(self.peers(np.array([host]), alive, round, rng)[0])
        return None if p < 0 else p


def walk_target(grid: Grid, host: int, rng) -> int:
    return int(grid.walk_targets(np.array([host]), rng)[0])


@dataclass
class Trace:
    """Contact-trace environment; adjacency sampled at ``round * gossip_period``."""

    contacts: Sequence[ContactInterval]
    gossip_period: float = 30.0
    n_hosts: int | None = None
    _rounds: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.gossip_period <= 0:
            raise ValueError("gossip period must be positive")
        self.table = ContactTable(self.contacts)
        if self.n_hosts is None:
            self.n_hosts = self.table.n_hosts
        per_round: dict[int, list[tuple[int, int]]] = {}
        P = self.gossip_period
        for c in self.contacts:
            lo = int(np.ceil(c.t_start / P))
            hi = int(np.ceil(c.t_end / P)) - 1
            for r in range(lo, hi + 1):
                per_round.setdefault(r, []).append((c.a, c.b))
        self._rounds = {r: np.array(e, dtype=np.int64) for r, e in per_round.items()}

    @property
    def n(self) -> int:
        return self.n_hosts

    @property
    def duration(self) -> int:
        return int(self.table.t_end.max()) if len(self.table) else 0

    def time_of(self, round: int) -> float:
        return round * self.gossip_period

    def edges(self, round: int, alive: np.ndarray | None = None) -> np.ndarray:
        e = self._rounds.get(round, np.empty((0, 2), dtype=np.int64))
        if alive is not None and len(e):
            e = e[alive[e[:, 0]] & alive[e[:, 1]]]
        return e

    def neighbours(self, host: int, round: int, alive=None) -> np.ndarray:
        e = self.edges(round, alive)
        nb = np.concatenate([e[e[:, 0] == host, 1], e[e[:, 1] == host, 0]])
        return np.unique(nb)

    def peers(self, live, alive, round, rng):
        u = rng.random(len(live))
        out = np.full(len(live), -1, dtype=np.int64)
        e = self.edges(round, alive)
        if len(e) == 0:
            return out
        directed = np.concatenate([e, e[:, ::-1]])
        directed = np.unique(directed, axis=0)  # sorted by source, then target
        src = directed[:, 0]
        start = np.searchsorted(src, live, side="left")
        count = np.searchsorted(src, live, side="right") - start
        has = count > 0
        idx = start[has] + np.floor(u[has] * count[has]).astype(np.int64)
        out[has] = directed[idx, 1]
        return out

    def select_one(self, host: int, live, round, rng) -> int | None:
        alive = np.zeros(max(self.n, int(np.max(live, initial=-1)) + 1), dtype=bool)
        alive[live] = True
        nb = self.neighbours(host, round, alive)
        if len(nb) == 0:
            return None
        return int(nb[rng.integers(len(nb))])


def select_peer(env, host: int, live: np.ndarray, round: int, rng) -> int | None:
    """Single-host peer choice; ``None`` when the host has nobody to talk to."""
    return env.select_one(host, np.asarray(live), round, rng)
