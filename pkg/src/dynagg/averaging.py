"""Push-Sum and Push-Sum-Revert averaging.

Two layers live here.  The per-host functions (``revert``, ``outgoing``,
``apply_received``, ``estimate``) are small pure transitions on an
:class:`AveragingHostState`; they define the protocol and are what the
tests reason about.  :class:`AveragingPopulation` applies the same
transitions to every host at once with numpy and is what the simulator
drives.  ``tests/reference_engine.py`` checks that the two agree.

Modes
-----
``push``
    Each host reverts its mass and sends ``parcels`` equal parcels.  With
    ``self_parcel`` one of them stays home and the estimate is ``v / w``
    (the classic protocol).  Without it every parcel leaves the host
    (Full-Transfer) and the estimate is taken over the receipt window.
``pushpull``
    Each host exchanges with the peer it picked and with every host that
    picked it.  A host with ``d`` partners splits its mass into ``d + 1``
    parcels, keeps one and hands one to each partner.  For an isolated pair
    this is exactly the midpoint exchange of :func:`pushpull_exchange`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

PUSH = "push"
PUSHPULL = "pushpull"


class NoEstimate(ValueError):
    """Raised when a host has never held any weight to divide by."""


@dataclass(frozen=True)
class Mass:
    w: float
    v: float

    def __add__(self, other: "Mass") -> "Mass":
        return Mass(self.w + other.w, self.v + other.v)

    def scaled(self, f: float) -> "Mass":
        return Mass(self.w * f, self.v * f)


ZERO = Mass(0.0, 0.0)


@dataclass(frozen=True)
class RevertParams:
    lam: float = 0.0
    parcels: int = 4
    self_parcel: bool = False
    window_len: int = 3
    mode: str = PUSH
    indegree_scaled: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.parcels < 1:
            raise ValueError(f"parcels must be >= 1, got {self.parcels}")
        if self.window_len < 1:
            raise ValueError(f"window length must be >= 1, got {self.window_len}")
        if self.mode not in (PUSH, PUSHPULL):
            raise ValueError(f"mode must be {PUSH!r} or {PUSHPULL!r}, got {self.mode!r}")
        if self.mode == PUSHPULL and not self.self_parcel:
            raise ValueError("pushpull exchanges always keep a parcel at home; set self_parcel")
        if self.indegree_scaled and self.mode != PUSH:
            raise ValueError("indegree-scaled reversion is defined for push mode only")
        if self.self_parcel and self.mode == PUSH and self.parcels < 2:
            raise ValueError("push with a self parcel needs at least 2 parcels")

    @classmethod
    def classic(cls, lam: float = 0.0, mode: str = PUSH) -> "RevertParams":
        """Two parcels, one kept at home; ``lam=0`` is plain Push-Sum."""
        return cls(lam=lam, parcels=2, self_parcel=True, window_len=1, mode=mode)

    @classmethod
    def full_transfer(cls, lam: float, parcels: int = 4, window_len: int = 3) -> "RevertParams":
        return cls(lam=lam, parcels=parcels, self_parcel=False, window_len=window_len)

    @property
    def windowed(self) -> bool:
        return not self.self_parcel


@dataclass(frozen=True)
class AveragingHostState:
    host: int
    v0: float
    current: Mass
    params: RevertParams
    window: tuple[Mass, ...] = field(default=())

    @classmethod
    def initial(cls, host: int, v0: float, params: RevertParams) -> "AveragingHostState":
        m = Mass(1.0, float(v0))
        # Full-Transfer hosts start with their own mass in the window so the
        # estimate is defined from round 0.
        window = (m,) if params.windowed else ()
        return cls(host, float(v0), m, params, window)


def revert(mass: Mass, v0: float, lam: float) -> Mass:
    return Mass(lam + (1.0 - lam) * mass.w, lam * v0 + (1.0 - lam) * mass.v)


def split(mass: Mass, n: int) -> list[Mass]:
    """``n`` equal parcels; the last one takes the rounding residue."""
    part = Mass(mass.w / n, mass.v / n)
    last = Mass(mass.w - (n - 1) * part.w, mass.v - (n - 1) * part.v)
    return [part] * (n - 1) + [last]


def _exported_mass(state: AveragingHostState) -> Mass:
    if state.params.indegree_scaled:
        return state.current
    return revert(state.current, state.v0, state.params.lam)


def send_to(state: AveragingHostState, destinations: Sequence[int]):
    """Split the exported mass over ``destinations`` (in order).

    Returns ``(messages, new_state)`` where the new state holds zero mass
    until its receipts are applied.
    """
    parcels = split(_exported_mass(state), len(destinations))
    messages = list(zip(destinations, parcels))
    return messages, replace(state, current=ZERO)


def outgoing(state: AveragingHostState, peers: Sequence[int], rng: np.random.Generator):
    """Produce this round's messages.

    In push mode the non-home parcels go to peers drawn independently (with
    replacement) from ``peers``; if ``peers`` is empty they stay home.  In
    pushpull mode ``peers`` is the full partner list for the round (the
    chosen peer plus every requester) and each partner receives one parcel.
    """
    p = state.params
    if p.mode == PUSHPULL:
        destinations = list(peers) + [state.host]
    else:
        n_away = p.parcels - 1 if p.self_parcel else p.parcels
        if len(peers) == 0:
            drawn = [state.host] * n_away
        else:
            drawn = [peers[i] for i in rng.integers(0, len(peers), size=n_away)]
        destinations = drawn + ([state.host] if p.self_parcel else [])
    return send_to(state, destinations)


def apply_received(state: AveragingHostState, received: Sequence[Mass]) -> AveragingHostState:
    total = ZERO
    for m in received:
        total = total + m
    p = state.params
    if p.indegree_scaled and received:
        # lambda/N of the initial mass per message replaces the one-shot revert;
        # with N=2 that is lambda/2 per message, lambda per round on average
        bump = p.lam / p.parcels * len(received)
        total = Mass((1.0 - p.lam) * total.w + bump, (1.0 - p.lam) * total.v + bump * state.v0)
    window = state.window
    if total.w > 0:
        window = (window + (total,))[-p.window_len:]
    return replace(state, current=total, window=window)


def estimate(state: AveragingHostState) -> float:
    if state.params.windowed:
        w = sum(m.w for m in state.window)
        v = sum(m.v for m in state.window)
    else:
        w, v = state.current.w, state.current.v
    if w <= 0:
        raise NoEstimate(f"host {state.host} holds no weight")
    return v / w


def pushpull_exchange(a: Mass, b: Mass) -> tuple[Mass, Mass]:
    mid = Mass((a.w + b.w) / 2, (a.v + b.v) / 2)
    return mid, mid


class AveragingPopulation:
    """Vectorised averaging state for every host slot in a world.

    Dead slots hold zero mass and are never addressed by the engine.
    """

    def __init__(self, v0: np.ndarray, params: RevertParams):
        self.params = params
        self.v0 = np.asarray(v0, dtype=np.float64).copy()
        n = len(self.v0)
        self.w = np.ones(n)
        self.v = self.v0.copy()
        T = params.window_len
        self.win_w = np.zeros((T, n))
        self.win_v = np.zeros((T, n))
        self.win_pos = np.zeros(n, dtype=np.int64)
        if params.windowed:
            self.win_w[0] = 1.0
            self.win_v[0] = self.v0
            self.win_pos[:] = 1 % T

    def __len__(self):
        return len(self.v0)

    def add_hosts(self, v0: np.ndarray) -> None:
        extra = AveragingPopulation(v0, self.params)
        self.v0 = np.concatenate([self.v0, extra.v0])
        self.w = np.concatenate([self.w, extra.w])
        self.v = np.concatenate([self.v, extra.v])
        self.win_w = np.concatenate([self.win_w, extra.win_w], axis=1)
        self.win_v = np.concatenate([self.win_v, extra.win_v], axis=1)
        self.win_pos = np.concatenate([self.win_pos, extra.win_pos])

    def remove_hosts(self, slots: np.ndarray) -> None:
        self.w[slots] = 0.0
        self.v[slots] = 0.0
        self.win_w[:, slots] = 0.0
        self.win_v[:, slots] = 0.0

    def state(self, slot: int, host: int | None = None) -> AveragingHostState:
        """Per-host view of one slot (window oldest first)."""
        T = self.params.window_len
        window = []
        for j in range(T):
            idx = (self.win_pos[slot] + j) % T
            if self.win_w[idx, slot] > 0:
                window.append(Mass(float(self.win_w[idx, slot]), float(self.win_v[idx, slot])))
        return AveragingHostState(
            slot if host is None else host,
            float(self.v0[slot]),
            Mass(float(self.w[slot]), float(self.v[slot])),
            self.params,
            tuple(window) if self.params.windowed else (),
        )

    def total_mass(self) -> tuple[float, float]:
        return float(self.w.sum()), float(self.v.sum())

    def exported(self, senders: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lam = self.params.lam
        w, v = self.w[senders], self.v[senders]
        if self.params.indegree_scaled:
            return w, v
        return lam + (1.0 - lam) * w, lam * self.v0[senders] + (1.0 - lam) * v

    def step_push(self, senders: np.ndarray, destinations: np.ndarray) -> None:
        """One push round.

        ``destinations`` has shape ``(len(senders), parcels)``; the home
        parcel, if any, is the last column and already holds the sender.
        """
        n_par = destinations.shape[1]
        ew, ev = self.exported(senders)
        pw = np.repeat((ew / n_par)[:, None], n_par, axis=1)
        pv = np.repeat((ev / n_par)[:, None], n_par, axis=1)
        pw[:, -1] = ew - (n_par - 1) * pw[:, 0]
        pv[:, -1] = ev - (n_par - 1) * pv[:, 0]
        self._deliver(destinations.ravel(), pw.ravel(), pv.ravel())

    def step_pushpull(self, senders: np.ndarray, peer: np.ndarray) -> None:
        """One pushpull round; ``peer[i]`` is the slot sender ``i`` picked, or -1."""
        n = len(self)
        has = peer >= 0
        init, resp = senders[has], peer[has]
        deg = 1 + np.bincount(init, minlength=n) + np.bincount(resp, minlength=n)
        ew, ev = self.exported(senders)
        d = deg[senders]
        part_w = np.zeros(n)
        part_v = np.zeros(n)
        part_w[senders] = ew / d
        part_v[senders] = ev / d
        home_w = ew - (d - 1) * part_w[senders]
        home_v = ev - (d - 1) * part_v[senders]
        # messages ordered by sender: pushes, pull responses, then home parcel
        src = np.concatenate([init, resp, senders])
        dst = np.concatenate([resp, init, senders])
        mw = np.concatenate([part_w[init], part_w[resp], home_w])
        mv = np.concatenate([part_v[init], part_v[resp], home_v])
        kind = np.concatenate([np.zeros(len(init)), np.ones(len(resp)), np.full(len(senders), 2)])
        order = np.lexsort((kind, src))
        self._deliver(dst[order], mw[order], mv[order])

    def _deliver(self, dst: np.ndarray, mw: np.ndarray, mv: np.ndarray) -> None:
        n = len(self)
        new_w = np.bincount(dst, weights=mw, minlength=n)
        new_v = np.bincount(dst, weights=mv, minlength=n)
        p = self.params
        if p.indegree_scaled:
            count = np.bincount(dst, minlength=n)
            bump = p.lam / p.parcels * count
            new_w = (1.0 - p.lam) * new_w + bump
            new_v = (1.0 - p.lam) * new_v + bump * self.v0
        self.w, self.v = new_w, new_v
        if p.windowed:
            got = np.flatnonzero(new_w > 0)
            pos = self.win_pos[got]
            self.win_w[pos, got] = new_w[got]
            self.win_v[pos, got] = new_v[got]
            self.win_pos[got] = (pos + 1) % p.window_len

    def estimates(self) -> np.ndarray:
        """Per-slot estimate; NaN where the host holds no weight."""
        if self.params.windowed:
            w, v = self.win_w.sum(axis=0), self.win_v.sum(axis=0)
        else:
            w, v = self.w, self.v
        out = np.full(len(self), np.nan)
        ok = w > 0
        out[ok] = v[ok] / w[ok]
        return out


def push_sum_step(w: np.ndarray, v: np.ndarray, senders: np.ndarray, peer: np.ndarray):
    """Kempe et al.'s Push-Sum round, written out independently.

    Each sender keeps half its mass and pushes half to ``peer`` (itself when
    ``peer`` is -1).  Returns the new ``(w, v)`` arrays.
    """
    n = len(w)
    target = np.where(peer >= 0, peer, senders)
    hw, hv = w[senders] / 2, v[senders] / 2
    rw = w[senders] - hw
    rv = v[senders] - hv
    dst = np.stack([target, senders], axis=1).ravel()
    new_w = np.bincount(dst, weights=np.stack([hw, rw], axis=1).ravel(), minlength=n)
    new_v = np.bincount(dst, weights=np.stack([hv, rv], axis=1).ravel(), minlength=n)
    return new_w, new_v
