"""Round-based simulation engine.

A round has two phases.  First every live host builds its outgoing messages
from its round-start state (pull responses included).  Then all deliveries
land at once.  The round counter advances and any churn scheduled for the
new round fires, so an event at round 20 removes hosts after twenty full
rounds of gossip and before the 21st.

Randomness comes from one master seed.  Each (purpose, round) pair gets its
own substream, and within it hosts draw in ascending slot order, so
trajectories do not depend on processing order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..averaging import PUSHPULL, AveragingPopulation, RevertParams, push_sum_step
from ..counting import CountingPopulation, CutoffFn
from ..fm_sketch import SketchParams, identifiers_for_value
from .environments import Grid, Trace

PEER = 1
PARCEL = 100
CHURN = 2
VALUES = 3

REMOVE = "remove"
ADD = "add"
RANDOM = "random"
TOP = "top"
IDS = "ids"


def substream(seed: int, purpose: int, round: int) -> np.random.Generator:
    return np.random.default_rng([seed, purpose, round])


class ChurnError(ValueError):
    pass


@dataclass(frozen=True)
class ChurnEvent:
    round: int
    action: str = REMOVE
    selector: str = RANDOM
    fraction: float | None = None
    ids: tuple[int, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.round < 0:
            raise ValueError("churn round must be nonnegative")
        if self.action not in (REMOVE, ADD):
            raise ValueError(f"unknown churn action {self.action!r}")
        if self.selector not in (RANDOM, TOP, IDS):
            raise ValueError(f"unknown churn selector {self.selector!r}")
        if self.selector in (RANDOM, TOP):
            if self.fraction is None or not 0 < self.fraction <= 1:
                raise ValueError(f"churn fraction must be in (0, 1], got {self.fraction}")
            if self.action == ADD:
                raise ValueError("joins must name explicit ids and values")
        if self.action == ADD and len(self.ids) != len(self.values):
            raise ValueError("joins need one value per id")


@dataclass(frozen=True)
class CountingSpec:
    params: SketchParams = SketchParams()
    cutoff: CutoffFn = CutoffFn()
    reset: bool = True
    pull_response: bool = True
    ids_per_host: int = 1
    insert_values: bool = False

    def identifiers(self, host: int, v0: float) -> list[int]:
        if self.insert_values:
            if v0 < 0:
                raise ValueError(f"host {host}: cannot insert a negative value")
            return identifiers_for_value(host, int(round(v0)))
        return identifiers_for_value(host, self.ids_per_host)


class World:
    """Full simulation state.

    ``averaging`` and ``counting`` are optional; a world running
    Invert-Average carries both and they share each round's peer draw.
    ``baseline`` runs the textbook Push-Sum round instead of the revert
    machinery (push mode, two parcels).
    """

    def __init__(
        self,
        env,
        values: Sequence[float],
        *,
        seed: int = 0,
        averaging: RevertParams | None = None,
        counting: CountingSpec | None = None,
        churn: Sequence[ChurnEvent] = (),
        baseline: bool = False,
    ):
        n = len(values)
        if n != env.n:
            raise ValueError(f"environment has {env.n} hosts but {n} values were given")
        if baseline and (averaging is None or averaging.mode == PUSHPULL):
            raise ValueError("baseline Push-Sum runs in push mode only")
        self.env = env
        self.seed = seed
        self.round = 0
        self.ids = np.arange(n, dtype=np.int64)
        self.alive = np.ones(n, dtype=bool)
        self.v0 = np.asarray(values, dtype=np.float64).copy()
        self.revert_params = averaging
        self.counting_spec = counting
        self.baseline = baseline
        self.averaging = AveragingPopulation(self.v0, averaging) if averaging else None
        self.counting = None
        if counting:
            self.counting = CountingPopulation(
                [counting.identifiers(int(h), v) for h, v in zip(self.ids, self.v0)],
                counting.params,
                counting.cutoff,
                reset=counting.reset,
                pull_response=counting.pull_response,
                ids_per_host=counting.ids_per_host,
            )
        self.churn = sorted(churn, key=lambda e: e.round)
        self._slot = {int(h): i for i, h in enumerate(self.ids)}
        self.removed_at: dict[int, int] = {}
        self._fire_churn()

    # -- views -------------------------------------------------------------
    def live_slots(self) -> np.ndarray:
        return np.flatnonzero(self.alive)

    def live_ids(self) -> np.ndarray:
        return self.ids[self.alive]

    def slot_of(self, host: int) -> int:
        return self._slot[host]

    def averaging_state(self, host: int):
        return self.averaging.state(self.slot_of(host), host)

    def counting_state(self, host: int):
        return self.counting.state(self.slot_of(host))

    def estimates(self, kind: str) -> np.ndarray:
        """Per-slot estimates for ``average``, ``count`` or ``sum``."""
        if kind == "average":
            return self.averaging.estimates()
        if kind == "count":
            return self.counting.estimates()
        if kind == "sum":
            if self.counting_spec and self.counting_spec.insert_values:
                return self.counting.estimates()
            return self.averaging.estimates() * self.counting.estimates()
        raise ValueError(f"unknown aggregate {kind!r}")

    # -- dynamics ----------------------------------------------------------
    def peers(self, live: np.ndarray, purpose: int = PEER) -> np.ndarray:
        rng = substream(self.seed, purpose, self.round)
        return self.env.peers(live, self.alive, self.round, rng)

    def step(self) -> None:
        live = self.live_slots()
        if len(live):
            peer = self.peers(live)
            if self.averaging is not None:
                self._step_averaging(live, peer)
            if self.counting is not None:
                self.counting.step(live, peer)
        self.round += 1
        self._fire_churn()

    def run(self, rounds: int, callback=None) -> None:
        for _ in range(rounds):
            self.step()
            if callback is not None:
                callback(self)

    def _step_averaging(self, live, peer) -> None:
        pop, p = self.averaging, self.revert_params
        if self.baseline:
            pop.w, pop.v = push_sum_step(pop.w, pop.v, live, peer)
            return
        if p.mode == PUSHPULL:
            pop.step_pushpull(live, peer)
            return
        n_away = p.parcels - 1 if p.self_parcel else p.parcels
        cols = [peer] + [self.peers(live, PARCEL + j) for j in range(1, n_away)]
        dest = np.stack(cols, axis=1)
        dest = np.where(dest >= 0, dest, live[:, None])
        if p.self_parcel:
            dest = np.concatenate([dest, live[:, None]], axis=1)
        pop.step_push(live, dest)

    def _fire_churn(self) -> None:
        while self.churn and self.churn[0].round <= self.round:
            event = self.churn.pop(0)
            if event.round == self.round:
                apply_churn(self, event)

    def total_mass(self) -> tuple[float, float]:
        return self.averaging.total_mass()


def select_for_removal(world: World, event: ChurnEvent) -> np.ndarray:
    live = world.live_slots()
    if event.selector == IDS:
        slots = [world._slot[h] for h in event.ids if h in world._slot]
        slots = np.array([s for s in slots if world.alive[s]], dtype=np.int64)
    else:
        k = math.ceil(event.fraction * len(live))
        if event.selector == RANDOM:
            rng = substream(world.seed, CHURN, event.round)
            slots = np.sort(rng.permutation(live)[:k])
        else:
            # largest initial value first, ties to the lower host id
            order = np.lexsort((world.ids[live], -world.v0[live]))
            slots = np.sort(live[order[:k]])
    if len(slots) == 0:
        raise ChurnError(f"churn at round {event.round} matches no live hosts")
    return slots


def apply_churn(world: World, event: ChurnEvent) -> World:
    """Apply one churn event in place (and return the world)."""
    if event.round != world.round:
        raise ChurnError(f"event for round {event.round} applied at round {world.round}")
    if event.action == REMOVE:
        slots = select_for_removal(world, event)
        world.alive[slots] = False
        if world.averaging is not None:
            world.averaging.remove_hosts(slots)
        if world.counting is not None:
            world.counting.remove_hosts(slots)
        for s in slots.tolist():
            world.removed_at[int(world.ids[s])] = world.round
        return world
    if isinstance(world.env, Grid):
        raise ChurnError("grid environments have a fixed host set")
    new_ids = [h for h in event.ids if h not in world._slot]
    if len(new_ids) != len(event.ids):
        raise ChurnError("join names an id that already exists")
    if isinstance(world.env, Trace) and any(h != len(world.ids) + i for i, h in enumerate(new_ids)):
        raise ChurnError("trace joins must use the next consecutive host ids")
    values = np.asarray(event.values, dtype=np.float64)
    base = len(world.ids)
    world.ids = np.concatenate([world.ids, np.asarray(new_ids, dtype=np.int64)])
    world.alive = np.concatenate([world.alive, np.ones(len(new_ids), dtype=bool)])
    world.v0 = np.concatenate([world.v0, values])
    for i, h in enumerate(new_ids):
        world._slot[h] = base + i
    if world.averaging is not None:
        world.averaging.add_hosts(values)
    if world.counting is not None:
        world.counting.add_hosts([world.counting_spec.identifiers(h, v) for h, v in zip(new_ids, values)])
    return world


def step_round(world: World) -> World:
    world.step()
    return world
