"""Contact traces: CSV I/O, proximity groups and a synthetic trace generator."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TRACE_HEADER = ["t_start", "t_end", "node_a", "node_b"]


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<trace>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class ContactInterval:
    t_start: int
    t_end: int
    a: int
    b: int

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"contact must have t_start < t_end, got {self.t_start} >= {self.t_end}")
        if self.a == self.b:
            raise ValueError(f"self-contact for host {self.a}")
        if self.a < 0 or self.b < 0:
            raise ValueError("host ids must be nonnegative")


class ContactTable:
    """Column view of a contact list for vectorised time filtering."""

    def __init__(self, contacts: Sequence[ContactInterval]):
        self.contacts = list(contacts)
        self.t_start = np.array([c.t_start for c in contacts], dtype=np.int64)
        self.t_end = np.array([c.t_end for c in contacts], dtype=np.int64)
        self.a = np.array([c.a for c in contacts], dtype=np.int64)
        self.b = np.array([c.b for c in contacts], dtype=np.int64)

    def __len__(self):
        return len(self.contacts)

    @property
    def n_hosts(self) -> int:
        if not self.contacts:
            return 0
        return int(max(self.a.max(), self.b.max())) + 1

    def edges_within(self, t: float, window: float) -> np.ndarray:
        """Edges whose interval intersects ``(t - window, t]``."""
        sel = (self.t_start <= t) & (self.t_end > t - window)
        return np.stack([self.a[sel], self.b[sel]], axis=1)


def _parse_int(field: str, name: str, line: int, source: str) -> int:
    try:
        return int(field.strip())
    except ValueError:
        raise TraceFormatError(f"{name} is not an integer: {field!r}", line, source) from None


def parse_trace(text: str, source: str = "<trace>") -> list[ContactInterval]:
    contacts = []
    header_seen = False
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if [f.strip() for f in fields] != TRACE_HEADER:
                raise TraceFormatError(f"expected header {','.join(TRACE_HEADER)}", lineno, source)
            header_seen = True
            continue
        if len(fields) != 4:
            raise TraceFormatError(f"expected 4 fields, got {len(fields)}", lineno, source)
        ts, te, a, b = (_parse_int(f, n, lineno, source) for f, n in zip(fields, TRACE_HEADER))
        try:
            contacts.append(ContactInterval(ts, te, a, b))
        except ValueError as exc:
            raise TraceFormatError(str(exc), lineno, source) from None
    if not header_seen:
        raise TraceFormatError("missing header", None, source)
    return contacts


def read_trace(path) -> list[ContactInterval]:
    path = Path(path)
    return parse_trace(path.read_text(), source=str(path))


def write_trace(path, contacts: Iterable[ContactInterval], comments: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for c in contacts:
            w.writerow([c.t_start, c.t_end, c.a, c.b])


class UnionFind:
    def __init__(self, items: Iterable[int]):
        self.parent = {x: x for x in items}
        self.size = {x: 1 for x in self.parent}

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]

    def groups(self) -> list[tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return sorted(tuple(sorted(g)) for g in out.values())


@dataclass(frozen=True)
class GroupView:
    groups: tuple[tuple[int, ...], ...]
    window: float = 600.0

    def group_of(self) -> dict[int, int]:
        """Host id -> index into ``groups``."""
        return {h: i for i, g in enumerate(self.groups) for h in g}


def groups_at(trace, t: float, window: float = 600.0, hosts: Iterable[int] | None = None) -> GroupView:
    """Connected components of the union of edges seen in ``(t - window, t]``.

    ``trace`` is a contact list or a :class:`ContactTable`.  Only ``hosts``
    take part (default: every host named in the trace); groups are sorted
    tuples, ordered by their smallest member.
    """
    if window <= 0:
        raise ValueError(f"window must be positive, got {window}")
    table = trace if isinstance(trace, ContactTable) else ContactTable(trace)
    if hosts is None:
        hosts = range(table.n_hosts)
    uf = UnionFind(hosts)
    for a, b in table.edges_within(t, window).tolist():
        if a in uf.parent and b in uf.parent:
            uf.union(a, b)
    return GroupView(tuple(uf.groups()), window)


@dataclass(frozen=True)
class TraceParams:
    """Mobility model for :func:`synth_trace`.

    Hosts spend the night at home (alone), and during the day alternate
    between travelling (alone) and dwelling at one of ``n_places`` meeting
    points picked with Zipf-like popularity.  Two hosts are in contact while
    they dwell at the same place.
    """

    n_hosts: int = 41
    duration: int = 3 * 86400
    n_places: int = 8
    dwell_mean: float = 1800.0
    travel_mean: float = 900.0
    day_start: float = 8 * 3600.0
    day_end: float = 20 * 3600.0
    popularity: float = 1.0

    def __post_init__(self):
        if self.n_hosts < 0 or self.duration <= 0 or self.n_places < 1:
            raise ValueError("need n_hosts >= 0, duration > 0, n_places >= 1")
        if self.dwell_mean <= 0 or self.travel_mean < 0:
            raise ValueError("need dwell_mean > 0 and travel_mean >= 0")
        if not 0 <= self.day_start < self.day_end <= 86400:
            raise ValueError("need 0 <= day_start < day_end <= 86400")


def _visits(p: TraceParams, rng: np.random.Generator, weights: np.ndarray):
    """One host's timeline as (place, start, end) stays, ints, merged when contiguous."""
    stays: list[list[int]] = []
    t = 0.0
    while t < p.duration:
        day = math.floor(t / 86400)
        tod = t - day * 86400
        if tod < p.day_start:
            t = day * 86400 + p.day_start
            continue
        if tod >= p.day_end:
            t = (day + 1) * 86400 + p.day_start
            continue
        close = min(day * 86400 + p.day_end, p.duration)
        t += rng.exponential(p.travel_mean) if p.travel_mean > 0 else 0.0
        if t >= close:
            continue
        place = int(rng.choice(len(weights), p=weights))
        end = min(t + rng.exponential(p.dwell_mean), close)
        s, e = int(round(t)), int(round(end))
        if e > s:
            if stays and stays[-1][0] == place and stays[-1][2] >= s:
                stays[-1][2] = max(stays[-1][2], e)
            else:
                stays.append([place, s, e])
        t = end
    return stays


def _merge_intervals(spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    spans.sort()
    out = [list(spans[0])]
    for s, e in spans[1:]:
        if s <= out[-1][1]:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return [tuple(x) for x in out]


def synth_trace(params: TraceParams, rng: np.random.Generator) -> list[ContactInterval]:
    """Clustered waypoint contact trace, deterministic for a given generator state."""
    weights = 1.0 / np.arange(1, params.n_places + 1) ** params.popularity
    weights /= weights.sum()
    by_place: dict[int, list[tuple[int, int, int]]] = {}
    for h in range(params.n_hosts):
        for place, s, e in _visits(params, rng, weights):
            by_place.setdefault(place, []).append((s, e, h))
    pair_spans: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for stays in by_place.values():
        stays.sort()
        for i, (s1, e1, h1) in enumerate(stays):
            for s2, e2, h2 in stays[i + 1:]:
                if s2 >= e1:
                    break
                if h1 == h2:
                    continue
                lo, hi = max(s1, s2), min(e1, e2)
                if hi > lo:
                    key = (min(h1, h2), max(h1, h2))
                    pair_spans.setdefault(key, []).append((lo, hi))
    contacts = [
        ContactInterval(s, e, a, b)
        for (a, b), spans in pair_spans.items()
        for s, e in _merge_intervals(spans)
    ]
    contacts.sort(key=lambda c: (c.t_start, c.a, c.b, c.t_end))
    return contacts
