"""Ground truth, per-round error statistics and CSV series export."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CSV_COLUMNS = ["round", "t", "scope", "protocol", "truth", "n_estimating", "mean_est", "rms_err", "rms_err_pct"]
GLOBAL = "global"
ALL_GROUPS = "groups"


@dataclass(frozen=True)
class SeriesRecord:
    round: int
    t: float
    scope: str
    protocol: str
    truth: float
    n_estimating: float
    mean_est: float
    rms_err: float
    rms_err_pct: float

    def row(self) -> list:
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt(x):
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return x


def truth(world, kind: str, scope: Sequence[int] | None = None) -> float:
    """Exact aggregate over the live hosts in ``scope`` (host ids; default all)."""
    if scope is None:
        v0 = world.v0[world.alive]
    else:
        slots = np.array([world.slot_of(h) for h in scope], dtype=np.int64)
        slots = slots[world.alive[slots]] if len(slots) else slots
        v0 = world.v0[slots]
    if len(v0) == 0:
        raise ValueError("truth over an empty scope")
    if kind == "average":
        return float(np.mean(v0))
    if kind == "count":
        return float(len(v0))
    if kind == "sum":
        return float(np.sum(v0))
    raise ValueError(f"unknown aggregate {kind!r}")


def stddev_from_truth(estimates: Sequence[float], truth: float, centered: bool = False) -> float:
    """RMS deviation of ``estimates`` about ``truth``.

    ``centered=True`` gives the ordinary population standard deviation about
    the sample mean instead, for sensitivity checks.
    """
    est = np.asarray(estimates, dtype=np.float64)
    if est.size == 0:
        raise ValueError("no estimates")
    ref = est.mean() if centered else truth
    return float(np.sqrt(np.mean((est - ref) ** 2)))


def make_record(round, t, scope, protocol, truth_value, estimates, centered=False) -> SeriesRecord | None:
    """Summarise one scope; hosts without an estimate (NaN) are left out.

    Returns ``None`` when nobody in the scope has an estimate.
    """
    est = np.asarray(estimates, dtype=np.float64)
    est = est[np.isfinite(est)]
    if est.size == 0:
        return None
    rms = stddev_from_truth(est, truth_value, centered)
    pct = 100.0 * rms / abs(truth_value) if truth_value != 0 else math.inf
    return SeriesRecord(int(round), float(t), str(scope), protocol, float(truth_value),
                        int(est.size), float(est.mean()), rms, pct)


def global_record(world, kind: str, protocol: str, t: float = 0.0, centered=False) -> SeriesRecord | None:
    live = world.live_slots()
    if len(live) == 0:
        return None
    est = world.estimates(kind)[live]
    return make_record(world.round, t, GLOBAL, protocol, truth(world, kind), est, centered)


def group_records(world, kind: str, protocol: str, groups, t: float = 0.0, centered=False) -> list[SeriesRecord]:
    """One record per group (scope = smallest member id) plus their RMS combination."""
    est_all = world.estimates(kind)
    out = []
    for g in groups.groups:
        slots = np.array([world.slot_of(h) for h in g], dtype=np.int64)
        slots = slots[world.alive[slots]]
        if len(slots) == 0:
            continue
        rec = make_record(world.round, t, g[0], protocol, truth(world, kind, world.ids[slots]),
                          est_all[slots], centered)
        if rec is not None:
            out.append(rec)
    if out:
        out.append(combine_groups(out, world.round, t, protocol))
    return out


def combine_groups(records: Sequence[SeriesRecord], round: int, t: float, protocol: str) -> SeriesRecord:
    """Size-weighted RMS combination; equals the statistic over the union of the groups."""
    n = np.array([r.n_estimating for r in records], dtype=np.float64)
    rms = np.array([r.rms_err for r in records])
    pct = np.array([r.rms_err_pct for r in records])
    mean = np.array([r.mean_est for r in records])
    truth_ = np.array([r.truth for r in records])
    total = n.sum()
    return SeriesRecord(
        round, t, ALL_GROUPS, protocol,
        float((n * truth_).sum() / total),
        int(total),
        float((n * mean).sum() / total),
        float(np.sqrt((n * rms**2).sum() / total)),
        float(np.sqrt((n * pct**2).sum() / total)),
    )


def aggregate_seeds(series: Sequence[Sequence[SeriesRecord]]) -> list[SeriesRecord]:
    """Mean of every numeric column across seeds, matched on (round, scope)."""
    buckets: dict[tuple[int, str], list[SeriesRecord]] = {}
    for recs in series:
        for r in recs:
            buckets.setdefault((r.round, r.scope), []).append(r)
    out = []
    for (rnd, scope), rs in buckets.items():
        out.append(SeriesRecord(
            rnd, rs[0].t, scope, rs[0].protocol,
            float(np.mean([r.truth for r in rs])),
            float(np.mean([r.n_estimating for r in rs])),
            float(np.mean([r.mean_est for r in rs])),
            float(np.mean([r.rms_err for r in rs])),
            float(np.mean([r.rms_err_pct for r in rs])),
        ))
    return sort_records(out)


def _scope_key(scope: str):
    if scope == GLOBAL:
        return (0, 0)
    if scope == ALL_GROUPS:
        return (2, 0)
    return (1, int(scope))


def sort_records(records: Iterable[SeriesRecord]) -> list[SeriesRecord]:
    return sorted(records, key=lambda r: (r.round, _scope_key(r.scope)))


def write_series_csv(path, records: Iterable[SeriesRecord], comments: Sequence[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in sort_records(records):
            w.writerow(r.row())
    return path


def read_series_csv(path) -> tuple[list[str], list[SeriesRecord]]:
    comments, rows = [], []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif line.strip():
                lines.append(line)
    reader = csv.DictReader(lines)
    for row in reader:
        rows.append(SeriesRecord(
            int(row["round"]), float(row["t"]), row["scope"], row["protocol"], float(row["truth"]),
            float(row["n_estimating"]), float(row["mean_est"]), float(row["rms_err"]),
            float(row["rms_err_pct"]),
        ))
    return comments, rows


def series(records: Iterable[SeriesRecord], scope: str = GLOBAL, column: str = "rms_err") -> np.ndarray:
    """``(round, value)`` pairs of one column for one scope, as a 2-column array."""
    pts = [(r.round, getattr(r, column)) for r in records if r.scope == scope]
    return np.array(sorted(pts), dtype=np.float64).reshape(-1, 2)
