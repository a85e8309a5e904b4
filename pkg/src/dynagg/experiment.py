"""Wire configs to worlds, run seeds, write CSV series, calibrate the cutoff."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .counting import INF
from .metrics import aggregate_seeds, global_record, group_records, write_series_csv
from .sim_env import ContactTable, Grid, Trace, TraceParams, Uniform, World, groups_at, read_trace, synth_trace
from .sim_env.world import VALUES, substream

log = logging.getLogger(__name__)


class NotConverged(RuntimeError):
    pass


def synth_params(cfg: ExperimentConfig) -> TraceParams:
    return TraceParams(n_hosts=cfg.synth_hosts, duration=int(cfg.synth_days * 86400), n_places=cfg.synth_places)


def build_env(cfg: ExperimentConfig):
    if cfg.environment == "uniform":
        return Uniform(cfg.hosts)
    if cfg.environment == "grid":
        return Grid(tuple(cfg.grid), cfg.walk)
    if cfg.trace == "synth":
        contacts = synth_trace(synth_params(cfg), np.random.default_rng(cfg.synth_seed))
        n = cfg.synth_hosts
    else:
        contacts = read_trace(cfg.resolve(cfg.trace))
        n = None
    return Trace(contacts, cfg.gossip_period, n_hosts=n)


def initial_values(cfg: ExperimentConfig, seed: int, n: int) -> np.ndarray:
    if cfg.values == "uniform":
        return substream(seed, VALUES, 0).uniform(cfg.value_lo, cfg.value_hi, n)
    if cfg.values == "constant":
        return np.full(n, cfg.value_const)
    text = cfg.resolve(cfg.value_file).read_text()
    vals = np.array([float(x) for x in text.split() if x.strip()])
    if len(vals) != n:
        raise ConfigError("value_file", f"has {len(vals)} values for {n} hosts")
    return vals


def build_world(cfg: ExperimentConfig, seed: int, lam: float | None = None, env=None) -> World:
    env = env if env is not None else build_env(cfg)
    lam = cfg.lambdas[0] if lam is None else lam
    params = cfg.revert_params(lam) if cfg.averaging else None
    baseline = (
        cfg.protocol == "push-sum" and params.mode == "push" and params.self_parcel and params.parcels == 2
    )
    return World(
        env,
        initial_values(cfg, seed, env.n),
        seed=seed,
        averaging=params,
        counting=cfg.counting_spec(seed) if cfg.counting else None,
        churn=cfg.churn,
        baseline=baseline,
    )


def protocol_label(cfg: ExperimentConfig, lam: float) -> str:
    if cfg.protocol in ("push-sum-revert", "invert-average"):
        return f"{cfg.protocol}:lambda={lam:g}"
    return cfg.protocol


def run_seed(cfg: ExperimentConfig, seed: int, lam: float | None = None, env=None):
    """Run one seed; returns ``(world, records)``."""
    env = env if env is not None else build_env(cfg)
    lam = cfg.lambdas[0] if lam is None else lam
    world = build_world(cfg, seed, lam, env)
    label = protocol_label(cfg, lam)
    table = ContactTable(env.contacts) if isinstance(env, Trace) else None
    records = []

    def record(w: World):
        if w.round % cfg.sample_every:
            return
        t = env.time_of(w.round) if table is not None else float(w.round)
        rec = global_record(w, cfg.kind, label, t, cfg.centered)
        if rec is not None:
            records.append(rec)
        if table is not None and len(w.live_slots()):
            groups = groups_at(table, t, cfg.group_window, hosts=w.live_ids().tolist())
            records.extend(group_records(w, cfg.kind, label, groups, t, cfg.centered))

    record(world)
    world.run(cfg.rounds, record)
    return world, records


def _tag(cfg: ExperimentConfig, lam: float) -> str:
    return f"{cfg.name}_lam{lam:g}" if cfg.averaging and len(cfg.lambdas) > 1 else cfg.name


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Run every (lambda, seed) pair; write per-seed and seed-mean CSVs, return their paths."""
    cfg.validate()
    env = build_env(cfg)
    out_dir = cfg.resolve(cfg.out)
    written = []
    lambdas = cfg.lambdas if cfg.averaging else cfg.lambdas[:1]
    for lam in lambdas:
        per_seed = []
        header = [f"config: {line}" for line in cfg.echo()]
        for seed in cfg.seeds:
            log.info("running %s lambda=%g seed=%d", cfg.name, lam, seed)
            _, recs = run_seed(cfg, seed, lam, env)
            per_seed.append(recs)
            path = out_dir / f"{_tag(cfg, lam)}_seed{seed}.csv"
            written.append(write_series_csv(path, recs, header + [f"lambda = {lam!r}", f"seed = {seed}"]))
        path = out_dir / f"{_tag(cfg, lam)}_mean.csv"
        seeds = ",".join(map(str, cfg.seeds))
        written.append(write_series_csv(path, aggregate_seeds(per_seed),
                                        header + [f"lambda = {lam!r}", f"seeds = {seeds}"]))
    return written


@dataclass(frozen=True)
class Calibration:
    a: float
    b: float
    ks: np.ndarray
    quantiles: np.ndarray


def fit_cutoff(ks, quantiles) -> tuple[float, float]:
    """Linear upper envelope: least-squares slope (floored at 0), intercept raised to cover every point."""
    ks = np.asarray(ks, dtype=np.float64)
    q = np.asarray(quantiles, dtype=np.float64)
    if len(ks) < 2:
        raise ValueError("need at least two bit indices to fit a cutoff")
    b = max(float(np.polyfit(ks, q, 1)[0]), 0.0)
    a = float(np.max(q - b * ks))
    return a, b


def counter_quantiles(world: World, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-bit-index quantile of finite counters at indices some live host sources.

    Raises :class:`NotConverged` if any live host still holds an infinite
    counter at a sourced index.
    """
    pop = world.counting
    live = world.live_slots()
    sourced = pop.owned[live].any(axis=0)
    c = pop.counters[live]
    if np.any(c[:, sourced] == INF):
        missing = int(np.sum(c[:, sourced] == INF))
        raise NotConverged(f"{missing} sourced counters have not reached every host after {world.round} rounds")
    ks, qs = [], []
    for k in range(c.shape[2]):
        col = sourced[:, k]
        if col.any():
            ks.append(k)
            qs.append(np.quantile(c[:, col, k], q, method="inverted_cdf"))
    return np.array(ks), np.array(qs, dtype=np.float64)


def calibrate_cutoff(cfg: ExperimentConfig, seed: int | None = None) -> Calibration:
    """Run Count-Sketch-Reset to convergence and fit ``f(k) = a + b k`` to the counter quantiles."""
    if cfg.environment != "uniform":
        raise ConfigError("environment", "cutoff calibration runs in the uniform environment")
    cfg = replace(cfg, protocol="count-sketch-reset", churn=()).validate()
    world = build_world(cfg, cfg.seeds[0] if seed is None else seed)
    world.run(cfg.rounds)
    ks, qs = counter_quantiles(world, cfg.quantile)
    a, b = fit_cutoff(ks, qs)
    return Calibration(a, b, ks, qs)
