"""Experiment configuration: a flat ``key = value`` file plus overrides.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
``lambda`` may list several comma-separated values, which runs a sweep.
Churn is a ``;``-separated list of events, each one of::

    ROUND:remove:random:FRACTION
    ROUND:remove:top:FRACTION
    ROUND:remove:ids:ID,ID,...
    ROUND:add:ID=VALUE,ID=VALUE,...
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .averaging import PUSH, PUSHPULL, RevertParams
from .counting import CutoffFn
from .fm_sketch import DIVIDE, MULTIPLY, PHI, SketchParams
from .sim_env.world import ADD, IDS, RANDOM, REMOVE, TOP, ChurnEvent, CountingSpec

PROTOCOLS = ("push-sum", "push-sum-revert", "sketch-count", "count-sketch-reset", "invert-average")
ENVIRONMENTS = ("uniform", "grid", "trace")
VALUE_DISTS = ("uniform", "constant", "file")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config field {key!r}: {message}")
        self.key = key


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_bool(s: str):
    return None if s.strip().lower() == "auto" else _bool(s)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _dims(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.lower().split("x"))


def parse_churn(s: str) -> tuple[ChurnEvent, ...]:
    events = []
    for item in s.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        rnd, action = int(parts[0]), parts[1].strip()
        if action == REMOVE:
            selector = parts[2].strip()
            if selector in (RANDOM, TOP):
                events.append(ChurnEvent(rnd, REMOVE, selector, fraction=float(parts[3])))
            elif selector == IDS:
                events.append(ChurnEvent(rnd, REMOVE, IDS, ids=_ints(parts[3])))
            else:
                raise ValueError(f"unknown selector {selector!r}")
        elif action == ADD:
            pairs = [p.split("=") for p in parts[2].split(",") if p.strip()]
            events.append(ChurnEvent(rnd, ADD, IDS, ids=tuple(int(a) for a, _ in pairs),
                                     values=tuple(float(b) for _, b in pairs)))
        else:
            raise ValueError(f"unknown action {action!r}")
    return tuple(events)


def format_churn(events) -> str:
    out = []
    for e in events:
        if e.action == ADD:
            out.append(f"{e.round}:add:" + ",".join(f"{i}={v!r}" for i, v in zip(e.ids, e.values)))
        elif e.selector == IDS:
            out.append(f"{e.round}:remove:ids:" + ",".join(map(str, e.ids)))
        else:
            out.append(f"{e.round}:remove:{e.selector}:{e.fraction!r}")
    return "; ".join(out)


# key -> (attribute, parser)
_KEYS = {
    "name": ("name", str),
    "protocol": ("protocol", str),
    "environment": ("environment", str),
    "hosts": ("hosts", int),
    "grid": ("grid", _dims),
    "walk": ("walk", _bool),
    "trace": ("trace", str),
    "gossip_period": ("gossip_period", float),
    "group_window": ("group_window", float),
    "synth_hosts": ("synth_hosts", int),
    "synth_days": ("synth_days", float),
    "synth_places": ("synth_places", int),
    "synth_seed": ("synth_seed", int),
    "values": ("values", str),
    "value_lo": ("value_lo", float),
    "value_hi": ("value_hi", float),
    "value_const": ("value_const", float),
    "value_file": ("value_file", str),
    "lambda": ("lambdas", _floats),
    "parcels": ("parcels", int),
    "self_parcel": ("self_parcel", _opt_bool),
    "window": ("window", int),
    "mode": ("mode", str),
    "indegree_scaled": ("indegree_scaled", _bool),
    "bins": ("bins", int),
    "bits": ("bits", int),
    "phi": ("phi", float),
    "calibration": ("calibration", str),
    "cutoff_a": ("cutoff_a", float),
    "cutoff_b": ("cutoff_b", float),
    "pull_response": ("pull_response", _bool),
    "ids_per_host": ("ids_per_host", int),
    "insert_values": ("insert_values", _bool),
    "churn": ("churn", parse_churn),
    "rounds": ("rounds", int),
    "seeds": ("seeds", _ints),
    "out": ("out", str),
    "sample_every": ("sample_every", int),
    "centered": ("centered", _bool),
    "quantile": ("quantile", float),
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    protocol: str = "push-sum-revert"
    environment: str = "uniform"
    hosts: int = 10_000
    grid: tuple[int, ...] = (32, 32)
    walk: bool = True
    trace: str = "synth"
    gossip_period: float = 30.0
    group_window: float = 600.0
    synth_hosts: int = 41
    synth_days: float = 3.0
    synth_places: int = 8
    synth_seed: int = 0
    values: str = "uniform"
    value_lo: float = 0.0
    value_hi: float = 100.0
    value_const: float = 1.0
    value_file: str = ""
    lambdas: tuple[float, ...] = (0.0,)
    parcels: int = 4
    self_parcel: bool | None = None
    window: int = 3
    mode: str = PUSH
    indegree_scaled: bool = False
    bins: int = 64
    bits: int = 32
    phi: float = PHI
    calibration: str = DIVIDE
    cutoff_a: float = 7.0
    cutoff_b: float = 0.25
    pull_response: bool = True
    ids_per_host: int = 1
    insert_values: bool = False
    churn: tuple[ChurnEvent, ...] = ()
    rounds: int = 60
    seeds: tuple[int, ...] = (1,)
    out: str = "results"
    sample_every: int = 1
    centered: bool = False
    quantile: float = 0.999
    base_dir: str = field(default=".", compare=False)

    # -- derived ---------------------------------------------------------
    @property
    def averaging(self) -> bool:
        return self.protocol in ("push-sum", "push-sum-revert", "invert-average")

    @property
    def counting(self) -> bool:
        return self.protocol in ("sketch-count", "count-sketch-reset", "invert-average")

    @property
    def kind(self) -> str:
        if self.protocol == "invert-average" or (self.counting and self.insert_values):
            return "sum"
        return "average" if self.averaging else "count"

    @property
    def uses_self_parcel(self) -> bool:
        if self.self_parcel is not None:
            return self.self_parcel
        return self.mode == PUSHPULL or self.parcels == 2

    def revert_params(self, lam: float) -> RevertParams:
        if self.protocol == "push-sum":
            lam = 0.0
        return RevertParams(
            lam=lam,
            parcels=self.parcels,
            self_parcel=self.uses_self_parcel,
            window_len=self.window,
            mode=self.mode,
            indegree_scaled=self.indegree_scaled,
        )

    def sketch_params(self, seed: int) -> SketchParams:
        return SketchParams(self.bins, self.bits, self.phi, self.calibration, hash_seed=seed)

    def counting_spec(self, seed: int) -> CountingSpec:
        return CountingSpec(
            self.sketch_params(seed),
            CutoffFn(self.cutoff_a, self.cutoff_b),
            reset=self.protocol != "sketch-count",
            pull_response=self.pull_response,
            ids_per_host=self.ids_per_host,
            insert_values=self.insert_values,
        )

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> "ExperimentConfig":
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(key, msg)

        need(self.protocol in PROTOCOLS, "protocol", f"must be one of {', '.join(PROTOCOLS)}")
        need(self.environment in ENVIRONMENTS, "environment", f"must be one of {', '.join(ENVIRONMENTS)}")
        need(self.hosts >= 1, "hosts", "must be >= 1")
        need(self.values in VALUE_DISTS, "values", f"must be one of {', '.join(VALUE_DISTS)}")
        need(self.value_lo < self.value_hi or self.values != "uniform", "value_hi", "must exceed value_lo")
        need(self.values != "file" or self.value_file, "value_file", "required when values = file")
        need(len(self.lambdas) >= 1, "lambda", "needs at least one value")
        need(all(0 <= x <= 1 for x in self.lambdas), "lambda", "must be in [0, 1]")
        need(self.mode in (PUSH, PUSHPULL), "mode", f"must be {PUSH} or {PUSHPULL}")
        need(self.parcels >= 1, "parcels", "must be >= 1")
        need(self.window >= 1, "window", "must be >= 1")
        need(self.bins >= 1, "bins", "must be >= 1")
        need(1 <= self.bits <= 32, "bits", "must be in [1, 32]")
        need(0 < self.phi < 1, "phi", "must be in (0, 1)")
        need(self.calibration in (MULTIPLY, DIVIDE), "calibration", f"must be {MULTIPLY} or {DIVIDE}")
        need(self.cutoff_b >= 0, "cutoff_b", "must be >= 0 (cutoff nondecreasing in k)")
        need(self.ids_per_host >= 1, "ids_per_host", "must be >= 1")
        need(self.rounds >= 0, "rounds", "must be >= 0")
        need(len(self.seeds) >= 1, "seeds", "needs at least one seed")
        need(self.sample_every >= 1, "sample_every", "must be >= 1")
        need(0 < self.quantile < 1, "quantile", "must be in (0, 1)")
        need(self.gossip_period > 0, "gossip_period", "must be positive")
        need(self.group_window > 0, "group_window", "must be positive")
        if self.environment == "grid":
            need(len(self.grid) >= 1 and all(d >= 1 for d in self.grid) and int(np.prod(self.grid)) >= 2,
                 "grid", "needs at least two cells, e.g. 32x32")
        if self.protocol == "invert-average":
            need(not self.insert_values, "insert_values", "not used with invert-average")
        if self.counting and self.insert_values:
            need(self.ids_per_host == 1, "ids_per_host", "must be 1 when insert_values is on")
        if self.averaging:
            try:
                self.revert_params(self.lambdas[0])
            except ValueError as exc:
                raise ConfigError("mode", str(exc)) from None
        return self

    def echo(self) -> list[str]:
        """Every resolved key as ``key = value`` lines, re-parseable by :func:`parse_config`."""
        out = []
        for key, (attr, _) in _KEYS.items():
            v = getattr(self, attr)
            if attr == "churn":
                v = format_churn(v)
            elif attr in ("lambdas", "seeds"):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif attr == "grid":
                v = "x".join(map(str, v))
            elif attr == "self_parcel" and v is None:
                v = "auto"
            out.append(f"{key} = {v}")
        return out


def parse_config(text: str, base: ExperimentConfig | None = None, base_dir: str = ".") -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    updates: dict[str, Any] = {"base_dir": base_dir}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        updates.update(_parse_one(key, value))
    return replace(cfg, **updates)


def _parse_one(key: str, value: str) -> dict[str, Any]:
    if key not in _KEYS:
        raise ConfigError(key, "unknown key")
    attr, parser = _KEYS[key]
    try:
        return {attr: parser(value)}
    except (ValueError, IndexError) as exc:
        raise ConfigError(key, f"cannot parse {value!r}: {exc}") from None


def with_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    updates = {}
    for key, value in overrides.items():
        if value is not None:
            updates.update(_parse_one(key, str(value)))
    return replace(cfg, **updates)


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("dynagg").joinpath("presets").iterdir()
                  if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    res = resources.files("dynagg").joinpath("presets", f"{name}.cfg")
    if not res.is_file():
        raise ConfigError("preset", f"no preset named {name!r}")
    return res.read_text()


def load_config(source: str) -> ExperimentConfig:
    """Read a config file, or a packaged preset when ``source`` names one."""
    path = Path(source)
    if path.is_file():
        return parse_config(path.read_text(), base_dir=str(path.parent))
    name = source[len("preset:"):] if source.startswith("preset:") else source
    if name in preset_names():
        return parse_config(preset_text(name))
    raise ConfigError("config", f"no such file or preset: {source!r}")
