"""Flajolet-Martin counting sketches with stochastic averaging.

A sketch is a boolean numpy array of shape ``(m, L + 1)``: one row per bin,
one column per bit index.  Every function here is pure; arrays passed in are
never modified.

Identifiers are plain Python ints.  A host that contributes ``v`` items uses
``identifiers_for_value(host, v)``, which packs the host id into the high
32 bits and the item index into the low 32 bits.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

PHI = 0.77351

# splitmix64 finalizer constants (Steele, Lea & Flood, 2014)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

MULTIPLY = "multiply"
DIVIDE = "divide"


@dataclass(frozen=True)
class SketchParams:
    """Shape and calibration of a counting sketch.

    ``calibration`` selects whether the estimator multiplies or divides by
    ``phi``.  ``DIVIDE`` is the unbiased orientation (see
    :func:`choose_calibration`); ``MULTIPLY`` reproduces the literal
    gossip-count formula and under-counts by a factor of ``phi ** 2``.
    """

    m: int = 64
    L: int = 32
    phi: float = PHI
    calibration: str = DIVIDE
    hash_seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not 1 <= self.L <= 32:
            raise ValueError(f"L must be in [1, 32], got {self.L}")
        if not 0.0 < self.phi < 1.0:
            raise ValueError(f"phi must be in (0, 1), got {self.phi}")
        if self.calibration not in (MULTIPLY, DIVIDE):
            raise ValueError(f"calibration must be {MULTIPLY!r} or {DIVIDE!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.L + 1)

    @property
    def scale(self) -> float:
        return self.phi if self.calibration == MULTIPLY else 1.0 / self.phi


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def hash64(ids, seed: int = 0) -> np.ndarray:
    """Keyed 64-bit hash of one identifier or an array of them."""
    arr = np.asarray(ids, dtype=np.uint64)
    key = _splitmix64(np.asarray([seed], dtype=np.uint64))[0]
    return _splitmix64(arr ^ key)


def rho_from_hash(h, L: int) -> np.ndarray:
    """Index of the lowest set bit among the low ``L`` bits of ``h``; ``L`` if none."""
    low = np.asarray(h, dtype=np.uint64) & np.uint64((1 << L) - 1)
    with np.errstate(over="ignore"):
        lsb = low & (~low + np.uint64(1))
    out = np.full(low.shape, L, dtype=np.int64)
    nz = low != 0
    # lsb is an exact power of two below 2**32, so float log2 is exact
    out[nz] = np.log2(lsb[nz].astype(np.float64)).astype(np.int64)
    return out


def bin_from_hash(h, m: int) -> np.ndarray:
    # high 32 bits only, disjoint from the bits rho looks at
    high = np.asarray(h, dtype=np.uint64) >> np.uint64(32)
    return ((high * np.uint64(m)) >> np.uint64(32)).astype(np.int64)


def rho(ident: int, params: SketchParams) -> int:
    return int(rho_from_hash(hash64(ident, params.hash_seed), params.L))


def bin_of(ident: int, params: SketchParams) -> int:
    return int(bin_from_hash(hash64(ident, params.hash_seed), params.m))


def positions(ids: Iterable[int], params: SketchParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``(bin_of, rho)`` for many identifiers."""
    arr = np.fromiter(ids, dtype=np.uint64) if not isinstance(ids, np.ndarray) else ids
    h = hash64(arr, params.hash_seed)
    return bin_from_hash(h, params.m), rho_from_hash(h, params.L)


def empty_sketch(params: SketchParams) -> np.ndarray:
    return np.zeros(params.shape, dtype=bool)


def _check_shape(sketch: np.ndarray, params: SketchParams) -> None:
    if sketch.shape[-2:] != params.shape:
        raise ValueError(f"sketch shape {sketch.shape} does not match params {params.shape}")


def insert(sketch: np.ndarray, ident: int, params: SketchParams) -> np.ndarray:
    _check_shape(sketch, params)
    out = sketch.copy()
    out[bin_of(ident, params), rho(ident, params)] = True
    return out


def insert_many(sketch: np.ndarray, ids: Iterable[int], params: SketchParams) -> np.ndarray:
    _check_shape(sketch, params)
    out = sketch.copy()
    bins, ks = positions(ids, params)
    out[bins, ks] = True
    return out


def sketch_of(ids: Iterable[int], params: SketchParams) -> np.ndarray:
    return insert_many(empty_sketch(params), ids, params)


def merge_or(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"cannot merge sketches of shapes {a.shape} and {b.shape}")
    return np.logical_or(a, b)


def run_lengths(bits: np.ndarray) -> np.ndarray:
    """Leading run of set bits along the last axis, for any batch shape."""
    bits = np.asarray(bits, dtype=bool)
    first_clear = np.argmin(bits, axis=-1)
    # argmin returns 0 for an all-set row too; tell it apart by its value
    full = np.take_along_axis(bits, first_clear[..., None], axis=-1)[..., 0]
    return np.where(full, bits.shape[-1], first_clear)


def run_length(row: Sequence[bool]) -> int:
    return int(run_lengths(np.asarray(row, dtype=bool)))


def estimate_from_runs(runs: np.ndarray, params: SketchParams) -> np.ndarray:
    """``m * c * 2 ** mean(R)`` where ``runs`` has the bins on its last axis."""
    return params.m * params.scale * np.exp2(np.mean(runs, axis=-1))


def estimate_count(sketch: np.ndarray, params: SketchParams):
    """Cardinality estimate.

    Accepts a single ``(m, L+1)`` sketch (returns a float) or a stack of them
    (returns an array).  Below roughly ``m`` distinct identifiers the result is
    dominated by the empty-bin floor ``m * c`` and carries no information.
    """
    _check_shape(sketch, params)
    est = estimate_from_runs(run_lengths(sketch), params)
    return float(est) if np.ndim(est) == 0 else est


def identifiers_for_value(host: int, v: int) -> list[int]:
    if v < 0:
        raise ValueError(f"value must be nonnegative, got {v}")
    if not 0 <= host < 2**31:
        raise ValueError(f"host id out of range: {host}")
    base = host << 32
    return [base | i for i in range(v)]


def host_identifier(host: int) -> int:
    return identifiers_for_value(host, 1)[0]


def choose_calibration(
    params: SketchParams,
    ns: Sequence[int] = (1_000, 10_000),
    trials: int = 20,
    seed: int = 0,
) -> str:
    """Pick the phi orientation whose mean estimate is closest to unbiased.

    Inserts ``trials`` random identifier sets of each size in ``ns`` and
    compares the mean log-ratio of estimate to truth under both orientations.
    """
    rng = np.random.default_rng(seed)
    log_bias = {MULTIPLY: [], DIVIDE: []}
    for n in ns:
        for _ in range(trials):
            ids = rng.choice(2**62, size=n, replace=False).astype(np.uint64)
            runs = run_lengths(sketch_of(ids, params))
            for flag in log_bias:
                est = estimate_from_runs(runs, replace(params, calibration=flag))
                log_bias[flag].append(np.log(float(est) / n))
    return min(log_bias, key=lambda f: abs(np.mean(log_bias[f])))
