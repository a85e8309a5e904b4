"""Deterministic round-based gossip simulation."""
from .environments import Grid, Trace, Uniform, sample_walk_distance, select_peer, walk_distance_pmf, walk_target
from .trace import (
    ContactInterval,
    ContactTable,
    GroupView,
    TraceFormatError,
    TraceParams,
    UnionFind,
    groups_at,
    parse_trace,
    read_trace,
    synth_trace,
    write_trace,
)
from .world import ChurnError, ChurnEvent, CountingSpec, World, apply_churn, step_round, substream

__all__ = [
    "ChurnError", "ChurnEvent", "ContactInterval", "ContactTable", "CountingSpec", "Grid",
    "GroupView", "Trace", "TraceFormatError", "TraceParams", "Uniform", "UnionFind", "World",
    "apply_churn", "groups_at", "parse_trace", "read_trace", "sample_walk_distance",
    "select_peer", "step_round", "substream", "synth_trace", "walk_distance_pmf",
    "walk_target", "write_trace",
]
