import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from dynagg.averaging import PUSHPULL, RevertParams
from dynagg.sim_env import (
    ChurnError,
    ChurnEvent,
    ContactInterval,
    ContactTable,
    Grid,
    Trace,
    TraceFormatError,
    TraceParams,
    Uniform,
    World,
    apply_churn,
    groups_at,
    parse_trace,
    read_trace,
    sample_walk_distance,
    select_peer,
    synth_trace,
    walk_distance_pmf,
    write_trace,
)
from dynagg.sim_env.environments import uniform_peers

CLASSIC = RevertParams.classic(0.1, PUSHPULL)


# -- environments -------------------------------------------------------------
def test_uniform_peers_are_live_and_never_self(rng):
    live = np.array([0, 2, 3, 7, 9])
    for _ in range(50):
        p = uniform_peers(live, rng)
        assert np.all(p != live)
        assert set(p.tolist()) <= set(live.tolist())
    assert uniform_peers(np.array([4]), rng).tolist() == [-1]


def test_uniform_peer_choice_is_uniform(rng):
    live = np.arange(10)
    counts = np.zeros(10)
    for _ in range(2000):
        counts += np.bincount(uniform_peers(live, rng), minlength=10)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_select_peer(rng):
    assert select_peer(Uniform(3), 0, np.array([0]), 0, rng) is None
    assert select_peer(Uniform(3), 0, np.array([0, 2]), 0, rng) == 2


def test_walk_distance_law(rng):
    pmf = walk_distance_pmf(10)
    assert pmf.sum() == pytest.approx(1.0)
    assert pmf[0] / pmf[1] == pytest.approx(4.0)
    d = sample_walk_distance(rng, 50_000, 10)
    assert d.min() >= 1 and d.max() <= 10
    assert stats.chisquare(np.bincount(d, minlength=11)[1:], 50_000 * pmf).pvalue > 1e-3


def test_grid_walk_stays_on_grid_and_moves_at_most_steps(rng):
    g = Grid((5, 4, 3))
    start = rng.integers(0, g.n, size=500)
    steps = rng.integers(0, 6, size=500)
    end = g.random_walk(start, steps, rng)
    a = np.stack(np.unravel_index(start, g.dims), axis=1)
    b = np.stack(np.unravel_index(end, g.dims), axis=1)
    dist = np.abs(a - b).sum(axis=1)
    assert np.all(dist <= steps)
    assert np.all(dist % 2 == steps % 2)


def test_grid_neighbour_mode(rng):
    g = Grid((6, 6), walk=False)
    live = np.arange(g.n)
    p = g.peers(live, np.ones(g.n, dtype=bool), 0, rng)
    a = np.stack(np.unravel_index(live, g.dims), axis=1)
    b = np.stack(np.unravel_index(p, g.dims), axis=1)
    assert np.all(np.abs(a - b).sum(axis=1) == 1)


def test_grid_dead_endpoint_means_no_contact(rng):
    g = Grid((2, 1), walk=False)
    alive = np.array([True, False])
    assert g.peers(np.array([0]), alive, 0, rng).tolist() == [-1]
    with pytest.raises(ValueError):
        Grid((1,))


def _contacts():
    return [
        ContactInterval(0, 100, 0, 1),
        ContactInterval(50, 200, 1, 2),
        ContactInterval(300, 330, 3, 4),
    ]


def test_trace_peers_follow_active_edges(rng):
    env = Trace(_contacts(), gossip_period=30, n_hosts=6)
    alive = np.ones(6, dtype=bool)
    live = np.arange(6)
    # round 2 is t = 60: edges 0-1 and 1-2 are active
    for _ in range(20):
        p = env.peers(live, alive, 2, rng)
        assert p[0] == 1 and p[2] == 1 and p[1] in (0, 2)
        assert p[3] == p[4] == p[5] == -1
    assert env.neighbours(1, 2).tolist() == [0, 2]
    assert env.neighbours(3, 10).tolist() == [4]
    assert env.neighbours(3, 11).tolist() == []
    alive[1] = False
    assert env.peers(live, alive, 2, rng).tolist() == [-1] * 6
    assert select_peer(env, 0, np.array([0, 2]), 2, rng) is None


# -- trace files --------------------------------------------------------------
def test_trace_roundtrip(tmp_path):
    path = tmp_path / "t.csv"
    write_trace(path, _contacts(), comments=["hello"])
    assert read_trace(path) == _contacts()


@pytest.mark.parametrize(
    "text,line",
    [
        ("t_start,t_end,node_a,node_b\n0,10,0,1\n5,x,1,2\n", 3),
        ("# c\nt_start,t_end,node_a,node_b\n\n10,10,0,1\n", 4),
        ("t_start,t_end,node_a,node_b\n0,10,1,1\n", 2),
        ("t_start,t_end,node_a,node_b\n0,10,1\n", 2),
        ("start,end,a,b\n", 1),
    ],
)
def test_bad_trace_reports_line(text, line):
    with pytest.raises(TraceFormatError) as err:
        parse_trace(text, source="f.csv")
    assert err.value.line == line
    assert f"f.csv:{line}:" in str(err.value)


def test_empty_trace_needs_header():
    with pytest.raises(TraceFormatError):
        parse_trace("# only a comment\n")
    assert parse_trace("t_start,t_end,node_a,node_b\n") == []


# -- proximity groups -----------------------------------------------------------
def test_groups_at_examples():
    c = _contacts()
    assert groups_at(c, 60, 30).groups == ((0, 1, 2), (3,), (4,))
    assert groups_at(c, 320, 30).groups == ((0,), (1,), (2,), (3, 4))
    # the 1-2 contact ended at 200; a 150 s window still sees it at t = 320
    assert groups_at(c, 320, 150).groups == ((0,), (1, 2), (3, 4))
    assert groups_at(c, 320, 30, hosts=[0, 3, 4, 9]).groups == ((0,), (3, 4), (9,))
    assert groups_at(c, 60, 30).group_of()[2] == 0
    with pytest.raises(ValueError):
        groups_at(c, 60, 0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 50), st.integers(1, 30), st.integers(0, 7), st.integers(0, 7)),
        max_size=15,
    ),
    st.integers(0, 80),
    st.integers(1, 20),
)
def test_groups_at_matches_flood_fill(raw, t, window):
    contacts = [(s, s + d, a, b) for s, d, a, b in raw if a != b]
    table = ContactTable([ContactInterval(*c) for c in contacts])
    got = groups_at(table, t, window, hosts=range(8)).groups
    assert list(got) == oracles.groups_at(contacts, t, window, range(8))


# -- synthetic traces ---------------------------------------------------------
def test_synth_trace_is_deterministic_and_valid():
    p = TraceParams(n_hosts=15, duration=2 * 86400, n_places=4)
    a = synth_trace(p, np.random.default_rng(3))
    b = synth_trace(p, np.random.default_rng(3))
    assert a == b
    assert a != synth_trace(p, np.random.default_rng(4))
    assert all(0 <= c.t_start < c.t_end <= p.duration for c in a)
    assert all(c.a < c.b < 15 for c in a)


def test_synth_trace_has_isolation_and_crowds():
    p = TraceParams()
    table = ContactTable(synth_trace(p, np.random.default_rng(0)))
    sizes = [max(map(len, groups_at(table, t, 600, hosts=range(41)).groups)) for t in range(0, p.duration, 1800)]
    assert min(sizes) == 1
    assert max(sizes) >= 10


# -- world ----------------------------------------------------------------------
def _world(churn=(), seed=0, n=100, env=None):
    vals = np.arange(n, dtype=float)
    return World(env or Uniform(n), vals, seed=seed, averaging=CLASSIC, churn=churn)


def test_world_is_deterministic_per_seed():
    a, b, c = _world(seed=1), _world(seed=1), _world(seed=2)
    for w in (a, b, c):
        w.run(5)
    assert np.array_equal(a.averaging.v, b.averaging.v)
    assert not np.array_equal(a.averaging.v, c.averaging.v)


def test_churn_fires_after_the_named_round():
    w = _world([ChurnEvent(3, "remove", "ids", ids=(5,))])
    w.run(2)
    assert w.alive[5]
    w.step()
    assert w.round == 3 and not w.alive[5]
    assert w.removed_at == {5: 3}


def test_churn_at_round_zero_fires_before_gossip():
    w = _world([ChurnEvent(0, "remove", "ids", ids=(0, 1))])
    assert w.live_slots().tolist() == list(range(2, 100))


def test_top_removal_takes_largest_values_with_low_id_tiebreak():
    vals = np.array([5.0, 9.0, 9.0, 1.0, 7.0])
    w = World(Uniform(5), vals, seed=0, averaging=CLASSIC)
    apply_churn(w, ChurnEvent(0, "remove", "top", 0.5))
    # ceil(2.5) = 3 hosts: the two 9s and the 7
    assert w.live_ids().tolist() == [0, 3]


def test_random_removal_is_seeded():
    a = _world([ChurnEvent(2, "remove", "random", 0.5)], seed=4)
    b = _world([ChurnEvent(2, "remove", "random", 0.5)], seed=4)
    a.run(2)
    b.run(2)
    assert a.live_ids().tolist() == b.live_ids().tolist()
    assert len(a.live_ids()) == 50


def test_churn_errors():
    w = _world()
    with pytest.raises(ChurnError):
        apply_churn(w, ChurnEvent(0, "remove", "ids", ids=(500,)))
    with pytest.raises(ChurnError):
        apply_churn(w, ChurnEvent(3, "remove", "ids", ids=(1,)))
    with pytest.raises(ChurnError):
        apply_churn(w, ChurnEvent(0, "add", "ids", ids=(1,), values=(3.0,)))
    g = World(Grid((3, 3)), np.ones(9), averaging=CLASSIC)
    with pytest.raises(ChurnError):
        apply_churn(g, ChurnEvent(0, "add", "ids", ids=(9,), values=(1.0,)))
    with pytest.raises(ValueError):
        ChurnEvent(1, "remove", "random", 1.5)
    with pytest.raises(ValueError):
        ChurnEvent(1, "add", "random", 0.5)


def test_join_brings_fresh_mass():
    w = _world([ChurnEvent(2, "add", "ids", ids=(100, 101), values=(1000.0, 2000.0))])
    w.run(2)
    assert w.averaging_state(101).current.w == 1.0
    assert w.averaging_state(101).v0 == 2000.0
    w.run(30)
    est = w.estimates("average")[w.live_slots()]
    assert est.mean() == pytest.approx((4950 + 3000) / 102, rel=0.05)


def test_world_host_count_must_match_env():
    with pytest.raises(ValueError):
        World(Uniform(5), np.ones(4), averaging=CLASSIC)
