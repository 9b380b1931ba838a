"""Explicit-state semantics: hop-granular stepping, the breadth-first
search, and trace replay. These are the independent ground truth the
symbolic engine is checked against."""

import pytest

from bikind.engine import bkind, kind
from bikind.intervals import infer
from bikind.oracle import (
    ConcreteState, EnumerationLimit, bfs, initial_states, replay, superstep,
)

from helpers import (
    EXPECTED, SMALL_FIXTURES, fixture_bfs, fixture_cfg, fixture_ts,
    head_locations,
)


def _state(cfg, pc, **values):
    return ConcreteState(pc, tuple(values[d.name] for d in cfg.variables))


def test_initial_states_places_declared_values_at_entry():
    cfg = fixture_cfg("counter_5")
    assert initial_states(cfg, [100]) == [_state(cfg, cfg.entry, x=0)]


def test_initial_states_enumerates_uninitialized_variables():
    cfg = fixture_cfg("eca_unsafe_small")
    inits = initial_states(cfg, [1000])
    assert len(inits) == 256  # havocked 8-bit input, s pinned to 1
    assert len({st.values for st in inits}) == 256


def test_initial_states_reports_blowups_instead_of_enumerating():
    cfg = fixture_cfg("eca_unsafe")  # 32-bit input
    with pytest.raises(EnumerationLimit):
        initial_states(cfg, [10_000])


def test_superstep_advances_a_whole_loop_iteration():
    cfg = fixture_cfg("eca_unsafe_small")
    (head,) = head_locations(cfg)
    arrivals = {st for st, _path in
                superstep(cfg, _state(cfg, head, input=0, s=1), [100_000])}
    # one iteration later: input was re-havocked, s moved only for input=1
    assert _state(cfg, head, input=1, s=2) in arrivals
    assert _state(cfg, head, input=3, s=1) in arrivals
    assert all(st.pc in (head, cfg.exit) for st in arrivals)
    assert _state(cfg, cfg.exit, input=6, s=1) in arrivals
    # 256 input values, minus six that leave via the halt guard
    assert len(arrivals) == 256


def test_superstep_reaches_error_uniquely_at_the_bug():
    cfg = fixture_cfg("counter_5")
    (head,) = head_locations(cfg)
    succs = superstep(cfg, _state(cfg, head, x=5), [100_000])
    assert [st for st, _ in succs] == [_state(cfg, cfg.error, x=5)]
    (_, path) = succs[0]
    assert path  # the micro path into the error is preserved


def test_superstep_terminal_states_are_absorbing():
    cfg = fixture_cfg("counter_5")
    for pc in (cfg.exit, cfg.error):
        st = _state(cfg, pc, x=9)
        assert superstep(cfg, st, [100]) == [(st, [])]


def test_superstep_respects_the_state_budget():
    cfg = fixture_cfg("eca_unsafe")  # 2^32 successors per iteration
    (head,) = head_locations(cfg)
    with pytest.raises(EnumerationLimit):
        superstep(cfg, _state(cfg, head, input=0, s=1), [1000])


# ---------------------------------------------------------------------------
# breadth-first search


@pytest.mark.parametrize("name", SMALL_FIXTURES)
def test_bfs_matches_expected_verdicts(name):
    verdict, k_star = EXPECTED[name]
    res = fixture_bfs(name)
    assert res.verdict == verdict
    assert res.k_star == k_star
    if verdict == "unsafe":
        assert res.trace is not None
        assert replay(fixture_cfg(name), res.trace).valid


def test_bfs_unsafe_trace_is_minimal_and_ends_at_error():
    name = "counter_5"
    res = fixture_bfs(name)
    cfg = fixture_cfg(name)
    assert res.trace.states[-1]["pc"] == cfg.error
    assert res.trace.length() == res.k_star


def test_bfs_exit_depth_of_bounded_loop():
    # x reaches 5 on the fifth loop-head arrival, and the exit-tail check
    # recognizes that state as already leaving, so no live run outlasts it
    res = fixture_bfs("counter_5_safe")
    assert res.verdict == "safe"
    assert res.exit_depth == 5


def test_bfs_live_forever_has_no_exit_depth():
    res = fixture_bfs("eca_safe_small")  # runs with input <= 5 never halt
    assert res.verdict == "safe"
    assert res.exit_depth is None


def test_bfs_caps_turn_into_cap_exceeded():
    assert bfs(fixture_cfg("eca_safe"), state_cap=10_000).verdict == "cap-exceeded"
    assert bfs(fixture_cfg("eca_safe_small"), depth_cap=2).verdict == "cap-exceeded"


# ---------------------------------------------------------------------------
# replay


def _unsafe_engine_trace(name, strategy=kind):
    ts = fixture_ts(name)
    verdict = strategy(ts, 12, inv=infer(ts.cfg))
    assert verdict.status == "unsafe"
    return ts.cfg, verdict.trace


def test_replay_accepts_engine_counterexamples():
    for name in ("counter_3", "eca_unsafe_small"):
        cfg, trace = _unsafe_engine_trace(name)
        assert replay(cfg, trace).valid


def test_replay_accepts_concatenated_counterexamples():
    cfg, trace = _unsafe_engine_trace("eca_unsafe_small", strategy=bkind)
    assert trace.join >= 0  # stitched from a forward and a backward piece
    assert replay(cfg, trace).valid


def test_replay_rejects_a_perturbed_state():
    cfg, trace = _unsafe_engine_trace("counter_3")
    broken = [dict(st) for st in trace.states]
    broken[2]["x"] = (broken[2]["x"] + 7) % 256
    res = replay(cfg, type(trace)(trace.kind, broken, trace.steps, trace.inputs))
    assert not res.valid
    assert res.index in (1, 2)
    assert res.reason == "no edge connects adjacent states"


def test_replay_rejects_wrong_initial_state():
    cfg, trace = _unsafe_engine_trace("counter_3")
    broken = [dict(st) for st in trace.states]
    broken[0]["x"] = 3
    res = replay(cfg, type(trace)(trace.kind, broken, trace.steps, trace.inputs))
    assert not res.valid
    assert res.index == 0
    assert "init" in res.reason


def test_replay_checks_the_violation_claim():
    cfg = fixture_cfg("counter_5_safe")
    res = bfs(cfg)
    # harvest a benign prefix: entry plus one loop-head arrival
    st0 = {"pc": cfg.entry, "x": 0}
    (head,) = head_locations(cfg)
    st1 = {"pc": head, "x": 0}
    from bikind.oracle import Trace
    benign = Trace("full", [st0, st1], [0, 1], [{}])
    assert not replay(cfg, benign, claims_violation=True).valid
    assert replay(cfg, benign, claims_violation=False).valid


def test_replay_rejects_fabricated_inputs():
    cfg, trace = _unsafe_engine_trace("eca_unsafe_small")
    forged = [dict(iv) for iv in trace.inputs]
    changed = False
    for iv in forged:
        if "input" in iv:
            iv["input"] = (iv["input"] + 1) % 256
            changed = True
    assert changed
    res = replay(cfg, type(trace)(trace.kind, trace.states, trace.steps, forged))
    assert not res.valid
