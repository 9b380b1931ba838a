"""Lowering to guarded-edge graphs: structure, totality, and the implicit
division-by-zero checks."""

import random

import pytest

from bikind.cfg import (
    checkpoints, eval_expr, hop_bound, load, tail_condition, exit_tails,
)
from bikind.dsl import SourceError
from bikind.formulas import mask
from bikind.oracle import bfs
from bikind.solver import solve_builtin
from bikind.transys import compile as compile_cfg
from bikind.transys import totality_obligations

from helpers import SMALL_FIXTURES, fixture_cfg, head_locations

from test_dsl import random_program


def _edges_into(cfg, loc):
    return [e for e in cfg.edges if e.dst == loc]


def test_terminal_locations_have_no_outgoing_edges():
    for name in ("eca_unsafe", "counter_5"):
        cfg = fixture_cfg(name)
        assert cfg.out.get(cfg.exit, []) == []
        assert cfg.out.get(cfg.error, []) == []
        assert _edges_into(cfg, cfg.entry) == []


def test_eca_error_guard_is_the_negated_assertion():
    cfg = fixture_cfg("eca_unsafe")
    (edge,) = _edges_into(cfg, cfg.error)
    hit = {"input": 5, "s": 5, "pc": edge.src}
    assert eval_expr(edge.guard, hit)
    for miss in ({"input": 4, "s": 5}, {"input": 5, "s": 4},
                 {"input": 0, "s": 1}):
        assert not eval_expr(edge.guard, miss)
    # the safe twin's error guard needs s strictly above the reachable band
    cfg = fixture_cfg("eca_safe")
    (edge,) = _edges_into(cfg, cfg.error)
    assert not eval_expr(edge.guard, {"input": 5, "s": 5})
    assert eval_expr(edge.guard, {"input": 5, "s": 6})


def test_straight_line_program_has_no_error_edges():
    cfg = load("var x: u8 = 1; x = x + 2; halt;")
    assert _edges_into(cfg, cfg.error) == []
    assert head_locations(cfg) == []
    # exactly one path from entry to exit
    loc, hops = cfg.entry, 0
    while loc != cfg.exit:
        (edge,) = cfg.out[loc]
        loc, hops = edge.dst, hops + 1
    assert hops >= 2


def test_counter_has_one_loop_head():
    assert len(head_locations(fixture_cfg("counter_5"))) == 1


def test_break_outside_loop_is_a_lowering_error():
    with pytest.raises(SourceError) as exc:
        load("var x: u8 = 0; break;")
    assert exc.value.category == "lowering"


def test_break_leaves_the_innermost_loop():
    cfg = load("""
        var x: u8 = 0;
        loop {
          loop { x = 1; break; }
          x = 2;
          break;
        }
        x = 3;
    """)
    res = bfs(cfg)
    assert res.verdict == "safe"
    assert res.exit_depth is not None


def test_division_by_zero_is_a_verification_error():
    unsafe = load("var x: u8 = 1; var z: u8 = 0; x = x / z; halt;")
    assert bfs(unsafe).verdict == "unsafe"
    safe = load("var x: u8 = 1; var z: u8 = 2; x = x / z; halt;")
    assert bfs(safe).verdict == "safe"
    modulo = load("var x: u8 = 1; loop { havoc x; x = 3 % x; }")
    assert bfs(modulo).verdict == "unsafe"


def test_hop_bound_is_static_and_covers_the_longest_body():
    cfg = fixture_cfg("counter_5")
    d = hop_bound(cfg)
    assert d >= 3
    assert hop_bound(cfg) == d
    assert hop_bound(fixture_cfg("eca_unsafe")) > d


def test_checkpoints_are_heads_plus_terminals():
    cfg = fixture_cfg("eca_unsafe")
    assert checkpoints(cfg) == set(head_locations(cfg)) | {cfg.exit, cfg.error}


def test_exit_tails_describe_deterministic_halt_paths():
    # counter_5_safe: head --[x == 5]--> halt --> exit, no havoc in between
    cfg = fixture_cfg("counter_5_safe")
    (head,) = head_locations(cfg)
    tails = exit_tails(cfg, head)
    assert len(tails) == 1
    assert tails[0][-1].dst == cfg.exit
    cond = tail_condition(cfg, tails[0])
    assert eval_expr(cond, {"x": 5})
    assert not eval_expr(cond, {"x": 4})
    # eca's halt branch consults a freshly havocked input, so no path from
    # the head to exit is deterministic and the tail set must be empty
    cfg = fixture_cfg("eca_unsafe")
    (head,) = head_locations(cfg)
    assert exit_tails(cfg, head) == []


def _totality_holds(cfg, loc) -> bool:
    """The guards leaving loc must cover every valuation: their negated
    disjunction, checked as a bit-vector formula, has no model."""
    from bikind.transys import expr_to_formula
    from bikind.formulas import Not, disj
    guards = [expr_to_formula(e.guard, cfg.env, 0) for e in cfg.out[loc]]
    res = solve_builtin(Not(disj(*guards)))
    assert res.status != "unknown", "solver gave up on a totality check"
    return res.status == "unsat"


@pytest.mark.parametrize("name", SMALL_FIXTURES)
def test_fixture_guards_are_total(name):
    cfg = fixture_cfg(name)
    for loc in totality_obligations(cfg):
        assert _totality_holds(cfg, loc), f"{name}: location {loc} can get stuck"


def test_random_programs_lower_total():
    # width 8 and at most two variables keep every coverage query inside
    # the built-in solver's enumeration budget even for opaque guards
    rng = random.Random(406)
    for _ in range(40):
        src = random_program(rng, max_vars=2, types=["u8", "i8"])
        cfg = load(src)
        for loc in totality_obligations(cfg):
            assert _totality_holds(cfg, loc), src
