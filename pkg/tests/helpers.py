"""Shared test utilities: memoized fixture loading, an independent
reachable-state walker, and the random formula generator used by the
backend-agreement tests."""

from __future__ import annotations

import os
import random
import sys
from typing import Optional

from bikind.cfg import Cfg, load
from bikind.formulas import (
    BinOp, Bool, BoolOp, Cmp, Const, Not, Var, conj, disj,
)
from bikind.oracle import (
    BfsResult, ConcreteState, bfs, initial_states, superstep,
)
from bikind.transys import TransitionSystem
from bikind.transys import compile as compile_cfg

FIXTURE_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)),
                           "fixtures")

SHIM_SOLVER = f"cmd:{sys.executable} -m bikind.smtshim"

ALL_FIXTURES = [
    "eca_safe", "eca_unsafe", "eca_safe_small", "eca_unsafe_small",
    "counter_3", "counter_3_safe", "counter_5", "counter_5_safe",
    "counter_7", "counter_7_safe", "counter_9", "counter_9_safe",
]
# Fixtures whose havoc domains the explicit-state search can fan out; the
# width-32 pair exceeds the enumeration cap and borrows its expected
# verdicts from the width-8 twins.
SMALL_FIXTURES = [n for n in ALL_FIXTURES
                  if n not in ("eca_safe", "eca_unsafe")]
EXPECTED = {
    "eca_safe": ("safe", None),
    "eca_unsafe": ("unsafe", 5),
    "eca_safe_small": ("safe", None),
    "eca_unsafe_small": ("unsafe", 5),
    "counter_3": ("unsafe", 4),
    "counter_3_safe": ("safe", None),
    "counter_5": ("unsafe", 6),
    "counter_5_safe": ("safe", None),
    "counter_7": ("unsafe", 8),
    "counter_7_safe": ("safe", None),
    "counter_9": ("unsafe", 10),
    "counter_9_safe": ("safe", None),
}

_sources: dict[str, str] = {}
_cfgs: dict[str, Cfg] = {}
_systems: dict[str, TransitionSystem] = {}
_bfs_results: dict[str, BfsResult] = {}


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURE_DIR, name + ".bik")


def fixture_source(name: str) -> str:
    if name not in _sources:
        with open(fixture_path(name)) as fh:
            _sources[name] = fh.read()
    return _sources[name]


def fixture_cfg(name: str) -> Cfg:
    if name not in _cfgs:
        _cfgs[name] = load(fixture_source(name))
    return _cfgs[name]


def fixture_ts(name: str) -> TransitionSystem:
    if name not in _systems:
        _systems[name] = compile_cfg(fixture_cfg(name))
    return _systems[name]


def fixture_bfs(name: str) -> BfsResult:
    if name not in _bfs_results:
        _bfs_results[name] = bfs(fixture_cfg(name))
    return _bfs_results[name]


def head_locations(cfg: Cfg) -> list[int]:
    return [l.id for l in cfg.locations if l.kind == "head"]


def reachable_states(cfg: Cfg, budget: int = 1 << 22) -> set[ConcreteState]:
    """Every state reachable at a checkpoint, walked with the concrete
    stepper only — deliberately independent of the search in bfs()."""
    remaining = [budget]
    seen: set[ConcreteState] = set(initial_states(cfg, remaining))
    frontier = list(seen)
    while frontier:
        nxt: list[ConcreteState] = []
        for st in frontier:
            for arrival, _path in superstep(cfg, st, remaining):
                if arrival not in seen:
                    seen.add(arrival)
                    nxt.append(arrival)
        frontier = nxt
    return seen


def reachable_head_states(cfg: Cfg) -> list[ConcreteState]:
    heads = set(head_locations(cfg))
    return [st for st in reachable_states(cfg) if st.pc in heads]


# ---------------------------------------------------------------------------
# random formulas for the backend-agreement checks

_WIDTH = 8
_NAMES = ("a", "b", "c", "d")
_CMP_OPS = ("eq", "ult", "ule", "slt", "sle")
_BV_OPS = ("add", "sub", "mul", "band", "bor", "bxor", "shl", "lshr",
           "ashr", "udiv", "urem", "sdiv", "srem")


def _rand_term(rng: random.Random, names: tuple[str, ...]):
    pick = rng.random()
    var = Var(rng.choice(names), 0, _WIDTH)
    if pick < 0.45:
        return var
    if pick < 0.6:
        return Const(rng.randrange(1 << _WIDTH), _WIDTH)
    other = (Const(rng.randrange(1 << _WIDTH), _WIDTH) if rng.random() < 0.7
             else Var(rng.choice(names), 0, _WIDTH))
    return BinOp(rng.choice(_BV_OPS), var, other)


def _rand_atom(rng: random.Random, names: tuple[str, ...]) -> Bool:
    left = _rand_term(rng, names)
    right = (Const(rng.randrange(1 << _WIDTH), _WIDTH)
             if rng.random() < 0.6 else _rand_term(rng, names))
    return Cmp(rng.choice(_CMP_OPS), left, right)


def _rand_bool(rng: random.Random, names: tuple[str, ...],
               depth: int) -> Bool:
    if depth == 0:
        atom = _rand_atom(rng, names)
        return Not(atom) if rng.random() < 0.3 else atom
    op = rng.choice(("and", "or"))
    args = tuple(_rand_bool(rng, names, depth - 1)
                 for _ in range(rng.randint(2, 3)))
    return BoolOp(op, args)


def random_formula(rng: random.Random) -> Bool:
    """A width-8 formula over at most four variables. Two of the four are
    pinned by top-level equalities so at most two stay effectively free,
    keeping both backends comfortably inside their search budgets."""
    free = _NAMES[:2]
    pinned = [
        Cmp("eq", Var("c", 0, _WIDTH), _rand_term(rng, free)),
        Cmp("eq", Var("d", 0, _WIDTH),
            Const(rng.randrange(1 << _WIDTH), _WIDTH)),
    ]
    shape = rng.random()
    if shape < 0.15:
        body = _rand_bool(rng, _NAMES, 1)
        core: Bool = conj(body, Not(body))   # always unsat
    elif shape < 0.3:
        body = _rand_bool(rng, _NAMES, 1)
        core = disj(body, Not(body))         # always sat
    else:
        core = _rand_bool(rng, _NAMES, rng.randint(1, 2))
    return conj(*pinned, core)
