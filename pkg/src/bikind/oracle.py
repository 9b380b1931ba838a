"""Explicit-state oracle: concrete execution, breadth-first search, replay.

Completely independent of the symbolic engine: states are concrete
valuations, transitions are interpreted directly off the CFG, and search
depth is counted in the same loop-head superstep granularity the engine
uses for k (one step = entry or a loop head to the next checkpoint arrival,
with the entry prefix folded into step 1). Used to freeze expected verdicts
and k* values, and to replay every counterexample the engine ever reports.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .cfg import HAVOC, Cfg, Edge, checkpoints, eval_expr, exit_tails, tail_condition

DEPTH_CAP = 64
STATE_CAP = 1 << 20


class EnumerationLimit(Exception):
    """Raised when a havoc domain or the state budget exceeds the cap."""


@dataclass(frozen=True)
class ConcreteState:
    pc: int
    values: tuple[int, ...]  # in cfg.variables order


@dataclass
class Trace:
    """A concrete run: states with engine-step indices and per-transition
    havoc inputs. kind is "full" (starts at init) or "partial" (starts at an
    arbitrary loop-head state, as produced by the inductive step)."""

    kind: str
    states: list[dict[str, int]]  # total valuations including "pc"
    steps: list[int]              # engine-step index, one per state
    inputs: list[dict[str, int]]  # one per transition
    join: int = -1                # splice index for concatenated traces

    def length(self) -> int:
        """Length in engine steps."""
        return self.steps[-1] - self.steps[0] if self.states else 0


@dataclass
class ReplayResult:
    valid: bool
    index: Optional[int] = None
    reason: str = ""


@dataclass
class BfsResult:
    verdict: str  # "unsafe" | "safe" | "cap-exceeded"
    k_star: Optional[int] = None
    trace: Optional[Trace] = None
    exit_depth: Optional[int] = None  # smallest k with no live k-step run; None = runs forever
    states: int = 0


# ---------------------------------------------------------------------------
# concrete stepping


def state_dict(cfg: Cfg, st: ConcreteState) -> dict[str, int]:
    d = {v.name: st.values[i] for i, v in enumerate(cfg.variables)}
    d["pc"] = st.pc
    return d


def dict_state(cfg: Cfg, d: dict[str, int]) -> ConcreteState:
    return ConcreteState(d["pc"], tuple(d[v.name] for v in cfg.variables))


def initial_states(cfg: Cfg, budget: list[int]) -> list[ConcreteState]:
    """All states satisfying init: pc at entry, initialized variables at
    their constants, uninitialized ones anywhere in their domain."""
    combos: list[list[int]] = [[]]
    for v in cfg.variables:
        if v.init is not None:
            for c in combos:
                c.append(v.init)
            continue
        domain = 1 << v.ty.width
        if domain * len(combos) > budget[0]:
            raise EnumerationLimit(f"initial domain of {v.name!r} too large")
        combos = [c + [val] for val in range(domain) for c in combos]
    budget[0] -= len(combos)
    return [ConcreteState(cfg.entry, tuple(c)) for c in combos]


def _edge_successors(cfg: Cfg, st: ConcreteState, edge: Edge,
                     budget: list[int]) -> Iterator[tuple[ConcreteState, dict[str, int]]]:
    env = {v.name: st.values[i] for i, v in enumerate(cfg.variables)}
    if not eval_expr(edge.guard, env):
        return
    havocked = [name for name, rhs in edge.update.items() if rhs is HAVOC]
    if havocked:
        # our lowering havocs one variable per edge
        (name,) = havocked
        width = cfg.env[name].width
        if (1 << width) > budget[0]:
            raise EnumerationLimit(f"havoc domain of {name!r} too large")
        budget[0] -= 1 << width
        for val in range(1 << width):
            yield _apply(cfg, st, edge, env, {name: val}), {name: val}
    else:
        budget[0] -= 1
        if budget[0] < 0:
            raise EnumerationLimit("state budget exhausted")
        yield _apply(cfg, st, edge, env, {}), {}


def _apply(cfg: Cfg, st: ConcreteState, edge: Edge, env: dict[str, int],
           inputs: dict[str, int]) -> ConcreteState:
    new = list(st.values)
    for i, v in enumerate(cfg.variables):
        rhs = edge.update.get(v.name)
        if rhs is None:
            continue
        new[i] = inputs[v.name] if rhs is HAVOC else int(eval_expr(rhs, env))
    return ConcreteState(edge.dst, tuple(new))


MicroStep = tuple[int, dict[str, int], ConcreteState]  # edge id, inputs, state after


def hop(cfg: Cfg, st: ConcreteState, budget: list[int]) -> list[tuple[ConcreteState, list[MicroStep]]]:
    """All runs from st to the next checkpoint arrival (depth-first over the
    acyclic inter-checkpoint region; assumption-blocked branches vanish)."""
    cps = checkpoints(cfg)
    arrivals: list[tuple[ConcreteState, list[MicroStep]]] = []
    stack: list[tuple[ConcreteState, list[MicroStep]]] = [(st, [])]
    while stack:
        cur, path = stack.pop()
        for edge in cfg.out.get(cur.pc, []):
            for nxt, inputs in _edge_successors(cfg, cur, edge, budget):
                step = path + [(edge.id, inputs, nxt)]
                if nxt.pc in cps:
                    arrivals.append((nxt, step))
                else:
                    stack.append((nxt, step))
    return arrivals


def superstep(cfg: Cfg, st: ConcreteState, budget: list[int]) -> list[tuple[ConcreteState, list[MicroStep]]]:
    """One engine step: a hop, with the entry prefix folded into the first
    loop-head body (terminal states are absorbing)."""
    if st.pc in (cfg.exit, cfg.error):
        return [(st, [])]
    first = hop(cfg, st, budget)
    if st.pc != cfg.entry:
        return first
    folded: list[tuple[ConcreteState, list[MicroStep]]] = []
    for mid, path in first:
        if mid.pc in (cfg.exit, cfg.error):
            folded.append((mid, path))
        else:
            for end, rest in hop(cfg, mid, budget):
                folded.append((end, path + rest))
    return folded


# ---------------------------------------------------------------------------
# completeness predicate (shared shape with the symbolic forward condition)


def exit_now(cfg: Cfg, st: ConcreteState,
             tails_by_head: Optional[dict[int, list[list[Edge]]]] = None) -> bool:
    """True when the state's continuation deterministically reaches exit
    before any havoc or checkpoint: the run is already finished."""
    if st.pc == cfg.exit:
        return True
    if tails_by_head is None:
        tails_by_head = {st.pc: exit_tails(cfg, st.pc)}
    env = {v.name: st.values[i] for i, v in enumerate(cfg.variables)}
    for tail in tails_by_head.get(st.pc, []):
        if eval_expr(tail_condition(cfg, tail), env):
            return True
    return False


# ---------------------------------------------------------------------------
# breadth-first search


@dataclass
class _Seen:
    depth: int
    parent: Optional[ConcreteState]
    path: list[MicroStep] = field(default_factory=list)


def bfs(cfg: Cfg, depth_cap: int = DEPTH_CAP, state_cap: int = STATE_CAP) -> BfsResult:
    """Explore superstep-reachable states; k* is the depth of the first error
    state (minimal by BFS order). exit_depth is the smallest k such that no
    run of exactly k steps is still unfinished, or None when live runs recur
    forever. Raises nothing: caps turn into verdict "cap-exceeded"."""
    budget = [state_cap]
    heads = [l.id for l in cfg.locations if l.kind == "head"]
    tails_by_head = {h: exit_tails(cfg, h) for h in heads}
    try:
        inits = initial_states(cfg, budget)
    except EnumerationLimit:
        return BfsResult("cap-exceeded")

    seen: dict[ConcreteState, _Seen] = {s: _Seen(0, None) for s in inits}
    live_edges: dict[ConcreteState, set[ConcreteState]] = {}
    frontier = [s for s in inits]
    depth = 0
    try:
        while frontier:
            depth += 1
            if depth > depth_cap:
                return BfsResult("cap-exceeded", states=len(seen))
            nxt: list[ConcreteState] = []
            for st in frontier:
                succs = superstep(cfg, st, budget)
                live_edges.setdefault(st, set())
                for arrival, path in succs:
                    if arrival.pc == cfg.error:
                        trace = _build_trace(cfg, seen, st, path, depth)
                        return BfsResult("unsafe", k_star=depth, trace=trace, states=len(seen))
                    done = arrival.pc == cfg.exit or exit_now(cfg, arrival, tails_by_head)
                    if not done:
                        live_edges[st].add(arrival)
                    if arrival not in seen:
                        seen[arrival] = _Seen(depth, st, path)
                        if not done:
                            nxt.append(arrival)
            frontier = nxt
    except EnumerationLimit:
        return BfsResult("cap-exceeded", states=len(seen))
    return BfsResult("safe", exit_depth=_exit_depth(inits, live_edges), states=len(seen))


def _exit_depth(inits: list[ConcreteState],
                live_edges: dict[ConcreteState, set[ConcreteState]]) -> Optional[int]:
    """Longest run through live states, +1; None while a live cycle exists."""
    longest: dict[ConcreteState, int] = {}
    on_stack: set[ConcreteState] = set()
    cyclic = [False]

    def walk(s: ConcreteState) -> int:
        if s in longest:
            return longest[s]
        if s in on_stack:
            cyclic[0] = True
            return 0
        on_stack.add(s)
        best = 0
        for t in live_edges.get(s, ()):
            best = max(best, 1 + walk(t))
        on_stack.discard(s)
        longest[s] = best
        return best

    best = 0
    for s in inits:
        best = max(best, walk(s))
        if cyclic[0]:
            return None
    return best + 1 if best else 1


def _build_trace(cfg: Cfg, seen: dict[ConcreteState, _Seen], last_parent: ConcreteState,
                 last_path: list[MicroStep], depth: int) -> Trace:
    """Stitch the micro paths from an initial state to the error state."""
    segments: list[list[MicroStep]] = [last_path]
    cur = last_parent
    while True:
        rec = seen[cur]
        if rec.parent is None:
            break
        segments.append(rec.path)
        cur = rec.parent
    segments.reverse()

    states = [state_dict(cfg, cur)]
    for path in segments:
        states.extend(state_dict(cfg, st_after) for _, _, st_after in path)
    return build_trace(cfg, states, "full")


# ---------------------------------------------------------------------------
# trace assembly


class TraceError(Exception):
    """States that no CFG edge can connect: an encoding or backend bug."""


def build_trace(cfg: Cfg, raw: list[dict[str, int]], kind: str,
                join: int = -1) -> Trace:
    """Assemble a Trace from a raw state sequence: truncate at the first
    error state, collapse stutters (adjacent identical states), infer the
    havoc input behind every surviving transition, and recompute engine-step
    indices — for full traces the prefix before the first loop-head arrival
    folds into step 1."""
    for i, st in enumerate(raw):
        if st["pc"] == cfg.error:
            raw = raw[:i + 1]
            break
    states: list[dict[str, int]] = []
    new_join = -1
    for i, st in enumerate(raw):
        if i == join:
            new_join = len(states)
        if states and st == states[-1]:
            continue
        states.append(st)
    inputs = [_infer_inputs(cfg, states[i], states[i + 1])
              for i in range(len(states) - 1)]
    return Trace(kind, states, _step_indices(cfg, states, kind), inputs, new_join)


def _infer_inputs(cfg: Cfg, cur: dict[str, int], nxt: dict[str, int]) -> dict[str, int]:
    env = {v.name: cur[v.name] for v in cfg.variables}
    for edge in cfg.out.get(cur["pc"], []):
        if edge.dst != nxt["pc"] or not eval_expr(edge.guard, env):
            continue
        ok = True
        havocked: dict[str, int] = {}
        for v in cfg.variables:
            rhs = edge.update.get(v.name)
            if rhs is HAVOC:
                havocked[v.name] = nxt[v.name]
            elif (env[v.name] if rhs is None else int(eval_expr(rhs, env))) != nxt[v.name]:
                ok = False
                break
        if ok:
            return havocked
    raise TraceError(f"no edge connects pc={cur['pc']} to pc={nxt['pc']}")


def _step_indices(cfg: Cfg, states: list[dict[str, int]], kind: str) -> list[int]:
    cps = checkpoints(cfg)
    arrivals = [i for i in range(1, len(states)) if states[i]["pc"] in cps]
    fold = (kind == "full" and arrivals
            and states[arrivals[0]]["pc"] not in (cfg.exit, cfg.error))
    bounds = arrivals[1:] if fold else arrivals
    return [0] + [bisect_left(bounds, i) + 1 for i in range(1, len(states))]


# ---------------------------------------------------------------------------
# replay


def replay(cfg: Cfg, trace: Trace, claims_violation: bool = True) -> ReplayResult:
    """Validate a trace against the CFG: the first state satisfies init (full
    traces), every adjacent pair is connected by some edge whose guard holds
    and whose update under the recorded inputs produces the later state, and
    the final state is at the error location when a violation is claimed."""
    if not trace.states:
        return ReplayResult(False, None, "empty trace")
    first = trace.states[0]
    if trace.kind == "full":
        if first["pc"] != cfg.entry:
            return ReplayResult(False, 0, "full trace does not start at entry")
        for v in cfg.variables:
            if v.init is not None and first.get(v.name) != v.init:
                return ReplayResult(False, 0, f"{v.name} does not satisfy init")
    for i in range(len(trace.states) - 1):
        cur, nxt = trace.states[i], trace.states[i + 1]
        recorded = trace.inputs[i] if i < len(trace.inputs) else {}
        if not _connected(cfg, cur, nxt, recorded):
            return ReplayResult(False, i, "no edge connects adjacent states")
    if claims_violation and trace.states[-1]["pc"] != cfg.error:
        return ReplayResult(False, len(trace.states) - 1, "trace does not end at error")
    return ReplayResult(True)


def _connected(cfg: Cfg, cur: dict[str, int], nxt: dict[str, int],
               recorded: dict[str, int]) -> bool:
    env = {v.name: cur[v.name] for v in cfg.variables}
    for edge in cfg.out.get(cur["pc"], []):
        if edge.dst != nxt["pc"]:
            continue
        if not eval_expr(edge.guard, env):
            continue
        ok = True
        for v in cfg.variables:
            rhs = edge.update.get(v.name)
            if rhs is None:
                produced = env[v.name]
            elif rhs is HAVOC:
                if v.name not in recorded:
                    ok = False
                    break
                produced = recorded[v.name]
            else:
                produced = int(eval_expr(rhs, env))
            if produced != nxt[v.name]:
                ok = False
                break
        if ok:
            return True
    return False
