"""Proof engine: base case, forward condition, inductive step, and the two
verification loops built from them (plain k-induction and the bidirectional
variant).

The bidirectional loop feeds the partial counterexample produced by a failed
inductive step back into the next iteration's base case: if some
forward-reachable state equals any state of the backward trace, the two
halves concatenate into a full counterexample, so deep bugs are found in
roughly half the iterations. Every violation reported from this module has
been replayed on the concrete semantics first; a replay failure raises
VerificationError instead of producing a verdict.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from .intervals import InvariantSet, to_formula
from .formulas import to_smtlib_script
from .oracle import Trace, build_trace, replay
from .solver import (
    BuiltinSolver, check_sat, extract_trace, model_states,
)
from .transys import (
    Encoding, TransitionSystem, encode_base_case, encode_forward_condition,
    encode_inductive_step, encode_state_match,
)


class VerificationError(Exception):
    """A counterexample failed concrete replay: the encoder or the solver
    backend broke an invariant the verdicts rely on."""


@dataclass
class Options:
    """Knobs shared by every query of one verification task."""

    backend: object = field(default_factory=BuiltinSolver)
    timeout: Optional[float] = None   # seconds per solver query
    cex_pool: bool = False            # match against all past partial traces
    dump_dir: Optional[str] = None    # write each query as an SMT-LIB file
    queries: int = 0
    checks: list = field(default_factory=list)  # per-query timing records


@dataclass(frozen=True)
class CheckOutcome:
    """Result of one proof-rule application.

    For the base case and the inductive step, sat carries the extracted
    (and replay-validated) trace. For the forward condition, unsat means
    the completeness threshold holds. unknown means the solver gave up;
    reason says why (timeout, budget, ...).
    """

    status: str  # "sat" | "unsat" | "unknown"
    trace: Optional[Trace] = None
    reason: str = ""


@dataclass(frozen=True)
class Verdict:
    status: str                    # "safe" | "unsafe" | "unknown"
    iterations: int                # k at the returning iteration (k_max if unknown)
    by: Optional[str] = None       # safe: "forward-condition" | "inductive-step"
    trace: Optional[Trace] = None  # unsafe: the replayed counterexample


def _run_query(enc: Encoding, opts: Options):
    if opts.dump_dir:
        name = f"q{opts.queries:03d}-{enc.kind}-k{enc.k}.smt2"
        with open(os.path.join(opts.dump_dir, name), "w") as fh:
            fh.write(to_smtlib_script(enc.formula))
    opts.queries += 1
    start = time.monotonic()
    res = check_sat(enc.formula, opts.backend, opts.timeout)
    opts.checks.append({
        "check": enc.kind,
        "k": enc.k,
        "status": res.status,
        "ms": round((time.monotonic() - start) * 1000.0, 3),
    })
    return res


def _validated(ts: TransitionSystem, trace: Trace) -> Trace:
    rep = replay(ts.cfg, trace, claims_violation=True)
    if not rep.valid:
        raise VerificationError(
            f"counterexample failed replay at state {rep.index}: {rep.reason}")
    return trace


def base_case(ts: TransitionSystem, k: int,
              opts: Optional[Options] = None) -> CheckOutcome:
    """Is an error state reachable from an initial state within k steps?"""
    opts = opts or Options()
    res = _run_query(encode_base_case(ts, k), opts)
    if res.is_sat:
        trace = extract_trace(res.model, ts, k, "full")
        return CheckOutcome("sat", _validated(ts, trace))
    return CheckOutcome(res.status, reason=res.reason)


def forward_condition(ts: TransitionSystem, k: int,
                      opts: Optional[Options] = None) -> CheckOutcome:
    """Do all executions leave the program within k steps? (unsat = yes,
    which proves safety once the base case at this k came back empty.)"""
    opts = opts or Options()
    res = _run_query(encode_forward_condition(ts, k), opts)
    return CheckOutcome(res.status, reason=res.reason)


def inductive_step(ts: TransitionSystem, k: int,
                   inv: Optional[InvariantSet] = None,
                   opts: Optional[Options] = None) -> CheckOutcome:
    """Can k arbitrary error-free steps be followed by an error step?
    unsat proves safety (with the base case); sat yields the backward
    partial trace; the invariant constrains the suffix's start state."""
    opts = opts or Options()
    phi = to_formula(inv, ts) if inv is not None else None
    res = _run_query(encode_inductive_step(ts, k, phi), opts)
    if res.is_sat:
        trace = extract_trace(res.model, ts, k, "partial")
        return CheckOutcome("sat", _validated(ts, trace))
    return CheckOutcome(res.status, reason=res.reason)


def starts_counterexample(state: dict[str, int],
                          pi_back: Optional[Trace]) -> Optional[int]:
    """Smallest index of a backward-trace state equal to this valuation
    (all state variables including pc), or None."""
    if pi_back is None:
        return None
    for j, target in enumerate(pi_back.states):
        if state == target:
            return j
    return None


def bkind_base_case(ts: TransitionSystem, k: int,
                    pi_back: Union[Trace, list[Trace], None],
                    opts: Optional[Options] = None) -> CheckOutcome:
    """The bidirectional base case: the plain check first; if it is clean,
    ask instead whether any initial run of at most k steps reaches a state
    of a backward trace. A hit concatenates the forward prefix with the
    matched suffix into a full counterexample (replay-validated)."""
    opts = opts or Options()
    plain = base_case(ts, k, opts)
    pool = [pi_back] if isinstance(pi_back, Trace) else list(pi_back or [])
    if plain.status != "unsat" or not pool:
        return plain
    targets: list[dict[str, int]] = []
    for pi in pool:
        targets.extend(st for st in pi.states if st not in targets)
    enc = encode_state_match(ts, k, targets)
    res = _run_query(enc, opts)
    if res.status == "unknown":
        # the accelerator failed, not the base case: this k stays clean
        return CheckOutcome("unsat", reason=f"match query: {res.reason}")
    if res.is_unsat:
        return plain
    states = model_states(res.model, ts, enc.micros)
    for t, state in enumerate(states):
        for pi in pool:
            j = starts_counterexample(state, pi)
            if j is not None:
                raw = states[:t] + pi.states[j:]
                trace = build_trace(ts.cfg, raw, "full", join=t)
                return CheckOutcome("sat", _validated(ts, trace))
    raise VerificationError("state-match model reaches no pooled state")


def kind(ts: TransitionSystem, k_max: int,
         inv: Optional[InvariantSet] = None,
         opts: Optional[Options] = None) -> Verdict:
    """Plain k-induction: for k = 1..k_max run base case, forward condition,
    inductive step, in that order; the first conclusive answer wins."""
    opts = opts or Options()
    for k in range(1, k_max + 1):
        b = base_case(ts, k, opts)
        if b.status == "sat":
            return Verdict("unsafe", k, trace=b.trace)
        if b.status == "unknown":
            continue  # no sound conclusion at this k without the base case
        if forward_condition(ts, k, opts).status == "unsat":
            return Verdict("safe", k, by="forward-condition")
        if inductive_step(ts, k, inv, opts).status == "unsat":
            return Verdict("safe", k, by="inductive-step")
    return Verdict("unknown", k_max)


def bkind(ts: TransitionSystem, k_max: int,
          inv: Optional[InvariantSet] = None,
          opts: Optional[Options] = None) -> Verdict:
    """Bidirectional k-induction: like kind, but a failed inductive step's
    partial trace is handed to the next base case, which may meet it halfway.
    By default only the latest backward trace is kept; with cex_pool every
    past one stays in the match set."""
    opts = opts or Options()
    pool: list[Trace] = []
    for k in range(1, k_max + 1):
        b = bkind_base_case(ts, k, pool, opts)
        if b.status == "sat":
            return Verdict("unsafe", k, trace=b.trace)
        if b.status == "unknown":
            continue
        if forward_condition(ts, k, opts).status == "unsat":
            return Verdict("safe", k, by="forward-condition")
        s = inductive_step(ts, k, inv, opts)
        if s.status == "unsat":
            return Verdict("safe", k, by="inductive-step")
        if s.status == "sat":
            if opts.cex_pool:
                pool.append(s.trace)
            else:
                pool = [s.trace]
    return Verdict("unknown", k_max)
