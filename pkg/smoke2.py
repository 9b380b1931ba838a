import sys
import time

sys.path.insert(0, "src")

from bikind.cfg import load
from bikind.formulas import Cmp, Const, Var, conj
from bikind.oracle import replay
from bikind.solver import BuiltinSolver, check_sat, extract_trace
from bikind.transys import (
    compile as ts_compile,
    encode_base_case, encode_forward_condition, encode_inductive_step,
)

B = BuiltinSolver()


def timed(label, formula):
    t0 = time.perf_counter()
    res = check_sat(formula, B, timeout=60)
    ms = (time.perf_counter() - t0) * 1000
    print(f"  {label}: {res.status}{' ' + res.reason if res.reason else ''} ({ms:.0f} ms)")
    return res


counter = """
var x: u8 = 0;
loop {
  if (x == 5) { assert(false); }
  x = x + 1;
}
"""

eca_u32 = """
var input: u32;
var s: u32 = 1;
loop {
  havoc input;
  if (input > 5) { halt; }
  if (input == 1 && s == 1) { s = 2; }
  else if (input == 2 && s == 2) { s = 3; }
  else if (input == 3 && s == 3) { s = 4; }
  else if (input == 4 && s == 4) { s = 5; }
  assert(!(input == 5 && s >= 5));
}
"""
eca_safe_u32 = eca_u32.replace("s >= 5", "s > 5")

while3 = """
var i: u8 = 0;
loop {
  if (!(i < 3)) { break; }
  i = i + 1;
}
"""

halting = """
var x: u8 = 0;
loop {
  if (x == 5) { halt; }
  x = x + 1;
}
"""

print("== counter5 base cases (expect unsat x5, sat at 6)")
cfg = load(counter)
ts = ts_compile(cfg)
for k in range(1, 7):
    res = timed(f"base k={k}", encode_base_case(ts, k).formula)
    if res.is_sat:
        tr = extract_trace(res.model, ts, k, "full")
        print("   trace steps:", tr.steps, "end pc:", tr.states[-1]["pc"])
        print("   replay:", replay(cfg, tr))

print("== eca u32 base cases (expect unsat x4, sat at 5)")
cfg = load(eca_u32)
ts = ts_compile(cfg)
for k in range(1, 6):
    res = timed(f"base k={k}", encode_base_case(ts, k).formula)
    if res.is_sat:
        tr = extract_trace(res.model, ts, k, "full")
        inputs = [st["input"] for st in tr.states]
        print("   input word:", sorted(set(inputs)), "pre-error:", tr.states[-2])
        print("   replay:", replay(cfg, tr))

print("== eca_safe u32 base cases k=1..10 (expect all unsat)")
cfg_safe = load(eca_safe_u32)
ts_safe = ts_compile(cfg_safe)
for k in (1, 2, 5, 10):
    timed(f"base k={k}", encode_base_case(ts_safe, k).formula)

print("== forward condition")
for name, src, flips in [("while3", while3, (2, 3)), ("halting", halting, (4, 5))]:
    c = load(src)
    t = ts_compile(c)
    for k in flips:
        timed(f"{name} fc k={k}", encode_forward_condition(t, k).formula)
timed("eca_safe fc k=3", encode_forward_condition(ts_safe, 3).formula)

print("== inductive step (eca u32)")
head = [l.id for l in cfg_safe.locations if l.kind == "head"][0]
s1 = Var("s", 0, 32)
inv = conj(Cmp("ule", Const(1, 32), s1), Cmp("ule", s1, Const(5, 32)))
timed("eca_safe ind k=1 no-inv (expect sat)", encode_inductive_step(ts_safe, 1).formula)
timed("eca_safe ind k=1 inv (expect unsat)", encode_inductive_step(ts_safe, 1, inv).formula)
res = timed("eca_unsafe ind k=1 inv (expect sat)", encode_inductive_step(ts, 1, inv).formula)
if res.is_sat:
    tr = extract_trace(res.model, ts, 1, "partial")
    print("   partial steps:", tr.steps)
    print("   pre-error state:", tr.states[-2])
    print("   replay:", replay(cfg, tr))

print("== counter ind no-inv k=1 (expect sat: start x=5)")
cfg_c = load(counter)
ts_c = ts_compile(cfg_c)
res = timed("counter ind k=1", encode_inductive_step(ts_c, 1).formula)
if res.is_sat:
    tr = extract_trace(res.model, ts_c, 1, "partial")
    print("   start:", tr.states[0], "end pc:", tr.states[-1]["pc"])
