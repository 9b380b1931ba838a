import sys

sys.path.insert(0, "src")

from bikind.cfg import load, hop_bound, checkpoints, exit_tails
from bikind.oracle import bfs
from bikind.dsl import parse_program, to_source

counter = """
var x: u8 = 0;
loop {
  if (x == 5) { assert(false); }
  x = x + 1;
}
"""

eca_unsafe = """
var input: u8;
var s: u8 = 1;
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

eca_safe = eca_unsafe.replace("s >= 5", "s > 5")

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

for name, src in [("counter5", counter), ("eca_unsafe", eca_unsafe),
                  ("eca_safe", eca_safe), ("while3", while3), ("halting", halting)]:
    cfg = load(src)
    d = hop_bound(cfg)
    r = bfs(cfg)
    tails = {cfg.label(h): len(exit_tails(cfg, h))
             for h in checkpoints(cfg) if cfg.locations[h].kind == "head"}
    print(f"{name}: D={d} cps={sorted(checkpoints(cfg))} tails={tails} "
          f"verdict={r.verdict} k*={r.k_star} exit_depth={r.exit_depth} states={r.states}")
    if r.trace:
        print("  trace steps:", r.trace.steps)
        print("  last three:", r.trace.states[-3:])
        from bikind.oracle import replay
        print("  replay:", replay(cfg, r.trace))

# round-trip check
prog = parse_program(eca_unsafe)
again = parse_program(to_source(prog))
print("round-trip stable:", to_source(prog) == to_source(again))
