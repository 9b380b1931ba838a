"""bikind: a k-induction safety verifier for a small imperative language.

Pipeline: parse and type-check (dsl) -> guarded-edge control flow graph
(cfg) -> bit-vector transition system (transys) -> satisfiability backends
(solver, smtshim) -> interval invariants (intervals) -> proof engines
(engine) -> command line (cli). An explicit-state oracle (oracle) provides
independent ground truth and counterexample replay.
"""

__version__ = "0.1.0"
