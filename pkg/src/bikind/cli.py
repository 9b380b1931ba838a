"""Command-line driver.

Three subcommands: `verify` runs one proof strategy on one file and maps
the verdict to an exit code (0 safe, 10 unsafe, 2 unknown, 1 usage or
internal error), `oracle` exposes the explicit-state search for fixture
authoring, and `bench` runs the full strategy/invariant grid over a fixture
manifest and scores it against expected verdicts.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import shutil
import sys
import time
from typing import Optional

from .cfg import Cfg, load
from .dsl import SourceError
from .engine import Options, Verdict, VerificationError, bkind, kind
from .formulas import to_signed
from .intervals import InvariantSet, infer
from .oracle import DEPTH_CAP, STATE_CAP, Trace, bfs
from .solver import ProcessSolver, make_backend
from .transys import compile as compile_cfg

EXIT_SAFE = 0
EXIT_UNSAFE = 10
EXIT_UNKNOWN = 2
EXIT_ERROR = 1

_EXIT_BY_STATUS = {"safe": EXIT_SAFE, "unsafe": EXIT_UNSAFE,
                   "unknown": EXIT_UNKNOWN}

STRATEGIES = ("kind", "bkind")
INVARIANT_MODES = ("none", "intervals")

CSV_COLUMNS = ("file", "strategy", "invariants", "verdict", "expected",
               "iterations", "wall_ms")


class _CliError(Exception):
    """Anything that should abort with a diagnostic and exit code 1."""


class _Parser(argparse.ArgumentParser):
    # Usage mistakes must exit 1: argparse's default of 2 would collide
    # with the Unknown-verdict exit code.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _CliError(f"error: {message}")


# ---------------------------------------------------------------------------
# shared plumbing


def _load_cfg(path: str) -> Cfg:
    try:
        with open(path, "r") as fh:
            source = fh.read()
    except OSError as exc:
        raise _CliError(str(exc))
    try:
        return load(source)
    except SourceError as exc:
        raise _CliError(f"{path}: {exc}")


def _backend_for(spec: str):
    try:
        backend = make_backend(spec)
    except ValueError as exc:
        raise _CliError(str(exc))
    if isinstance(backend, ProcessSolver):
        exe = backend.command[0] if backend.command else ""
        if not exe or (shutil.which(exe) is None and not os.path.exists(exe)):
            raise _CliError(f"solver executable not found: {exe!r}")
    return backend


def _shown(cfg: Cfg, name: str, raw: int) -> int:
    ty = cfg.env[name]
    return to_signed(raw, ty.width) if ty.signed else raw


def _trace_lines(cfg: Cfg, trace: Trace) -> list[str]:
    lines = []
    for i, state in enumerate(trace.states):
        parts = [f"k={trace.steps[i]}", f"pc={cfg.label(state['pc'])}"]
        parts += [f"{d.name}={_shown(cfg, d.name, state[d.name])}"
                  for d in cfg.variables]
        if i == trace.join:
            parts.append("(join)")
        lines.append(" ".join(parts))
    return lines


def _trace_json(cfg: Cfg, trace: Trace) -> dict:
    states = []
    for i, state in enumerate(trace.states):
        states.append({
            "k": trace.steps[i],
            "pc": cfg.label(state["pc"]),
            "values": {d.name: _shown(cfg, d.name, state[d.name])
                       for d in cfg.variables},
        })
    return {
        "kind": trace.kind,
        "join": trace.join if trace.join >= 0 else None,
        "states": states,
        "inputs": trace.inputs,
    }


def _run_engine(cfg: Cfg, strategy: str, invariants: str, k_max: int,
                opts: Options) -> tuple[Verdict, Optional[InvariantSet], float]:
    ts = compile_cfg(cfg)
    inv = infer(cfg) if invariants == "intervals" else None
    run = bkind if strategy == "bkind" else kind
    start = time.monotonic()
    verdict = run(ts, k_max, inv, opts)
    wall_ms = (time.monotonic() - start) * 1000.0
    return verdict, inv, wall_ms


# ---------------------------------------------------------------------------
# verify


def _cmd_verify(args) -> int:
    cfg = _load_cfg(args.file)
    backend = _backend_for(args.solver)
    if args.dump_smt:
        os.makedirs(args.dump_smt, exist_ok=True)
    opts = Options(backend=backend, timeout=args.timeout,
                   cex_pool=args.cex_pool, dump_dir=args.dump_smt)
    try:
        verdict, inv, wall_ms = _run_engine(
            cfg, args.strategy, args.invariants, args.k_max, opts)
    except VerificationError as exc:
        raise _CliError(f"internal error: {exc}")

    if args.dump_invariants:
        if inv is None:
            inv = infer(cfg)
        if not args.as_json:
            print("invariants:")
            print(inv.as_json(cfg))

    tail = (f" ({verdict.by})" if verdict.by else "")
    print(f"{args.file}: {verdict.status} at iteration {verdict.iterations}"
          f"{tail} [strategy={args.strategy} invariants={args.invariants}"
          f" solver={backend.ident}]")
    if verdict.trace is not None and not args.as_json:
        join = (f", join at state {verdict.trace.join}"
                if verdict.trace.join >= 0 else "")
        print(f"counterexample, {len(verdict.trace.states)} states{join}:")
        for line in _trace_lines(cfg, verdict.trace):
            print(line)

    if args.as_json:
        report = {
            "schema": 1,
            "file": args.file,
            "strategy": args.strategy,
            "invariants": args.invariants,
            "verdict": verdict.status,
            "iterations_used": verdict.iterations,
            "proved_by": verdict.by,
            "solver": backend.ident,
            "wall_ms": round(wall_ms, 3),
            "checks": opts.checks,
            "trace": (_trace_json(cfg, verdict.trace)
                      if verdict.trace is not None else None),
        }
        if args.dump_invariants:
            report["intervals"] = json.loads(inv.as_json(cfg))
        print(json.dumps(report, indent=2))

    return _EXIT_BY_STATUS[verdict.status]


# ---------------------------------------------------------------------------
# oracle


def _cmd_oracle(args) -> int:
    cfg = _load_cfg(args.file)
    res = bfs(cfg, depth_cap=args.depth, state_cap=args.state_cap)
    doc = {
        "verdict": res.verdict,
        "k_star": res.k_star,
        "trace": _trace_json(cfg, res.trace) if res.trace is not None else None,
    }
    print(json.dumps(doc, indent=2))
    return 0


# ---------------------------------------------------------------------------
# bench


def _read_manifest(path: str) -> list[tuple[str, str, Optional[int]]]:
    try:
        with open(path, "r", newline="") as fh:
            raw = list(csv.reader(fh))
    except OSError as exc:
        raise _CliError(str(exc))
    rows: list[tuple[str, str, Optional[int]]] = []
    for lineno, row in enumerate(raw, start=1):
        if not row or row[0].startswith("#"):
            continue
        if lineno == 1 and row[0] == "path":
            continue
        if len(row) != 3:
            raise _CliError(f"{path}:{lineno}: expected"
                            " path,expected_verdict,expected_k_star")
        fixture, expected, k_star = (c.strip() for c in row)
        if expected not in ("safe", "unsafe"):
            raise _CliError(f"{path}:{lineno}: expected_verdict must be"
                            " safe or unsafe")
        rows.append((fixture, expected, int(k_star) if k_star else None))
    return rows


def _bench_cell(path: str, strategy: str, invariants: str,
                args) -> tuple[str, int, float]:
    """One grid cell. Failures never abort the batch: anything that is not
    a clean verdict is scored as an unknown."""
    start = time.monotonic()
    try:
        cfg = _load_cfg(path)
        opts = Options(backend=_backend_for(args.solver), timeout=args.timeout)
        verdict, _, wall_ms = _run_engine(cfg, strategy, invariants,
                                          args.k_max, opts)
        return verdict.status, verdict.iterations, wall_ms
    except (_CliError, VerificationError) as exc:
        print(f"bench: {path} [{strategy}/{invariants}]: {exc}",
              file=sys.stderr)
        return "unknown", 0, (time.monotonic() - start) * 1000.0


def _cmd_bench(args) -> int:
    manifest_rows = _read_manifest(args.manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)

    buckets = {"correct proofs": 0, "correct alarms": 0,
               "incorrect proofs": 0, "incorrect alarms": 0,
               "unresolved": 0}
    for fixture, expected, _k_star in manifest_rows:
        path = (fixture if os.path.isabs(fixture)
                else os.path.join(base_dir, fixture))
        for strategy in STRATEGIES:
            for invariants in INVARIANT_MODES:
                status, iters, wall_ms = _bench_cell(path, strategy,
                                                     invariants, args)
                writer.writerow([fixture, strategy, invariants, status,
                                 expected, iters, f"{wall_ms:.1f}"])
                if status == "safe":
                    key = ("correct proofs" if expected == "safe"
                           else "incorrect proofs")
                elif status == "unsafe":
                    key = ("correct alarms" if expected == "unsafe"
                           else "incorrect alarms")
                else:
                    key = "unresolved"
                buckets[key] += 1

    if args.out:
        with open(args.out, "w") as fh:
            fh.write(out.getvalue())
        summary_to = sys.stdout
    else:
        sys.stdout.write(out.getvalue())
        summary_to = sys.stderr

    print(f"{'bucket':<18} count", file=summary_to)
    for name in ("correct proofs", "correct alarms", "incorrect proofs",
                 "incorrect alarms", "unresolved"):
        print(f"{name:<18} {buckets[name]:>5}", file=summary_to)
    ok = buckets["incorrect proofs"] == 0 and buckets["incorrect alarms"] == 0
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="bikind",
        description="k-induction safety verifier (plain and bidirectional)")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{verify,oracle,bench}")

    pv = sub.add_parser("verify", help="verify one source file")
    pv.add_argument("file")
    pv.add_argument("--strategy", choices=STRATEGIES, default="bkind",
                    help="proof loop (default: bkind)")
    pv.add_argument("--invariants", choices=INVARIANT_MODES,
                    default="intervals",
                    help="inductive-step strengthening (default: intervals)")
    pv.add_argument("--k-max", type=int, default=50, dest="k_max",
                    help="iteration bound (default: 50)")
    pv.add_argument("--timeout", type=float, default=30.0,
                    help="seconds per solver query (default: 30)")
    pv.add_argument("--solver", default="builtin", metavar="BACKEND",
                    help="builtin or cmd:<command line> (default: builtin)")
    pv.add_argument("--json", action="store_true", dest="as_json",
                    help="also print a JSON run report")
    pv.add_argument("--cex-pool", action="store_true",
                    help="match against every partial counterexample seen,"
                         " not only the latest")
    pv.add_argument("--dump-invariants", action="store_true",
                    help="print the inferred interval invariants")
    pv.add_argument("--dump-smt", metavar="DIR",
                    help="write every solver query to DIR as SMT-LIB 2")

    po = sub.add_parser("oracle",
                        help="explicit-state search, for fixture authoring")
    po.add_argument("file")
    po.add_argument("--depth", type=int, default=DEPTH_CAP,
                    help=f"loop-iteration depth cap (default: {DEPTH_CAP})")
    po.add_argument("--state-cap", type=int, default=STATE_CAP,
                    dest="state_cap",
                    help="visited-state cap (default: 2^20)")

    pb = sub.add_parser("bench",
                        help="run the strategy/invariant grid on a manifest")
    pb.add_argument("manifest",
                    help="CSV of path,expected_verdict,expected_k_star")
    pb.add_argument("--k-max", type=int, default=50, dest="k_max")
    pb.add_argument("--timeout", type=float, default=30.0,
                    help="seconds per solver query (default: 30)")
    pb.add_argument("--solver", default="builtin", metavar="BACKEND")
    pb.add_argument("--out", metavar="FILE",
                    help="write the CSV here instead of standard output")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        handler = {"verify": _cmd_verify, "oracle": _cmd_oracle,
                   "bench": _cmd_bench}[args.command]
        return handler(args)
    except _CliError as exc:
        print(f"bikind: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
