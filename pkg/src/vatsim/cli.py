"""Command-line front end.

Subcommands: ``run`` (single replay), ``sweep`` (growth-shape CSV),
``verify`` (bound and invariant checks), ``bounds`` (closed-form
evaluators), ``trace`` (write a workload trace to a file).

Numeric flags accept ``2^k`` notation; size lists accept ``a,b,c`` or
geometric ladders ``start:stop:xFACTOR``.  ``VATSIM_OUT`` names the default
output directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import _kernels, analysis, cache_sim, workloads
from .address_model import MachineConfig, path_union, internal_nodes
from .analysis import (
    FUNNELSORT_TALLNESS,
    MERGESORT_TALLNESS,
    TallnessConstraint,
    TallnessError,
)
from .cost_engine import REPORT_CSV_HEADER, read_trace, run_em, run_vat, write_trace

CLI_KINDS = {
    "sequential-scan": "sequential_scan",
    "random-scan": "random_scan",
    "permute": "permute",
    "repeated-binary-search": "repeated_binary_search",
    "heapify": "heapify",
    "heapsort": "heapsort",
    "quicksort": "quicksort",
    "multiway-mergesort": "multiway_mergesort",
    "funnelsort": "funnelsort",
}

FIG1_KINDS = (
    "sequential_scan", "random_scan", "permute", "repeated_binary_search",
    "heapify", "heapsort", "quicksort",
)


def parse_int(text: str) -> int:
    """Plain decimal or ``2^k`` / ``B^E`` power notation."""
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        return int(base) ** int(exp)
    return int(text)


def parse_sizes(text: str) -> list[int]:
    """Comma list, or geometric ladder ``start:stop:xFACTOR``."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3 or not parts[2].startswith("x"):
            raise argparse.ArgumentTypeError(
                f"expected start:stop:xFACTOR, got {text!r}"
            )
        start, stop = parse_int(parts[0]), parse_int(parts[1])
        factor = parse_int(parts[2][1:])
        if start < 1 or stop < start or factor < 2:
            raise argparse.ArgumentTypeError(f"bad ladder {text!r}")
        out = []
        v = start
        while v <= stop:
            out.append(v)
            v *= factor
        return out
    return [parse_int(t) for t in text.split(",") if t]


def parse_tallness(text: str) -> TallnessConstraint:
    """``quadratic``, ``linear:FACTOR`` or ``power:EXPONENT``."""
    if text == "quadratic":
        return TallnessConstraint("quadratic")
    if text.startswith("linear"):
        factor = float(text.split(":", 1)[1]) if ":" in text else 1.0
        return TallnessConstraint("linear", factor=factor)
    if text.startswith("power"):
        exp = float(text.split(":", 1)[1]) if ":" in text else 2.0
        return TallnessConstraint("power", exponent=exp)
    raise argparse.ArgumentTypeError(f"unknown tallness constraint {text!r}")


def _out_path(name: str | None, default_name: str) -> Path:
    base = Path(os.environ.get("VATSIM_OUT", "."))
    if name is None:
        return base / default_name
    p = Path(name)
    return p if p.is_absolute() or p.parent != Path(".") else base / p


def _refuse_existing(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise SystemExit(f"error: {path} exists; pass --force to overwrite")


def _machine_args(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--K", type=parse_int, default=16,
                    help="translation tree arity (default 16)")
    ap.add_argument("--P", type=parse_int, default=512,
                    help="page size in addressable units (default 512)")
    ap.add_argument("--a", type=parse_int, default=4,
                    help="item size in addressable units (default 4)")
    ap.add_argument("--cache", type=parse_int, default=2**16,
                    help="cache size in addressable units (default 2^16)")


def _workload_args(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--workload", "-w", choices=sorted(CLI_KINDS),
                    help="workload kind")
    ap.add_argument("--n", type=parse_int, help="item count")
    ap.add_argument("--seed", type=parse_int, default=0)
    ap.add_argument("--q", type=parse_int, default=None,
                    help="searches for repeated-binary-search")
    ap.add_argument("--m-items", type=parse_int, default=None,
                    help="mergesort fast-memory size in items")
    ap.add_argument("--b-items", type=parse_int, default=None,
                    help="mergesort block size in items")


def _build_spec(args) -> workloads.WorkloadSpec:
    if not args.workload or args.n is None:
        raise SystemExit("error: --workload and --n are required")
    kind = CLI_KINDS[args.workload]
    m_items, b_items = args.m_items, args.b_items
    if kind == "multiway_mergesort" and m_items is None:
        b_items = b_items or max(1, args.P // args.a)
        m_items = 8 * b_items
    return workloads.WorkloadSpec(kind, args.n, args.a, seed=args.seed,
                                  q=args.q, m_items=m_items, b_items=b_items)


def cmd_run(args) -> int:
    if args.trace_file:
        source = read_trace(args.trace_file)
        extent = source.extent
        a = source.a
    else:
        source = _build_spec(args)
        extent = workloads.plan(source).extent_units
        a = source.a
    machine = MachineConfig(K=args.K, P=args.P, a=a,
                            cache_units=args.cache, extent=extent)
    rows = []
    if args.mode in ("vat", "both"):
        rep = run_vat(source, machine, policy=args.policy, layout=args.layout,
                      data_pages=args.data_pages, node_pages=args.node_pages)
        print(rep)
        print(f"  normalized_vat={rep.normalized():.6g} d={rep.d}")
        rows.append(rep.csv_row())
    if args.mode in ("em", "both"):
        rep = run_em(source, machine.m_items, machine.b_items,
                     policy=args.policy, a=a)
        print(rep)
        print(f"  normalized_em={rep.normalized():.6g}")
        rows.append(rep.csv_row())
    if args.out:
        path = _out_path(args.out, "run.csv")
        _refuse_existing(path, args.force)
        path.write_text(REPORT_CSV_HEADER + "\n" + "\n".join(rows) + "\n")
        print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    kinds = (FIG1_KINDS if args.kinds == "fig1"
             else [CLI_KINDS[k] for k in args.kinds.split(",")])
    path = _out_path(args.out, "sweep.csv")
    _refuse_existing(path, args.force)
    progress = (lambda msg: print(f"  {msg}", file=sys.stderr)) if args.verbose else None
    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        cells = [(kind, n) for kind in kinds for n in args.sizes]

        def cell(kn):
            kind, n = kn
            spec = workloads.WorkloadSpec(
                kind, n, args.a, seed=args.seed, q=args.q,
                m_items=args.m_items if kind == "multiway_mergesort" else None,
                b_items=args.b_items if kind == "multiway_mergesort" else None)
            return analysis.sweep_cell(spec, args.K, args.P, args.cache,
                                       args.policy)

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(cell, cells))
        rows.sort(key=lambda r: (kinds.index(r.kind), r.n))
    else:
        rows = analysis.sweep(kinds, args.sizes, args.K, args.P, args.a,
                              args.cache, seed=args.seed, q=args.q,
                              m_items=args.m_items, b_items=args.b_items,
                              policy=args.policy, progress=progress)
    path.write_text(analysis.rows_to_csv(rows))
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_trace(args) -> int:
    spec = _build_spec(args)
    path = _out_path(args.out, f"{spec.kind}.trace")
    _refuse_existing(path, args.force)
    trace = workloads.generate(spec)
    write_trace(trace, path)
    print(f"wrote {path} ({len(trace)} accesses, extent={trace.extent})")
    return 0


def cmd_bounds(args) -> int:
    g = args.g
    rows = []
    m, b, n, d = args.m_items, args.b_items, args.n, args.d
    if m is None:
        m = args.cache // args.a
    if b is None:
        b = args.P // args.a
    if n is None:
        raise SystemExit("error: --n is required")
    if d is None:
        d = MachineConfig(K=args.K, P=args.P, a=args.a,
                          cache_units=args.cache, extent=n * args.a).d
    ok, slack = analysis.tallness_check(g, m, b, d)
    rows.append(("tallness M >= 4*g(dB)",
                 f"{'ok' if ok else 'VIOLATED'} slack={slack:g} [{g.describe()}]"))
    try:
        ms = analysis.mergesort_fault_bound(m, b, n)
        rows.append(("mergesort_em_bound(M,B,n)", f"{ms:g}"))
    except (TallnessError, ValueError) as exc:
        rows.append(("mergesort_em_bound(M,B,n)", f"error: {exc}"))
    try:
        vb = analysis.vat_fault_bound(analysis.mergesort_fault_bound,
                                      m, b, d, n, g)
        rows.append((f"vat_bound = 4d*C(M/4,{d}B,n)", f"{vb:g}"))
    except (TallnessError, ValueError) as exc:
        rows.append(("vat_bound = 4d*C(M/4,dB,n)", f"error: {exc}"))
    try:
        fb = analysis.funnelsort_fault_bound(args.cache, args.P, args.a,
                                             args.K, n)
        rows.append(("funnelsort_vat_bound", f"{fb:g}"))
    except TallnessError as exc:
        rows.append(("funnelsort_vat_bound", f"precondition: {exc}"))
    width = max(len(r[0]) for r in rows)
    print(f"M={m} B={b} n={n} d={d} K={args.K} P={args.P} a={args.a} "
          f"cache={args.cache}")
    for name, val in rows:
        print(f"  {name:<{width}}  {val}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _check_node_bound(samples: int, seed: int):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        K = int(rng.choice([2, 4, 16, 512]))
        d = int(rng.integers(1, 7))
        cfg = MachineConfig(K=K, P=4, a=1, cache_units=4 * (d + 2), d=d)
        nblocks = max(1, cfg.total_pages // d)
        blk = int(rng.integers(0, nblocks))
        pages = range(blk * d, min(blk * d + d, cfg.total_pages))
        cnt = len(internal_nodes(path_union(pages, cfg)))
        tight = 2 * d + math.ceil(d / (K - 1))
        if cnt > min(tight, 3 * d):
            return False, f"violated at K={K} d={d} block={blk}: {cnt} > {tight}"
        worst = max(worst, cnt / (3 * d))
    return True, f"{samples} samples, max count/3d = {worst:.2f}"


def _check_belady(max_len: int):
    if _kernels.enabled():
        checked, bad = _kernels.belady_exhaustive(max_len, 4, 2)
    else:
        max_len = min(max_len, 8)
        checked, bad = _belady_pure(max_len, 4, 2)
    ok = bad == 0
    return ok, f"{checked} canonical traces len<={max_len}, {bad} mismatches"


def _belady_pure(max_len: int, n_keys: int, capacity: int):
    import itertools

    checked = 0
    bad = 0
    for length in range(1, max_len + 1):
        for trace in itertools.product(range(n_keys), repeat=length):
            mx = -1
            canonical = True
            for v in trace:
                if v > mx + 1:
                    canonical = False
                    break
                mx = max(mx, v)
            if not canonical:
                continue
            checked += 1
            cache = cache_sim.CacheState(capacity, "opt")
            opt = cache_sim.replay(cache, list(trace))
            best = cache_sim.min_faults_bruteforce(list(trace), capacity)
            if opt != best:
                bad += 1
    return checked, bad


def _check_lru_inclusion(trials: int, seed: int):
    rng = np.random.default_rng(seed)
    for t in range(trials):
        n = int(rng.integers(10, 200))
        keys = rng.integers(0, 24, size=n)
        small = cache_sim.CacheState(int(rng.integers(2, 6)), "lru")
        big = cache_sim.CacheState(small.capacity + int(rng.integers(1, 6)), "lru")
        for k in keys:
            small.access(int(k))
            big.access(int(k))
            if not small.resident_set() <= big.resident_set():
                return False, f"inclusion violated on trial {t}"
    return True, f"{trials} random traces"


def _check_competitive(trials: int, seed: int, ks=(4, 8, 16)):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        n = int(rng.integers(100, 10_000))
        pages = int(rng.integers(2, 65))
        trace = [int(x) for x in rng.integers(0, pages, size=n)]
        for k in ks:
            lru = cache_sim.CacheState(2 * k, "lru")
            cache_sim.replay(lru, trace)
            opt = cache_sim.CacheState(k, "opt")
            cache_sim.replay(opt, trace)
            bound = 2 * opt.faults + k
            if lru.faults > bound:
                return False, (f"LRU(2k)={lru.faults} > 2*OPT(k)+k={bound} "
                               f"at k={k}, trial {t}")
            if opt.faults:
                worst = max(worst, lru.faults / opt.faults)
    return True, f"{trials} traces x k in {ks}; max LRU(2k)/OPT(k) = {worst:.2f}"


def _coupling_machine(kind: str, n: int, K: int, P: int, a: int):
    spec_kw = {}
    if kind == "multiway_mergesort":
        g = MERGESORT_TALLNESS
    else:
        g = FUNNELSORT_TALLNESS
    extent_probe = workloads.plan(
        workloads.WorkloadSpec(kind, n, a, m_items=8 * max(1, P // a),
                               b_items=max(1, P // a))
        if kind == "multiway_mergesort"
        else workloads.WorkloadSpec(kind, n, a)
    ).extent_units
    d = MachineConfig(K=K, P=P, a=a, cache_units=4 * P,
                      extent=extent_probe).d
    cache = 4 * P
    while True:
        m = cache // a
        ok, _ = analysis.tallness_check(g, m, (P // a), d)
        if ok and cache >= 4 * d * P:
            break
        cache *= 2
    if kind == "multiway_mergesort":
        b_items = d * P // a
        m_items = cache // (4 * a)
        spec_kw = dict(m_items=m_items, b_items=b_items)
    spec = workloads.WorkloadSpec(kind, n, a, **spec_kw)
    extent = workloads.plan(spec).extent_units
    machine = MachineConfig(K=K, P=P, a=a, cache_units=cache, extent=extent)
    return spec, machine, g


def _check_coupling(kind: str, n: int, args):
    try:
        spec, machine, g = _coupling_machine(kind, n, args.K, args.P, args.a)
        if args.cache_override:
            machine = MachineConfig(K=args.K, P=args.P, a=args.a,
                                    cache_units=args.cache_override,
                                    extent=machine.extent)
        check = analysis.simulate_coupling(spec, machine, g=g)
    except TallnessError as exc:
        return None, f"SKIP: {exc}"
    except ValueError as exc:
        return None, f"SKIP: {exc}"
    ok = check.passed
    return ok, (f"factor {check.factor:.2f} <= 4d={4 * check.d}; "
                f"per-block max {check.per_block_max_faults} <= {4 * check.d}; "
                f"node occ {check.node_occupancy_max} <= {check.node_store_cap}")


def cmd_verify(args) -> int:
    quick = args.quick
    checks = []
    checks.append(("path-union node bound <= 2d+ceil(d/(K-1)) <= 3d",
                   _check_node_bound(2_000 if quick else 10_000, args.seed)))
    checks.append(("Belady replay == brute-force optimum",
                   _check_belady(8 if quick else 12)))
    checks.append(("LRU inclusion (capacity monotone resident sets)",
                   _check_lru_inclusion(20 if quick else 60, args.seed)))
    checks.append(("LRU(2k) <= 2*OPT(k) + k",
                   _check_competitive(20 if quick else 100, args.seed)))
    sizes = [2**12] if quick else [2**14, 2**16]
    for kind in ("multiway_mergesort", "funnelsort"):
        for n in sizes:
            name = f"coupled replay {kind} n=2^{int(math.log2(n))}: vat <= 4d*em"
            checks.append((name, _check_coupling(kind, n, args)))
    failures = 0
    for name, (ok, detail) in checks:
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        if ok is False:
            failures += 1
        print(f"{status:4s}  {name}  ({detail})")
    print(f"{len(checks) - failures}/{len(checks)} checks passed"
          + (" (SKIPs do not fail the run)" if any(
              ok is None for _, (ok, _) in checks) else ""))
    return 1 if failures else 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="vatsim",
        description="Trace-driven cache-fault simulator for "
                    "virtual-address-translation cost models.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="replay one workload or trace file")
    _workload_args(p)
    _machine_args(p)
    p.add_argument("--trace-file", help="replay a trace file instead")
    p.add_argument("--policy", choices=("lru", "fifo", "opt"), default="lru")
    p.add_argument("--layout", choices=("unified", "partitioned"),
                   default="unified")
    p.add_argument("--data-pages", type=parse_int, default=None)
    p.add_argument("--node-pages", type=parse_int, default=None)
    p.add_argument("--mode", choices=("em", "vat", "both"), default="both")
    p.add_argument("--out", help="write report rows to this CSV file")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="fault sweep over kinds and sizes")
    _machine_args(p)
    p.add_argument("--kinds", default="fig1",
                   help="comma list of kinds, or 'fig1' (default)")
    p.add_argument("--sizes", type=parse_sizes, default=parse_sizes("2^14:2^24:x4"))
    p.add_argument("--seed", type=parse_int, default=0)
    p.add_argument("--q", type=parse_int, default=None)
    p.add_argument("--m-items", type=parse_int, default=None)
    p.add_argument("--b-items", type=parse_int, default=None)
    p.add_argument("--policy", choices=("lru", "fifo"), default="lru")
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run bound and invariant checks")
    _machine_args(p)
    p.add_argument("--quick", action="store_true",
                   help="restrict to the sub-minute suite")
    p.add_argument("--seed", type=parse_int, default=0)
    p.add_argument("--cache-override", type=parse_int, default=None,
                   help="force this cache size in the coupling checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bounds", help="evaluate the closed-form fault bounds")
    _machine_args(p)
    p.add_argument("--m-items", type=parse_int, default=None)
    p.add_argument("--b-items", type=parse_int, default=None)
    p.add_argument("--n", type=parse_int, default=None)
    p.add_argument("--d", type=parse_int, default=None)
    p.add_argument("--g", type=parse_tallness,
                   default=TallnessConstraint("quadratic"),
                   help="tallness: quadratic | linear:F | power:E")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("trace", help="write a workload trace file")
    _workload_args(p)
    _machine_args(p)
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_trace)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
