"""Bound calculators and the EM-to-VAT overhead harness.

Realizes the block-coupled construction behind the simulator's headline
guarantee: run an EM-style execution with block size ``d*P/a`` items and a
quarter of the cache, and charge the VAT side ``d`` page loads plus the
missing internal translation nodes per block fault.  The node count per
block is at most ``3d``, so the VAT never pays more than ``4d`` per EM
fault; :func:`simulate_coupling` measures the actual factor and occupancy
and checks them against those bounds.

Also evaluates the closed-form fault bounds (multiway mergesort, the
``4 d``-scaled composition, funnel sort) and runs the growth-shape sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels, cache_sim, workloads
from .address_model import MachineConfig, path_union, internal_nodes
from .cost_engine import AccessTrace, FaultReport, run_em, run_vat


class TallnessError(ValueError):
    """A tall-cache precondition does not hold; message names the inequality."""


@dataclass(frozen=True)
class TallnessConstraint:
    """Named cache-tallness requirement ``M >= g(B)``."""

    kind: str  # "linear" | "quadratic" | "power"
    factor: float = 1.0  # linear: g(x) = factor * x
    exponent: float = 2.0  # power: g(x) = x ** exponent

    def g(self, x: float) -> float:
        if self.kind == "linear":
            return self.factor * x
        if self.kind == "quadratic":
            return float(x) * float(x)
        if self.kind == "power":
            return float(x) ** self.exponent
        raise ValueError(f"unknown tallness kind {self.kind!r}")

    def satisfied(self, m_items: float, b_items: float) -> bool:
        return m_items >= self.g(b_items)

    def describe(self) -> str:
        if self.kind == "linear":
            return f"g(x)={self.factor:g}*x"
        if self.kind == "quadratic":
            return "g(x)=x^2"
        return f"g(x)=x^{self.exponent:g}"


MERGESORT_TALLNESS = TallnessConstraint("linear", factor=5.0)
FUNNELSORT_TALLNESS = TallnessConstraint("quadratic")


def tallness_check(g: TallnessConstraint, m_items: float, b_items: float,
                   d: int) -> tuple[bool, float]:
    """Evaluate ``M >= 4 * g(d * B)``; returns (ok, slack)."""
    slack = m_items - 4.0 * g.g(d * b_items)
    return slack >= 0, slack


def mergesort_fault_bound(m_items: float, b_items: float, n: float) -> float:
    """Closed-form EM fault count of multiway mergesort.

    ``n/B * (1 + ceil(log(n/M) / log(M/B)))`` with the pass count clamped
    to zero when the input fits in one run (the run-formation scan is still
    charged).
    """
    if b_items < 1 or n < 1:
        raise ValueError("need b_items >= 1 and n >= 1")
    if m_items < 5 * b_items:
        raise TallnessError(
            f"mergesort needs M >= 5B: M={m_items}, 5B={5 * b_items}"
        )
    passes = math.ceil(math.log(n / m_items) / math.log(m_items / b_items))
    return (n / b_items) * (1 + max(0, passes))


def vat_fault_bound(em_bound: Callable[[float, float, float], float],
                    m_items: float, b_items: float, d: int, n: float,
                    g: TallnessConstraint) -> float:
    """VAT fault bound for an EM algorithm: ``4 d * bound(M/4, d*B, n)``."""
    ok, slack = tallness_check(g, m_items, b_items, d)
    if not ok:
        raise TallnessError(
            f"M >= 4*g(dB) violated: M={m_items}, 4*g({d}*{b_items})="
            f"{4 * g.g(d * b_items):g} (slack {slack:g}) with {g.describe()}"
        )
    return 4 * d * em_bound(m_items / 4, d * b_items, n)


def funnelsort_fault_bound(cache_units: int, P: int, a: int, K: int,
                           n: int) -> float:
    """Funnel-sort VAT fault-count shape, with the asymptotic constant at 1.

    ``4n/B * max(1, ceil(log(4n/M) / log(M/(4dB))))`` using the real-valued
    depth ``d = log_K(2n/P)``.  Requires ``(B * log_K(2n/P))^2 <= M/4``.
    """
    m_items = cache_units / a
    b_items = P / a
    d = math.log(2 * n / P) / math.log(K)
    need = (b_items * d) ** 2
    if need > m_items / 4:
        raise TallnessError(
            f"(B*log_K(2n/P))^2 <= M/4 violated: "
            f"({b_items:g}*{d:.3f})^2 = {need:.1f} > {m_items / 4:g}"
        )
    denom = math.log(m_items / (4 * d * b_items))
    if denom <= 0:
        raise TallnessError(
            f"M/(4dB) <= 1: cannot evaluate the pass count "
            f"(M={m_items:g}, 4dB={4 * d * b_items:g})"
        )
    passes = math.ceil(math.log(4 * n / m_items) / denom)
    return (4 * n / b_items) * max(1, passes)


# ---------------------------------------------------------------------------
# block-coupled EM-to-VAT construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingCheck:
    """Measured EM/VAT coupling of one run, with its structural bounds."""

    em_faults: int
    vat_faults: int
    factor: float
    per_block_max_faults: int
    node_occupancy_max: int
    blocks_resident_max: int
    node_store_cap: int
    d: int
    n_accesses: int
    passed: bool

    def __str__(self) -> str:
        return (
            f"em={self.em_faults} vat={self.vat_faults} "
            f"factor={self.factor:.3f} (bound {4 * self.d}) "
            f"per_block_max={self.per_block_max_faults} "
            f"node_occ_max={self.node_occupancy_max}/{self.node_store_cap} "
            f"{'PASS' if self.passed else 'FAIL'}"
        )


def simulate_coupling(source, machine: MachineConfig, policy: str = "lru",
                      g: TallnessConstraint | None = None) -> CouplingCheck:
    """Replay ``source`` through the coupled EM/VAT execution.

    EM side: block cache with block size ``d*P`` units and
    ``cache_units/(4dP)`` slots.  Per EM block fault the VAT side loads the
    block's ``d`` pages plus the internal path-union nodes not already held
    for another resident block (reference-counted, root excluded).  Asserts
    ``vat <= 4d * em``, per-block faults ``<= 4d``, and node occupancy
    within ``3 * cache_units / (4P)``.
    """
    d = machine.d
    b_items = d * machine.P // machine.a
    m_items = machine.cache_units // (4 * machine.a)
    if g is not None:
        ok, slack = tallness_check(g, machine.m_items, machine.b_items, d)
        if not ok:
            raise TallnessError(
                f"M/4 >= g(dB) violated: M={machine.m_items}, "
                f"4*g({d}*{machine.b_items}) = "
                f"{4 * g.g(d * machine.b_items):g} (slack {slack:g})"
            )
    if m_items < b_items:
        raise ValueError(
            f"cache_units/(4a) = {m_items} items cannot hold one block of "
            f"d*P/a = {b_items} items"
        )
    c = _coupled_counters(source, machine, policy)
    node_cap = 3 * machine.cache_units // (4 * machine.P)
    em = c["em_faults"]
    vat = c["translation_faults"] + c["data_faults"]
    factor = vat / em if em else 0.0
    passed = (
        vat <= 4 * d * em
        and c["per_block_max"] <= 4 * d
        and c["occ_max"] <= 3 * d * max(c["blocks_resident_max"], 1)
        and c["occ_max"] <= node_cap
    )
    return CouplingCheck(
        em_faults=em, vat_faults=vat, factor=factor,
        per_block_max_faults=c["per_block_max"],
        node_occupancy_max=c["occ_max"],
        blocks_resident_max=c["blocks_resident_max"],
        node_store_cap=node_cap, d=d, n_accesses=c["n_accesses"],
        passed=passed,
    )


def _coupled_counters(source, machine, policy):
    from .cost_engine import _is_spec, _spec_arrays, _spec_extent

    if _is_spec(source):
        extent = _spec_extent(source)
    else:
        extent = source.extent
    if extent > machine.extent:
        raise ValueError(
            f"source extent {extent} exceeds machine extent {machine.extent}"
        )
    if _kernels.enabled() and policy in ("lru", "fifo"):
        try:
            st = _kernels.state_coupled(machine, policy)
            if _is_spec(source):
                mem, aux, p1, p2 = _spec_arrays(source)
                _kernels.run_driver(source.kind, mem, aux, source.a, p1, p2, st)
            else:
                _kernels.replay_array(st, source.addresses)
            return _kernels.counters(st)
        except _kernels.KernelUnavailable:
            pass
    it = (workloads.iter_addresses(source) if _is_spec(source)
          else iter(source.addresses))
    return _coupled_pure(it, machine, policy)


def _coupled_pure(addr_iter, machine, policy):
    d = machine.d
    block_units = d * machine.P
    cap_blocks = machine.cache_units // (4 * block_units)
    if cap_blocks < 1:
        raise ValueError("cache too small for one block of d pages")
    npages = machine.total_pages
    cache = cache_sim.CacheState(cap_blocks, policy)
    refcnt: dict = {}
    n = 0
    em = 0
    data_faults = 0
    trans_faults = 0
    occ_max = 0
    pb_max = 0
    res_max = 0

    def block_nodes(block):
        pages = range(block * d, min(block * d + d, npages))
        return internal_nodes(path_union(pages, machine))

    for addr in addr_iter:
        n += 1
        block = int(addr) // block_units
        out = cache.access(block)
        if out.hit:
            continue
        em += 1
        if out.evicted is not None:
            for node in block_nodes(out.evicted):
                refcnt[node] -= 1
                if not refcnt[node]:
                    del refcnt[node]
        new_nodes = 0
        for node in block_nodes(block):
            if refcnt.get(node):
                refcnt[node] += 1
            else:
                refcnt[node] = 1
                new_nodes += 1
        loaded = min(block * d + d, npages) - block * d
        data_faults += loaded
        trans_faults += new_nodes
        pb_max = max(pb_max, loaded + new_nodes)
        occ_max = max(occ_max, len(refcnt))
        res_max = max(res_max, len(cache))
    return {
        "n_accesses": n, "em_faults": em, "data_faults": data_faults,
        "translation_faults": trans_faults, "occ_max": occ_max,
        "per_block_max": pb_max, "blocks_resident_max": res_max,
    }


# ---------------------------------------------------------------------------
# sweeps and fits
# ---------------------------------------------------------------------------

SWEEP_CSV_HEADER = "kind,n,log2_n,d,em_faults,vat_faults,normalized_vat,normalized_em"


@dataclass(frozen=True)
class SweepRow:
    kind: str
    n: int
    log2_n: float
    d: int
    em_faults: int
    vat_faults: int
    normalized_vat: float
    normalized_em: float

    def csv_row(self) -> str:
        return (
            f"{self.kind},{self.n},{self.log2_n:g},{self.d},"
            f"{self.em_faults},{self.vat_faults},"
            f"{self.normalized_vat:.10g},{self.normalized_em:.10g}"
        )


def machine_for(spec: workloads.WorkloadSpec, K: int, P: int,
                cache_units: int) -> MachineConfig:
    """Machine sized to a workload's declared extent."""
    extent = workloads.plan(spec).extent_units
    return MachineConfig(K=K, P=P, a=spec.a, cache_units=cache_units,
                         extent=extent)


def sweep_cell(spec: workloads.WorkloadSpec, K: int, P: int,
               cache_units: int, policy: str = "lru") -> SweepRow:
    machine = machine_for(spec, K, P, cache_units)
    if _kernels.enabled() and policy in ("lru", "fifo"):
        try:
            st = _kernels.state_both(machine, policy)
            mem, aux, p1, p2 = workloads.prepare(spec)
            _kernels.run_driver(spec.kind, mem, aux, spec.a, p1, p2, st)
            c = _kernels.counters(st)
            n_acc = c["n_accesses"]
            vat = c["data_faults"] + c["translation_faults"]
            em = c["em_faults"]
            return SweepRow(spec.kind, spec.n, math.log2(spec.n), machine.d,
                            em, vat, vat / n_acc, em / n_acc)
        except _kernels.KernelUnavailable:
            pass
    vat_rep = run_vat(spec, machine, policy=policy)
    em_rep = run_em(spec, machine.m_items, machine.b_items, policy=policy)
    return SweepRow(
        spec.kind, spec.n, math.log2(spec.n), machine.d,
        em_rep.total_faults, vat_rep.total_faults,
        vat_rep.total_faults / vat_rep.n_accesses,
        em_rep.total_faults / em_rep.n_accesses,
    )


def sweep(kinds: Sequence[str], sizes: Sequence[int], K: int, P: int, a: int,
          cache_units: int, seed: int = 0, q: int | None = None,
          m_items: int | None = None, b_items: int | None = None,
          policy: str = "lru",
          progress: Callable[[str], None] | None = None) -> list[SweepRow]:
    """Fault-count sweep over (kind, n) cells, deterministic given the seed."""
    if list(sizes) != sorted(sizes):
        raise ValueError("sizes must be ascending")
    rows = []
    for kind in kinds:
        for n in sizes:
            spec = workloads.WorkloadSpec(
                kind, n, a, seed=seed, q=q,
                m_items=m_items if kind == "multiway_mergesort" else None,
                b_items=b_items if kind == "multiway_mergesort" else None,
            )
            if progress:
                progress(f"{kind} n={n}")
            rows.append(sweep_cell(spec, K, P, cache_units, policy))
    return rows


def rows_to_csv(rows: Iterable[SweepRow]) -> str:
    lines = [SWEEP_CSV_HEADER]
    lines.extend(r.csv_row() for r in rows)
    return "\n".join(lines) + "\n"


def linear_fit(xs: Sequence[float], ys: Sequence[float]):
    """Least-squares line fit; returns (slope, intercept, r_squared)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2
