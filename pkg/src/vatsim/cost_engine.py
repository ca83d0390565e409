"""Replay engines: EM (block faults only) and VAT (translation walks).

A replay consumes either a materialized :class:`AccessTrace` or a
:class:`~vatsim.workloads.WorkloadSpec`; specs are replayed *fused* (the
workload driver feeds the cache directly) so traces far larger than memory
can be costed.  Replays run on the compiled kernels when available and on
the :mod:`vatsim.cache_sim` reference otherwise; both give bit-identical
:class:`FaultReport` values.

External formats owned by this module:

* trace files: header line ``extent=<units> a=<units>``, then one decimal
  address per line;
* fault-report CSV rows, column order :data:`REPORT_CSV_HEADER`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import _kernels, cache_sim
from .address_model import AddressSpaceOverflow, MachineConfig, TranslationNode


class TraceFileError(ValueError):
    """A trace file failed to parse or validate."""


@dataclass(frozen=True)
class AccessTrace:
    """Ordered virtual addresses plus the declared address-space extent."""

    addresses: np.ndarray
    extent: int
    a: int = 1

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.addresses, dtype=np.int64)
        object.__setattr__(self, "addresses", arr)
        if self.extent < 1:
            raise ValueError("extent must be >= 1")
        if arr.size:
            lo = int(arr.min())
            hi = int(arr.max())
            if lo < 0 or hi >= self.extent:
                raise AddressSpaceOverflow(
                    f"trace address {lo if lo < 0 else hi} outside "
                    f"[0, {self.extent})"
                )

    def __len__(self) -> int:
        return int(self.addresses.size)


REPORT_CSV_HEADER = (
    "mode,n_accesses,data_faults,translation_faults,total_faults,"
    "max_translation_occupancy,d,K,P,a,cache_units,m_items,b_items,"
    "policy,layout"
)


@dataclass(frozen=True)
class FaultReport:
    """Accounting of one replay; ``total = data + translation``."""

    mode: str  # "em" | "vat"
    n_accesses: int
    data_faults: int
    translation_faults: int
    max_translation_occupancy: int
    d: int
    params: dict

    @property
    def total_faults(self) -> int:
        return self.data_faults + self.translation_faults

    def normalized(self) -> float:
        return normalized_cost(self)

    def csv_row(self) -> str:
        p = self.params
        cells = [
            self.mode, self.n_accesses, self.data_faults,
            self.translation_faults, self.total_faults,
            self.max_translation_occupancy, self.d,
            p.get("K", ""), p.get("P", ""), p.get("a", ""),
            p.get("cache_units", ""), p.get("m_items", ""),
            p.get("b_items", ""), p.get("policy", ""), p.get("layout", ""),
        ]
        return ",".join(str(c) for c in cells)

    def __str__(self) -> str:
        return (
            f"[{self.mode}] accesses={self.n_accesses} "
            f"data_faults={self.data_faults} "
            f"translation_faults={self.translation_faults} "
            f"total={self.total_faults} "
            f"occ_max={self.max_translation_occupancy} d={self.d}"
        )


def normalized_cost(report: FaultReport, n_accesses: int | None = None) -> float:
    """Total faults divided by trace length."""
    n = report.n_accesses if n_accesses is None else n_accesses
    if n <= 0:
        raise ValueError("normalized cost needs a non-empty trace")
    return report.total_faults / n


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------


def write_trace(trace: AccessTrace, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"extent={trace.extent} a={trace.a}\n")
        np.savetxt(fh, trace.addresses, fmt="%d")


def read_trace(path) -> AccessTrace:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        parts = dict(
            kv.split("=", 1) for kv in header.split() if "=" in kv
        )
        if "extent" not in parts or "a" not in parts:
            raise TraceFileError(
                f"{path}:1: expected header 'extent=<units> a=<units>', "
                f"got {header!r}"
            )
        try:
            extent = int(parts["extent"])
            a = int(parts["a"])
        except ValueError as exc:
            raise TraceFileError(f"{path}:1: bad header numbers: {exc}") from exc
        body = fh.read().split()
    try:
        addrs = np.array(body, dtype=np.int64) if body else np.empty(0, np.int64)
    except ValueError:
        for lineno, tok in enumerate(body, start=2):
            try:
                int(tok)
            except ValueError:
                raise TraceFileError(
                    f"{path}:{lineno}: not a decimal address: {tok!r}"
                ) from None
        raise TraceFileError(f"{path}: unparseable addresses") from None
    if addrs.size:
        bad = int(np.argmax(addrs >= extent))
        if addrs[bad] >= extent:
            raise TraceFileError(
                f"{path}:{bad + 2}: address {int(addrs[bad])} >= extent {extent}"
            )
        bad = int(np.argmin(addrs))
        if addrs[bad] < 0:
            raise TraceFileError(
                f"{path}:{bad + 2}: negative address {int(addrs[bad])}"
            )
    return AccessTrace(addrs, extent, a)


# ---------------------------------------------------------------------------
# replay entry points
# ---------------------------------------------------------------------------


def _is_spec(source) -> bool:
    from . import workloads

    return isinstance(source, workloads.WorkloadSpec)


def _source_a(source, a: int | None) -> int:
    if a is not None:
        return a
    return source.a


def _spec_arrays(source):
    from . import workloads

    mem, aux, p1, p2 = workloads.prepare(source)
    return mem, aux, p1, p2


def _spec_iter(source) -> Iterator[int]:
    from . import workloads

    return workloads.iter_addresses(source)


def _spec_extent(source) -> int:
    from . import workloads

    return workloads.plan(source).extent_units


def run_em(source, m_items: int, b_items: int, policy: str = "lru",
           a: int | None = None) -> FaultReport:
    """Replay under EM semantics: block-granularity data faults only."""
    if b_items < 1:
        raise ValueError("b_items must be >= 1")
    if m_items < b_items:
        raise ValueError(
            f"m_items={m_items} must be >= b_items={b_items}"
        )
    if policy not in cache_sim.POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    a = _source_a(source, a)
    params = {"m_items": m_items, "b_items": b_items, "a": a,
              "policy": policy, "layout": ""}
    n, faults = _em_counters(source, m_items, b_items, a, policy)
    return FaultReport(
        mode="em", n_accesses=n, data_faults=faults, translation_faults=0,
        max_translation_occupancy=0, d=0, params=params,
    )


def _em_counters(source, m_items, b_items, a, policy):
    block_units = a * b_items
    capacity = m_items // b_items
    if _is_spec(source):
        extent = _spec_extent(source)
        if _kernels.enabled() and policy in ("lru", "fifo"):
            try:
                st = _kernels.state_em(m_items, b_items, a, extent, policy)
                mem, aux, p1, p2 = _spec_arrays(source)
                _kernels.run_driver(source.kind, mem, aux, source.a, p1, p2, st)
                c = _kernels.counters(st)
                return c["n_accesses"], c["em_faults"]
            except _kernels.KernelUnavailable:
                pass
        if policy == "opt":
            source = _materialize(source)
            return _em_counters(source, m_items, b_items, a, policy)
        return _em_pure_stream(_spec_iter(source), block_units, capacity, policy)

    addrs = source.addresses
    if _kernels.enabled():
        try:
            if policy in ("lru", "fifo"):
                st = _kernels.state_em(m_items, b_items, a, source.extent, policy)
                _kernels.replay_array(st, addrs)
                c = _kernels.counters(st)
                return c["n_accesses"], c["em_faults"]
            nblocks = (source.extent + block_units - 1) // block_units
            if nblocks > _kernels.KEYSPACE_LIMIT:
                raise _kernels.KernelUnavailable("key space too large")
            blocks = addrs // block_units
            return len(addrs), _kernels.em_opt_faults(blocks, capacity, nblocks)
        except _kernels.KernelUnavailable:
            pass
    if policy == "opt":
        blocks = (addrs // block_units).tolist()
        cache = cache_sim.CacheState(capacity, "opt")
        return len(blocks), cache_sim.replay(cache, blocks)
    return _em_pure_stream(iter(addrs), block_units, capacity, policy)


def _em_pure_stream(addr_iter, block_units, capacity, policy):
    cache = cache_sim.CacheState(capacity, policy)
    n = 0
    for addr in addr_iter:
        n += 1
        cache.access(int(addr) // block_units)
    return n, cache.faults


def _materialize(spec) -> AccessTrace:
    from . import workloads

    return workloads.generate(spec)


def run_vat(source, machine: MachineConfig, policy: str = "lru",
            layout: str = "unified", data_pages: int | None = None,
            node_pages: int | None = None) -> FaultReport:
    """Replay under VAT semantics: every access walks its translation path.

    The root node is pinned.  Faults on internal nodes count as translation
    faults, faults on data pages as data faults.  ``layout="unified"`` keeps
    nodes and data pages in one cache; ``layout="partitioned"`` splits the
    cache into a data part and a node part (defaults: one quarter for data,
    three quarters for nodes).
    """
    if policy not in cache_sim.POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if layout not in ("unified", "partitioned"):
        raise ValueError(f"unknown layout {layout!r}")
    cap = machine.cache_pages
    if layout == "unified":
        if cap < machine.d + 1:
            raise ValueError(
                f"cache of {cap} pages cannot hold one translation path "
                f"plus progress (need d+1 = {machine.d + 1})"
            )
        data_pages = node_pages = None
    else:
        if data_pages is None and node_pages is None:
            data_pages = max(1, cap // 4)
            node_pages = cap - data_pages
        if data_pages is None or node_pages is None:
            raise ValueError("partitioned layout needs both partition sizes")
        if data_pages < 1 or node_pages < max(1, machine.d - 1):
            raise ValueError(
                f"partition sizes ({data_pages} data, {node_pages} nodes) "
                f"cannot hold one translation path for d={machine.d}"
            )
        if data_pages + node_pages > cap:
            raise ValueError(
                f"partition sizes {data_pages}+{node_pages} exceed "
                f"{cap} cache pages"
            )

    extent = _spec_extent(source) if _is_spec(source) else source.extent
    if extent > machine.extent:
        raise AddressSpaceOverflow(
            f"trace extent {extent} exceeds machine extent {machine.extent}"
        )
    if _is_spec(source) and source.a != machine.a:
        raise ValueError(
            f"workload item size {source.a} != machine item size {machine.a}"
        )

    c = _vat_counters(source, machine, policy, layout, data_pages, node_pages)
    params = {"K": machine.K, "P": machine.P, "a": machine.a,
              "cache_units": machine.cache_units, "policy": policy,
              "layout": layout if layout == "unified"
              else f"partitioned({data_pages}|{node_pages})"}
    return FaultReport(
        mode="vat", n_accesses=c["n_accesses"], data_faults=c["data_faults"],
        translation_faults=c["translation_faults"],
        max_translation_occupancy=c["occ_max"], d=machine.d, params=params,
    )


def _vat_counters(source, machine, policy, layout, data_pages, node_pages):
    if _kernels.enabled() and policy in ("lru", "fifo"):
        try:
            st = _kernels.state_vat(machine, policy, layout,
                                    data_pages, node_pages)
            if _is_spec(source):
                mem, aux, p1, p2 = _spec_arrays(source)
                _kernels.run_driver(source.kind, mem, aux, source.a, p1, p2, st)
            else:
                _kernels.replay_array(st, source.addresses)
            return _kernels.counters(st)
        except _kernels.KernelUnavailable:
            pass
    if policy == "opt":
        if _is_spec(source):
            source = _materialize(source)
        return _vat_pure_opt(source, machine, layout, data_pages, node_pages)
    it = _spec_iter(source) if _is_spec(source) else iter(source.addresses)
    return _vat_pure_stream(it, machine, policy, layout, data_pages, node_pages)


def _walk_keys(machine: MachineConfig, page: int):
    # root-first, root itself excluded (it is pinned)
    return [
        TranslationNode(layer, page // machine.K**layer)
        for layer in range(machine.d - 1, -1, -1)
    ]


def _vat_pure_stream(addr_iter, machine, policy, layout, data_pages, node_pages):
    root = machine.root
    if layout == "unified":
        node_cache = data_cache = cache_sim.CacheState(machine.cache_pages, policy)
    else:
        data_cache = cache_sim.CacheState(data_pages, policy)
        node_cache = cache_sim.CacheState(node_pages, policy)
    data_cache.pin(root)
    if node_cache is not data_cache:
        node_cache.pin(root)
    n = 0
    data_faults = 0
    trans_faults = 0
    occ = 0
    occ_max = 0
    P = machine.P
    for addr in addr_iter:
        n += 1
        page = int(addr) // P
        data_cache.access(root)
        for key in _walk_keys(machine, page):
            cache = node_cache if key.layer >= 1 else data_cache
            out = cache.access(key)
            if out.hit:
                continue
            if key.layer >= 1:
                trans_faults += 1
                occ += 1
            else:
                data_faults += 1
            if out.evicted is not None and out.evicted[0] >= 1:
                occ -= 1
            if occ > occ_max:
                occ_max = occ
    if layout == "partitioned":
        occ_max = occ_max  # occ tracks node-cache residency either way
    return {
        "n_accesses": n, "data_faults": data_faults,
        "translation_faults": trans_faults, "occ_max": occ_max,
        "em_faults": 0,
    }


def _vat_pure_opt(trace: AccessTrace, machine, layout, data_pages, node_pages):
    # offline policy: expand the walk keys, annotate next uses, then replay
    keys: list[TranslationNode] = []
    P = machine.P
    for addr in trace.addresses:
        keys.extend(_walk_keys(machine, int(addr) // P))
    ann = cache_sim.opt_annotate(keys)
    if layout == "unified":
        node_cache = data_cache = cache_sim.CacheState(machine.cache_pages, "opt")
    else:
        data_cache = cache_sim.CacheState(data_pages, "opt")
        node_cache = cache_sim.CacheState(node_pages, "opt")
    data_faults = 0
    trans_faults = 0
    occ = 0
    occ_max = 0
    for key, nu in zip(keys, ann):
        cache = node_cache if key.layer >= 1 else data_cache
        out = cache.access(key, nu)
        if out.hit:
            continue
        if key.layer >= 1:
            trans_faults += 1
            occ += 1
        else:
            data_faults += 1
        if out.evicted is not None and out.evicted[0] >= 1:
            occ -= 1
        if occ > occ_max:
            occ_max = occ
    return {
        "n_accesses": len(trace), "data_faults": data_faults,
        "translation_faults": trans_faults, "occ_max": occ_max,
        "em_faults": 0,
    }
