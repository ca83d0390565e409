"""Deterministic, seeded trace generators.

Each workload simulates a reference implementation over an array of ``n``
items of ``a`` addressable units (item ``i`` at address ``i * a``) and
records every array access, in execution order, as one address.  Auxiliary
storage (merge buffers, funnel buffers, output arrays) sits above the input
array and is covered by the trace's declared extent.

All randomness is pre-drawn from ``numpy.random.default_rng(seed)`` into
plain arrays during :func:`prepare`, so the trace of a spec is a pure
function of the spec.  The pure-Python generators here define the emission
conventions; the numba drivers in ``vatsim._kernels._gen`` mirror them
line by line and are equivalence-tested against them.

Emission conventions worth knowing when reading lengths:

* heap sift-down uses Floyd's hole method: read the sifted item, read the
  compared children, one write per level the hole moves, one final write;
* heapsort's extract step reads root and last item, then writes both;
* quicksort is median-of-three + Hoare partition with an insertion-sort
  cutoff of 16 (reads on every comparison, two writes per swap);
* the multiway merger reads an item when it enters the merger (run heads
  only) and writes it when it leaves; the merge heap itself is treated as
  cache-resident and emits nothing;
* funnelsort moves items through per-node buffers (one read + one write
  per tree level) and copies each merge result back in place.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from . import _kernels
from .cost_engine import AccessTrace

KINDS = (
    "sequential_scan",
    "random_scan",
    "permute",
    "repeated_binary_search",
    "heapify",
    "heapsort",
    "quicksort",
    "multiway_mergesort",
    "funnelsort",
)

QS_CUT = 16
FUNNEL_CUT = 32
DEFAULT_QUERIES = 2048
_VALUE_RANGE = 1 << 62

#: refuse to materialize traces larger than this many addresses
MAX_MATERIALIZE = 1 << 27


@dataclass(frozen=True)
class WorkloadSpec:
    """What to generate: a kind, its size, and kind-specific parameters."""

    kind: str
    n: int
    a: int = 1
    seed: int = 0
    q: int | None = None  # repeated_binary_search: number of searches
    m_items: int | None = None  # multiway_mergesort: fast-memory items
    b_items: int | None = None  # multiway_mergesort: block items

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.a < 1:
            raise ValueError("a must be >= 1")
        if self.kind == "permute" and self.n < 2:
            raise ValueError("permute needs n >= 2")
        if self.kind == "multiway_mergesort":
            if not self.m_items or not self.b_items:
                raise ValueError("multiway_mergesort needs m_items and b_items")
            if self.m_items < 5 * self.b_items:
                raise ValueError(
                    f"need m_items >= 5 * b_items, got {self.m_items} < "
                    f"{5 * self.b_items}"
                )


@dataclass(frozen=True)
class TracePlan:
    """Address-space layout of a spec, known before generation."""

    extent_units: int
    mem_items: int  # size of the value array the driver works on
    exact_len: int | None


def _cbrt_ceil(m: int) -> int:
    k = round(m ** (1.0 / 3.0))
    while k > 0 and k * k * k >= m:
        k -= 1
    while k * k * k < m:
        k += 1
    return k


def _isqrt_ceil(x: int) -> int:
    s = math.isqrt(x)
    if s * s < x:
        s += 1
    return s


def _funnel_depth_caps(h: int) -> list[int]:
    caps = [0] * (h + 1)
    stack = [(0, h)]
    while stack:
        d0, h0 = stack.pop()
        if h0 <= 1:
            continue
        ht = (h0 + 1) // 2
        caps[d0 + ht] = (1 << h0) * _isqrt_ceil(1 << h0)
        stack.append((d0, ht))
        stack.append((d0 + ht, h0 - ht))
    return caps


def _funnel_space(n: int) -> int:
    """Buffer items needed by the top-level merge (recursive merges reuse it)."""
    if n <= FUNNEL_CUT:
        return 0
    k = _cbrt_ceil(n)
    seg = -(-n // k)
    nseg = -(-n // seg)
    h = (nseg - 1).bit_length()
    caps = _funnel_depth_caps(h)
    return sum((1 << dep) * caps[dep] for dep in range(1, h))


def plan(spec: WorkloadSpec) -> TracePlan:
    n, a = spec.n, spec.a
    if spec.kind == "sequential_scan":
        return TracePlan(n * a, 0, n)
    if spec.kind == "random_scan":
        return TracePlan(n * a, 0, n)
    if spec.kind == "permute":
        return TracePlan(n * a, 0, 2 * n - 2)
    if spec.kind == "repeated_binary_search":
        return TracePlan(n * a, n, None)
    if spec.kind in ("heapify", "heapsort", "quicksort"):
        return TracePlan(n * a, n, None)
    if spec.kind == "multiway_mergesort":
        return TracePlan(2 * n * a, 2 * n, None)
    # funnelsort: input + output scratch + shared funnel buffers
    items = 2 * n + _funnel_space(n)
    return TracePlan(items * a, items, None)


def prepare(spec: WorkloadSpec):
    """Materialize the value/randomness arrays a driver runs on.

    Returns ``(mem, aux, p1, p2)`` matching the driver signature; calling
    twice with the same spec yields identical arrays.
    """
    rng = np.random.default_rng(spec.seed)
    n, a = spec.n, spec.a
    empty = np.empty(0, np.int64)
    if spec.kind == "sequential_scan":
        return empty, empty, n, 0
    if spec.kind == "random_scan":
        return empty, rng.integers(0, n, size=n, dtype=np.int64), n, 0
    if spec.kind == "permute":
        highs = np.arange(n - 1, 0, -1, dtype=np.int64) + 1
        return empty, rng.integers(0, highs, dtype=np.int64), n, 0
    if spec.kind == "repeated_binary_search":
        q = spec.q or DEFAULT_QUERIES
        mem = np.arange(n, dtype=np.int64)
        return mem, rng.integers(0, n, size=q, dtype=np.int64), n, 0
    values = rng.integers(0, _VALUE_RANGE, size=n, dtype=np.int64)
    if spec.kind in ("heapify", "heapsort", "quicksort"):
        return values, empty, n, 0
    pl = plan(spec)
    mem = np.zeros(pl.mem_items, np.int64)
    mem[:n] = values
    if spec.kind == "multiway_mergesort":
        return mem, empty, spec.m_items, spec.b_items
    return mem, empty, n, 0  # funnelsort


# ---------------------------------------------------------------------------
# pure-Python reference generators (one per kind, mirrored by the kernels)
# ---------------------------------------------------------------------------


def _it_sequential(mem, aux, a, p1, p2):
    for i in range(p1):
        yield i * a


def _it_random(mem, aux, a, p1, p2):
    for i in range(aux.size):
        yield int(aux[i]) * a


def _it_permute(mem, aux, a, p1, p2):
    n = aux.size + 1
    t = 0
    for i in range(n - 1, 0, -1):
        yield i * a
        yield int(aux[t]) * a
        t += 1


def _it_binsearch(mem, aux, a, p1, p2):
    n = mem.size
    for s in range(aux.size):
        key = int(aux[s])
        lo, hi = 0, n
        while lo < hi:
            mid = (lo + hi) >> 1
            yield mid * a
            if mem[mid] < key:
                lo = mid + 1
            else:
                hi = mid


def _it_sift_down(mem, a, start, end):
    x = mem[start]
    yield start * a
    r = start
    while True:
        left = 2 * r + 1
        if left >= end:
            break
        yield left * a
        c, cv = left, mem[left]
        rr = left + 1
        if rr < end:
            yield rr * a
            if mem[rr] > cv:
                c, cv = rr, mem[rr]
        if cv <= x:
            break
        mem[r] = cv
        yield r * a
        r = c
    mem[r] = x
    yield r * a


def _it_heapify(mem, aux, a, p1, p2):
    n = mem.size
    for s in range(n // 2 - 1, -1, -1):
        yield from _it_sift_down(mem, a, s, n)


def _it_heapsort(mem, aux, a, p1, p2):
    n = mem.size
    for s in range(n // 2 - 1, -1, -1):
        yield from _it_sift_down(mem, a, s, n)
    for end in range(n - 1, 0, -1):
        yield 0
        yield end * a
        mem[0], mem[end] = mem[end], mem[0]
        yield end * a
        yield 0
        yield from _it_sift_down(mem, a, 0, end)


def _it_insertion(mem, a, lo, hi):
    for i in range(lo + 1, hi + 1):
        x = mem[i]
        yield i * a
        j = i - 1
        while j >= lo:
            yield j * a
            if mem[j] <= x:
                break
            mem[j + 1] = mem[j]
            yield (j + 1) * a
            j -= 1
        mem[j + 1] = x
        yield (j + 1) * a


def _it_partition(mem, a, lo, hi, out):
    mid = (lo + hi) >> 1
    yield lo * a
    yield mid * a
    yield hi * a
    if mem[mid] < mem[lo]:
        mem[lo], mem[mid] = mem[mid], mem[lo]
        yield lo * a
        yield mid * a
    if mem[hi] < mem[lo]:
        mem[lo], mem[hi] = mem[hi], mem[lo]
        yield lo * a
        yield hi * a
    if mem[hi] < mem[mid]:
        mem[mid], mem[hi] = mem[hi], mem[mid]
        yield mid * a
        yield hi * a
    pivot = mem[mid]
    i, j = lo - 1, hi + 1
    while True:
        i += 1
        yield i * a
        while mem[i] < pivot:
            i += 1
            yield i * a
        j -= 1
        yield j * a
        while mem[j] > pivot:
            j -= 1
            yield j * a
        if i >= j:
            out[0] = j
            return
        mem[i], mem[j] = mem[j], mem[i]
        yield i * a
        yield j * a


def _it_quicksort(mem, aux, a, p1, p2):
    n = mem.size
    if n <= 1:
        return
    stack = [(0, n - 1)]
    out = [0]
    while stack:
        lo, hi = stack.pop()
        while hi - lo + 1 > QS_CUT:
            yield from _it_partition(mem, a, lo, hi, out)
            j = out[0]
            if j - lo < hi - j:
                stack.append((j + 1, hi))
                hi = j
            else:
                stack.append((lo, j))
                lo = j + 1
        yield from _it_insertion(mem, a, lo, hi)


def _it_merge_group(mem, a, src_off, dst_off, g0, g1, run):
    k = (g1 - g0 + run - 1) // run
    heads = [0] * k
    ends = [0] * k
    heap = []
    for r in range(k):
        s = g0 + r * run
        heads[r] = s
        ends[r] = min(s + run, g1)
        yield (src_off + s) * a
        heapq.heappush(heap, (mem[src_off + s], r))
    out = g0
    while heap:
        v, r = heapq.heappop(heap)
        mem[dst_off + out] = v
        yield (dst_off + out) * a
        out += 1
        heads[r] += 1
        if heads[r] < ends[r]:
            idx = src_off + heads[r]
            yield idx * a
            heapq.heappush(heap, (mem[idx], r))


def _it_mergesort(mem, aux, a, p1, p2):
    m_items, b_items = p1, p2
    n = mem.size // 2
    c0 = 0
    while c0 < n:
        c1 = min(c0 + m_items, n)
        for i in range(c0, c1):
            yield i * a
        mem[c0:c1].sort()
        for i in range(c0, c1):
            yield i * a
        c0 = c1
    fan = m_items // b_items
    run = m_items
    src_off = 0
    while run < n:
        dst_off = n - src_off
        g0 = 0
        while g0 < n:
            g1 = min(g0 + fan * run, n)
            yield from _it_merge_group(mem, a, src_off, dst_off, g0, g1, run)
            g0 = g1
        src_off = dst_off
        run *= fan
    if src_off != 0:
        mem[:n] = mem[n : 2 * n]


def _it_funnel_merge(mem, a, base, m, seg, nseg, out_base, buf_base):
    h = (nseg - 1).bit_length()
    k2 = 1 << h
    caps = _funnel_depth_caps(h)
    buf_lo = [0] * (2 * k2)
    buf_cap = [0] * (2 * k2)
    rd = [0] * (2 * k2)
    wr = [0] * (2 * k2)
    done = [False] * (2 * k2)
    for v in range(k2, 2 * k2):
        s = min(base + (v - k2) * seg, base + m)
        rd[v] = s
        wr[v] = min(s + seg, base + m)
        done[v] = True
    nxt_free = buf_base
    buf_lo[1] = out_base
    buf_cap[1] = m
    for v in range(2, k2):
        dep = v.bit_length() - 1
        buf_lo[v] = nxt_free
        buf_cap[v] = caps[dep]
        nxt_free += caps[dep]
    if nxt_free > mem.size:
        raise RuntimeError("funnel workspace exceeded the planned extent")
    stack = [1]
    while stack:
        v = stack[-1]
        if v < k2 and rd[v] == wr[v] and v != 1:
            rd[v] = 0
            wr[v] = 0
        left, right = 2 * v, 2 * v + 1
        need = -1
        while wr[v] < buf_cap[v]:
            la = wr[left] - rd[left]
            ra = wr[right] - rd[right]
            if la == 0 and not done[left]:
                need = left
                break
            if ra == 0 and not done[right]:
                need = right
                break
            if la == 0 and ra == 0:
                done[v] = True
                break
            if la == 0:
                c = right
            elif ra == 0:
                c = left
            else:
                vl = mem[rd[left]] if left >= k2 else mem[buf_lo[left] + rd[left]]
                vr = mem[rd[right]] if right >= k2 else mem[buf_lo[right] + rd[right]]
                c = left if vl <= vr else right
            src = rd[c] if c >= k2 else buf_lo[c] + rd[c]
            val = mem[src]
            yield src * a
            rd[c] += 1
            dst = buf_lo[v] + wr[v]
            mem[dst] = val
            yield dst * a
            wr[v] += 1
        if need >= 0:
            stack.append(need)
        else:
            stack.pop()


def _it_funnelsort(mem, aux, a, p1, p2):
    n = p1
    if n <= 0:
        return
    stack = [[0, n, 0]]
    while stack:
        frame = stack[-1]
        base, m, child = frame
        if m <= FUNNEL_CUT:
            yield from _it_insertion(mem, a, base, base + m - 1)
            stack.pop()
            continue
        k = _cbrt_ceil(m)
        seg = -(-m // k)
        nseg = -(-m // seg)
        if child < nseg:
            frame[2] = child + 1
            cb = base + child * seg
            stack.append([cb, min(seg, base + m - cb), 0])
            continue
        yield from _it_funnel_merge(mem, a, base, m, seg, nseg, n + base, 2 * n)
        for t in range(m):
            src = n + base + t
            yield src * a
            mem[base + t] = mem[src]
            yield (base + t) * a
        stack.pop()


_ITERATORS = {
    "sequential_scan": _it_sequential,
    "random_scan": _it_random,
    "permute": _it_permute,
    "repeated_binary_search": _it_binsearch,
    "heapify": _it_heapify,
    "heapsort": _it_heapsort,
    "quicksort": _it_quicksort,
    "multiway_mergesort": _it_mergesort,
    "funnelsort": _it_funnelsort,
}


def iter_addresses(spec: WorkloadSpec) -> Iterator[int]:
    """Stream the trace of ``spec`` (pure-Python reference path)."""
    mem, aux, p1, p2 = prepare(spec)
    return _ITERATORS[spec.kind](mem, aux, spec.a, p1, p2)


def generate(spec: WorkloadSpec) -> AccessTrace:
    """Materialize the full trace of ``spec`` as an :class:`AccessTrace`."""
    pl = plan(spec)
    bound = pl.exact_len
    if _kernels.enabled():
        try:
            if bound is None:
                mem, aux, p1, p2 = prepare(spec)
                st = _kernels.state_count()
                _kernels.run_driver(spec.kind, mem, aux, spec.a, p1, p2, st)
                bound = _kernels.counters(st)["n_accesses"]
            if bound > MAX_MATERIALIZE:
                raise ValueError(
                    f"trace of {spec.kind} n={spec.n} has {bound} accesses; "
                    "replay it from the spec instead of materializing"
                )
            mem, aux, p1, p2 = prepare(spec)
            st = _kernels.state_collect(bound)
            _kernels.run_driver(spec.kind, mem, aux, spec.a, p1, p2, st)
            c = _kernels.counters(st)
            addrs = st[14][: c["buf_len"]].copy()
            return AccessTrace(addrs, pl.extent_units, spec.a)
        except _kernels.KernelUnavailable:
            pass
    out = []
    for addr in iter_addresses(spec):
        out.append(addr)
        if len(out) > MAX_MATERIALIZE:
            raise ValueError(
                f"trace of {spec.kind} n={spec.n} exceeds {MAX_MATERIALIZE} "
                "accesses; replay it from the spec instead of materializing"
            )
    return AccessTrace(np.asarray(out, np.int64), pl.extent_units, spec.a)


def sorted_output(spec: WorkloadSpec) -> np.ndarray:
    """Run a sorting workload and return its output array (first n items)."""
    mem, aux, p1, p2 = prepare(spec)
    if _kernels.enabled():
        try:
            st = _kernels.state_count()
            _kernels.run_driver(spec.kind, mem, aux, spec.a, p1, p2, st)
            return mem[: spec.n].copy()
        except _kernels.KernelUnavailable:
            mem, aux, p1, p2 = prepare(spec)
    for _ in _ITERATORS[spec.kind](mem, aux, spec.a, p1, p2):
        pass
    return mem[: spec.n].copy()


# -- spec-mandated generator entry points -----------------------------------


def gen_sequential_scan(n: int, a: int = 1) -> AccessTrace:
    return generate(WorkloadSpec("sequential_scan", n, a))


def gen_random_scan(n: int, a: int = 1, seed: int = 0) -> AccessTrace:
    return generate(WorkloadSpec("random_scan", n, a, seed))


def gen_permute(n: int, a: int = 1, seed: int = 0) -> AccessTrace:
    return generate(WorkloadSpec("permute", n, a, seed))


def gen_repeated_binary_search(n: int, a: int = 1, seed: int = 0,
                               q: int = DEFAULT_QUERIES) -> AccessTrace:
    return generate(WorkloadSpec("repeated_binary_search", n, a, seed, q=q))


def gen_heapify(n: int, a: int = 1, seed: int = 0) -> AccessTrace:
    return generate(WorkloadSpec("heapify", n, a, seed))


def gen_heapsort(n: int, a: int = 1, seed: int = 0) -> AccessTrace:
    return generate(WorkloadSpec("heapsort", n, a, seed))


def gen_quicksort(n: int, a: int = 1, seed: int = 0) -> AccessTrace:
    return generate(WorkloadSpec("quicksort", n, a, seed))


def gen_multiway_mergesort(n: int, a: int, m_items: int, b_items: int,
                           seed: int = 0) -> AccessTrace:
    return generate(
        WorkloadSpec("multiway_mergesort", n, a, seed,
                     m_items=m_items, b_items=b_items)
    )


def gen_funnelsort(n: int, a: int = 1, seed: int = 0):
    """Returns ``(trace, sorted_output)``."""
    spec = WorkloadSpec("funnelsort", n, a, seed)
    trace = generate(spec)
    return trace, sorted_output(spec)


def with_seed(spec: WorkloadSpec, seed: int) -> WorkloadSpec:
    return replace(spec, seed=seed)
