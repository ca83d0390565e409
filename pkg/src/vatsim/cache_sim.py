"""Page-granularity cache with pluggable replacement and pinning.

This is the reference (object-level) simulator: one :class:`CacheState`
instance owns its mutable state and replays one access stream.  Keys can be
anything hashable and orderable; the replay engines use ints for block
caches and ``(layer, number)`` tuples for translation nodes, which sort the
same way as the accelerated kernels' dense encoding.

Policies: ``lru``, ``fifo`` and ``opt`` (Belady).  ``opt`` is offline: every
access must carry the next-use annotation produced by :func:`opt_annotate`.
Pinned keys are always resident, are never eviction victims and do not
consume capacity.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

POLICIES = ("lru", "fifo", "opt")

INF = math.inf


@dataclass(frozen=True)
class AccessOutcome:
    hit: bool
    evicted: Hashable | None = None


class CacheState:
    """A single cache instance with full fault/eviction accounting."""

    def __init__(self, capacity_pages: int, policy: str = "lru"):
        if capacity_pages < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity_pages}")
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}, expected one of {POLICIES}")
        self.capacity = capacity_pages
        self.policy = policy
        self.faults = 0
        self.accesses = 0
        self.pinned: set = set()
        # LRU/FIFO: insertion-ordered map, least-recent/oldest first.
        # OPT: key -> next-use annotation recorded at the last access.
        self._res: OrderedDict = OrderedDict()

    # -- inspection ---------------------------------------------------------

    def __contains__(self, key) -> bool:
        return key in self._res or key in self.pinned

    def __len__(self) -> int:
        return len(self._res)

    def resident_set(self) -> set:
        return set(self._res) | self.pinned

    def fault_count(self) -> int:
        return self.faults

    # -- mutation -----------------------------------------------------------

    def pin(self, key) -> None:
        """Make ``key`` permanently resident, outside the capacity budget."""
        self._res.pop(key, None)
        self.pinned.add(key)

    def access(self, key, next_use: float | None = None) -> AccessOutcome:
        """Touch ``key``; on a fault, insert it and evict the policy victim."""
        self.accesses += 1
        if key in self.pinned:
            return AccessOutcome(hit=True)
        if self.policy == "opt" and next_use is None:
            raise ValueError("opt policy requires a next-use annotation")

        if key in self._res:
            if self.policy == "lru":
                self._res.move_to_end(key)
            elif self.policy == "opt":
                self._res[key] = next_use
            return AccessOutcome(hit=True)

        self.faults += 1
        evicted = None
        if len(self._res) >= self.capacity:
            evicted = self._victim()
            assert evicted not in self.pinned
            del self._res[evicted]
        self._res[key] = next_use if self.policy == "opt" else None
        return AccessOutcome(hit=False, evicted=evicted)

    def _victim(self):
        if self.policy in ("lru", "fifo"):
            return next(iter(self._res))
        # opt: furthest next use wins; ties broken by smallest key so that
        # runs are reproducible.
        return max(self._res, key=lambda k: (self._res[k], _NegKey(k)))


class _NegKey:
    """Reverses key order so max() prefers the smallest key on ties."""

    __slots__ = ("k",)

    def __init__(self, k):
        self.k = k

    def __lt__(self, other) -> bool:
        return self.k > other.k


def new_cache(capacity_pages: int, policy: str = "lru") -> CacheState:
    return CacheState(capacity_pages, policy)


def opt_annotate(trace: Sequence) -> list[float]:
    """Next-use index for each position (``inf`` if the key never recurs).

    Single backward pass; position ``t`` gets the index of the next
    occurrence of ``trace[t]`` after ``t``.
    """
    nxt: dict = {}
    out = [INF] * len(trace)
    for t in range(len(trace) - 1, -1, -1):
        k = trace[t]
        out[t] = nxt.get(k, INF)
        nxt[k] = t
    return out


def replay(cache: CacheState, trace: Sequence) -> int:
    """Run a whole trace through ``cache``; returns the fault count."""
    if cache.policy == "opt":
        ann = opt_annotate(trace)
        for key, nu in zip(trace, ann):
            cache.access(key, nu)
    else:
        for key in trace:
            cache.access(key)
    return cache.faults


def min_faults_bruteforce(trace: Sequence, capacity: int) -> int:
    """Minimum fault count over all eviction strategies (oracle).

    Dynamic program over (position, resident set); exponential in the key
    universe, intended for small traces only.
    """
    keys = sorted(set(trace))
    if not trace:
        return 0
    memo: dict = {}

    def go(t: int, resident: frozenset) -> int:
        if t == len(trace):
            return 0
        state = (t, resident)
        if state in memo:
            return memo[state]
        k = trace[t]
        if k in resident:
            r = go(t + 1, resident)
        elif len(resident) < capacity:
            r = 1 + go(t + 1, resident | {k})
        else:
            r = 1 + min(
                go(t + 1, (resident - {v}) | {k}) for v in resident
            )
        memo[state] = r
        return r

    del keys
    return go(0, frozenset())
