"""Virtual-address decomposition and translation-tree geometry.

A machine with tree arity ``K``, page size ``P`` and translation depth ``d``
covers the address range ``[0, K**d * P)``.  Every address splits into ``d``
base-K digits (the page index, most-significant digit first) and a page
offset.  The translation tree is the complete K-ary tree of height ``d``
whose layer-0 nodes are the data pages; node ``(l, i)`` on layer ``l >= 1``
has children ``(l-1, K*i + c)`` for ``c = 0 .. K-1``, and ``(d, 0)`` is the
root.

Everything in this module is pure and stateless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple


class ConfigError(ValueError):
    """A machine configuration violates its invariants."""


class AddressSpaceOverflow(ValueError):
    """An address or page index lies outside the configured address space."""


class TranslationNode(NamedTuple):
    """A node of the translation tree: layer 0 nodes are data pages."""

    layer: int
    number: int


def compute_depth(last_used_address: int, K: int, P: int) -> int:
    """Translation depth needed to cover ``last_used_address``.

    Returns ``max(1, ceil(log_K(ceil((last+1) / P))))``, i.e. the smallest
    ``d >= 1`` with ``K**d * P > last_used_address``.  Exact integer
    arithmetic throughout; no floating point.
    """
    if K < 2:
        raise ConfigError(f"tree arity K must be >= 2, got {K}")
    if P < 1:
        raise ConfigError(f"page size P must be >= 1, got {P}")
    if last_used_address < 0:
        raise ConfigError("last_used_address must be >= 0")
    pages_needed = last_used_address // P + 1
    d = 1
    span = K
    while span < pages_needed:
        span *= K
        d += 1
    return d


@dataclass(frozen=True)
class MachineConfig:
    """Machine parameters for one simulation run.

    ``extent`` declares the address-space size (in addressable units) the
    run may touch; the translation depth ``d`` is fixed from it up front.
    Passing ``d`` explicitly instead declares the full ``K**d * P`` range.
    """

    K: int
    P: int
    a: int
    cache_units: int
    extent: int | None = None
    d: int = field(default=0)

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ConfigError(f"tree arity K must be >= 2, got {self.K}")
        if self.P < 2:
            raise ConfigError(f"page size P must be >= 2, got {self.P}")
        if self.a < 1 or self.a > self.P or self.P % self.a:
            raise ConfigError(
                f"item size a={self.a} must satisfy 1 <= a <= P and a | P"
            )
        if self.cache_units < self.P or self.cache_units % self.P:
            raise ConfigError(
                f"cache_units={self.cache_units} must be a positive multiple of P={self.P}"
            )
        if self.extent is None and self.d <= 0:
            raise ConfigError("one of extent or d is required")
        if self.extent is not None:
            if self.extent < 1:
                raise ConfigError("extent must be >= 1")
            needed = compute_depth(self.extent - 1, self.K, self.P)
            if self.d <= 0:
                object.__setattr__(self, "d", needed)
            elif self.d < needed:
                raise ConfigError(
                    f"declared d={self.d} does not cover extent={self.extent} (needs {needed})"
                )
        else:
            object.__setattr__(self, "extent", self.K**self.d * self.P)

    @property
    def m_items(self) -> int:
        return self.cache_units // self.a

    @property
    def b_items(self) -> int:
        return self.P // self.a

    @property
    def cache_pages(self) -> int:
        return self.cache_units // self.P

    @property
    def total_pages(self) -> int:
        return self.K**self.d

    @property
    def address_limit(self) -> int:
        """One past the largest representable address, ``K**d * P``."""
        return self.K**self.d * self.P

    @property
    def root(self) -> TranslationNode:
        return TranslationNode(self.d, 0)


@dataclass(frozen=True)
class DecomposedAddress:
    """Base-K digits (most-significant first) plus page offset."""

    digits: tuple[int, ...]
    offset: int

    def page_index(self, K: int) -> int:
        page = 0
        for x in self.digits:
            page = page * K + x
        return page


def decompose(addr: int, cfg: MachineConfig) -> DecomposedAddress:
    """Split ``addr`` into ``d`` base-K digits and a page offset."""
    if addr < 0 or addr >= cfg.address_limit:
        raise AddressSpaceOverflow(
            f"address {addr} outside [0, {cfg.address_limit})"
        )
    page, offset = divmod(addr, cfg.P)
    digits = [0] * cfg.d
    for i in range(cfg.d - 1, -1, -1):
        page, digits[i] = divmod(page, cfg.K)
    return DecomposedAddress(tuple(digits), offset)


def recompose(dec: DecomposedAddress, cfg: MachineConfig) -> int:
    """Inverse of :func:`decompose`."""
    if len(dec.digits) != cfg.d:
        raise AddressSpaceOverflow(
            f"expected {cfg.d} digits, got {len(dec.digits)}"
        )
    if not 0 <= dec.offset < cfg.P:
        raise AddressSpaceOverflow(f"offset {dec.offset} outside [0, {cfg.P})")
    page = 0
    for x in dec.digits:
        if not 0 <= x < cfg.K:
            raise AddressSpaceOverflow(f"digit {x} outside [0, {cfg.K})")
        page = page * cfg.K + x
    return page * cfg.P + dec.offset


def page_of(addr: int, cfg: MachineConfig) -> int:
    """Data-page index of an address."""
    if addr < 0 or addr >= cfg.address_limit:
        raise AddressSpaceOverflow(
            f"address {addr} outside [0, {cfg.address_limit})"
        )
    return addr // cfg.P


def translation_path(page_index: int, cfg: MachineConfig) -> list[TranslationNode]:
    """Root-first walk from ``(d, 0)`` down to the data page.

    Consecutive nodes obey the child rule: the layer-(l-1) node number is
    ``K * number_l + digit``, so the node on layer ``l`` is simply
    ``page_index // K**l``.
    """
    if page_index < 0 or page_index >= cfg.total_pages:
        raise AddressSpaceOverflow(
            f"page {page_index} outside [0, {cfg.total_pages})"
        )
    return [
        TranslationNode(layer, page_index // cfg.K**layer)
        for layer in range(cfg.d, -1, -1)
    ]


def path_union(pages: Iterable[int], cfg: MachineConfig) -> set[TranslationNode]:
    """Union of the translation paths of ``pages``, root excluded.

    Includes the layer-0 data pages themselves.  For any run of ``d``
    consecutive pages the internal-node part has at most
    ``2d + ceil(d / (K-1)) <= 3d`` members.
    """
    nodes: set[TranslationNode] = set()
    for p in pages:
        if p < 0 or p >= cfg.total_pages:
            raise AddressSpaceOverflow(
                f"page {p} outside [0, {cfg.total_pages})"
            )
        for layer in range(cfg.d):
            nodes.add(TranslationNode(layer, p // cfg.K**layer))
    return nodes


def internal_nodes(nodes: Iterable[TranslationNode]) -> set[TranslationNode]:
    """Filter a node set down to internal (layer >= 1) nodes."""
    return {v for v in nodes if v.layer >= 1}
