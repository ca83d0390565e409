"""Compiled fast paths with a pure-Python fallback.

The replay engines and workload generators in this package run their inner
loops through numba kernels when possible.  Setting ``VATSIM_PURE=1`` (or
any non-zero value) in the environment forces the pure-Python reference
path everywhere; the kernels are also skipped automatically when numba is
not importable or a run's key space exceeds ``VATSIM_KEYSPACE_LIMIT``
(default ``2**26`` dense keys).

Both paths produce bit-identical fault reports and traces; the test suite
checks that, and ``benchmarks/bench_kernels.py`` compares their speed.
"""

from __future__ import annotations

import os

import numpy as np

KEYSPACE_LIMIT = int(os.environ.get("VATSIM_KEYSPACE_LIMIT", str(1 << 26)))


class KernelUnavailable(RuntimeError):
    """Raised when a run cannot use the compiled kernels."""


def _env_pure() -> bool:
    return os.environ.get("VATSIM_PURE", "").strip() not in ("", "0")


try:
    if _env_pure():
        raise ImportError("VATSIM_PURE is set")
    from . import _sim, _gen
    _ENABLED = True
except ImportError:
    _sim = None
    _gen = None
    _ENABLED = False


def enabled() -> bool:
    return _ENABLED and _sim is not None


def set_enabled(flag: bool) -> None:
    """Runtime toggle (tests, benchmarks).  Enabling requires numba."""
    global _ENABLED, _sim, _gen
    if flag:
        import importlib

        _sim = importlib.import_module(__name__ + "._sim")
        _gen = importlib.import_module(__name__ + "._gen")
        _ENABLED = True
    else:
        _ENABLED = False


def _require():
    if not _ENABLED or _sim is None:
        raise KernelUnavailable("compiled kernels are disabled or unavailable")
    return _sim, _gen


_POLICY_CODE = {"lru": 0, "fifo": 1}


def _log2_exact(x: int) -> int:
    return x.bit_length() - 1 if x > 0 and x & (x - 1) == 0 else -1


def _layer_layout(K: int, d: int):
    """Dense key layout: layer l node i -> off[l] + i, off[d] = total."""
    off = np.zeros(d + 1, np.int64)
    powk = np.ones(d + 1, np.int64)
    total = 0
    count = K**d
    for layer in range(d):
        off[layer] = total
        total += count
        count //= K
    off[d] = total
    for j in range(1, d + 1):
        powk[j] = powk[j - 1] * K
    return off, powk


def _slots(cap: int):
    sk = np.zeros(cap, np.int64)
    prv = np.full(cap, -1, np.int32)
    nxt = np.full(cap, -1, np.int32)
    regs = np.zeros(_sim.R_LEN, np.int64)
    regs[_sim.R_HEAD] = -1
    regs[_sim.R_TAIL] = -1
    return sk, prv, nxt, regs


_D1 = lambda: np.zeros(1, np.int64)  # noqa: E731
_M1 = lambda: np.full(1, -1, np.int32)  # noqa: E731


def _base(sim):
    ints = np.zeros(sim.I_LEN, np.int64)
    ints[sim.I_LASTPAGE] = -1
    ints[sim.I_LASTBLOCK] = -1
    geo = np.zeros(sim.GEO_LEN, np.int64)
    geo[sim.GEO_LOGP] = -1
    geo[sim.GEO_LOGK] = -1
    geo[sim.GEO_LOGBU] = -1
    return geo, ints


def _finish(geo, ints, off=None, powk=None, map1=None, c1=None,
            map2=None, c2=None, buf=None):
    off = _D1() if off is None else off
    powk = _D1() if powk is None else powk
    map1 = _M1() if map1 is None else map1
    map2 = _M1() if map2 is None else map2
    sk1, prv1, nxt1, regs1 = _slots(c1) if c1 else _slots(1)
    sk2, prv2, nxt2, regs2 = _slots(c2) if c2 else _slots(1)
    buf = np.zeros(1, np.int64) if buf is None else buf
    return (geo, ints, off, powk, map1, sk1, prv1, nxt1, regs1,
            map2, sk2, prv2, nxt2, regs2, buf)


def state_collect(buf_len: int):
    sim, _ = _require()
    geo, ints = _base(sim)
    geo[sim.GEO_MODE] = sim.MODE_COLLECT
    return _finish(geo, ints, buf=np.zeros(max(buf_len, 1), np.int64))


def state_count():
    sim, _ = _require()
    geo, ints = _base(sim)
    geo[sim.GEO_MODE] = sim.MODE_COUNT
    return _finish(geo, ints)


def _check_keyspace(n: int, what: str) -> None:
    if n > KEYSPACE_LIMIT:
        raise KernelUnavailable(
            f"{what} needs {n} dense keys > limit {KEYSPACE_LIMIT}; "
            "falling back to the pure path"
        )


def _vat_geo(sim, geo, machine, policy):
    geo[sim.GEO_P] = machine.P
    geo[sim.GEO_K] = machine.K
    geo[sim.GEO_D] = machine.d
    geo[sim.GEO_A] = machine.a
    geo[sim.GEO_LOGP] = _log2_exact(machine.P)
    geo[sim.GEO_LOGK] = _log2_exact(machine.K)
    geo[sim.GEO_POLICY] = _POLICY_CODE[policy]
    geo[sim.GEO_NPAGES] = machine.total_pages


def state_vat(machine, policy="lru", layout="unified",
              data_pages=None, node_pages=None):
    sim, _ = _require()
    if policy not in _POLICY_CODE:
        raise KernelUnavailable(f"no compiled kernel for policy {policy!r}")
    off, powk = _layer_layout(machine.K, machine.d)
    keyspace = int(off[machine.d])
    _check_keyspace(keyspace, "VAT replay")
    geo, ints = _base(sim)
    geo[sim.GEO_MODE] = sim.MODE_VAT
    _vat_geo(sim, geo, machine, policy)
    map1 = np.full(keyspace, -1, np.int32)
    if layout == "unified":
        geo[sim.GEO_CAP1] = machine.cache_pages
        return _finish(geo, ints, off, powk, map1, machine.cache_pages)
    geo[sim.GEO_LAYOUT] = 1
    geo[sim.GEO_CAP1] = data_pages
    geo[sim.GEO_CAP2] = node_pages
    map2 = np.full(keyspace, -1, np.int32)
    return _finish(geo, ints, off, powk, map1, data_pages, map2, node_pages)


def state_em(m_items, b_items, a, extent_units, policy="lru"):
    sim, _ = _require()
    if policy not in _POLICY_CODE:
        raise KernelUnavailable(f"no compiled kernel for policy {policy!r}")
    block_units = b_items * a
    nblocks = (extent_units + block_units - 1) // block_units
    _check_keyspace(nblocks, "EM replay")
    geo, ints = _base(sim)
    geo[sim.GEO_MODE] = sim.MODE_EM
    geo[sim.GEO_A] = a
    geo[sim.GEO_POLICY] = _POLICY_CODE[policy]
    geo[sim.GEO_BLOCKU] = block_units
    geo[sim.GEO_LOGBU] = _log2_exact(block_units)
    cap = m_items // b_items
    geo[sim.GEO_CAP1] = cap
    map1 = np.full(nblocks, -1, np.int32)
    return _finish(geo, ints, map1=map1, c1=cap)


def state_both(machine, policy="lru"):
    """Unified-VAT replay on cache 1 plus page-block EM replay on cache 2."""
    sim, _ = _require()
    if policy not in _POLICY_CODE:
        raise KernelUnavailable(f"no compiled kernel for policy {policy!r}")
    off, powk = _layer_layout(machine.K, machine.d)
    keyspace = int(off[machine.d])
    _check_keyspace(keyspace, "VAT replay")
    geo, ints = _base(sim)
    geo[sim.GEO_MODE] = sim.MODE_BOTH
    _vat_geo(sim, geo, machine, policy)
    geo[sim.GEO_CAP1] = machine.cache_pages
    geo[sim.GEO_BLOCKU] = machine.P
    geo[sim.GEO_LOGBU] = _log2_exact(machine.P)
    geo[sim.GEO_CAP2] = machine.cache_pages
    map1 = np.full(keyspace, -1, np.int32)
    map2 = np.full(machine.total_pages, -1, np.int32)
    return _finish(geo, ints, off, powk, map1, machine.cache_pages,
                   map2, machine.cache_pages)


def state_coupled(machine, policy="lru"):
    """Block-coupled EM-to-VAT construction state.

    EM side: blocks of d aligned pages, data cache of cache_units/(4dP)
    blocks.  VAT side: per-block page loads plus reference-counted internal
    translation nodes (map2 holds the counts).
    """
    sim, _ = _require()
    if policy not in _POLICY_CODE:
        raise KernelUnavailable(f"no compiled kernel for policy {policy!r}")
    d = machine.d
    off, powk = _layer_layout(machine.K, d)
    keyspace = int(off[d])
    _check_keyspace(keyspace, "coupled replay")
    block_units = d * machine.P
    cap_blocks = machine.cache_units // (4 * block_units)
    if cap_blocks < 1:
        raise ValueError(
            f"cache too small: need cache_units >= {4 * block_units} "
            f"for one block of d={d} pages at a quarter of the cache"
        )
    nblocks = (machine.address_limit + block_units - 1) // block_units
    _check_keyspace(nblocks, "coupled replay")
    geo, ints = _base(sim)
    geo[sim.GEO_MODE] = sim.MODE_COUPLED
    _vat_geo(sim, geo, machine, policy)
    geo[sim.GEO_BLOCKU] = block_units
    geo[sim.GEO_LOGBU] = _log2_exact(block_units)
    geo[sim.GEO_CAP1] = cap_blocks
    map1 = np.full(nblocks, -1, np.int32)
    map2 = np.zeros(keyspace, np.int32)  # reference counts
    return _finish(geo, ints, off, powk, map1, cap_blocks, map2, 1)


def counters(st) -> dict:
    sim, _ = _require()
    ints = st[1]
    return {
        "n_accesses": int(ints[sim.I_NACC]),
        "data_faults": int(ints[sim.I_DF]),
        "translation_faults": int(ints[sim.I_TF]),
        "em_faults": int(ints[sim.I_EMF]),
        "occ_max": int(ints[sim.I_OCCMAX]),
        "per_block_max": int(ints[sim.I_PBMAX]),
        "blocks_resident_max": int(ints[sim.I_BLKRESMAX]),
        "buf_len": int(ints[sim.I_BUFLEN]),
    }


def _check_err(st) -> None:
    sim, _ = _require()
    err = int(st[1][sim.I_ERR])
    if err == sim.ERR_BUF_OVERFLOW:
        raise RuntimeError("trace buffer overflow in collect kernel")
    if err == sim.ERR_NO_SPACE:
        raise RuntimeError("funnel workspace exceeded the planned extent")
    if err:
        raise RuntimeError(f"kernel error flag {err}")


def run_driver(kind: str, mem, aux, a: int, p1: int, p2: int, st) -> None:
    _, gen = _require()
    sbuf = np.empty(8192, np.int64)
    gen.DRIVERS[kind](mem, aux, a, p1, p2, st, sbuf)
    _check_err(st)


def replay_array(st, addrs) -> None:
    sim, _ = _require()
    sim.replay_chunk(st, addrs)
    _check_err(st)


def em_opt_faults(blocks, capacity: int, key_space: int) -> int:
    sim, _ = _require()
    nxt = sim.next_use_indices(blocks, key_space, np.int64(blocks.size))
    return int(sim.em_opt_replay(blocks, nxt, capacity, key_space))


def belady_exhaustive(max_len: int, n_keys: int, capacity: int):
    sim, _ = _require()
    return sim.belady_exhaustive(max_len, n_keys, capacity)
