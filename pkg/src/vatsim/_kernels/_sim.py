"""Accelerated replay machinery.

All cache state lives in a flat tuple of numpy arrays (the "state tuple"):

    st = (geo, ints, off, powk,
          map1, sk1, prv1, nxt1, regs1,
          map2, sk2, prv2, nxt2, regs2, buf)

``geo`` holds the run geometry (read-only), ``ints`` the fault counters,
``regs*`` each cache's (count, head, tail).  Caches are direct-mapped:
``map1``/``map2`` take a dense key index to a slot (or -1) and the slots
form a doubly-linked recency list.  Dense key indexing: layer-``l`` node
``i`` lives at ``off[l] + i`` with ``off[0] = 0``, so data pages are their
page index and any key ``>= off[1]`` is an internal translation node.

Addresses are processed in chunks: :func:`flush` unpacks the tuple once,
then a per-mode loop works on raw arrays with the counters in locals, so
the per-access path crosses no function-call boundary that would touch the
tuple.  Workload drivers stage addresses into a small buffer and flush it
when full (see ``_gen``); materialized traces go through
:func:`replay_chunk`.
"""

import numpy as np
from numba import njit

# geo indices
GEO_MODE = 0
GEO_P = 1
GEO_K = 2
GEO_D = 3
GEO_A = 4
GEO_LOGP = 5
GEO_LOGK = 6
GEO_POLICY = 7  # 0 = lru, 1 = fifo
GEO_LAYOUT = 8  # 0 = unified, 1 = partitioned
GEO_CAP1 = 9
GEO_CAP2 = 10
GEO_BLOCKU = 11
GEO_LOGBU = 12
GEO_NPAGES = 13
GEO_LEN = 14

# ints indices (counters)
I_NACC = 0
I_DF = 1
I_TF = 2
I_EMF = 3
I_LASTPAGE = 4
I_LASTBLOCK = 5
I_OCC = 6
I_OCCMAX = 7
I_BUFLEN = 8
I_ERR = 9
I_PBMAX = 10
I_BLKRESMAX = 11
I_LEN = 12

# regs indices (per-cache registers)
R_CNT = 0
R_HEAD = 1
R_TAIL = 2
R_LEN = 3

# emit modes
MODE_COLLECT = 0
MODE_VAT = 1
MODE_EM = 2
MODE_BOTH = 3
MODE_COUPLED = 4
MODE_COUNT = 5

ERR_BUF_OVERFLOW = 1
ERR_NO_SPACE = 2


@njit(cache=True)
def _lru(map_, sk, prv, nxt, regs, cap, keyidx, move):
    """Touch ``keyidx``; returns -2 on hit, else the evicted key or -1.

    Call-free on purpose so LLVM inlines it into the mode loops.
    """
    s = map_[keyidx]
    if s >= 0:
        if move and regs[R_HEAD] != s:
            p = prv[s]
            nx = nxt[s]
            nxt[p] = nx
            if nx >= 0:
                prv[nx] = p
            else:
                regs[R_TAIL] = p
            h = np.int32(regs[R_HEAD])
            prv[s] = -1
            nxt[s] = h
            prv[h] = s
            regs[R_HEAD] = s
        return np.int64(-2)
    victim = np.int64(-1)
    if regs[R_CNT] == cap:
        t = np.int32(regs[R_TAIL])
        victim = sk[t]
        map_[victim] = -1
        p = prv[t]
        regs[R_TAIL] = p
        if p >= 0:
            nxt[p] = -1
        else:
            regs[R_HEAD] = -1
        s = t
    else:
        s = np.int32(regs[R_CNT])
        regs[R_CNT] += 1
    sk[s] = keyidx
    h = np.int32(regs[R_HEAD])
    prv[s] = -1
    nxt[s] = h
    if h >= 0:
        prv[h] = s
    else:
        regs[R_TAIL] = s
    regs[R_HEAD] = s
    map_[keyidx] = np.int32(s)
    return victim


@njit(cache=True)
def _loop_vat_unified(buf, n, geo, ints, off, powk, map1, sk1, prv1, nxt1, regs1):
    P = geo[GEO_P]
    lp = geo[GEO_LOGP]
    lk = geo[GEO_LOGK]
    d = geo[GEO_D]
    cap = geo[GEO_CAP1]
    move = geo[GEO_POLICY] == 0
    internal_base = off[1]
    last_page = ints[I_LASTPAGE]
    df = ints[I_DF]
    tf = ints[I_TF]
    occ = ints[I_OCC]
    occ_max = ints[I_OCCMAX]
    for i in range(n):
        addr = buf[i]
        page = addr >> lp if lp >= 0 else addr // P
        # repeat-page shortcut is only sound under LRU: a full walk leaves
        # its own path resident and in the same relative order (needs
        # capacity >= path length; FIFO can evict mid-walk insertions)
        if page == last_page and move:
            continue
        last_page = page
        for layer in range(d - 1, 0, -1):
            num = page >> (lk * layer) if lk >= 0 else page // powk[layer]
            r = _lru(map1, sk1, prv1, nxt1, regs1, cap, off[layer] + num, move)
            if r != -2:
                tf += 1
                occ += 1
                if r >= internal_base:
                    occ -= 1
                elif occ > occ_max:
                    occ_max = occ
        r = _lru(map1, sk1, prv1, nxt1, regs1, cap, page, move)
        if r != -2:
            df += 1
            if r >= internal_base:
                occ -= 1
    ints[I_LASTPAGE] = last_page
    ints[I_DF] = df
    ints[I_TF] = tf
    ints[I_OCC] = occ
    ints[I_OCCMAX] = occ_max


@njit(cache=True)
def _loop_vat_part(buf, n, geo, ints, off, powk, map1, sk1, prv1, nxt1, regs1,
                   map2, sk2, prv2, nxt2, regs2):
    P = geo[GEO_P]
    lp = geo[GEO_LOGP]
    lk = geo[GEO_LOGK]
    d = geo[GEO_D]
    cap1 = geo[GEO_CAP1]
    cap2 = geo[GEO_CAP2]
    move = geo[GEO_POLICY] == 0
    last_page = ints[I_LASTPAGE]
    df = ints[I_DF]
    tf = ints[I_TF]
    occ_max = ints[I_OCCMAX]
    for i in range(n):
        addr = buf[i]
        page = addr >> lp if lp >= 0 else addr // P
        if page == last_page and move:
            continue
        last_page = page
        for layer in range(d - 1, 0, -1):
            num = page >> (lk * layer) if lk >= 0 else page // powk[layer]
            r = _lru(map2, sk2, prv2, nxt2, regs2, cap2, off[layer] + num, move)
            if r != -2:
                tf += 1
                if regs2[R_CNT] > occ_max:
                    occ_max = regs2[R_CNT]
        r = _lru(map1, sk1, prv1, nxt1, regs1, cap1, page, move)
        if r != -2:
            df += 1
    ints[I_LASTPAGE] = last_page
    ints[I_DF] = df
    ints[I_TF] = tf
    ints[I_OCC] = regs2[R_CNT]
    ints[I_OCCMAX] = occ_max


@njit(cache=True)
def _loop_em(buf, n, geo, ints, map_, sk, prv, nxt, regs):
    bu = geo[GEO_BLOCKU]
    lb = geo[GEO_LOGBU]
    cap = geo[GEO_CAP1]
    move = geo[GEO_POLICY] == 0
    last_block = ints[I_LASTBLOCK]
    emf = ints[I_EMF]
    for i in range(n):
        addr = buf[i]
        block = addr >> lb if lb >= 0 else addr // bu
        if block == last_block:
            continue
        last_block = block
        if _lru(map_, sk, prv, nxt, regs, cap, block, move) != -2:
            emf += 1
    ints[I_LASTBLOCK] = last_block
    ints[I_EMF] = emf


@njit(cache=True)
def _loop_both(buf, n, geo, ints, off, powk, map1, sk1, prv1, nxt1, regs1,
               map2, sk2, prv2, nxt2, regs2):
    # unified VAT walk on cache 1 plus block EM replay on cache 2
    P = geo[GEO_P]
    lp = geo[GEO_LOGP]
    lk = geo[GEO_LOGK]
    d = geo[GEO_D]
    cap1 = geo[GEO_CAP1]
    cap2 = geo[GEO_CAP2]
    bu = geo[GEO_BLOCKU]
    lb = geo[GEO_LOGBU]
    move = geo[GEO_POLICY] == 0
    internal_base = off[1]
    last_page = ints[I_LASTPAGE]
    last_block = ints[I_LASTBLOCK]
    df = ints[I_DF]
    tf = ints[I_TF]
    emf = ints[I_EMF]
    occ = ints[I_OCC]
    occ_max = ints[I_OCCMAX]
    for i in range(n):
        addr = buf[i]
        page = addr >> lp if lp >= 0 else addr // P
        if page != last_page or not move:
            last_page = page
            for layer in range(d - 1, 0, -1):
                num = page >> (lk * layer) if lk >= 0 else page // powk[layer]
                r = _lru(map1, sk1, prv1, nxt1, regs1, cap1,
                         off[layer] + num, move)
                if r != -2:
                    tf += 1
                    occ += 1
                    if r >= internal_base:
                        occ -= 1
                    elif occ > occ_max:
                        occ_max = occ
            r = _lru(map1, sk1, prv1, nxt1, regs1, cap1, page, move)
            if r != -2:
                df += 1
                if r >= internal_base:
                    occ -= 1
        block = addr >> lb if lb >= 0 else addr // bu
        if block != last_block:
            last_block = block
            if _lru(map2, sk2, prv2, nxt2, regs2, cap2, block, move) != -2:
                emf += 1
    ints[I_LASTPAGE] = last_page
    ints[I_LASTBLOCK] = last_block
    ints[I_DF] = df
    ints[I_TF] = tf
    ints[I_EMF] = emf
    ints[I_OCC] = occ
    ints[I_OCCMAX] = occ_max


@njit(cache=True)
def _coupled_adjust(geo, off, powk, map2, block, load):
    """Reference-count the internal path-union nodes of one block.

    Returns the number of nodes newly brought in (``load=True``) resp.
    dropped to zero (``load=False``).
    """
    d = geo[GEO_D]
    lk = geo[GEO_LOGK]
    npages = geo[GEO_NPAGES]
    pstart = block * d
    pend = pstart + d
    if pend > npages:
        pend = npages
    changed = 0
    for layer in range(1, d):
        prev = np.int64(-1)
        for p in range(pstart, pend):
            num = p >> (lk * layer) if lk >= 0 else p // powk[layer]
            if num != prev:
                prev = num
                idx = off[layer] + num
                c = map2[idx]
                if load:
                    if c == 0:
                        changed += 1
                    map2[idx] = c + 1
                else:
                    map2[idx] = c - 1
                    if c == 1:
                        changed += 1
    return changed


@njit(cache=True)
def _loop_coupled(buf, n, geo, ints, off, powk, map1, sk1, prv1, nxt1, regs1,
                  map2):
    """Block-coupled EM-to-VAT execution.

    The EM side runs a block cache over blocks of ``d`` aligned pages.  Each
    EM fault loads the block's pages plus the missing internal nodes of
    their translation paths; node residency is reference-counted over the
    resident blocks (``map2`` holds the counts).
    """
    bu = geo[GEO_BLOCKU]
    lb = geo[GEO_LOGBU]
    cap = geo[GEO_CAP1]
    d = geo[GEO_D]
    npages = geo[GEO_NPAGES]
    move = geo[GEO_POLICY] == 0
    last_block = ints[I_LASTBLOCK]
    for i in range(n):
        addr = buf[i]
        block = addr >> lb if lb >= 0 else addr // bu
        if block == last_block:
            continue
        last_block = block
        r = _lru(map1, sk1, prv1, nxt1, regs1, cap, block, move)
        if r == -2:
            continue
        ints[I_EMF] += 1
        if r >= 0:
            ints[I_OCC] -= _coupled_adjust(geo, off, powk, map2, r, False)
        new_nodes = _coupled_adjust(geo, off, powk, map2, block, True)
        ints[I_OCC] += new_nodes
        pstart = block * d
        pend = pstart + d
        if pend > npages:
            pend = npages
        loaded = pend - pstart
        ints[I_DF] += loaded
        ints[I_TF] += new_nodes
        pb = loaded + new_nodes
        if pb > ints[I_PBMAX]:
            ints[I_PBMAX] = pb
        if ints[I_OCC] > ints[I_OCCMAX]:
            ints[I_OCCMAX] = ints[I_OCC]
        if regs1[R_CNT] > ints[I_BLKRESMAX]:
            ints[I_BLKRESMAX] = regs1[R_CNT]
    ints[I_LASTBLOCK] = last_block


@njit(cache=True)
def flush(st, buf, n):
    """Process ``buf[:n]`` according to the state tuple's mode."""
    geo = st[0]
    ints = st[1]
    ints[I_NACC] += n
    mode = geo[GEO_MODE]
    if mode == MODE_COUNT:
        return
    if mode == MODE_COLLECT:
        obuf = st[14]
        pos = ints[I_BUFLEN]
        if pos + n <= obuf.size:
            obuf[pos:pos + n] = buf[:n]
            ints[I_BUFLEN] = pos + n
        else:
            ints[I_ERR] = ERR_BUF_OVERFLOW
        return
    off = st[2]
    powk = st[3]
    map1, sk1, prv1, nxt1, regs1 = st[4], st[5], st[6], st[7], st[8]
    map2, sk2, prv2, nxt2, regs2 = st[9], st[10], st[11], st[12], st[13]
    if mode == MODE_VAT:
        if geo[GEO_LAYOUT] == 0:
            _loop_vat_unified(buf, n, geo, ints, off, powk,
                              map1, sk1, prv1, nxt1, regs1)
        else:
            _loop_vat_part(buf, n, geo, ints, off, powk,
                           map1, sk1, prv1, nxt1, regs1,
                           map2, sk2, prv2, nxt2, regs2)
    elif mode == MODE_EM:
        _loop_em(buf, n, geo, ints, map1, sk1, prv1, nxt1, regs1)
    elif mode == MODE_BOTH:
        _loop_both(buf, n, geo, ints, off, powk,
                   map1, sk1, prv1, nxt1, regs1,
                   map2, sk2, prv2, nxt2, regs2)
    elif mode == MODE_COUPLED:
        _loop_coupled(buf, n, geo, ints, off, powk,
                      map1, sk1, prv1, nxt1, regs1, map2)


@njit(cache=True)
def replay_chunk(st, addrs):
    flush(st, addrs, addrs.size)


@njit(cache=True)
def next_use_indices(keys, key_space, inf_value):
    """Index of the next occurrence of each key, ``inf_value`` if none."""
    last = np.full(key_space, inf_value, np.int64)
    out = np.empty(keys.size, np.int64)
    for t in range(keys.size - 1, -1, -1):
        k = keys[t]
        out[t] = last[k]
        last[k] = t
    return out


@njit(cache=True)
def em_opt_replay(blocks, nxt, capacity, key_space):
    """Belady replay of a block stream; ties evict the smallest key."""
    map_ = np.full(key_space, -1, np.int32)
    skey = np.zeros(capacity, np.int64)
    snu = np.zeros(capacity, np.int64)
    cnt = 0
    faults = 0
    for t in range(blocks.size):
        b = blocks[t]
        s = map_[b]
        if s >= 0:
            snu[s] = nxt[t]
            continue
        faults += 1
        if cnt == capacity:
            v = 0
            for i in range(1, cnt):
                if snu[i] > snu[v] or (snu[i] == snu[v] and skey[i] < skey[v]):
                    v = i
            map_[skey[v]] = -1
            s = v
        else:
            s = cnt
            cnt += 1
        skey[s] = b
        snu[s] = nxt[t]
        map_[b] = s
    return faults


@njit(cache=True)
def _opt_faults_small(trace, length, n_keys, capacity):
    nxt = np.empty(length, np.int64)
    last = np.full(n_keys, length, np.int64)
    for t in range(length - 1, -1, -1):
        k = trace[t]
        nxt[t] = last[k]
        last[k] = t
    skey = np.zeros(capacity, np.int64)
    snu = np.zeros(capacity, np.int64)
    where = np.full(n_keys, -1, np.int64)
    cnt = 0
    faults = 0
    for t in range(length):
        k = trace[t]
        s = where[k]
        if s >= 0:
            snu[s] = nxt[t]
            continue
        faults += 1
        if cnt == capacity:
            v = 0
            for i in range(1, cnt):
                if snu[i] > snu[v] or (snu[i] == snu[v] and skey[i] < skey[v]):
                    v = i
            where[skey[v]] = -1
            s = v
        else:
            s = cnt
            cnt += 1
        skey[s] = k
        snu[s] = nxt[t]
        where[k] = s
    return faults


@njit(cache=True)
def _min_faults_small(trace, length, n_keys, capacity):
    """Exact offline minimum via DP over (position, resident set)."""
    nmask = 1 << n_keys
    fnext = np.zeros(nmask, np.int64)
    fcur = np.zeros(nmask, np.int64)
    for t in range(length - 1, -1, -1):
        k = trace[t]
        bit = 1 << k
        for mask in range(nmask):
            if mask & bit:
                fcur[mask] = fnext[mask]
                continue
            pop = 0
            mm = mask
            while mm:
                pop += mm & 1
                mm >>= 1
            if pop < capacity:
                fcur[mask] = 1 + fnext[mask | bit]
            else:
                best = np.int64(1 << 60)
                for v in range(n_keys):
                    if mask & (1 << v):
                        cand = fnext[(mask ^ (1 << v)) | bit]
                        if cand < best:
                            best = cand
                fcur[mask] = 1 + best
        tmp = fnext
        fnext = fcur
        fcur = tmp
    return fnext[0]


@njit(cache=True)
def belady_exhaustive(max_len, n_keys, capacity):
    """Check Belady optimality on every trace up to ``max_len``.

    Traces are enumerated per length up to relabeling (first occurrences
    must appear in key order), which covers all traces since fault counts
    are label-invariant.  Returns (#traces checked, #mismatches).
    """
    trace = np.zeros(max_len, np.int64)
    checked = 0
    bad = 0
    for length in range(1, max_len + 1):
        for i in range(length):
            trace[i] = 0
        while True:
            mx = np.int64(-1)
            canonical = True
            for i in range(length):
                v = trace[i]
                if v > mx + 1:
                    canonical = False
                    break
                if v > mx:
                    mx = v
            if canonical:
                checked += 1
                opt = _opt_faults_small(trace, length, n_keys, capacity)
                best = _min_faults_small(trace, length, n_keys, capacity)
                if opt != best:
                    bad += 1
            pos = length - 1
            while pos >= 0 and trace[pos] == n_keys - 1:
                trace[pos] = 0
                pos -= 1
            if pos < 0:
                break
            trace[pos] += 1
    return checked, bad
