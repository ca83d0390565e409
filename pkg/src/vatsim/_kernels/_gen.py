"""Accelerated workload drivers.

Each driver simulates one workload over an item array ``mem`` (item ``i``
lives at address ``i * a``) and pushes every array read/write, in execution
order, into the replay machinery via the buffered
:func:`vatsim._kernels._sim.push`.  Randomness is pre-drawn by the caller
into ``aux`` so drivers are pure.  The emission conventions (which
reads/writes a reference implementation performs) are mirrored exactly by
the pure-Python generators in :mod:`vatsim.workloads`; the two are
equivalence-tested.

Uniform signature: ``drive(mem, aux, a, p1, p2, st, sbuf)`` where ``sbuf``
is the staging buffer shared with :func:`push`.
"""

import math

import numpy as np
from numba import njit

from ._sim import ERR_NO_SPACE, I_ERR, flush

QS_CUT = 16      # quicksort switches to insertion sort at this range size
FUNNEL_CUT = 32  # funnelsort base-case size


@njit(cache=True)
def drive_sequential(mem, aux, a, p1, p2, st, sbuf):
    bn = 0
    for i in range(p1):
        sbuf[bn] = i * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
    flush(st, sbuf, bn)


@njit(cache=True)
def drive_random(mem, aux, a, p1, p2, st, sbuf):
    bn = 0
    for i in range(aux.size):
        sbuf[bn] = aux[i] * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
    flush(st, sbuf, bn)


@njit(cache=True)
def drive_permute(mem, aux, a, p1, p2, st, sbuf):
    # Fisher-Yates pass: step t swaps item i = n-1-t with item aux[t] <= i.
    n = aux.size + 1
    bn = 0
    t = 0
    for i in range(n - 1, 0, -1):
        sbuf[bn] = i * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        sbuf[bn] = aux[t] * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        t += 1
    flush(st, sbuf, bn)


@njit(cache=True)
def drive_binsearch(mem, aux, a, p1, p2, st, sbuf):
    # mem is the sorted array; aux holds the looked-up key positions.
    n = mem.size
    bn = 0
    for s in range(aux.size):
        key = aux[s]
        lo = np.int64(0)
        hi = np.int64(n)
        while lo < hi:
            mid = (lo + hi) >> 1
            sbuf[bn] = mid * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
            if mem[mid] < key:
                lo = mid + 1
            else:
                hi = mid
    flush(st, sbuf, bn)


@njit(cache=True)
def _sift_down(mem, a, st, sbuf, bn, start, end):
    # Floyd's hole method: the sifted item is held out of the array, larger
    # children move up (one write per level), final placement is one write.
    x = mem[start]
    sbuf[bn] = start * a
    bn += 1
    if bn == sbuf.size:
        flush(st, sbuf, bn)
        bn = 0
    r = start
    while True:
        l = 2 * r + 1
        if l >= end:
            break
        sbuf[bn] = l * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        c = l
        cv = mem[l]
        rr = l + 1
        if rr < end:
            sbuf[bn] = rr * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
            if mem[rr] > cv:
                c = rr
                cv = mem[rr]
        if cv <= x:
            break
        mem[r] = cv
        sbuf[bn] = r * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        r = c
    mem[r] = x
    sbuf[bn] = r * a
    bn += 1
    if bn == sbuf.size:
        flush(st, sbuf, bn)
        bn = 0
    return bn


@njit(cache=True)
def drive_heapify(mem, aux, a, p1, p2, st, sbuf):
    n = mem.size
    bn = 0
    for s in range(n // 2 - 1, -1, -1):
        bn = _sift_down(mem, a, st, sbuf, bn, s, n)
    flush(st, sbuf, bn)


@njit(cache=True)
def drive_heapsort(mem, aux, a, p1, p2, st, sbuf):
    n = mem.size
    bn = 0
    for s in range(n // 2 - 1, -1, -1):
        bn = _sift_down(mem, a, st, sbuf, bn, s, n)
    for end in range(n - 1, 0, -1):
        # swap max to the back: read both, write both
        sbuf[bn] = 0
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        sbuf[bn] = end * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        t = mem[0]
        mem[0] = mem[end]
        mem[end] = t
        sbuf[bn] = end * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        sbuf[bn] = 0
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        bn = _sift_down(mem, a, st, sbuf, bn, 0, end)
    flush(st, sbuf, bn)


@njit(cache=True)
def _insertion(mem, a, st, sbuf, bn, lo, hi):
    for i in range(lo + 1, hi + 1):
        x = mem[i]
        sbuf[bn] = i * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        j = i - 1
        while j >= lo:
            sbuf[bn] = j * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
            if mem[j] <= x:
                break
            mem[j + 1] = mem[j]
            sbuf[bn] = (j + 1) * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
            j -= 1
        mem[j + 1] = x
        sbuf[bn] = (j + 1) * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
    return bn


@njit(cache=True)
def _partition(mem, a, st, sbuf, bn, lo, hi, out):
    # median-of-three pivot, then Hoare partition; the three-sort leaves
    # sentinels so the scans cannot run off the range.
    mid = (lo + hi) >> 1
    sbuf[bn] = lo * a
    bn += 1
    if bn == sbuf.size:
        flush(st, sbuf, bn)
        bn = 0
    sbuf[bn] = mid * a
    bn += 1
    if bn == sbuf.size:
        flush(st, sbuf, bn)
        bn = 0
    sbuf[bn] = hi * a
    bn += 1
    if bn == sbuf.size:
        flush(st, sbuf, bn)
        bn = 0
    if mem[mid] < mem[lo]:
        t = mem[lo]
        mem[lo] = mem[mid]
        mem[mid] = t
        sbuf[bn] = lo * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        sbuf[bn] = mid * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
    if mem[hi] < mem[lo]:
        t = mem[lo]
        mem[lo] = mem[hi]
        mem[hi] = t
        sbuf[bn] = lo * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        sbuf[bn] = hi * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
    if mem[hi] < mem[mid]:
        t = mem[mid]
        mem[mid] = mem[hi]
        mem[hi] = t
        sbuf[bn] = mid * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        sbuf[bn] = hi * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
    pivot = mem[mid]
    i = lo - 1
    j = hi + 1
    while True:
        i += 1
        sbuf[bn] = i * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        while mem[i] < pivot:
            i += 1
            sbuf[bn] = i * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
        j -= 1
        sbuf[bn] = j * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        while mem[j] > pivot:
            j -= 1
            sbuf[bn] = j * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
        if i >= j:
            out[0] = j
            return bn
        t = mem[i]
        mem[i] = mem[j]
        mem[j] = t
        sbuf[bn] = i * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        sbuf[bn] = j * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0


@njit(cache=True)
def drive_quicksort(mem, aux, a, p1, p2, st, sbuf):
    n = mem.size
    if n <= 1:
        return
    stack_lo = np.empty(128, np.int64)
    stack_hi = np.empty(128, np.int64)
    out = np.empty(1, np.int64)
    stack_lo[0] = 0
    stack_hi[0] = n - 1
    sp = 1
    bn = 0
    while sp > 0:
        sp -= 1
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        while hi - lo + 1 > QS_CUT:
            bn = _partition(mem, a, st, sbuf, bn, lo, hi, out)
            j = out[0]
            # keep the smaller side, push the larger: stack stays O(log n)
            if j - lo < hi - j:
                stack_lo[sp] = j + 1
                stack_hi[sp] = hi
                sp += 1
                hi = j
            else:
                stack_lo[sp] = lo
                stack_hi[sp] = j
                sp += 1
                lo = j + 1
        bn = _insertion(mem, a, st, sbuf, bn, lo, hi)
    flush(st, sbuf, bn)


@njit(cache=True)
def _heap_push(hv, hr, size, v, r):
    i = size
    hv[i] = v
    hr[i] = r
    while i > 0:
        p = (i - 1) >> 1
        if hv[p] > hv[i] or (hv[p] == hv[i] and hr[p] > hr[i]):
            hv[p], hv[i] = hv[i], hv[p]
            hr[p], hr[i] = hr[i], hr[p]
            i = p
        else:
            break


@njit(cache=True)
def _heap_pop(hv, hr, size):
    v = hv[0]
    r = hr[0]
    size -= 1
    hv[0] = hv[size]
    hr[0] = hr[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        m = l
        rr = l + 1
        if rr < size and (hv[rr] < hv[l] or (hv[rr] == hv[l] and hr[rr] < hr[l])):
            m = rr
        if hv[m] < hv[i] or (hv[m] == hv[i] and hr[m] < hr[i]):
            hv[m], hv[i] = hv[i], hv[m]
            hr[m], hr[i] = hr[i], hr[m]
            i = m
        else:
            break
    return v, r


@njit(cache=True)
def _merge_group(mem, a, st, sbuf, bn, src_off, dst_off, g0, g1, run):
    # k-way merge of the runs inside [g0, g1); one read when an item enters
    # the merger (run heads only), one write when it leaves.
    k = (g1 - g0 + run - 1) // run
    heads = np.empty(k, np.int64)
    ends = np.empty(k, np.int64)
    hv = np.empty(k, np.int64)
    hr = np.empty(k, np.int64)
    hsize = 0
    for r in range(k):
        s = g0 + r * run
        e = min(s + run, g1)
        heads[r] = s
        ends[r] = e
        sbuf[bn] = (src_off + s) * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        _heap_push(hv, hr, hsize, mem[src_off + s], r)
        hsize += 1
    out = g0
    while hsize > 0:
        v, r = _heap_pop(hv, hr, hsize)
        hsize -= 1
        mem[dst_off + out] = v
        sbuf[bn] = (dst_off + out) * a
        bn += 1
        if bn == sbuf.size:
            flush(st, sbuf, bn)
            bn = 0
        out += 1
        heads[r] += 1
        if heads[r] < ends[r]:
            idx = src_off + heads[r]
            sbuf[bn] = idx * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
            _heap_push(hv, hr, hsize, mem[idx], r)
            hsize += 1
    return bn


@njit(cache=True)
def drive_mergesort(mem, aux, a, p1, p2, st, sbuf):
    # mem holds the n input items plus an n-item ping-pong buffer above.
    m_items = p1
    b_items = p2
    n = mem.size // 2
    bn = 0
    c0 = 0
    while c0 < n:
        c1 = min(c0 + m_items, n)
        for i in range(c0, c1):
            sbuf[bn] = i * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
        mem[c0:c1].sort()
        for i in range(c0, c1):
            sbuf[bn] = i * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
        c0 = c1
    fan = m_items // b_items
    run = m_items
    src_off = 0
    while run < n:
        dst_off = n - src_off
        g0 = 0
        while g0 < n:
            g1 = min(g0 + fan * run, n)
            bn = _merge_group(mem, a, st, sbuf, bn, src_off, dst_off, g0, g1, run)
            g0 = g1
        src_off = dst_off
        run *= fan
    flush(st, sbuf, bn)
    if src_off != 0:
        # result ends in the scratch half; move it back for verification
        # (not part of the trace: the algorithm finishes wherever it is)
        for i in range(n):
            mem[i] = mem[n + i]


@njit(cache=True)
def _cbrt_ceil(m):
    k = np.int64(round(m ** (1.0 / 3.0)))
    if k < 0:
        k = 0
    while k > 0 and k * k * k >= m:
        k -= 1
    while k * k * k < m:
        k += 1
    return k


@njit(cache=True)
def _isqrt_ceil(x):
    s = np.int64(math.sqrt(x))
    while s > 0 and s * s >= x:
        s -= 1
    while s * s < x:
        s += 1
    return s


@njit(cache=True)
def _funnel_depth_caps(h, caps):
    # Buffer capacity per tree depth, by the recursive half-height split of
    # a 2^h-leaf funnel: the buffers cut at the middle of a k-leaf funnel
    # hold k*ceil(sqrt(k)) items each.  Every depth 1..h-1 is cut once.
    for i in range(h + 1):
        caps[i] = 0
    st_d = np.empty(2 * h + 4, np.int64)
    st_h = np.empty(2 * h + 4, np.int64)
    st_d[0] = 0
    st_h[0] = h
    sp = 1
    while sp > 0:
        sp -= 1
        d0 = st_d[sp]
        h0 = st_h[sp]
        if h0 <= 1:
            continue
        ht = (h0 + 1) // 2
        k = np.int64(1) << h0
        caps[d0 + ht] = k * _isqrt_ceil(k)
        st_d[sp] = d0
        st_h[sp] = ht
        sp += 1
        st_d[sp] = d0 + ht
        st_h[sp] = h0 - ht
        sp += 1


@njit(cache=True)
def _funnel_merge(mem, a, st, sbuf, bn, base, m, seg, nseg, out_base, buf_base):
    """Lazily merge nseg sorted segments of [base, base+m) into out_base.

    Leaves stream straight from the segments; internal nodes own buffers in
    [buf_base, ...).  A node fills its buffer by binary merge steps,
    recursively refilling an emptied child first (explicit stack).
    """
    h = 0
    k2 = 1
    while k2 < nseg:
        k2 <<= 1
        h += 1
    nnodes = 2 * k2
    caps = np.zeros(h + 1, np.int64)
    _funnel_depth_caps(h, caps)
    buf_lo = np.zeros(nnodes, np.int64)
    buf_cap = np.zeros(nnodes, np.int64)
    rd = np.zeros(nnodes, np.int64)
    wr = np.zeros(nnodes, np.int64)
    done = np.zeros(nnodes, np.uint8)
    for v in range(k2, 2 * k2):
        s = base + (v - k2) * seg
        e = base + m
        if s > e:
            s = e
        e2 = s + seg
        if e2 > e:
            e2 = e
        rd[v] = s       # leaves: absolute positions
        wr[v] = e2
        done[v] = 1
    nxt_free = buf_base
    buf_lo[1] = out_base
    buf_cap[1] = m
    for v in range(2, k2):
        dep = 0
        t = v
        while t > 1:
            t >>= 1
            dep += 1
        buf_lo[v] = nxt_free
        buf_cap[v] = caps[dep]
        nxt_free += caps[dep]
    if nxt_free > mem.size:
        return np.int64(-1)
    stack = np.empty(h + 2, np.int64)
    stack[0] = 1
    sp = 1
    while sp > 0:
        v = stack[sp - 1]
        if v < k2 and rd[v] == wr[v] and v != 1:
            rd[v] = 0
            wr[v] = 0
        l = 2 * v
        r = l + 1
        need = np.int64(-1)
        while wr[v] < buf_cap[v]:
            la = wr[l] - rd[l]
            ra = wr[r] - rd[r]
            if la == 0 and done[l] == 0:
                need = l
                break
            if ra == 0 and done[r] == 0:
                need = r
                break
            if la == 0 and ra == 0:
                done[v] = 1
                break
            if la == 0:
                c = r
            elif ra == 0:
                c = l
            else:
                vl = mem[rd[l]] if l >= k2 else mem[buf_lo[l] + rd[l]]
                vr = mem[rd[r]] if r >= k2 else mem[buf_lo[r] + rd[r]]
                c = l if vl <= vr else r
            src = rd[c] if c >= k2 else buf_lo[c] + rd[c]
            val = mem[src]
            sbuf[bn] = src * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
            rd[c] += 1
            dst = buf_lo[v] + wr[v]
            mem[dst] = val
            sbuf[bn] = dst * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
            wr[v] += 1
        if need >= 0:
            stack[sp] = need
            sp += 1
        else:
            sp -= 1
    return bn


@njit(cache=True)
def drive_funnelsort(mem, aux, a, p1, p2, st, sbuf):
    # mem layout (items): [0, n) input, [n, 2n) merge output scratch,
    # [2n, ...) shared funnel buffers, reused across recursive merges.
    n = p1
    if n <= 0:
        return
    fb = np.empty(80, np.int64)
    fm = np.empty(80, np.int64)
    fc = np.empty(80, np.int64)
    fb[0] = 0
    fm[0] = n
    fc[0] = 0
    sp = 1
    bn = 0
    while sp > 0:
        base = fb[sp - 1]
        m = fm[sp - 1]
        child = fc[sp - 1]
        if m <= FUNNEL_CUT:
            bn = _insertion(mem, a, st, sbuf, bn, base, base + m - 1)
            sp -= 1
            continue
        k = _cbrt_ceil(m)
        seg = (m + k - 1) // k
        nseg = (m + seg - 1) // seg
        if child < nseg:
            fc[sp - 1] = child + 1
            cb = base + child * seg
            cm = min(seg, base + m - cb)
            fb[sp] = cb
            fm[sp] = cm
            fc[sp] = 0
            sp += 1
            continue
        bn = _funnel_merge(mem, a, st, sbuf, bn, base, m, seg, nseg,
                           n + base, 2 * n)
        if bn < 0:
            st[1][I_ERR] = ERR_NO_SPACE
            return
        for t in range(m):
            src = n + base + t
            sbuf[bn] = src * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
            mem[base + t] = mem[src]
            sbuf[bn] = (base + t) * a
            bn += 1
            if bn == sbuf.size:
                flush(st, sbuf, bn)
                bn = 0
        sp -= 1
    flush(st, sbuf, bn)


DRIVERS = {
    "sequential_scan": drive_sequential,
    "random_scan": drive_random,
    "permute": drive_permute,
    "repeated_binary_search": drive_binsearch,
    "heapify": drive_heapify,
    "heapsort": drive_heapsort,
    "quicksort": drive_quicksort,
    "multiway_mergesort": drive_mergesort,
    "funnelsort": drive_funnelsort,
}
