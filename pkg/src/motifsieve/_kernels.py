"""Compiled evaluation paths: circuit -> instruction tape -> numba kernels.

A circuit is compiled once into a flat tape of binary register instructions
(dst = a OP b) over a small slot file.  Slots are recycled with a linear-scan
liveness pass, so the live value count tracks the circuit's shared-node count
plus one path of partial results rather than its full node count; variable
slots are pinned so the sieve can update them in place between subsets.

The same tape drives three interpreters: a GF(2^64) scalar sieve kernel, a
bitsliced GF(2^64) kernel (64 subsets per machine word, used for large
sweeps), and an int64 kernel for exact 0/1-assignment counting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange, set_num_threads, get_num_threads

from motifsieve.circuit import Circuit, OP_ADD, OP_MUL, OP_VAR, SIEVED

# Tape opcodes.
T_ADD = 0   # vals[dst] = vals[a] (+) vals[b]
T_MUL = 1   # vals[dst] = vals[a] (*) vals[b]
T_COPY = 2  # vals[dst] = vals[a]
T_ZERO = 3  # vals[dst] = ring zero
T_ONE = 4   # vals[dst] = ring one


@dataclass
class Program:
    """Compiled form of one circuit."""

    op: np.ndarray       # uint8  (n_instr,)
    dst: np.ndarray      # int32
    a: np.ndarray        # int32
    b: np.ndarray        # int32
    n_slots: int
    root_slot: int
    svar_names: list     # sieved variable order used by W rows
    svar_slots: np.ndarray  # int32 (n_svars,)
    dvar_names: list
    dvar_slots: np.ndarray  # int32


@njit(cache=True)
def _mark_reachable(child_start, children, root, n):
    mark = np.zeros(n, dtype=np.uint8)
    stack = np.empty(n, dtype=np.int64)
    top = 0
    stack[top] = root
    top += 1
    mark[root] = 1
    while top > 0:
        top -= 1
        u = stack[top]
        for p in range(child_start[u], child_start[u + 1]):
            v = children[p]
            if mark[v] == 0:
                mark[v] = 1
                stack[top] = v
                top += 1
    return mark


@njit(cache=True)
def _compile_tape(ops, child_start, children, node_var, mark, root,
                  var_pinned_slot, n_var_slots):
    """Emit the instruction tape with recycled slots.

    var_pinned_slot maps a circuit variable slot to its pinned register;
    pinned registers are never recycled.  Returns the tape arrays, the total
    slot count and the root's slot.
    """
    n = len(ops)
    # Last position (node index) that reads each node's value.
    last_use = np.full(n, -1, dtype=np.int64)
    n_instr = 0
    for i in range(n):
        if mark[i] == 0:
            continue
        lo, hi = child_start[i], child_start[i + 1]
        if ops[i] != OP_VAR:
            deg = hi - lo
            n_instr += deg - 1 if deg >= 2 else 1
        for p in range(lo, hi):
            last_use[children[p]] = i
    last_use[root] = n  # root survives to the end

    t_op = np.empty(n_instr, dtype=np.uint8)
    t_dst = np.empty(n_instr, dtype=np.int32)
    t_a = np.empty(n_instr, dtype=np.int32)
    t_b = np.empty(n_instr, dtype=np.int32)

    slot_of = np.full(n, -1, dtype=np.int32)
    free = np.empty(n, dtype=np.int32)
    n_free = 0
    next_slot = n_var_slots  # pinned variable slots occupy [0, n_var_slots)

    w = 0
    for i in range(n):
        if mark[i] == 0:
            continue
        if ops[i] == OP_VAR:
            slot_of[i] = var_pinned_slot[node_var[i]]
            continue
        if n_free > 0:
            n_free -= 1
            s = free[n_free]
        else:
            s = next_slot
            next_slot += 1
        slot_of[i] = s
        lo, hi = child_start[i], child_start[i + 1]
        deg = hi - lo
        if deg == 0:
            t_op[w] = T_ZERO if ops[i] == OP_ADD else T_ONE
            t_dst[w] = s
            t_a[w] = 0
            t_b[w] = 0
            w += 1
        elif deg == 1:
            t_op[w] = T_COPY
            t_dst[w] = s
            t_a[w] = slot_of[children[lo]]
            t_b[w] = 0
            w += 1
        else:
            code = T_ADD if ops[i] == OP_ADD else T_MUL
            t_op[w] = code
            t_dst[w] = s
            t_a[w] = slot_of[children[lo]]
            t_b[w] = slot_of[children[lo + 1]]
            w += 1
            for p in range(lo + 2, hi):
                t_op[w] = code
                t_dst[w] = s
                t_a[w] = s
                t_b[w] = slot_of[children[p]]
                w += 1
        # Release children whose last consumer is this node (once each).
        for p in range(lo, hi):
            v = children[p]
            if last_use[v] == i and ops[v] != OP_VAR:
                free[n_free] = slot_of[v]
                n_free += 1
                last_use[v] = -1
    return t_op, t_dst, t_a, t_b, next_slot, slot_of[root]


def compile_program(c: Circuit) -> Program:
    """Compile a circuit for the kernel interpreters."""
    n = c.n_nodes
    ops = np.frombuffer(bytes(c.ops), dtype=np.uint8)
    child_start = np.frombuffer(c.child_start, dtype=np.int64)
    children = (np.frombuffer(c.children, dtype=np.int32) if len(c.children)
                else np.empty(0, dtype=np.int32))
    node_var = (np.frombuffer(c.node_var, dtype=np.int32) if len(c.node_var)
                else np.empty(0, dtype=np.int32))
    mark = _mark_reachable(child_start, children, c.root, n)

    # Pin one register per reachable variable.  Unreachable variables keep
    # their position in the name lists (so random draws stay aligned with
    # the registered variable order) but get slot -1, which kernels skip.
    reachable_var = np.zeros(len(c.var_names), dtype=np.uint8)
    for i in range(n):
        if ops[i] == OP_VAR and mark[i]:
            reachable_var[node_var[i]] = 1
    var_pinned_slot = np.full(len(c.var_names), -1, dtype=np.int32)
    svar_names, svar_slots = [], []
    dvar_names, dvar_slots = [], []
    next_pin = 0
    for slot, name in enumerate(c.var_names):
        pin = -1
        if reachable_var[slot]:
            pin = next_pin
            next_pin += 1
            var_pinned_slot[slot] = pin
        if c.var_class[slot] == SIEVED:
            svar_names.append(name)
            svar_slots.append(pin)
        else:
            dvar_names.append(name)
            dvar_slots.append(pin)

    t_op, t_dst, t_a, t_b, n_slots, root_slot = _compile_tape(
        ops, child_start, children, node_var, mark, c.root,
        var_pinned_slot, next_pin)
    return Program(
        op=t_op, dst=t_dst, a=t_a, b=t_b,
        n_slots=max(n_slots, 1), root_slot=root_slot,
        svar_names=svar_names,
        svar_slots=np.asarray(svar_slots, dtype=np.int32),
        dvar_names=dvar_names,
        dvar_slots=np.asarray(dvar_slots, dtype=np.int32),
    )


# ---------------------------------------------------------------------------
# GF(2^64) scalar kernel


@njit(inline="always")
def _gfmul(a, b):
    # 4-bit window; 128-bit intermediate kept as (hi, lo) uint64 pair.
    t1 = a
    h1 = np.uint64(0)
    t2 = t1 << np.uint64(1)
    h2 = t1 >> np.uint64(63)
    t4 = t1 << np.uint64(2)
    h4 = t1 >> np.uint64(62)
    t8 = t1 << np.uint64(3)
    h8 = t1 >> np.uint64(61)
    lo = np.uint64(0)
    hi = np.uint64(0)
    shift = 60
    while shift >= 0:
        hi = (hi << np.uint64(4)) | (lo >> np.uint64(60))
        lo = lo << np.uint64(4)
        w = (b >> np.uint64(shift)) & np.uint64(0xF)
        if w & np.uint64(1):
            lo ^= t1
            hi ^= h1
        if w & np.uint64(2):
            lo ^= t2
            hi ^= h2
        if w & np.uint64(4):
            lo ^= t4
            hi ^= h4
        if w & np.uint64(8):
            lo ^= t8
            hi ^= h8
        shift -= 4
    # Reduce modulo x^64 + x^4 + x^3 + x + 1.
    lo ^= (hi << np.uint64(4)) ^ (hi << np.uint64(3)) ^ (hi << np.uint64(1)) ^ hi
    over = (hi >> np.uint64(60)) ^ (hi >> np.uint64(61)) ^ (hi >> np.uint64(63))
    lo ^= (over << np.uint64(4)) ^ (over << np.uint64(3)) ^ (over << np.uint64(1)) ^ over
    return lo


@njit(cache=True)
def gf_mul_u64(a, b):
    """Scalar GF(2^64) multiply (kernel flavor), exposed for tests."""
    return _gfmul(np.uint64(a), np.uint64(b))


@njit(inline="always")
def _exec_tape_gf(t_op, t_dst, t_a, t_b, vals):
    for w in range(t_op.shape[0]):
        code = t_op[w]
        if code == 0:    # T_ADD
            vals[t_dst[w]] = vals[t_a[w]] ^ vals[t_b[w]]
        elif code == 1:  # T_MUL
            vals[t_dst[w]] = _gfmul(vals[t_a[w]], vals[t_b[w]])
        elif code == 2:  # T_COPY
            vals[t_dst[w]] = vals[t_a[w]]
        elif code == 3:  # T_ZERO
            vals[t_dst[w]] = np.uint64(0)
        else:            # T_ONE
            vals[t_dst[w]] = np.uint64(1)


@njit(inline="always")
def _sieve_segment_scalar(t_op, t_dst, t_a, t_b, root_slot,
                          svar_slots, W, dvar_slots, dvals,
                          t_lo, t_hi, vals):
    n_s = svar_slots.shape[0]
    K = W.shape[1]
    for i in range(vals.shape[0]):
        vals[i] = np.uint64(0)
    for i in range(dvar_slots.shape[0]):
        if dvar_slots[i] >= 0:
            vals[dvar_slots[i]] = dvals[i]
    # Initial assignment for the Gray code at t_lo.
    g = np.uint64(t_lo) ^ (np.uint64(t_lo) >> np.uint64(1))
    for j in range(K):
        if (g >> np.uint64(j)) & np.uint64(1):
            for s in range(n_s):
                if svar_slots[s] >= 0:
                    vals[svar_slots[s]] ^= W[s, j]
    acc = np.uint64(0)
    for t in range(t_lo, t_hi):
        if t != t_lo:
            x = t
            j = 0
            while x & 1 == 0:
                x >>= 1
                j += 1
            for s in range(n_s):
                if svar_slots[s] >= 0:
                    vals[svar_slots[s]] ^= W[s, j]
        _exec_tape_gf(t_op, t_dst, t_a, t_b, vals)
        acc ^= vals[root_slot]
    return acc


@njit(cache=True, nogil=True)
def sieve_trial_scalar(t_op, t_dst, t_a, t_b, root_slot,
                       svar_slots, W, dvar_slots, dvals, n_subsets, vals):
    return _sieve_segment_scalar(t_op, t_dst, t_a, t_b, root_slot,
                                 svar_slots, W, dvar_slots, dvals,
                                 0, n_subsets, vals)


@njit(cache=True, nogil=True, parallel=True)
def sieve_trial_parallel(t_op, t_dst, t_a, t_b, root_slot,
                         svar_slots, W, dvar_slots, dvals,
                         seg_bounds, vals2d):
    nseg = seg_bounds.shape[0] - 1
    accs = np.zeros(nseg, dtype=np.uint64)
    for s in prange(nseg):
        accs[s] = _sieve_segment_scalar(
            t_op, t_dst, t_a, t_b, root_slot, svar_slots, W,
            dvar_slots, dvals, seg_bounds[s], seg_bounds[s + 1], vals2d[s])
    acc = np.uint64(0)
    for s in range(nseg):
        acc ^= accs[s]
    return acc


# ---------------------------------------------------------------------------
# GF(2^64) bitsliced kernel: 64 subsets per word, one plane per bit.


@njit(inline="always")
def _bs_mul(a, b, out, tmp):
    # Schoolbook carryless multiply on 64 bitplanes, then tap reduction.
    for t in range(127):
        tmp[t] = np.uint64(0)
    for j in range(64):
        bj = b[j]
        if bj != np.uint64(0):
            for i in range(64):
                tmp[i + j] ^= a[i] & bj
    for t in range(126, 63, -1):
        v = tmp[t]
        tmp[t - 64] ^= v
        tmp[t - 63] ^= v
        tmp[t - 61] ^= v
        tmp[t - 60] ^= v
    for i in range(64):
        out[i] = tmp[i]


@njit(inline="always")
def _transpose64(m):
    # In-place 64x64 bit-matrix transpose: out[r] bit c = in[c] bit r,
    # with bit 0 as column 0.  Recursive off-diagonal block swaps.
    j = 32
    mask = np.uint64(0x00000000FFFFFFFF)
    while j != 0:
        k = 0
        while k < 64:
            t = ((m[k] >> np.uint64(j)) ^ m[k + j]) & mask
            m[k] ^= t << np.uint64(j)
            m[k + j] ^= t
            k = (k + j + 1) & ~j
        j >>= 1
        if j:
            mask = mask ^ (mask << np.uint64(j))
    return m


@njit(inline="always")
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(inline="always")
def _sieve_segment_bitsliced(t_op, t_dst, t_a, t_b, root_slot,
                             svar_slots, W, dvar_slots, dvals,
                             blk_lo, blk_hi, planes, tmp, lanebuf):
    """Sweep subset blocks [64*blk_lo, 64*blk_hi) with 64 lanes per block.

    planes: (n_slots, 64) uint64 workspace; tmp: (127,) multiply scratch;
    lanebuf: (64,) per-variable lane staging before transposition.
    """
    n_s = svar_slots.shape[0]
    K = W.shape[1]
    ones = ~np.uint64(0)
    for i in range(dvar_slots.shape[0]):
        if dvar_slots[i] < 0:
            continue
        dv = dvals[i]
        row = planes[dvar_slots[i]]
        for bit in range(64):
            row[bit] = ones if (dv >> np.uint64(bit)) & np.uint64(1) else np.uint64(0)
    acc = np.uint64(0)
    for blk in range(blk_lo, blk_hi):
        base = blk << 6
        for s in range(n_s):
            if svar_slots[s] < 0:
                continue
            # Scalar lane values by Gray-stepping, then transpose to planes.
            g = np.uint64(base) ^ (np.uint64(base) >> np.uint64(1))
            x = np.uint64(0)
            for j in range(K):
                if (g >> np.uint64(j)) & np.uint64(1):
                    x ^= W[s, j]
            lanebuf[0] = x
            for lane in range(1, 64):
                t = base + lane
                y = t
                j = 0
                while y & 1 == 0:
                    y >>= 1
                    j += 1
                x ^= W[s, j]
                lanebuf[lane] = x
            _transpose64(lanebuf)
            row = planes[svar_slots[s]]
            for bit in range(64):
                row[bit] = lanebuf[bit]
        for w in range(t_op.shape[0]):
            code = t_op[w]
            if code == 0:
                pd = planes[t_dst[w]]
                pa = planes[t_a[w]]
                pb = planes[t_b[w]]
                for bit in range(64):
                    pd[bit] = pa[bit] ^ pb[bit]
            elif code == 1:
                _bs_mul(planes[t_a[w]], planes[t_b[w]], planes[t_dst[w]], tmp)
            elif code == 2:
                pd = planes[t_dst[w]]
                pa = planes[t_a[w]]
                for bit in range(64):
                    pd[bit] = pa[bit]
            elif code == 3:
                pd = planes[t_dst[w]]
                for bit in range(64):
                    pd[bit] = np.uint64(0)
            else:
                pd = planes[t_dst[w]]
                pd[0] = ones
                for bit in range(1, 64):
                    pd[bit] = np.uint64(0)
        root = planes[root_slot]
        for bit in range(64):
            acc ^= (_popcount(root[bit]) & np.uint64(1)) << np.uint64(bit)
    return acc


@njit(cache=True, nogil=True)
def sieve_trial_bitsliced(t_op, t_dst, t_a, t_b, root_slot,
                          svar_slots, W, dvar_slots, dvals,
                          n_blocks, planes, tmp, lanebuf):
    return _sieve_segment_bitsliced(t_op, t_dst, t_a, t_b, root_slot,
                                    svar_slots, W, dvar_slots, dvals,
                                    0, n_blocks, planes, tmp, lanebuf)


@njit(cache=True, nogil=True, parallel=True)
def sieve_trial_bitsliced_parallel(t_op, t_dst, t_a, t_b, root_slot,
                                   svar_slots, W, dvar_slots, dvals,
                                   seg_bounds, planes3, tmp2, lanebuf2):
    nseg = seg_bounds.shape[0] - 1
    accs = np.zeros(nseg, dtype=np.uint64)
    for s in prange(nseg):
        accs[s] = _sieve_segment_bitsliced(
            t_op, t_dst, t_a, t_b, root_slot, svar_slots, W,
            dvar_slots, dvals, seg_bounds[s], seg_bounds[s + 1],
            planes3[s], tmp2[s], lanebuf2[s])
    acc = np.uint64(0)
    for s in range(nseg):
        acc ^= accs[s]
    return acc


# ---------------------------------------------------------------------------
# Exact-count kernel (int64 fast path; caller guards against overflow).


@njit(cache=True, nogil=True)
def count_subsets_i64(t_op, t_dst, t_a, t_b, root_slot, var_slots, K, vals):
    """Sum of (-1)^(K - |S|) * eval(S) over all S, 0/1 assignments, Gray order."""
    n_v = var_slots.shape[0]
    for i in range(vals.shape[0]):
        vals[i] = 0
    sign = 1 if K % 2 == 0 else -1  # empty subset: (-1)^K
    total = np.int64(0)
    n_subsets = np.int64(1) << np.int64(K)
    for t in range(n_subsets):
        if t != 0:
            x = t
            j = 0
            while x & 1 == 0:
                x >>= 1
                j += 1
            if var_slots[j] >= 0:
                vals[var_slots[j]] ^= 1
            sign = -sign
        for w in range(t_op.shape[0]):
            code = t_op[w]
            if code == 0:
                vals[t_dst[w]] = vals[t_a[w]] + vals[t_b[w]]
            elif code == 1:
                vals[t_dst[w]] = vals[t_a[w]] * vals[t_b[w]]
            elif code == 2:
                vals[t_dst[w]] = vals[t_a[w]]
            elif code == 3:
                vals[t_dst[w]] = 0
            else:
                vals[t_dst[w]] = 1
        total += sign * vals[root_slot]
    return total


def resolve_threads(threads=None) -> int:
    """Worker count: explicit arg, else MOTIF_THREADS, else all cores."""
    import os
    if threads is None:
        env = os.environ.get("MOTIF_THREADS")
        if env:
            threads = int(env)
    if threads is None:
        threads = get_num_threads()
    return max(1, int(threads))
