"""Detection and counting engines over arithmetic circuits.

detect_multilinear answers "does P_C have a monomial whose sieved part is
multilinear of degree exactly K" by evaluating the circuit over GF(2^64) for
every subset A of K labels, with each sieved variable mapped to the sum of
its per-label random words over A, and XOR-accumulating the 2^K outputs:

  * monomials of sieved degree < K occur in an even number of subsets and
    vanish in characteristic 2;
  * degree-K monomials with a repeated sieved variable cancel under the
    transposition involution on label assignments;
  * each surviving multilinear monomial contributes its coefficient times a
    determinant-like sum in the random words, so an odd-coefficient witness
    is missed with probability at most about deg/2^64 per trial.

The verdict is therefore sound unconditionally (no witness, no nonzero
accumulator, for every seed) and complete with overwhelming probability.

count_exact_multilinear computes the exact number-weighted count of
multilinear degree-K monomials of a K-bounded circuit over its full variable
set X by inclusion-exclusion over 0/1 assignments: N'_S, the coefficient sum
of monomials supported inside S, is one integer evaluation, and alternating
the 2^K of them recovers N_X.

Subsets are swept in Gray-code order so each step updates every sieved
variable with a single XOR.  Work may be split into contiguous Gray
segments; partial accumulators combine by XOR, so reports are byte-identical
regardless of worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from motifsieve import _kernels
from motifsieve.circuit import (
    Circuit, CapacityError, INT_RING, evaluate, max_monomial_degree,
    reachable_from_root, OP_VAR,
)
from motifsieve.gf2e import CounterRng, to_hex

DEFAULT_SEED = 0x5EED_CAFE_F00D
DEFAULT_TRIALS = 3
MAX_K = 62

# Optional test-time hook: called as hook(event, count) where event is
# "alloc:<label>", "free:<label>", or "phase:<name>" and count is a number of
# live field elements (0 for phase events).
_memory_hook: Optional[Callable[[str, int], None]] = None


def set_memory_hook(hook: Optional[Callable[[str, int], None]]) -> None:
    global _memory_hook
    _memory_hook = hook


def _note(event: str, count: int = 0) -> None:
    if _memory_hook is not None:
        _memory_hook(event, count)


@dataclass
class SieveAssignment:
    """One trial's random material: per-label words for sieved variables and
    fixed values for don't-care variables."""

    W: dict  # (variable name, label j) -> field element
    zvals: dict  # variable name -> field element
    K: int


@dataclass
class DetectionReport:
    verdict: str                 # "found" | "not-found"
    trials_run: int
    seed: int
    per_trial_outputs: list = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.verdict == "found"

    def outputs_hex(self) -> list:
        return [to_hex(v) for v in self.per_trial_outputs]


def _program_for(c: Circuit) -> "_kernels.Program":
    cache = getattr(c, "_cache", None)
    if cache is None:
        cache = {}
        c._cache = cache
    prog = cache.get("program")
    if prog is None:
        prog = _kernels.compile_program(c)
        cache["program"] = prog
    return prog


def _draw_arrays(n_svars: int, n_dvars: int, K: int, seed: int, trial: int):
    rng_w = CounterRng(seed, trial, 0)
    rng_z = CounterRng(seed, trial, 1)
    W = np.empty((n_svars, K), dtype=np.uint64)
    for s in range(n_svars):
        for j in range(K):
            W[s, j] = rng_w.at(s * K + j)
    dvals = np.empty(n_dvars, dtype=np.uint64)
    for d in range(n_dvars):
        dvals[d] = rng_z.at(d)
    return W, dvals


def draw_assignment(c: Circuit, K: int, seed: int, trial: int) -> SieveAssignment:
    """The exact random assignment detect_multilinear uses for one trial."""
    prog = _program_for(c)
    W, dvals = _draw_arrays(len(prog.svar_names), len(prog.dvar_names), K, seed, trial)
    wmap = {(name, j): int(W[s, j])
            for s, name in enumerate(prog.svar_names) for j in range(K)}
    zmap = {name: int(dvals[d]) for d, name in enumerate(prog.dvar_names)}
    return SieveAssignment(W=wmap, zvals=zmap, K=K)


def _segment_bounds(total: int, nseg: int) -> np.ndarray:
    nseg = max(1, min(nseg, total))
    bounds = np.linspace(0, total, nseg + 1).astype(np.int64)
    return bounds


def detect_multilinear(c: Circuit, K: int, trials: int = DEFAULT_TRIALS,
                       seed: int = DEFAULT_SEED,
                       threads: Optional[int] = None) -> DetectionReport:
    """Randomized multilinear detection at sieved degree exactly K.

    Precondition: no monomial of P_C has sieved degree above K unless every
    such monomial certifies a solution itself (the builders arrange one or
    the other).  Time 2^K evaluations per trial; memory stays at the compiled
    slot file plus the K-column random matrix, independent of 2^K.
    """
    if not (0 <= K <= MAX_K):
        raise CapacityError(
            f"K = {K} out of range; subset iteration uses one machine word "
            f"(K <= {MAX_K})")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    prog = _program_for(c)
    threads = _kernels.resolve_threads(threads)

    n_subsets = 1 << K
    n_svars = len(prog.svar_names)
    n_dvars = len(prog.dvar_names)
    use_bitsliced = n_subsets >= 4096
    use_parallel = threads > 1 and (
        n_subsets * max(1, len(prog.op)) >= (1 << 22))

    _note("phase:setup")
    _note("alloc:W", n_svars * K)
    _note("alloc:zvals", n_dvars)
    if use_bitsliced:
        n_blocks = n_subsets >> 6
        if use_parallel:
            nseg = min(threads, n_blocks)
            bounds = _segment_bounds(n_blocks, nseg)
            planes = np.zeros((nseg, prog.n_slots, 64), dtype=np.uint64)
            tmp = np.zeros((nseg, 127), dtype=np.uint64)
            lanebuf = np.zeros((nseg, 64), dtype=np.uint64)
            _note("alloc:values", planes.size + tmp.size + lanebuf.size)
        else:
            planes1 = np.zeros((prog.n_slots, 64), dtype=np.uint64)
            tmp1 = np.zeros(127, dtype=np.uint64)
            lanebuf1 = np.zeros(64, dtype=np.uint64)
            _note("alloc:values", planes1.size + tmp1.size + lanebuf1.size)
    else:
        if use_parallel:
            nseg = min(threads, n_subsets)
            bounds = _segment_bounds(n_subsets, nseg)
            vals2d = np.zeros((nseg, prog.n_slots), dtype=np.uint64)
            _note("alloc:values", vals2d.size)
        else:
            vals = np.zeros(prog.n_slots, dtype=np.uint64)
            _note("alloc:values", vals.size)

    if use_parallel:
        _kernels.set_num_threads(threads)

    outputs = []
    _note("phase:sweep")
    for trial in range(trials):
        W, dvals = _draw_arrays(n_svars, n_dvars, K, seed, trial)
        if use_bitsliced:
            if use_parallel:
                acc = _kernels.sieve_trial_bitsliced_parallel(
                    prog.op, prog.dst, prog.a, prog.b, prog.root_slot,
                    prog.svar_slots, W, prog.dvar_slots, dvals,
                    bounds, planes, tmp, lanebuf)
            else:
                acc = _kernels.sieve_trial_bitsliced(
                    prog.op, prog.dst, prog.a, prog.b, prog.root_slot,
                    prog.svar_slots, W, prog.dvar_slots, dvals,
                    n_subsets >> 6, planes1, tmp1, lanebuf1)
        else:
            if use_parallel:
                acc = _kernels.sieve_trial_parallel(
                    prog.op, prog.dst, prog.a, prog.b, prog.root_slot,
                    prog.svar_slots, W, prog.dvar_slots, dvals,
                    bounds, vals2d)
            else:
                acc = _kernels.sieve_trial_scalar(
                    prog.op, prog.dst, prog.a, prog.b, prog.root_slot,
                    prog.svar_slots, W, prog.dvar_slots, dvals,
                    n_subsets, vals)
        outputs.append(int(acc))
    _note("phase:done")

    verdict = "found" if any(v != 0 for v in outputs) else "not-found"
    return DetectionReport(verdict=verdict, trials_run=trials, seed=seed,
                           per_trial_outputs=outputs)


def count_exact_multilinear(c: Circuit, X) -> int:
    """Exact sum of coefficients of multilinear degree-|X| monomials.

    The circuit must be |X|-bounded and use no variables outside X; both are
    checked.  Arbitrary-precision exact; an int64 kernel is used when a
    monotonicity bound proves it cannot overflow.
    """
    X = list(X)
    if len(set(X)) != len(X):
        raise ValueError("X contains duplicate variables")
    K = len(X)
    if K > MAX_K:
        raise CapacityError(
            f"|X| = {K} out of range; subset iteration uses one machine word "
            f"(K <= {MAX_K})")
    prog = _program_for(c)

    mark = reachable_from_root(c)
    used = set()
    for i in range(c.n_nodes):
        if mark[i] and c.ops[i] == OP_VAR:
            used.add(c.var_names[c.node_var[i]])
    outside = used - set(X)
    if outside:
        raise ValueError(f"circuit uses variables outside X: {sorted(outside)}")

    deg = max_monomial_degree(c)
    if deg > K:
        raise ValueError(
            f"circuit is not {K}-bounded (degree {deg}); apply bound_degree first")

    slot_of_name = {}
    for s, name in enumerate(prog.svar_names):
        slot_of_name[name] = int(prog.svar_slots[s])
    for d, name in enumerate(prog.dvar_names):
        slot_of_name[name] = int(prog.dvar_slots[d])
    var_slots = np.asarray([slot_of_name.get(x, -1) for x in X], dtype=np.int32)

    # Monotone bound: with nonnegative coefficients, every node value under a
    # 0/1 assignment is at most its value under all-ones.
    ones = {name: 1 for name in c.var_names}
    node_bound = _max_node_value(c, ones)
    if node_bound * (1 << K) < (1 << 62):
        vals = np.zeros(prog.n_slots, dtype=np.int64)
        total = int(_kernels.count_subsets_i64(
            prog.op, prog.dst, prog.a, prog.b, prog.root_slot,
            var_slots, K, vals))
        return total
    # Arbitrary-precision fallback.
    total = 0
    for mask in range(1 << K):
        assign = {x: (1 if (mask >> i) & 1 else 0) for i, x in enumerate(X)}
        for name in c.var_names:
            assign.setdefault(name, 0)
        val = evaluate(c, assign, INT_RING, free_when_dead=True)
        sign = -1 if (K - bin(mask).count("1")) % 2 else 1
        total += sign * val
    return total


def _max_node_value(c: Circuit, assign) -> int:
    """Largest node value over the reachable circuit under an assignment."""
    mark = reachable_from_root(c)
    vals: dict[int, int] = {}
    best = 0
    for i in range(c.n_nodes):
        if not mark[i]:
            continue
        op = c.ops[i]
        if op == OP_VAR:
            v = assign[c.var_names[c.node_var[i]]]
        else:
            lo, hi = c.child_start[i], c.child_start[i + 1]
            if op == 0:  # add
                v = 0
                for ch in c.children[lo:hi]:
                    v += vals[ch]
            else:
                v = 1
                for ch in c.children[lo:hi]:
                    v *= vals[ch]
        vals[i] = v
        if v > best:
            best = v
    return best
