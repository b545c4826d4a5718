"""Arithmetic in GF(2^64), the coefficient field of the detection sieve.

Field elements are plain Python ints in [0, 2^64), read as polynomials over
GF(2) modulo the fixed irreducible polynomial

    x^64 + x^4 + x^3 + x + 1

Addition is XOR; multiplication is a carryless product reduced modulo the
modulus.  The modulus is fixed (not configurable) so that outputs are
bit-reproducible everywhere; `gf_mul_ref` is the deliberately-dumb bit-serial
oracle the fast paths are tested against.

Randomness comes from SplitMix64 used as a pure counter-based generator:
seed plus stream path plus counter fully determine every draw, so sieve runs
are reproducible regardless of how work is split across threads.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

# x^64 = x^4 + x^3 + x + 1 (mod modulus); low taps only, weight 5 total.
REDUCTION_TAPS = 0x1B
MODULUS = (1 << 64) | REDUCTION_TAPS

ZERO = 0
ONE = 1


def gf_add(a: int, b: int) -> int:
    """Field addition: bitwise XOR (characteristic 2)."""
    return a ^ b


def gf_mul_ref(a: int, b: int) -> int:
    """Bit-serial reference multiply: shift-and-XOR, then reduce bit by bit.

    Written for obviousness, not speed; the fast paths must match it exactly.
    """
    acc = 0
    for i in range(64):
        if (b >> i) & 1:
            acc ^= a << i
    for bit in range(126, 63, -1):
        if (acc >> bit) & 1:
            acc ^= MODULUS << (bit - 64)
    return acc


def gf_mul(a: int, b: int) -> int:
    """Carryless multiply mod the fixed modulus, 4-bit windowed.

    Python ints are unbounded, so the 128-bit intermediate product needs no
    word splitting; the numba kernels carry an equivalent uint64-pair version.
    """
    t1 = a
    t2 = a << 1
    t4 = a << 2
    t8 = a << 3
    table = (
        0, t1, t2, t2 ^ t1, t4, t4 ^ t1, t4 ^ t2, t4 ^ t2 ^ t1,
        t8, t8 ^ t1, t8 ^ t2, t8 ^ t2 ^ t1, t8 ^ t4, t8 ^ t4 ^ t1,
        t8 ^ t4 ^ t2, t8 ^ t4 ^ t2 ^ t1,
    )
    acc = 0
    shift = 60
    while shift >= 0:
        acc = (acc << 4) ^ table[(b >> shift) & 0xF]
        shift -= 4
    hi = acc >> 64
    lo = acc & MASK64
    lo ^= ((hi << 4) ^ (hi << 3) ^ (hi << 1) ^ hi) & MASK64
    over = (hi >> 60) ^ (hi >> 61) ^ (hi >> 63)
    lo ^= (over << 4) ^ (over << 3) ^ (over << 1) ^ over
    return lo & MASK64


def to_hex(a: int) -> str:
    """Render a field element for debug output."""
    return f"0x{a:016x}"


# SplitMix64 constants.
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class CounterRng:
    """SplitMix64 driven as a counter: draw i of a stream is mix(base + i*golden).

    Streams are derived from (seed, path...) by folding the path through the
    mixer, so every (seed, trial, role) combination is an independent stream
    and draws can be made from any worker without shared state.
    """

    def __init__(self, seed: int, *path: int):
        base = _mix(seed & MASK64)
        for part in path:
            base = _mix(base ^ _mix((part & MASK64) ^ _GOLDEN))
        self._base = base
        self._count = 0

    def derive(self, *path: int) -> "CounterRng":
        child = CounterRng.__new__(CounterRng)
        base = self._base
        for part in path:
            base = _mix(base ^ _mix((part & MASK64) ^ _GOLDEN))
        child._base = base
        child._count = 0
        return child

    def next_u64(self) -> int:
        self._count += 1
        return self.at(self._count - 1)

    def at(self, index: int) -> int:
        """Counter access: independent of how many draws happened before."""
        return _mix((self._base + ((index + 1) * _GOLDEN)) & MASK64)


def sample(rng: CounterRng) -> int:
    """Draw a uniform field element."""
    return rng.next_u64()
