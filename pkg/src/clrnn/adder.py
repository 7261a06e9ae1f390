"""Bit-level ripple-carry and carry-lookahead adders.

Bits are numpy bool arrays with the bit axis last (index 0 = least
significant), so every function also works on a stack of words at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GROUP = 4


class WidthMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class BitWord:
    width: int
    bits: tuple[bool, ...]

    def __post_init__(self):
        if self.width < 1 or len(self.bits) != self.width:
            raise ValueError(f"BitWord needs {self.width} bits, got {len(self.bits)}")

    @classmethod
    def from_int(cls, value: int, width: int) -> "BitWord":
        if value < 0 or value >= 1 << width:
            raise ValueError(f"{value} does not fit in {width} bits")
        return cls(width, tuple(bool(value >> i & 1) for i in range(width)))

    @classmethod
    def from_array(cls, arr) -> "BitWord":
        arr = np.asarray(arr, dtype=bool)
        return cls(arr.shape[-1], tuple(bool(b) for b in arr))

    def to_int(self) -> int:
        return sum(1 << i for i, b in enumerate(self.bits) if b)

    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool)

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in reversed(self.bits))


def _bits(x) -> np.ndarray:
    return x.array() if isinstance(x, BitWord) else np.asarray(x, dtype=bool)


def _same_width(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise WidthMismatchError(f"operand widths differ: {a.shape[-1]} vs {b.shape[-1]}")


def full_adder(a, b, c_in):
    """One-bit full adder: ``(a ^ b ^ c_in, majority(a, b, c_in))``."""
    a, b, c_in = (np.asarray(v, dtype=bool) for v in (a, b, c_in))
    s = a ^ b ^ c_in
    c_out = (a & b) | (a & c_in) | (b & c_in)
    if s.ndim == 0:
        return int(s), int(c_out)
    return s, c_out


def ripple_add(a, b, c0=0):
    """Chain of full adders; each waits for the previous carry."""
    A, B = _bits(a), _bits(b)
    _same_width(A, B)
    carry = np.broadcast_to(np.asarray(c0, dtype=bool), A.shape[:-1])
    out = np.empty(np.broadcast_shapes(A.shape, B.shape), dtype=bool)
    for i in range(A.shape[-1]):
        out[..., i], carry = full_adder(A[..., i], B[..., i], carry)
    return _wrap(a, out), _carry_out(carry)


def cla_generate_propagate(a, b):
    """Per-bit generate ``A & B`` and propagate ``A | B``."""
    A, B = _bits(a), _bits(b)
    _same_width(A, B)
    return _wrap(a, A & B), _wrap(a, A | B)


def cla_carries(G, P, c0=0) -> np.ndarray:
    """Carries C_1..C_w, each from its own sum-of-products over G_0..G_i, P_0..P_i, C_0.

    No carry is computed from another carry: ``C_{i+1}`` is the OR of
    ``G_j & P_{j+1} & ... & P_i`` for every ``j <= i`` and of
    ``P_0 & ... & P_i & C_0``.
    """
    G, P = _bits(G), _bits(P)
    _same_width(G, P)
    width = G.shape[-1]
    c0 = np.broadcast_to(np.asarray(c0, dtype=bool), G.shape[:-1])
    carries = np.zeros(G.shape, dtype=bool)
    for i in range(width):
        term = c0.copy()
        for k in range(i + 1):
            term = term & P[..., k]
        acc = term
        for j in range(i + 1):
            term = G[..., j]
            for k in range(j + 1, i + 1):
                term = term & P[..., k]
            acc = acc | term
        carries[..., i] = acc
    return carries


def cla_add(a, b, c0=0):
    """Carry-lookahead addition in 4-bit groups; each group's carry-out feeds the next group."""
    A, B = _bits(a), _bits(b)
    _same_width(A, B)
    G, P = A & B, A | B
    width = A.shape[-1]
    out = np.empty(np.broadcast_shapes(A.shape, B.shape), dtype=bool)
    carry = np.broadcast_to(np.asarray(c0, dtype=bool), A.shape[:-1])
    for start in range(0, width, GROUP):
        stop = min(start + GROUP, width)
        C = cla_carries(G[..., start:stop], P[..., start:stop], carry)
        incoming = np.concatenate([carry[..., None], C[..., :-1]], axis=-1)
        out[..., start:stop] = A[..., start:stop] ^ B[..., start:stop] ^ incoming
        carry = C[..., -1]
    return _wrap(a, out), _carry_out(carry)


def _wrap(like, arr: np.ndarray):
    return BitWord.from_array(arr) if isinstance(like, BitWord) else arr


def _carry_out(c):
    c = np.asarray(c, dtype=bool)
    return int(c) if c.ndim == 0 else c


# ---------------------------------------------------------------------------
# helpers for sweeps and the demo


def int_to_bits(values, width: int) -> np.ndarray:
    """Unsigned integers (array-like, up to 64 bits) -> ``(..., width)`` bool array."""
    v = np.asarray(values, dtype=np.uint64)
    shifts = np.arange(width, dtype=np.uint64)
    return ((v[..., None] >> shifts) & np.uint64(1)).astype(bool)


def bits_to_int(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=bool)
    weights = np.uint64(1) << np.arange(bits.shape[-1], dtype=np.uint64)
    return (bits.astype(np.uint64) * weights).sum(axis=-1, dtype=np.uint64)


def exhaustive_sweep(width: int = 4) -> tuple[int, int]:
    """Compare cla_add, ripple_add and integer addition on every ``(a, b, c0)``.

    Returns ``(matches, total)``.
    """
    n = 1 << width
    a, b, c = np.meshgrid(np.arange(n), np.arange(n), np.arange(2), indexing="ij")
    a, b, c = a.ravel(), b.ravel(), c.ravel()
    A, B = int_to_bits(a, width), int_to_bits(b, width)
    s_cla, co_cla = cla_add(A, B, c.astype(bool))
    s_rip, co_rip = ripple_add(A, B, c.astype(bool))
    expected = a + b + c
    got_cla = bits_to_int(s_cla).astype(np.int64) + (co_cla.astype(np.int64) << width)
    got_rip = bits_to_int(s_rip).astype(np.int64) + (co_rip.astype(np.int64) << width)
    ok = (got_cla == expected) & (got_rip == expected)
    return int(ok.sum()), int(ok.size)


def random_sweep(count: int, width: int = 64, seed: int = 0) -> tuple[int, int]:
    """Random ``width``-bit cases of cla_add checked against Python integer addition."""
    rng = np.random.default_rng(seed)
    hi = np.uint64((1 << width) - 1) if width < 64 else np.iinfo(np.uint64).max
    a = rng.integers(0, hi, size=count, dtype=np.uint64, endpoint=True)
    b = rng.integers(0, hi, size=count, dtype=np.uint64, endpoint=True)
    c = rng.integers(0, 2, size=count).astype(bool)
    s, co = cla_add(int_to_bits(a, width), int_to_bits(b, width), c)
    sums = bits_to_int(s)
    ok = 0
    for ai, bi, ci, si, coi in zip(a.tolist(), b.tolist(), c.tolist(), sums.tolist(), co.tolist()):
        total = ai + bi + ci
        ok += (total & ((1 << width) - 1)) == si and (total >> width) == coi
    return ok, count


def carry_trace(a: int, b: int, width: int, c0: int = 0) -> list[dict[str, int]]:
    """Per-bit rows (bit, A, B, G, P, C_in, S) for one carry-lookahead addition."""
    A, B = int_to_bits(a, width), int_to_bits(b, width)
    G, P = A & B, A | B
    S, _ = cla_add(A, B, bool(c0))
    rows = []
    carry = bool(c0)
    for start in range(0, width, GROUP):
        stop = min(start + GROUP, width)
        C = cla_carries(G[start:stop], P[start:stop], carry)
        incoming = [carry] + list(C[:-1])
        for off, i in enumerate(range(start, stop)):
            rows.append({"bit": i, "A": int(A[i]), "B": int(B[i]), "G": int(G[i]), "P": int(P[i]),
                         "C": int(incoming[off]), "S": int(S[i])})
        carry = bool(C[-1])
    return rows
