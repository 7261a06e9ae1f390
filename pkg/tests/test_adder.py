import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clrnn.adder import (
    BitWord,
    WidthMismatchError,
    bits_to_int,
    carry_trace,
    cla_add,
    cla_carries,
    cla_generate_propagate,
    full_adder,
    int_to_bits,
    ripple_add,
)


def test_full_adder_truth_table():
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                assert full_adder(a, b, c) == ((a + b + c) & 1, (a + b + c) >> 1)


def test_worked_example_11_plus_6():
    a, b = BitWord.from_int(11, 4), BitWord.from_int(6, 4)
    G, P = cla_generate_propagate(a, b)
    assert (str(G), str(P)) == ("0010", "1111")
    s, carry = cla_add(a, b)
    assert (str(s), carry) == ("0001", 1)
    assert [row["C"] for row in carry_trace(11, 6, 4)] == [0, 0, 1, 1]


def test_carries_are_sum_of_products():
    G, P = int_to_bits(0b0010, 4), int_to_bits(0b1111, 4)
    np.testing.assert_array_equal(cla_carries(G, P, 0), [0, 1, 1, 1])
    np.testing.assert_array_equal(cla_carries(np.zeros(4, bool), np.ones(4, bool), 1), [1, 1, 1, 1])


def test_width_mismatch():
    with pytest.raises(WidthMismatchError):
        cla_add(np.zeros(4, bool), np.zeros(5, bool))


def test_bitword_validation():
    with pytest.raises(ValueError):
        BitWord.from_int(16, 4)


@given(st.integers(1, 64).flatmap(lambda w: st.tuples(st.just(w), st.integers(0, 2**w - 1),
                                                      st.integers(0, 2**w - 1), st.integers(0, 1))))
def test_adders_agree_with_integer_addition(case):
    width, a, b, c = case
    total = a + b + c
    for adder in (cla_add, ripple_add):
        s, carry = adder(BitWord.from_int(a, width), BitWord.from_int(b, width), c)
        assert s.to_int() == total % (1 << width)
        assert carry == total >> width


@given(st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=20))
def test_bit_conversion_round_trip(values):
    assert bits_to_int(int_to_bits(values, 64)).tolist() == values


def test_each_carry_ignores_higher_bits(rng):
    G = rng.integers(0, 2, size=(200, 8)).astype(bool)
    P = G | rng.integers(0, 2, size=(200, 8)).astype(bool)
    c0 = rng.integers(0, 2, size=200).astype(bool)
    base = cla_carries(G, P, c0)
    for i in range(8):
        G2, P2 = G.copy(), P.copy()
        G2[:, i + 1 :] = ~G2[:, i + 1 :]
        P2[:, i + 1 :] = ~P2[:, i + 1 :]
        np.testing.assert_array_equal(cla_carries(G2, P2, c0)[:, i], base[:, i])
