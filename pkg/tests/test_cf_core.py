import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest

import cf_core
from cf_core import (DigitSequence, backward_chain, convergents, evaluate_finite, first_digit_array,
                     gauss_map, gauss_map_array, rcf_digits)
from errors import DomainError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SILVER = math.sqrt(2.0) - 1.0


def test_gauss_map_examples():
    assert gauss_map(0) == 0
    assert gauss_map(Fraction(2, 5)) == Fraction(1, 2)
    assert gauss_map(GOLDEN) == pytest.approx(GOLDEN, abs=1e-15)
    assert gauss_map(1) == 0
    assert gauss_map(1.0) == 0.0


def test_gauss_map_rejects_outside_unit_interval():
    with pytest.raises(DomainError):
        gauss_map(1.5)
    with pytest.raises(DomainError):
        gauss_map(Fraction(-1, 3))


def test_rcf_digits_examples():
    half = rcf_digits(Fraction(1, 2), 5)
    assert half.digits == (2,)
    assert half.terminated

    silver = rcf_digits(SILVER, 4)
    assert silver.digits == (2, 2, 2, 2)
    assert not silver.terminated

    two_thirds = rcf_digits(Fraction(2, 3), 5)
    assert two_thirds.digits == (1, 2)
    assert two_thirds.terminated


def test_rcf_digits_of_zero_is_empty_and_terminated():
    seq = rcf_digits(0, 3)
    assert seq.digits == ()
    assert seq.terminated


def test_rcf_digits_requires_positive_n_max():
    with pytest.raises(DomainError):
        rcf_digits(Fraction(1, 3), 0)


def test_float_digits_beyond_cap_are_flagged(monkeypatch):
    monkeypatch.setattr(cf_core, 'FLOAT_DIGIT_CAP', 3)
    seq = rcf_digits(SILVER, 5)
    assert len(seq) == 5
    assert not seq.reliable
    assert rcf_digits(Fraction(5, 8), 10).reliable


def test_digit_sequence_rejects_zero_digit():
    with pytest.raises(DomainError):
        DigitSequence((1, 0, 2), terminated=True)


def test_evaluate_finite_examples():
    assert evaluate_finite((2,)) == Fraction(1, 2)
    assert evaluate_finite((1, 2)) == Fraction(2, 3)
    assert evaluate_finite((1, 1, 1, 1, 1)) == Fraction(5, 8)


def test_evaluate_finite_rejects_empty():
    with pytest.raises(DomainError):
        evaluate_finite(())


def test_round_trip_small_denominators():
    for q in range(1, 150):
        for p in range(1, q + 1):
            x = Fraction(p, q)
            seq = rcf_digits(x, 200)
            assert seq.terminated
            assert evaluate_finite(seq) == x


def test_round_trip_random_denominators():
    rng = random.Random(11)
    for _ in range(500):
        q = rng.randint(2, 10_000)
        x = Fraction(rng.randint(1, q), q)
        assert evaluate_finite(rcf_digits(x, 200)) == x


def test_shift_consistency_on_float_path():
    for x in np.random.default_rng(1).random(50):
        x = float(x)
        shifted = rcf_digits(gauss_map(x), 10)
        full = rcf_digits(x, 11)
        assert shifted.digits == full.digits[1:]


def test_convergents_examples():
    assert convergents((2, 2, 2)).as_fractions() == [Fraction(1, 2), Fraction(2, 5), Fraction(5, 12)]
    assert convergents((1,)).as_fractions() == [Fraction(1)]
    assert convergents((1, 2)).as_fractions() == [Fraction(1), Fraction(2, 3)]


def test_convergents_match_prefix_evaluation_and_invariants():
    rng = random.Random(3)
    for _ in range(200):
        digits = tuple(rng.randint(1, 50) for _ in range(rng.randint(1, 12)))
        conv = convergents(digits)
        fracs = conv.as_fractions()
        for k, value in enumerate(fracs):
            assert value == evaluate_finite(digits[:k + 1])
            assert math.gcd(conv.numerators[k], conv.denominators[k]) == 1
        assert all(abs(d) == 1 for d in conv.determinants())
        q = conv.denominators
        assert all(q[k] < q[k + 1] for k in range(1, len(q) - 1))
        for k in range(len(fracs) - 1):
            assert abs(fracs[k] - fracs[k + 1]) == Fraction(1, q[k] * q[k + 1])


def test_backward_chain_examples():
    assert backward_chain((1, 2)) == [Fraction(1), Fraction(1, 3)]
    assert backward_chain((2, 2, 2)) == [Fraction(1, 2), Fraction(2, 5), Fraction(5, 12)]
    assert backward_chain((5,)) == [Fraction(1, 5)]


def test_backward_chain_equals_reversed_prefix_exhaustively():
    cases = 0
    for length in range(1, 7):
        for digits in itertools.product(range(1, 5), repeat=length):
            chain = backward_chain(digits)
            for k in range(1, length + 1):
                assert chain[k - 1] == evaluate_finite(tuple(reversed(digits[:k])))
            cases += 1
    assert cases == 5460


def test_vectorised_map_matches_scalar():
    xs = np.concatenate(([0.0, 1.0, 0.5, SILVER], np.random.default_rng(5).random(200)))
    mapped = gauss_map_array(xs)
    first = first_digit_array(xs)
    for x, y, a in zip(xs, mapped, first):
        assert y == gauss_map(float(x))
        if x > 0:
            assert a == rcf_digits(float(x), 1).digits[0]
        else:
            assert a == 0


@pytest.mark.parametrize('x', [1e-310, 5e-324])
def test_subnormal_inputs_map_to_zero(x):
    assert gauss_map(x) == 0.0
    digits = rcf_digits(x, 3)
    assert digits.digits == (math.floor(1 / Fraction(x)),)
    assert digits.terminated


def test_vectorised_map_handles_subnormals():
    xs = np.array([1e-310, 5e-324, 1e-300, 0.5])
    mapped = gauss_map_array(xs)
    assert not np.isnan(mapped).any()
    assert list(mapped[:2]) == [0.0, 0.0]
    assert mapped[3] == 0.0
    first = first_digit_array(xs)
    top = np.iinfo(np.int64).max
    assert list(first[:3]) == [top, top, top]
    assert first[3] == 2
