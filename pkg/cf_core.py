#!/usr/bin/env python3
"""
정칙 연분수(RCF) 산술 모듈

가우스 사상, 부분몫(digit) 추출, 유한 연분수 평가, 근사분수, 역방향 체인 s_n 계산.
유리수 입력은 Fraction으로 정확하게, 무리수/샘플 입력은 binary64로 계산한다.
"""

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from errors import DomainError

UnitReal = Union[float, Fraction]

# float 경로에서 신뢰할 수 있는 최대 digit 수 (가우스 사상 한 번마다 오차가 커짐)
FLOAT_DIGIT_CAP = int(os.getenv('GK_FLOAT_DIGIT_CAP', 30))


@dataclass(frozen=True)
class DigitSequence:
    """부분몫 a_1..a_n 과 종료 여부"""
    digits: Tuple[int, ...]
    terminated: bool
    reliable: bool = True

    def __post_init__(self):
        if any(a < 1 for a in self.digits):
            raise DomainError(f"모든 digit은 1 이상이어야 합니다: {self.digits}")

    def __len__(self) -> int:
        return len(self.digits)

    def __iter__(self):
        return iter(self.digits)


@dataclass(frozen=True)
class Convergents:
    """근사분수 p_k/q_k (k = 1..n), 크기 제한 없는 정수"""
    numerators: Tuple[int, ...]
    denominators: Tuple[int, ...]

    def as_fractions(self) -> List[Fraction]:
        return [Fraction(p, q) for p, q in zip(self.numerators, self.denominators)]

    def determinants(self) -> List[int]:
        """p_{k-1} q_k - p_k q_{k-1} (k = 2..n), 항상 ±1"""
        p, q = self.numerators, self.denominators
        return [p[k - 1] * q[k] - p[k] * q[k - 1] for k in range(1, len(p))]


def _is_exact(x) -> bool:
    return isinstance(x, (Fraction, int)) and not isinstance(x, bool)


def _check_unit(x) -> None:
    if not (0 <= x <= 1):
        raise DomainError(f"x는 [0,1] 구간에 있어야 합니다: {x}")


def _float_digit(x: float) -> Tuple[int, float]:
    """
    float x > 0 에 대해 (⌊1/x⌋, 1/x - ⌊1/x⌋) 반환

    반올림으로 나머지가 음수가 되면 후보를 하나 줄인다.
    1/x 가 넘치는 준정규 x 는 Fraction 으로 digit 을 구하고,
    그 크기의 float 는 모두 정수이므로 나머지는 0.0 이다.
    """
    try:
        y = 1.0 / x
    except OverflowError:
        y = math.inf
    if math.isinf(y):
        return math.floor(1 / Fraction(x)), 0.0
    m = math.floor(y)
    r = y - m
    if r < 0.0:
        m -= 1
        r += 1.0
    return m, r


def _digits_of(digits: Union[DigitSequence, Iterable[int]]) -> Tuple[int, ...]:
    seq = tuple(digits.digits if isinstance(digits, DigitSequence) else digits)
    if not seq:
        raise DomainError("digit 목록이 비어 있습니다")
    if any(int(a) != a or a < 1 for a in seq):
        raise DomainError(f"digit은 양의 정수여야 합니다: {seq}")
    return tuple(int(a) for a in seq)


def gauss_map(x: UnitReal) -> UnitReal:
    """τ(x) = 1/x - ⌊1/x⌋, τ(0) = 0"""
    _check_unit(x)
    if _is_exact(x):
        x = Fraction(x)
        if x == 0:
            return Fraction(0)
        y = 1 / x
        return y - math.floor(y)

    x = float(x)
    if x == 0.0:
        return 0.0
    _, r = _float_digit(x)
    return r


def gauss_map_array(x: np.ndarray) -> np.ndarray:
    """벡터화된 binary64 가우스 사상 (0은 0으로)"""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    mask = x > 0.0
    with np.errstate(over='ignore', invalid='ignore'):
        y = 1.0 / x[mask]
        r = y - np.floor(y)
    r = np.where(r < 0.0, r + 1.0, r)
    out[mask] = np.where(np.isfinite(y), r, 0.0)
    return out


def first_digit_array(x: np.ndarray) -> np.ndarray:
    """벡터화된 a_1 = ⌊1/x⌋ (x = 0 이면 0, int64 를 넘는 digit 은 int64 최대값)"""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.shape, dtype=np.int64)
    mask = x > 0.0
    with np.errstate(over='ignore', invalid='ignore'):
        y = 1.0 / x[mask]
        m = np.floor(y)
        m = np.where(y - m < 0.0, m - 1.0, m)
    top = np.iinfo(np.int64).max
    fits = m < float(top)
    digits = np.where(fits, m, 0.0).astype(np.int64)
    digits[~fits] = top
    out[mask] = digits
    return out


def rcf_digits(x: UnitReal, n_max: int) -> DigitSequence:
    """
    x의 RCF digit을 최대 n_max 개 추출

    Args:
        x: [0,1] 의 Fraction(정확 경로) 또는 float
        n_max: 최대 digit 수

    Returns:
        DigitSequence (반복값이 정확히 0이 되면 terminated=True)
    """
    if n_max < 1:
        raise DomainError(f"n_max는 1 이상이어야 합니다: {n_max}")
    _check_unit(x)

    digits: List[int] = []
    if _is_exact(x):
        value = Fraction(x)
        while value != 0 and len(digits) < n_max:
            y = 1 / value
            a = math.floor(y)
            digits.append(a)
            value = y - a
        return DigitSequence(tuple(digits), terminated=(value == 0))

    value = float(x)
    while value != 0.0 and len(digits) < n_max:
        a, value = _float_digit(value)
        digits.append(a)

    reliable = len(digits) <= FLOAT_DIGIT_CAP
    if not reliable:
        logger.warning(f"⚠️ float digit {len(digits)}개 추출: {FLOAT_DIGIT_CAP}개 이후는 신뢰할 수 없음")
    return DigitSequence(tuple(digits), terminated=(value == 0.0), reliable=reliable)


def evaluate_finite(digits: Union[DigitSequence, Sequence[int]]) -> Fraction:
    """[a_1, ..., a_n] = 1/(a_1 + [a_2, ..., a_n]) 을 정확한 유리수로 계산"""
    value = Fraction(0)
    for a in reversed(_digits_of(digits)):
        value = 1 / (a + value)
    return value


def convergents(digits: Union[DigitSequence, Sequence[int]]) -> Convergents:
    """두 항 점화식으로 모든 prefix의 근사분수 p_k/q_k 계산"""
    p_prev, p = 1, 0
    q_prev, q = 0, 1
    numerators, denominators = [], []
    for a in _digits_of(digits):
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        numerators.append(p)
        denominators.append(q)
    return Convergents(tuple(numerators), tuple(denominators))


def backward_chain(digits: Union[DigitSequence, Sequence[int]]) -> List[Fraction]:
    """s_0 = 0, s_k = 1/(a_k + s_{k-1}) 즉 s_k = [a_k, ..., a_1]"""
    s = Fraction(0)
    chain = []
    for a in _digits_of(digits):
        s = 1 / (a + s)
        chain.append(s)
    return chain
