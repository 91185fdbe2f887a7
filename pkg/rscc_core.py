#!/usr/bin/env python3
"""
완전 연결 랜덤 시스템(RSCC) 모듈

일반 RSCC 인터페이스와 정칙 연분수 인스턴스
u(x, i) = 1/(x+i), P_i(x) = (x+1)/((x+i)(x+i+1)) 을 제공한다.
반복 사상, 전이 핵, 체인 시뮬레이션, 수축 계수(r_k, R_1) 수치 추정 포함.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from loguru import logger

import streams
from errors import DomainError, UnsupportedOrderError

# 수축 계수 추정 설정
CONTRACTION_CONFIG = {
    'pair_min_distance': 1e-3,   # 쌍 격자의 최소 거리
    'digit_block': 64,           # 한 번에 더하는 digit 수
}

ZETA4 = math.pi ** 4 / 90


# ============================================================================
# RCF 인스턴스의 사상과 핵
# ============================================================================

def u_map(w, i):
    """u(w, i) = 1/(w+i)"""
    return 1 / (w + i)


def u_map_derivative(w, i):
    """d/dw u(w, i) = -1/(w+i)^2"""
    return -1 / (w + i) ** 2


def p_kernel(w, i):
    """P_i(w) = (w+1)/((w+i)(w+i+1))"""
    return (w + 1) / ((w + i) * (w + i + 1))


def p_kernel_derivative(w, i):
    """d/dw P_i(w) = (i^2 - i - (w+1)^2)/((w+i)^2 (w+i+1)^2)"""
    return (i * i - i - (w + 1) ** 2) / ((w + i) ** 2 * (w + i + 1) ** 2)


def p_kernel_tail(w, m):
    """Σ_{i≥m} P_i(w) = (w+1)/(w+m) (망원급수)"""
    return (w + 1) / (w + m)


def draw_digits(zeta, uniform):
    """
    역누적분포로 digit 추출 (벡터화)

    (ζ+1)/(ζ+m+1) ≤ U 를 만족하는 가장 작은 m 을 닫힌 형태로 구한 뒤
    반올림 오차를 국소적으로 보정한다.

    Args:
        zeta: 현재 상태 ζ
        uniform: (0, 1] 균등 난수

    Returns:
        int64 digit 배열
    """
    zeta = np.asarray(zeta, dtype=np.float64)
    uniform = np.asarray(uniform, dtype=np.float64)
    m = np.maximum(np.ceil((zeta + 1.0) / uniform - zeta - 1.0), 1.0)

    while True:
        down = (m > 1.0) & ((zeta + 1.0) / (zeta + m) <= uniform)
        if not down.any():
            break
        m = np.where(down, m - 1.0, m)
    while True:
        up = (zeta + 1.0) / (zeta + m + 1.0) > uniform
        if not up.any():
            break
        m = np.where(up, m + 1.0, m)

    return m.astype(np.int64)


# ============================================================================
# 일반 RSCC 인터페이스
# ============================================================================

class RsccSystem(ABC):
    """상태 공간 W = [0,1], 알파벳 X = 양의 정수 인 RSCC"""

    name = 'abstract'

    @abstractmethod
    def u(self, w, i):
        """점 사상 u(w, i)"""

    @abstractmethod
    def p(self, w, i):
        """전이 핵 P(w, i)"""

    @abstractmethod
    def tail(self, w, m):
        """꼬리 질량 Σ_{i≥m} P(w, i)"""

    def draw(self, w, uniform):
        """꼬리 질량으로 digit 하나 추출 (기본: 지수 탐색 + 이분법)"""
        hi = 1
        while self.tail(w, hi + 1) > uniform:
            hi *= 2
        lo = max(1, hi // 2)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.tail(w, mid + 1) <= uniform:
                hi = mid
            else:
                lo = mid + 1
        return lo


class RcfSystem(RsccSystem):
    """정칙 연분수 RSCC"""

    name = 'rcf'

    def u(self, w, i):
        return u_map(w, i)

    def p(self, w, i):
        return p_kernel(w, i)

    def tail(self, w, m):
        return p_kernel_tail(w, m)

    def draw(self, w, uniform):
        return int(draw_digits(w, uniform))


RCF_SYSTEM = RcfSystem()


@dataclass(frozen=True)
class ChainTrajectory:
    """실현된 (ξ_n, ζ_n) 경로와 시드 정보"""
    seed: int
    w0: float
    xi: Tuple[int, ...]
    zeta: Tuple[float, ...]
    index: int = 0


@dataclass(frozen=True)
class PathBatch:
    """벡터화 시뮬레이션 결과: xi (경로 × n), zeta (경로 × (n+1))"""
    xi: np.ndarray
    zeta: np.ndarray


@dataclass(frozen=True)
class ContractionReport:
    """수축 계수 추정 결과"""
    gridN: int
    r_hat: Dict[int, float]
    R1_hat: float
    I_max: int
    I_max_by_order: Dict[int, int] = field(default_factory=dict)


# ============================================================================
# 반복 사상과 핵
# ============================================================================

def iterate_u(w, word: Sequence[int], system: RsccSystem = RCF_SYSTEM):
    """u^(n)(w, x^(n)) 의 왼쪽 접기"""
    if len(word) == 0:
        raise DomainError("word가 비어 있습니다")
    for letter in word:
        w = system.u(w, letter)
    return w


def word_probability(w, word: Sequence[int], system: RsccSystem = RCF_SYSTEM):
    """궤적을 따라 곱한 P_r(w, {word}); 빈 word 는 1"""
    prob = 1
    for letter in word:
        prob *= system.p(w, letter)
        w = system.u(w, letter)
    return prob


def q_kernel_interval(w, ubound):
    """
    Q(w, [0, u)) = Σ_{i: u(w,i) < u} P(w, i) = (w+1)/(w+m)

    m = ⌊1/u - w⌋ + 1 은 1/(w+i) < u 를 만족하는 가장 작은 정수
    (반열린 구간이므로 등호인 digit은 제외).
    """
    if not (0 < ubound <= 1):
        raise DomainError(f"ubound는 (0,1] 구간이어야 합니다: {ubound}")
    m = np.floor(1.0 / ubound - w) + 1.0
    return (w + 1.0) / (w + m)


def q_kernel_n_interval(w, ubound, n: int, I_max: int = 200):
    """
    Q^n(w, [0, u)) 를 digit 열거로 계산 (n ≤ 3)

    I_max 보다 큰 digit 은 꼬리 질량과 함께 대표 상태 u(w, I_max+1) 로 보낸다.
    """
    if n < 1:
        raise DomainError(f"n은 1 이상이어야 합니다: {n}")
    if n > 3:
        raise UnsupportedOrderError(f"Q^n 열거는 n ≤ 3 만 지원합니다: n={n}")
    w = np.asarray(w, dtype=np.float64)
    if n == 1:
        return q_kernel_interval(w, ubound)

    digits = np.arange(1, I_max + 1, dtype=np.float64)
    ws = w[..., None]
    inner = q_kernel_n_interval(u_map(ws, digits), ubound, n - 1, I_max)
    body = (p_kernel(ws, digits) * inner).sum(axis=-1)
    rep = q_kernel_n_interval(u_map(w, I_max + 1.0), ubound, n - 1, I_max)
    return body + p_kernel_tail(w, I_max + 1.0) * rep


def cesaro_q_interval(w, ubound, n: int, I_max: int = 200):
    """Q_n(w, [0,u)) = (1/n) Σ_{k=1..n} Q^k(w, [0,u))"""
    return sum(q_kernel_n_interval(w, ubound, k, I_max) for k in range(1, n + 1)) / n


# ============================================================================
# 체인 시뮬레이션
# ============================================================================

def simulate_chain(w0: float, n: int, seed: int, index: int = 0,
                   system: RsccSystem = RCF_SYSTEM) -> ChainTrajectory:
    """
    (ξ_k, ζ_k) 경로 하나를 시뮬레이션

    스트림은 (seed, index) 로 결정되므로 같은 입력이면 항상 같은 경로.
    """
    if n < 1:
        raise DomainError(f"n은 1 이상이어야 합니다: {n}")
    if not (0 <= w0 <= 1):
        raise DomainError(f"w0는 [0,1] 구간이어야 합니다: {w0}")

    rng = streams.stream(seed, 'simulate_chain', index)
    zeta = [float(w0)]
    xi: List[int] = []
    for _ in range(n):
        uniform = 1.0 - rng.random()
        digit = system.draw(zeta[-1], uniform)
        xi.append(int(digit))
        zeta.append(float(system.u(zeta[-1], digit)))

    return ChainTrajectory(seed=seed, w0=float(w0), xi=tuple(xi), zeta=tuple(zeta), index=index)


def simulate_digit_paths(w0: float, n: int, n_paths: int, seed: int,
                         workers: int = 1, experiment: str = 'digit_paths') -> PathBatch:
    """RCF 체인 n_paths 개를 청크 단위로 동시에 시뮬레이션"""
    if n < 1 or n_paths < 1:
        raise DomainError(f"n, n_paths는 1 이상이어야 합니다: n={n}, n_paths={n_paths}")

    def run_chunk(rng, size):
        zeta = np.empty((size, n + 1))
        xi = np.empty((size, n), dtype=np.int64)
        zeta[:, 0] = w0
        for k in range(n):
            uniform = 1.0 - rng.random(size)
            xi[:, k] = draw_digits(zeta[:, k], uniform)
            zeta[:, k + 1] = 1.0 / (zeta[:, k] + xi[:, k])
        return xi, zeta

    parts = streams.map_chunks(run_chunk, n_paths, seed, experiment, workers)
    return PathBatch(xi=np.concatenate([p[0] for p in parts]),
                     zeta=np.concatenate([p[1] for p in parts]))


# ============================================================================
# 수축 계수
# ============================================================================

def _check_grid(gridN: int) -> np.ndarray:
    if gridN < 100:
        raise DomainError(f"gridN은 100 이상이어야 합니다: {gridN}")
    return np.arange(gridN + 1, dtype=np.float64) / gridN


def _pair_grid(gridN: int) -> Tuple[np.ndarray, np.ndarray]:
    """거리 2^k·h (≥ pair_min_distance) 인 순서쌍 (w', w'') 을 양방향으로 생성"""
    nodes = _check_grid(gridN)
    offset = max(1, math.ceil(gridN * CONTRACTION_CONFIG['pair_min_distance']))
    left, right = [], []
    while offset <= gridN:
        a, b = nodes[:-offset], nodes[offset:]
        left += [a, b]
        right += [b, a]
        offset *= 2
    return np.concatenate(left), np.concatenate(right)


def _digit_blocks(I_max: int):
    block = CONTRACTION_CONFIG['digit_block']
    for start in range(1, I_max + 1, block):
        yield np.arange(start, min(start + block, I_max + 1), dtype=np.float64)


def _r1_sums(wa, wb, I_max):
    total = np.zeros_like(wa)
    gap = np.abs(wa - wb)
    for i in _digit_blocks(I_max):
        a, b = wa[:, None], wb[:, None]
        total += (p_kernel(a, i) * np.abs(u_map(a, i) - u_map(b, i)) / gap[:, None]).sum(axis=1)
    return total


def _r1_diagonal(nodes, I_max):
    total = np.zeros_like(nodes)
    for i in _digit_blocks(I_max):
        w = nodes[:, None]
        total += (p_kernel(w, i) * np.abs(u_map_derivative(w, i))).sum(axis=1)
    return total


def _r2_sums(wa, wb, I_max):
    total = np.zeros_like(wa)
    gap = np.abs(wa - wb)
    j = np.arange(1, I_max + 1, dtype=np.float64)[None, :]
    for i in range(1, I_max + 1):
        a, b = u_map(wa, i)[:, None], u_map(wb, i)[:, None]
        inner = (p_kernel(a, j) * np.abs(u_map(a, j) - u_map(b, j))).sum(axis=1)
        total += p_kernel(wa, i) * inner / gap
    return total


def _r2_diagonal(nodes, I_max):
    total = np.zeros_like(nodes)
    j = np.arange(1, I_max + 1, dtype=np.float64)[None, :]
    for i in range(1, I_max + 1):
        s = u_map(nodes, i)[:, None]
        # |d/dw u(u(w,i), j)| = 1/(1 + j(w+i))^2
        slope = 1.0 / (1.0 + j * (nodes[:, None] + i)) ** 2
        total += p_kernel(nodes, i) * (p_kernel(s, j) * slope).sum(axis=1)
    return total


def contraction_r(k: int, gridN: int = 1000, I_max: int = 500) -> float:
    """
    r_k 의 수치 추정 (k ∈ {1, 2})

    쌍 격자 위의 차분 몫 상한과 대각선 극한(도함수 형태) 중 큰 값에
    I_max 이후 digit 에 대한 꼬리 상한을 더해 반환한다.
    """
    if k < 1:
        raise DomainError(f"k는 1 이상이어야 합니다: {k}")
    if k > 2:
        raise UnsupportedOrderError(f"r_k 는 k ≤ 2 만 지원합니다 (digit 합이 I_max^k 로 증가): k={k}")
    if I_max < 1:
        raise DomainError(f"I_max는 1 이상이어야 합니다: {I_max}")

    nodes = _check_grid(gridN)
    wa, wb = _pair_grid(gridN)
    if k == 1:
        pair_max = _r1_sums(wa, wb, I_max).max()
        diag_max = _r1_diagonal(nodes, I_max).max()
        tail = 2.0 / (3.0 * I_max ** 3)
    else:
        pair_max = _r2_sums(wa, wb, I_max).max()
        diag_max = _r2_diagonal(nodes, I_max).max()
        tail = 8.0 * ZETA4 / (3.0 * I_max ** 3)

    estimate = float(max(pair_max, diag_max) + tail)
    logger.debug(f"📊 r_{k} 추정: 쌍 {pair_max:.6f}, 대각 {diag_max:.6f}, 꼬리 {tail:.2e}")
    return estimate


def contraction_R1_by_threshold(gridN: int = 1000, I_max: int = 500) -> np.ndarray:
    """
    문턱 집합 A = {i ≥ m} 별 Lipschitz 상수 추정 (인덱스 = m)

    P(w, {i ≥ m}) = (w+1)/(w+m) 의 차분 몫과 도함수 (m-1)/(w+m)^2 중 최대.
    """
    nodes = _check_grid(gridN)
    wa, wb = _pair_grid(gridN)
    gap = np.abs(wa - wb)
    result = np.zeros(I_max + 1)
    for m in _digit_blocks(I_max):
        pair = np.abs(p_kernel_tail(wa[:, None], m) - p_kernel_tail(wb[:, None], m)) / gap[:, None]
        diag = (m - 1.0) / (nodes[:, None] + m) ** 2
        result[m.astype(int)] = np.maximum(pair.max(axis=0), diag.max(axis=0))
    return result


def contraction_R1(gridN: int = 1000, I_max: int = 500) -> float:
    """R_1 추정: 문턱 집합 전체에 대한 최대"""
    return float(contraction_R1_by_threshold(gridN, I_max).max())


def contraction_report(gridN: int = 1000, I_max: int = 500, k_max: int = 2,
                       I_max_k2: int = 60) -> ContractionReport:
    """r_1..r_{k_max} 와 R_1 을 모은 보고서"""
    limits = {k: I_max if k == 1 else min(I_max, I_max_k2) for k in range(1, k_max + 1)}
    r_hat = {k: contraction_r(k, gridN, limits[k]) for k in limits}
    return ContractionReport(gridN=gridN, r_hat=r_hat, R1_hat=contraction_R1(gridN, I_max),
                             I_max=I_max, I_max_by_order={k: limits[k] for k in r_hat})
