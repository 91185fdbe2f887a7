#!/usr/bin/env python3
"""
가우스 측도와 불변성 검증 모듈

- 가우스 측도 γ(dx) = dx/((1+x) log 2), 샘플링, 르베그 digit 법칙
- ∫ Q(x, [0,u)) γ(dx) = γ([0,u)) 의 구간 분할 가우스-르장드르 적분
- τ-불변성 KS 검정, 밀어내기 항등식 μ(τ^{-n}[0,x)) = ∫_0^x U^n f0/(t+1) dt
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from loguru import logger
from scipy import stats

import streams
from cf_core import gauss_map_array
from errors import DomainError
from rscc_core import q_kernel_interval
from transfer_operator import (GridFunction, apply_U, density_to_f, gauss_cdf,
                               integrate_gauss_weight)

LOG2 = math.log(2.0)

# 점근 KS 임계값 c(α) (n → ∞, 양측)
KS_CRITICAL = {0.05: 1.358, 0.01: 1.628}

MEASURE_CONFIG = {
    'quad_tol': 1e-8,
    'gl_order': 16,
    'density_tol': 1e-8,
    'max_pushforward_steps': 5,
}


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    est_error: float
    pieces: int


def gauss_measure_interval(a: float, b: float) -> float:
    """γ([a, b]) = (log(1+b) - log(1+a))/log 2"""
    if not (0 <= a <= b <= 1):
        raise DomainError(f"0 ≤ a ≤ b ≤ 1 이어야 합니다: a={a}, b={b}")
    return (math.log1p(b) - math.log1p(a)) / LOG2


def gauss_mean() -> float:
    """∫ x γ(dx) = 1/log 2 - 1"""
    return 1.0 / LOG2 - 1.0


def sample_gauss(rng: np.random.Generator, size=None):
    """역누적분포 2^V - 1 (V ~ U[0,1))"""
    return np.expm1(rng.random(size) * LOG2)


def lebesgue_digit_prob(i):
    """λ(a_1 = i) = 1/(i(i+1))"""
    if np.any(np.asarray(i) < 1):
        raise DomainError(f"digit은 1 이상이어야 합니다: {i}")
    return 1 / (i * (i + 1))


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """양측 KS 임계값 c(α)/√n"""
    if alpha not in KS_CRITICAL:
        raise DomainError(f"지원하는 α는 {sorted(KS_CRITICAL)} 입니다: {alpha}")
    if n < 1:
        raise DomainError(f"표본 수는 1 이상이어야 합니다: {n}")
    return KS_CRITICAL[alpha] / math.sqrt(n)


@lru_cache(maxsize=4)
def _legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def check_gamma_invariance(ubound: float, quad_tol: float = None) -> QuadratureResult:
    """
    ∫ Q(x, [0,u)) γ(dx) 를 계산해 γ([0,u)) 와 비교

    적분함수는 x = 1/u - j 에서 끊기므로 그 점들로 [0,1] 을 나누고
    각 조각에 가우스-르장드르를 적용한다.
    """
    if not (0 < ubound <= 1):
        raise DomainError(f"ubound는 (0,1] 구간이어야 합니다: {ubound}")
    quad_tol = MEASURE_CONFIG['quad_tol'] if quad_tol is None else quad_tol

    inv = 1.0 / ubound
    j = np.arange(math.floor(inv - 1.0), math.floor(inv) + 1, dtype=np.float64)
    cuts = inv - j
    edges = np.unique(np.concatenate(([0.0, 1.0], cuts[(cuts > 0.0) & (cuts < 1.0)])))

    t, weights = _legendre(MEASURE_CONFIG['gl_order'])
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = (hi - lo) / 2.0
        x = lo + half * (t + 1.0)
        integrand = q_kernel_interval(x, ubound) / ((x + 1.0) * LOG2)
        total += half * float(weights @ integrand)

    err = abs(total - gauss_measure_interval(0.0, ubound))
    if err > quad_tol:
        logger.warning(f"⚠️ 적분 오차 {err:.2e} > {quad_tol:.0e} (u={ubound})")
    return QuadratureResult(value=total, est_error=err, pieces=len(edges) - 1)


def check_tau_invariance(nsamples: int, seed: int, workers: int = 1) -> float:
    """γ 표본에 τ 를 적용한 뒤 가우스 CDF 와의 KS 통계량"""
    if nsamples < 10_000:
        raise DomainError(f"nsamples는 10^4 이상이어야 합니다: {nsamples}")
    parts = streams.map_chunks(lambda rng, size: gauss_map_array(sample_gauss(rng, size)),
                               nsamples, seed, 'tau_invariance', workers)
    return float(stats.kstest(np.concatenate(parts), gauss_cdf).statistic)


def branch_pushforward_cdf(y: float, I: int = 10_000) -> float:
    """
    γ(τ^{-1}[0, y)) = Σ_i γ([1/(y+i), 1/i))

    i > I 꼬리는 망원급수로 log(1 + y/(I+1))/log 2.
    """
    if not (0 <= y <= 1):
        raise DomainError(f"y는 [0,1] 구간이어야 합니다: {y}")
    i = np.arange(1, I + 1, dtype=np.float64)
    branches = np.log1p(1.0 / i) - np.log1p(1.0 / (y + i))
    return float((branches.sum() + math.log1p(y / (I + 1.0))) / LOG2)


def sample_density(density: GridFunction, rng: np.random.Generator, size: int) -> np.ndarray:
    """구간별 선형 밀도의 정확한 역누적분포 샘플링"""
    d = density.values
    h = 1.0 / density.N
    masses = h * (d[:-1] + d[1:]) / 2.0
    cum = np.concatenate(([0.0], np.cumsum(masses)))

    r = rng.random(size) * cum[-1]
    k = np.clip(np.searchsorted(cum, r, side='right') - 1, 0, density.N - 1)
    r = r - cum[k]
    dk = d[k]
    slope = (d[k + 1] - dk) / h
    # d_k s + slope s^2/2 = r 의 안정한 근
    denom = dk + np.sqrt(np.maximum(dk * dk + 2.0 * slope * r, 0.0))
    s = np.divide(2.0 * r, denom, out=np.zeros_like(r), where=denom > 0.0)
    return density.nodes[k] + np.clip(s, 0.0, h)


def check_pushforward_identity(density: GridFunction, n: int, x: float, nsamples: int,
                               gridN: int, seed: int = 0, I_max: int = 10_000,
                               workers: int = 1) -> Tuple[float, float]:
    """
    μ(τ^{-n}[0, x)) 의 몬테카를로 값과 ∫_0^x U^n f0(t)/(t+1) dt 값

    Returns:
        (monte_carlo_value, quadrature_value)
    """
    if np.any(density.values < 0.0):
        raise DomainError("밀도는 음수가 될 수 없습니다")
    mass = float(np.sum((density.values[:-1] + density.values[1:]) / 2.0) / density.N)
    if abs(mass - 1.0) > MEASURE_CONFIG['density_tol']:
        raise DomainError(f"밀도가 정규화되지 않았습니다: ∫ = {mass}")
    if not (0 <= n <= MEASURE_CONFIG['max_pushforward_steps']):
        raise DomainError(f"n은 0..{MEASURE_CONFIG['max_pushforward_steps']} 이어야 합니다: {n}")
    if not (0 <= x <= 1):
        raise DomainError(f"x는 [0,1] 구간이어야 합니다: {x}")

    def count_chunk(rng, size):
        xs = sample_density(density, rng, size)
        for _ in range(n):
            xs = gauss_map_array(xs)
        return int(np.count_nonzero(xs < x))

    hits = sum(streams.map_chunks(count_chunk, nsamples, seed, f'pushforward_n{n}', workers))
    monte_carlo = hits / nsamples

    fine = density if density.N == gridN else GridFunction.from_callable(density, gridN)
    f = density_to_f(fine)
    for _ in range(n):
        f = apply_U(f, I_max)
    quadrature = integrate_gauss_weight(f, 0.0, x)

    logger.debug(f"📊 밀어내기 n={n}, x={x}: MC {monte_carlo:.6f}, 적분 {quadrature:.6f}")
    return monte_carlo, quadrature
