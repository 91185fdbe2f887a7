#!/usr/bin/env python3
"""
전이 연산자 모듈

균등 격자 위의 구간별 선형 함수(GridFunction)에 대해
Uf(x) = Σ_i P_i(x) f(1/(x+i)) 를 희소 행렬로 적용하고,
가우스-쿠즈민 분포 점화식과 수렴률(q) 추정을 수행한다.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import sparse, special

from errors import DomainError, GridResolutionError
from rscc_core import p_kernel

LOG2 = math.log(2.0)

# 연산자 / 반복 설정
TRANSFER_CONFIG = {
    'digit_block': 256,          # 행렬 조립 시 digit 청크 크기
    'workers': int(os.getenv('GK_WORKERS', 4)),
    'clamp_limit': 1e-6,         # 이보다 큰 단조성 보정은 해상도 실패
    'clamp_warn': 1e-12,
    'stop_error': 1e-13,         # iterate_U 조기 종료
    'ratio_floor': 1e-14,        # 이전 오차가 이보다 커야 비율을 기록
    'rate_window': (1e-10, 1e-2),
    'plateau_ratio': 0.9,
}


@lru_cache(maxsize=16)
def grid_nodes(N: int) -> np.ndarray:
    """x_k = k/N (k = 0..N)"""
    if N < 1:
        raise DomainError(f"격자 구간 수는 1 이상이어야 합니다: {N}")
    nodes = np.arange(N + 1, dtype=np.float64) / N
    nodes.setflags(write=False)
    return nodes


class GridFunction:
    """[0,1] 균등 격자 위의 구간별 선형 함수"""

    def __init__(self, values):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise DomainError(f"노드 값은 길이 2 이상의 1차원 배열이어야 합니다: shape={values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("노드 값에 유한하지 않은 값이 있습니다")
        self.values = values

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], N: int) -> 'GridFunction':
        nodes = grid_nodes(N)
        return cls(np.broadcast_to(fn(nodes), nodes.shape))

    @property
    def N(self) -> int:
        return self.values.size - 1

    @property
    def nodes(self) -> np.ndarray:
        return grid_nodes(self.N)

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values)

    def _other_values(self, other):
        if isinstance(other, GridFunction):
            if other.N != self.N:
                raise DomainError(f"격자 크기가 다릅니다: {self.N} vs {other.N}")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.values - self._other_values(other))

    def __mul__(self, scalar):
        return GridFunction(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(-self.values)

    def __repr__(self):
        return f"GridFunction(N={self.N})"


class DistributionFunction(GridFunction):
    """F(0) = 0, F(1) = 1 인 단조 비감소 GridFunction"""

    def __init__(self, values, clamp: float = 0.0, tol: float = 1e-12):
        super().__init__(values)
        v = self.values
        if abs(v[0]) > tol or abs(v[-1] - 1.0) > tol:
            raise DomainError(f"분포함수 끝값이 (0, 1)이 아닙니다: ({v[0]}, {v[-1]})")
        if np.any(np.diff(v) < -tol):
            raise DomainError("분포함수 값이 단조 비감소가 아닙니다")
        v[0], v[-1] = 0.0, 1.0
        self.clamp = clamp

    def __repr__(self):
        return f"DistributionFunction(N={self.N}, clamp={self.clamp:.1e})"


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    sup_error: float
    ratio: Optional[float]
    lip_error: float


@dataclass
class ConvergenceTable:
    """반복 실험의 (n, sup 오차, 연속 비율) 표"""
    rows: List[ConvergenceRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def final_error(self) -> float:
        return self.rows[-1].sup_error if self.rows else math.nan

    def errors(self) -> List[float]:
        return [row.sup_error for row in self.rows]

    def ratios(self) -> List[float]:
        return [row.ratio for row in self.rows if row.ratio is not None]

    def window_ratios(self, lo: float, hi: float) -> List[float]:
        """오차가 [lo, hi] 구간인 행의 비율"""
        return [row.ratio for row in self.rows
                if row.ratio is not None and lo <= row.sup_error <= hi]

    def as_dicts(self) -> List[Dict]:
        return [{'n': r.n, 'sup_error': r.sup_error, 'ratio': r.ratio, 'lip_error': r.lip_error}
                for r in self.rows]


@dataclass(frozen=True)
class GkOperator:
    """F ↦ c·F - B F + tail · (s·F) 형태의 가우스-쿠즈민 한 단계"""
    constant_row: np.ndarray
    matrix: sparse.csr_matrix
    tail: np.ndarray
    slope_row: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (self.constant_row @ values) - self.matrix @ values + self.tail * (self.slope_row @ values)


# ============================================================================
# 행렬 조립
# ============================================================================

def _interp_row(N: int, points: np.ndarray) -> np.ndarray:
    """Σ_p f(p) 를 노드 값의 선형결합으로 표현하는 가중치 벡터"""
    pos = np.asarray(points, dtype=np.float64) * N
    left = np.minimum(np.floor(pos), N - 1).astype(np.int64)
    t = pos - left
    row = np.zeros(N + 1)
    np.add.at(row, left, 1.0 - t)
    np.add.at(row, left + 1, t)
    return row


def _interp_block(N: int, digits: np.ndarray, weight: Callable) -> sparse.csr_matrix:
    """행 k 에 Σ_{i∈digits} weight(x_k, i)·f(1/(x_k+i)) 의 보간 가중치를 배치"""
    nodes = grid_nodes(N)[:, None]
    i = digits[None, :]
    pos = N / (nodes + i)
    left = np.minimum(np.floor(pos), N - 1)
    t = pos - left
    w = np.broadcast_to(weight(nodes, i), pos.shape)

    rows = np.broadcast_to(np.arange(N + 1)[:, None], pos.shape).ravel()
    cols = left.astype(np.int64).ravel()
    data = np.concatenate([(w * (1.0 - t)).ravel(), (w * t).ravel()])
    return sparse.csr_matrix((data, (np.concatenate([rows, rows]), np.concatenate([cols, cols + 1]))),
                             shape=(N + 1, N + 1))


def _assemble(N: int, n_digits: int, weight: Callable) -> sparse.csr_matrix:
    """digit 1..n_digits 를 청크로 나눠 병렬 조립하고 청크 순서대로 합산"""
    block = TRANSFER_CONFIG['digit_block']
    blocks = [np.arange(s, min(s + block, n_digits + 1), dtype=np.float64)
              for s in range(1, n_digits + 1, block)]
    workers = max(1, TRANSFER_CONFIG['workers'])

    if workers == 1 or len(blocks) == 1:
        parts = [_interp_block(N, b, weight) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _interp_block(N, b, weight), blocks))

    total = parts[0]
    for part in parts[1:]:
        total = total + part
    return total.tocsr()


def _check_imax(I_max: int) -> None:
    if I_max < 10:
        raise DomainError(f"I_max는 10 이상이어야 합니다: {I_max}")


@lru_cache(maxsize=4)
def transfer_matrix(N: int, I_max: int) -> sparse.csr_matrix:
    """
    apply_U 의 (N+1)×(N+1) 희소 행렬

    digit i ≤ min(N, I_max) 는 보간으로, N < i ≤ I_max 는 첫 셀의 선형식을
    후르비츠 제타로 닫힌 형태로 더하고, i > I_max 꼬리 질량은 f(0) 에 붙인다.
    """
    _check_imax(I_max)
    grid_nodes(N)
    logger.debug(f"🔧 전이 행렬 조립: N={N}, I_max={I_max}")
    M = min(N, I_max)
    matrix = _assemble(N, M, p_kernel)

    x = grid_nodes(N)
    col0 = (x + 1.0) / (x + I_max + 1.0)
    col1 = np.zeros_like(x)
    if I_max > N:
        a, b = x + N + 1.0, x + I_max + 1.0
        s0 = (x + 1.0) * (1.0 / a - 1.0 / b)
        s1 = (x + 1.0) * (special.zeta(2.0, a) - special.zeta(2.0, b) - (1.0 / a - 1.0 / b))
        col0 += s0 - N * s1
        col1 += N * s1

    rows = np.arange(N + 1)
    edge = sparse.csr_matrix((np.concatenate([col0, col1]),
                              (np.concatenate([rows, rows]),
                               np.concatenate([np.zeros(N + 1, dtype=np.int64), np.ones(N + 1, dtype=np.int64)]))),
                             shape=(N + 1, N + 1))
    return (matrix + edge).tocsr()


@lru_cache(maxsize=4)
def gk_operator(N: int, I_max: int) -> GkOperator:
    """
    gk_step 의 아핀 분해

    F_{n+1}(x) = Σ_{i≤M} (F(1/i) - F(1/(x+i))) + Σ_{i>M} (...),
    i > M 꼬리는 [0, 1/(M+1)] 할선 기울기와 ψ(x+M+1) - ψ(M+1) 로 닫는다.
    """
    _check_imax(I_max)
    x = grid_nodes(N)
    M = min(N, I_max)
    digits = np.arange(1, M + 1, dtype=np.float64)

    constant_row = _interp_row(N, 1.0 / digits)
    matrix = _assemble(N, M, lambda nodes, i: np.ones(1))
    tail = special.digamma(x + M + 1.0) - special.digamma(M + 1.0)
    slope_row = (M + 1.0) * _interp_row(N, np.array([1.0 / (M + 1.0)]))
    slope_row[0] -= M + 1.0
    return GkOperator(constant_row=constant_row, matrix=matrix, tail=tail, slope_row=slope_row)


# ============================================================================
# 연산자와 노름
# ============================================================================

def apply_U(f: GridFunction, I_max: int) -> GridFunction:
    """(Uf)(x) = Σ_{i≤I_max} P_i(x) f(1/(x+i)) + f(0)(x+1)/(x+I_max+1)"""
    return GridFunction(transfer_matrix(f.N, I_max) @ f.values)


def integrate_gauss_weight(f: GridFunction, a: float = 0.0, b: float = 1.0) -> float:
    """
    ∫_a^b f(x)/(x+1) dx 를 선형 조각별 닫힌 형태로 계산

    조각 [l, r] 에서 f = f(l) + s(x-l) 이면
    ∫ f/(x+1) = (f(l) - s(1+l))·log((1+r)/(1+l)) + s(r-l).
    """
    if not (0 <= a <= b <= 1):
        raise DomainError(f"적분 구간이 잘못되었습니다: [{a}, {b}]")
    if a == b:
        return 0.0
    nodes = f.nodes
    pts = np.concatenate(([a], nodes[(nodes > a) & (nodes < b)], [b]))
    vals = f(pts)
    lo = pts[:-1]
    width = np.diff(pts)
    slope = np.divide(np.diff(vals), width, out=np.zeros_like(width), where=width > 0)
    pieces = (vals[:-1] - slope * (1.0 + lo)) * np.log1p(width / (1.0 + lo)) + slope * width
    return float(pieces.sum())


def u_infinity(f: GridFunction) -> float:
    """U∞f = ∫ f dγ"""
    return integrate_gauss_weight(f, 0.0, 1.0) / LOG2


def lipschitz_norm(f: GridFunction) -> float:
    """‖f‖_L = sup|f| + 격자 최대 기울기"""
    v = f.values
    return float(np.abs(v).max() + np.abs(np.diff(v)).max() * f.N)


def _row(n, errors, prev) -> ConvergenceRow:
    err = float(np.abs(errors).max())
    ratio = err / prev if prev is not None and prev > TRANSFER_CONFIG['ratio_floor'] else None
    return ConvergenceRow(n=n, sup_error=err, ratio=ratio, lip_error=lipschitz_norm(GridFunction(errors)))


def iterate_U(f0: GridFunction, n_iters: int, I_max: int, reference: str = 'initial') -> ConvergenceTable:
    """
    U 를 반복 적용하며 sup 오차와 연속 비율 기록

    Args:
        reference: 'initial' 이면 u_infinity(f0) 와의 거리,
                   'running' 이면 매 단계 U^n f0 자신의 γ-평균과의 거리
    """
    if n_iters < 1:
        raise DomainError(f"n_iters는 1 이상이어야 합니다: {n_iters}")
    if reference not in ('initial', 'running'):
        raise DomainError(f"알 수 없는 reference: {reference}")

    target = u_infinity(f0)
    table = ConvergenceTable()
    f, prev = f0, None
    for n in range(1, n_iters + 1):
        f = apply_U(f, I_max)
        if reference == 'running':
            target = u_infinity(f)
        row = _row(n, f.values - target, prev)
        table.rows.append(row)
        if row.sup_error < TRANSFER_CONFIG['stop_error']:
            break
        prev = row.sup_error
    return table


# ============================================================================
# 가우스-쿠즈민 점화식
# ============================================================================

def gauss_cdf(x):
    """G(x) = log(1+x)/log 2"""
    return np.log1p(x) / LOG2


def gauss_cdf_grid(N: int) -> DistributionFunction:
    return DistributionFunction(gauss_cdf(grid_nodes(N)))


def gk_step(F: DistributionFunction, I_max: int) -> DistributionFunction:
    """
    F_{n+1}(x) = Σ_i (F(1/i) - F(1/(x+i)))

    결과는 단조 비감소, 끝값 0/1 로 보정하며 보정 크기를 clamp 에 기록.

    Raises:
        GridResolutionError: 보정 크기가 clamp_limit 초과
    """
    if not isinstance(F, DistributionFunction):
        raise DomainError("gk_step 입력은 DistributionFunction이어야 합니다")
    raw = gk_operator(F.N, I_max).apply(F.values)

    fixed = np.clip(np.maximum.accumulate(raw), 0.0, 1.0)
    fixed[0], fixed[-1] = 0.0, 1.0
    clamp = float(np.abs(fixed - raw).max())
    if clamp > TRANSFER_CONFIG['clamp_limit']:
        raise GridResolutionError(
            f"gk_step 단조성 보정 {clamp:.2e} > {TRANSFER_CONFIG['clamp_limit']:.0e}: 격자(N={F.N})를 늘리세요")
    return DistributionFunction(fixed, clamp=clamp)


def gk_iterate(F0: DistributionFunction, n_iters: int, I_max: int,
               on_step: Optional[Callable[[int, DistributionFunction], None]] = None) -> ConvergenceTable:
    """gk_step 반복; 각 행은 가우스 CDF 와의 sup 거리 (on_step(n, F_n) 은 매 단계 호출)"""
    if n_iters < 1:
        raise DomainError(f"n_iters는 1 이상이어야 합니다: {n_iters}")
    limit = gauss_cdf(F0.nodes)
    table = ConvergenceTable()
    F, prev, max_clamp = F0, None, 0.0
    for n in range(1, n_iters + 1):
        F = gk_step(F, I_max)
        max_clamp = max(max_clamp, F.clamp)
        row = _row(n, F.values - limit, prev)
        table.rows.append(row)
        if on_step is not None:
            on_step(n, F)
        prev = row.sup_error

    if max_clamp > TRANSFER_CONFIG['clamp_warn']:
        logger.warning(f"⚠️ gk_step 최대 보정 크기 {max_clamp:.2e} (N={F0.N})")
    return table


def gk_theta(F: GridFunction, n: int, q: float) -> float:
    """내부 노드에서 max |F(x)/G(x) - 1| / q^n"""
    x = F.nodes[1:-1]
    return float(np.abs(F.values[1:-1] / gauss_cdf(x) - 1.0).max() / q ** n)


# ============================================================================
# 밀도 변환
# ============================================================================

def density_to_f(Fprime: GridFunction) -> GridFunction:
    """f(x) = (x+1) F'(x)"""
    return GridFunction(Fprime.values * (Fprime.nodes + 1.0))


def f_to_density(f: GridFunction) -> GridFunction:
    """F'(x) = f(x)/(x+1)"""
    return GridFunction(f.values / (f.nodes + 1.0))


def density_step(Fprime: GridFunction, I_max: int) -> GridFunction:
    """F'_{n+1}(x) = Σ_i F'_n(1/(x+i))/(x+i)^2 를 U 의 켤레로 계산"""
    return f_to_density(apply_U(density_to_f(Fprime), I_max))


def spectral_gap_estimate(gridN: int, I_max: int, n_iters: int) -> float:
    """
    f0(x) = x+1 에서 U 반복의 기하 수렴률 q 추정

    'running' 기준 오차가 [1e-10, 1e-2] 인 구간의 연속 비율 중앙값.
    비율이 plateau_ratio 이상이 되면 (반올림 바닥) 구간을 끝낸다.

    Raises:
        GridResolutionError: 사용 가능한 비율이 3개 미만
    """
    if gridN < 1024:
        raise DomainError(f"gridN은 1024 이상이어야 합니다: {gridN}")
    f0 = GridFunction.from_callable(lambda x: x + 1.0, gridN)
    table = iterate_U(f0, n_iters, I_max, reference='running')

    lo, hi = TRANSFER_CONFIG['rate_window']
    ratios = []
    for row in table.rows:
        if row.ratio is None:
            continue
        if row.sup_error < hi and row.ratio >= TRANSFER_CONFIG['plateau_ratio']:
            break
        if lo <= row.sup_error <= hi:
            ratios.append(row.ratio)

    if len(ratios) < 3:
        raise GridResolutionError(
            f"기하 수렴 구간의 비율이 {len(ratios)}개뿐입니다: 격자(gridN={gridN})나 반복 수를 늘리세요")
    q = float(np.median(ratios))
    logger.info(f"📊 수렴률 추정 q = {q:.6f} (비율 {len(ratios)}개, N={gridN})")
    return q
