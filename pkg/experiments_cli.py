#!/usr/bin/env python3
"""
연분수 / 가우스-쿠즈민 실험 CLI

하위 명령마다 재현 가능한 실험을 실행하고 CSV 또는 JSON 보고서를 출력한다.
종료 코드: 0 모두 통과, 1 허용 오차 실패, 2 사용법/입력 오류.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv
from loguru import logger
from scipy import stats

import streams
import transfer_operator
from cf_core import backward_chain, convergents, first_digit_array, gauss_map_array, rcf_digits
from errors import DomainError, GaussKuzminError
from measures import (branch_pushforward_cdf, check_gamma_invariance, check_tau_invariance,
                      gauss_measure_interval, ks_critical, lebesgue_digit_prob)
from monitoring.performance_logger import measure_experiment
from rscc_core import contraction_report, iterate_u, p_kernel, p_kernel_derivative, p_kernel_tail, u_map_derivative
from transfer_operator import (DistributionFunction, GridFunction, apply_U, gauss_cdf, gk_iterate,
                               gk_theta, iterate_U, spectral_gap_estimate)

load_dotenv()

# 환경 변수 기본값 (CLI 플래그가 우선)
DEFAULT_CONFIG = {
    'seed': int(os.getenv('GK_SEED', 20240917)),
    'samples': int(os.getenv('GK_SAMPLES', 1_000_000)),
    'gridN': int(os.getenv('GK_GRID', 4096)),
    'iters': int(os.getenv('GK_ITERS', 30)),
    'i_max': int(os.getenv('GK_IMAX', 10_000)),
    'output_format': os.getenv('GK_FORMAT', 'csv'),
    'workers': int(os.getenv('GK_WORKERS', 4)),
}
LOG_LEVEL = os.getenv('GK_LOG_LEVEL', 'INFO')

# 명령별 기본 허용 오차
TOLERANCES = {
    'digit-law': 4.0,                # 이항 표준편차 배수
    'gk': {'uniform': 5e-7, 'quadratic': 5e-7, 'gauss': 5e-7, 'discontinuous': 1e-5},
    'operator': 0.01,                # 격자 세분 시 q̂ 변화
    'invariance': 1e-8,
    'contraction': 1e-12,            # 고정점 잔차
    'epsilon': 0.01,
}

GKW_RATE = 0.3037
BRANCH_TOL = 1e-10
DIGIT_CELLS = 10
MIN_CELL_HITS = 1000
EPSILON_STEPS = 8
EPSILON_THRESHOLDS = 20
CONTRACTION_IMAX = (500, 60)
CONTRACTION_GRID = (100, 1000)
# q̂ 추정 최소 반복 수와 격자 세분 검사의 최소 세밀 격자
ESTIMATE_ITERS = 30
REFINE_GRID = 2048


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = DEFAULT_CONFIG['seed']
    samples: int = DEFAULT_CONFIG['samples']
    gridN: int = DEFAULT_CONFIG['gridN']
    iters: int = DEFAULT_CONFIG['iters']
    i_max: int = DEFAULT_CONFIG['i_max']
    output_format: str = DEFAULT_CONFIG['output_format']
    output_path: Optional[str] = None
    workers: int = DEFAULT_CONFIG['workers']
    tol: Optional[float] = None

    def __post_init__(self):
        checks = [
            (self.seed >= 0, f"seed는 0 이상이어야 합니다: {self.seed}"),
            (self.seed < 2 ** 64, f"seed는 64비트 정수여야 합니다: {self.seed}"),
            (self.samples >= 1, f"samples는 1 이상이어야 합니다: {self.samples}"),
            (self.gridN >= 16, f"gridN은 16 이상이어야 합니다: {self.gridN}"),
            (self.iters >= 1, f"iters는 1 이상이어야 합니다: {self.iters}"),
            (self.i_max >= 10, f"i_max는 10 이상이어야 합니다: {self.i_max}"),
            (self.output_format in ('csv', 'json'), f"format은 csv 또는 json: {self.output_format}"),
            (self.workers >= 1, f"workers는 1 이상이어야 합니다: {self.workers}"),
            (self.tol is None or self.tol > 0, f"tol은 양수여야 합니다: {self.tol}"),
        ]
        for ok, message in checks:
            if not ok:
                raise DomainError(message)

    def parameters(self, **extra) -> Dict[str, Any]:
        """보고서에 그대로 싣는 설정 (workers 는 결과에 영향이 없으므로 제외)"""
        params = {'seed': self.seed, 'samples': self.samples, 'gridN': self.gridN,
                  'iters': self.iters, 'i_max': self.i_max}
        if self.tol is not None:
            params['tol'] = self.tol
        params.update(extra)
        return params

    def tolerance(self, default: float) -> float:
        return default if self.tol is None else self.tol


@dataclass
class ReportRecord:
    experiment: str
    parameters: Dict[str, Any]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    passed: bool = False
    tolerance: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {'experiment': self.experiment, 'parameters': _plain(self.parameters),
                'rows': _plain(self.rows), 'pass': self.passed, 'tolerance': _plain(self.tolerance)}


# ============================================================================
# 출력 형식
# ============================================================================

def _plain(value):
    """numpy 값을 파이썬 값으로, NaN/inf 는 None 으로"""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def format_value(value) -> str:
    value = _plain(value)
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return f'{value:.17g}'
    return str(value)


def to_csv(record: ReportRecord) -> str:
    columns: List[str] = []
    for row in record.rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    header = ['experiment'] + columns + ['pass', 'tolerance']

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in record.rows:
        writer.writerow([record.experiment] + [format_value(row.get(c)) for c in columns]
                        + [format_value(record.passed), format_value(record.tolerance)])
    return buffer.getvalue()


def to_json(record: ReportRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False, allow_nan=False)


def write_report(record: ReportRecord, output_format: str, output_path: Optional[str] = None):
    text = to_csv(record) if output_format == 'csv' else to_json(record) + '\n'
    if output_path:
        with open(output_path, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


# ============================================================================
# 실험 명령
# ============================================================================

def parse_unit_rational(text: str) -> Fraction:
    """'p/q' 또는 10진 문자열을 (0,1] 의 정확한 유리수로"""
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as e:
        raise DomainError(f"유리수 또는 10진수로 해석할 수 없습니다: {text!r}") from e
    if not (0 < value <= 1):
        raise DomainError(f"입력은 (0,1] 구간이어야 합니다: {text}")
    return value


def cmd_expand(text: str, n_max: int = 20) -> ReportRecord:
    """digit, 근사분수, 역방향 체인 s_k 출력"""
    x = parse_unit_rational(text)
    digits = rcf_digits(x, n_max)
    conv = convergents(digits)
    chain = backward_chain(digits)

    rows = [{'k': k + 1, 'digit': a, 'p': p, 'q': q, 's': str(s), 'terminated': digits.terminated}
            for k, (a, p, q, s) in enumerate(zip(digits.digits, conv.numerators, conv.denominators, chain))]
    passed = all(abs(d) == 1 for d in conv.determinants())
    return ReportRecord('expand', {'x': text, 'n_max': n_max}, rows, passed, 0.0)


def _digit_counts(rng, size):
    x = 1.0 - rng.random(size)
    a1 = first_digit_array(x)
    a2 = first_digit_array(gauss_map_array(x))
    top = DIGIT_CELLS + 1
    first = np.bincount(np.minimum(a1, top), minlength=top + 1)
    cell = (a1 <= DIGIT_CELLS) & (a2 >= 1) & (a2 <= DIGIT_CELLS)
    joint = np.bincount(a1[cell] * top + a2[cell], minlength=top * top).reshape(top, top)
    return first, joint


def _binomial_row(label, a1, a2, hits, trials, expected):
    freq = hits / trials
    sigma = math.sqrt(expected * (1.0 - expected) / trials)
    return {'cell': label, 'a1': a1, 'a2': a2, 'hits': int(hits), 'trials': int(trials),
            'empirical': freq, 'expected': expected, 'z': (freq - expected) / sigma}


def cmd_digit_law(config: ExperimentConfig) -> ReportRecord:
    """균등 표본의 a_1 분포와 a_1 조건부 a_2 분포"""
    parts = streams.map_chunks(_digit_counts, config.samples, config.seed, 'digit-law', config.workers)
    first = sum(p[0] for p in parts)
    joint = sum(p[1] for p in parts)

    rows = [_binomial_row(f'a1={i}', i, None, first[i], config.samples, lebesgue_digit_prob(i))
            for i in range(1, DIGIT_CELLS + 1)]
    for i in range(1, DIGIT_CELLS + 1):
        for j in range(1, DIGIT_CELLS + 1):
            if joint[i, j] < MIN_CELL_HITS:
                continue
            rows.append(_binomial_row(f'a2={j}|a1={i}', i, j, joint[i, j], first[i], p_kernel(1.0 / i, j)))

    tol = config.tolerance(TOLERANCES['digit-law'])
    passed = all(abs(r['z']) <= tol for r in rows)
    return ReportRecord('digit-law', config.parameters(), rows, passed, tol)


GK_STARTS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    'uniform': lambda x: x,
    'quadratic': lambda x: x * x,
    'gauss': gauss_cdf,
    'discontinuous': lambda x: np.minimum(2.0 * x, 1.0),
}


def cmd_gk(config: ExperimentConfig, start: str = 'uniform') -> ReportRecord:
    """가우스-쿠즈민 점화식을 F_0 에서 반복"""
    if start not in GK_STARTS:
        raise DomainError(f"알 수 없는 시작 분포: {start}")
    F0 = DistributionFunction.from_callable(GK_STARTS[start], config.gridN)

    thetas = {}
    table = gk_iterate(F0, config.iters, config.i_max,
                       on_step=lambda n, F: thetas.__setitem__(n, gk_theta(F, n, GKW_RATE)))
    rows = [dict(row, theta=thetas[row['n']]) for row in table.as_dicts()]

    tol = config.tolerance(TOLERANCES['gk'][start])
    return ReportRecord('gk', config.parameters(start=start), rows, table.final_error < tol, tol)


def _estimate_grid(gridN: int) -> int:
    return max(1024, min(gridN, 2048))


def _estimate_iters(iters: int) -> int:
    return max(iters, ESTIMATE_ITERS)


def cmd_empirical_gk(config: ExperimentConfig, n: int = 5) -> ReportRecord:
    """균등 표본에 τ 를 n 번 적용한 경험 CDF 와 가우스 CDF 의 sup 거리"""
    if not (0 <= n <= 10):
        raise DomainError(f"n은 0..10 이어야 합니다: {n}")

    def push(rng, size):
        x = 1.0 - rng.random(size)
        for _ in range(n):
            x = gauss_map_array(x)
        return x

    sample = np.concatenate(streams.map_chunks(push, config.samples, config.seed,
                                               f'empirical-gk-{n}', config.workers))
    distance = float(stats.kstest(sample, gauss_cdf).statistic)
    q_hat = spectral_gap_estimate(_estimate_grid(config.gridN), config.i_max, _estimate_iters(config.iters))
    width = ks_critical(config.samples, 0.01)

    tol = config.tolerance(q_hat ** n * 0.2 + 3.0 * width)
    rows = [{'n': n, 'distance': distance, 'q_hat': q_hat, 'ks_width': width}]
    return ReportRecord('empirical-gk', config.parameters(n=n), rows, distance < tol, tol)


def cmd_operator(config: ExperimentConfig) -> ReportRecord:
    """f0(x) = x+1 에서 U 반복 표와 격자 두 개에서의 q̂"""
    f0 = GridFunction.from_callable(lambda x: x + 1.0, config.gridN)
    table = iterate_U(f0, config.iters, config.i_max)
    rows = [dict(row, kind='iteration') for row in table.as_dicts()]

    fine = max(REFINE_GRID, config.gridN)
    coarse = fine // 2
    iters = _estimate_iters(config.iters)
    q_fine = spectral_gap_estimate(fine, config.i_max, iters)
    q_coarse = spectral_gap_estimate(coarse, config.i_max, iters)
    drift = abs(q_fine - q_coarse)
    rows.append({'kind': 'estimate', 'q_hat': q_fine, 'q_hat_coarse': q_coarse, 'drift': drift,
                 'grid': fine, 'grid_coarse': coarse})

    tol = config.tolerance(TOLERANCES['operator'])
    passed = 0.0 < q_fine < 1.0 and drift < tol
    return ReportRecord('operator', config.parameters(), rows, passed, tol)


def cmd_invariance(config: ExperimentConfig) -> ReportRecord:
    """∫ Q(x,[0,u)) dγ = γ([0,u)) 적분 검증과 τ-불변성 KS 검정"""
    tol = config.tolerance(TOLERANCES['invariance'])
    rows = []
    for k in range(1, 21):
        u = k / 20
        result = check_gamma_invariance(u, tol)
        rows.append({'check': 'gamma', 'ubound': u, 'value': result.value,
                     'exact': gauss_measure_interval(0.0, u), 'error': result.est_error,
                     'pieces': result.pieces})

    for y in (0.25, 0.5, 0.75):
        value = branch_pushforward_cdf(y)
        exact = gauss_measure_interval(0.0, y)
        rows.append({'check': 'branch', 'ubound': y, 'value': value, 'exact': exact,
                     'error': abs(value - exact)})

    nsamples = max(config.samples, 10_000)
    ks = check_tau_invariance(nsamples, config.seed, config.workers)
    critical = ks_critical(nsamples, 0.01)
    rows.append({'check': 'tau', 'value': ks, 'exact': critical})

    passed = (max(r['error'] for r in rows if r['check'] == 'gamma') < tol
              and max(r['error'] for r in rows if r['check'] == 'branch') < BRANCH_TOL
              and ks < critical)
    return ReportRecord('invariance', config.parameters(), rows, passed, tol)


def derivative_bounds(I_max: int, gridN: int = 1000) -> Dict[str, float]:
    """max_i i^2·sup_w |dP_i/dw| 와 max_i i^2·sup_w |du_i/dw|"""
    w = np.arange(gridN + 1, dtype=np.float64)[:, None] / gridN
    i = np.arange(1, I_max + 1, dtype=np.float64)[None, :]
    dp = (i[0] ** 2 * np.abs(p_kernel_derivative(w, i)).max(axis=0)).max()
    du = (i[0] ** 2 * np.abs(u_map_derivative(w, i)).max(axis=0)).max()
    return {'dP_bound': float(dp), 'du_bound': float(du)}


def cmd_contraction(config: ExperimentConfig) -> ReportRecord:
    """r̂_1, r̂_2, R̂_1, 도함수 상한과 x → 1/(x+2) 고정점 실험"""
    grid = max(CONTRACTION_GRID[0], min(config.gridN, CONTRACTION_GRID[1]))
    I1 = min(config.i_max, CONTRACTION_IMAX[0])
    report = contraction_report(grid, I1, k_max=2, I_max_k2=CONTRACTION_IMAX[1])

    rows = [{'quantity': f'r{k}', 'value': v, 'i_max': report.I_max_by_order[k]}
            for k, v in report.r_hat.items()]
    rows.append({'quantity': 'R1', 'value': report.R1_hat, 'i_max': report.I_max})
    rows += [{'quantity': name, 'value': v, 'i_max': I1} for name, v in derivative_bounds(I1).items()]

    target = math.sqrt(2.0) - 1.0
    residuals = []
    for x0 in (0.0, 0.5, 1.0):
        residual = abs(iterate_u(x0, [2] * 60) - target)
        residuals.append(residual)
        rows.append({'quantity': 'fixed_point', 'value': residual, 'x0': x0})

    tol = config.tolerance(TOLERANCES['contraction'])
    passed = report.r_hat[1] < 1.0 and math.isfinite(report.R1_hat) and max(residuals) < tol
    return ReportRecord('contraction', config.parameters(), rows, passed, tol)


def cmd_epsilon(config: ExperimentConfig) -> ReportRecord:
    """
    ε_n = max_{m, w} |U^{n-1} T_m(w) - P∞({i ≥ m})|, T_m(w) = (w+1)/(w+m)

    P∞({i ≥ m}) = ∫ T_m dγ = log((m+1)/m)/log 2.
    """
    limits = {m: math.log1p(1.0 / m) / math.log(2.0) for m in range(1, EPSILON_THRESHOLDS + 1)}
    current = {m: GridFunction.from_callable(lambda w, m=m: p_kernel_tail(w, m), config.gridN)
               for m in limits}

    rows = []
    for n in range(1, EPSILON_STEPS + 1):
        if n > 1:
            current = {m: apply_U(f, config.i_max) for m, f in current.items()}
        eps = max(float(np.abs(f.values - limits[m]).max()) for m, f in current.items())
        rows.append({'n': n, 'epsilon': eps})
    rows.append({'n': None, 'epsilon': None, 'p_inf_digit1': 1.0 - limits[2]})

    eps = [r['epsilon'] for r in rows[:EPSILON_STEPS]]
    tol = config.tolerance(TOLERANCES['epsilon'])
    passed = all(a > b for a, b in zip(eps, eps[1:])) and eps[-1] < tol
    return ReportRecord('epsilon', config.parameters(), rows, passed, tol)


COMMANDS: Dict[str, Callable[..., ReportRecord]] = {
    'digit-law': cmd_digit_law,
    'gk': cmd_gk,
    'empirical-gk': cmd_empirical_gk,
    'operator': cmd_operator,
    'invariance': cmd_invariance,
    'contraction': cmd_contraction,
    'epsilon': cmd_epsilon,
}


def run_experiment(name: str, config: ExperimentConfig, **kwargs) -> ReportRecord:
    """실험 하나를 실행하고 소요 시간을 성능 로그에 남김"""
    if name not in COMMANDS:
        raise DomainError(f"알 수 없는 실험: {name}")
    transfer_operator.TRANSFER_CONFIG['workers'] = config.workers
    logger.info(f"🚀 실험 시작: {name} {kwargs or ''}")
    with measure_experiment(name, metadata=config.parameters(**kwargs)):
        record = COMMANDS[name](config, **kwargs)
    status = "✅ 통과" if record.passed else "❌ 실패"
    logger.info(f"{status}: {name} (허용 오차 {record.tolerance:.3g})")
    return record


# ============================================================================
# 명령행
# ============================================================================

def _add_global_flags(parser: argparse.ArgumentParser, defaults: Optional[Dict] = None):
    d = defaults or {}
    parser.add_argument('--seed', type=int, help='기본 시드 (u64)', **_default(d, 'seed'))
    parser.add_argument('--samples', type=int, help='몬테카를로 표본 수', **_default(d, 'samples'))
    parser.add_argument('--grid', dest='gridN', type=int, help='격자 구간 수 N', **_default(d, 'gridN'))
    parser.add_argument('--iters', type=int, help='반복 횟수', **_default(d, 'iters'))
    parser.add_argument('--imax', dest='i_max', type=int, help='digit 절단 I_max', **_default(d, 'i_max'))
    parser.add_argument('--format', dest='output_format', choices=['csv', 'json'],
                        help='출력 형식', **_default(d, 'output_format'))
    parser.add_argument('--out', dest='output_path', help='출력 파일 (기본: 표준 출력)',
                        **_default(d, 'output_path'))
    parser.add_argument('--tol', type=float, help='기본 허용 오차 대신 사용할 값', **_default(d, 'tol'))
    parser.add_argument('--workers', type=int, help='스레드 수 (결과에는 영향 없음)', **_default(d, 'workers'))


def _default(defaults: Dict, key: str) -> Dict:
    return {'default': defaults.get(key)} if defaults else {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='연분수 / 가우스-쿠즈민 실험')
    _add_global_flags(parser, dict(DEFAULT_CONFIG, output_path=None, tol=None))

    # 하위 명령 뒤에 온 전역 플래그도 받되, 주지 않으면 상위 값을 덮지 않음
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    _add_global_flags(common)

    sub = parser.add_subparsers(dest='command', required=True)
    expand = sub.add_parser('expand', parents=[common], help='유리수/10진수의 RCF 전개')
    expand.add_argument('x', help="'p/q' 또는 10진수, (0,1] 구간")
    expand.add_argument('--n-max', type=int, default=20, help='최대 digit 수')

    sub.add_parser('digit-law', parents=[common], help='digit 법칙 검증')
    gk = sub.add_parser('gk', parents=[common], help='가우스-쿠즈민 점화식 반복')
    gk.add_argument('--start', choices=sorted(GK_STARTS), default='uniform', help='시작 분포 F_0')
    empirical = sub.add_parser('empirical-gk', parents=[common], help='τ^n 경험 분포')
    empirical.add_argument('--n', type=int, default=5, help='가우스 사상 적용 횟수 (0..10)')
    for name in ('operator', 'invariance', 'contraction', 'epsilon'):
        sub.add_parser(name, parents=[common])
    return parser


def configure_logging(level: str = LOG_LEVEL):
    logger.remove()
    logger.add(sys.stderr, level=level, format="{time:HH:mm:ss} | {level: <8} | {message}")


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = ExperimentConfig(seed=args.seed, samples=args.samples, gridN=args.gridN,
                                  iters=args.iters, i_max=args.i_max,
                                  output_format=args.output_format, output_path=args.output_path,
                                  workers=args.workers, tol=args.tol)
        if args.command == 'expand':
            if args.n_max < 1:
                raise DomainError(f"--n-max는 1 이상이어야 합니다: {args.n_max}")
            record = cmd_expand(args.x, args.n_max)
        else:
            extra = {}
            if args.command == 'gk':
                extra['start'] = args.start
            elif args.command == 'empirical-gk':
                extra['n'] = args.n
            record = run_experiment(args.command, config, **extra)
    except DomainError as e:
        logger.error(f"❌ 입력 오류: {e}")
        return 2
    except GaussKuzminError as e:
        logger.error(f"❌ 실험 실패: {e}")
        return 1

    try:
        write_report(record, config.output_format, config.output_path)
    except OSError as e:
        logger.error(f"❌ 보고서를 쓸 수 없습니다: {e}")
        return 2
    return 0 if record.passed else 1


if __name__ == "__main__":
    sys.exit(main())
