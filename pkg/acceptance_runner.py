#!/usr/bin/env python3
"""
전체 실험 수락 러너

digit 법칙 → 가우스-쿠즈민(시작 분포 4종) → 경험 분포(n = 0, 5, 10)
→ 연산자 수렴률 → 불변성 → 수축 → ε_n 순서로 실행하고
보고서를 JSON lines 로 출력한다. 하나라도 실패하면 종료 코드 1.
"""

import sys
import time
from datetime import datetime
from typing import Dict, List, Optional, Tuple

from loguru import logger
from tqdm import tqdm

from errors import DomainError, GaussKuzminError
from experiments_cli import (ExperimentConfig, ReportRecord, configure_logging, run_experiment,
                             to_json)
from monitoring.performance_logger import get_performance_logger

# (실험 이름, 추가 인자)
ACCEPTANCE_PLAN: List[Tuple[str, dict]] = [
    ('digit-law', {}),
    ('gk', {'start': 'uniform'}),
    ('gk', {'start': 'quadratic'}),
    ('gk', {'start': 'gauss'}),
    ('gk', {'start': 'discontinuous'}),
    ('empirical-gk', {'n': 0}),
    ('empirical-gk', {'n': 5}),
    ('empirical-gk', {'n': 10}),
    ('operator', {}),
    ('invariance', {}),
    ('contraction', {}),
    ('epsilon', {}),
]


class AcceptanceRunner:
    def __init__(self, config: ExperimentConfig, plan: Optional[List[Tuple[str, dict]]] = None):
        self.config = config
        self.plan = plan if plan is not None else ACCEPTANCE_PLAN
        self.records: List[ReportRecord] = []
        self.failures: List[str] = []
        self.timing: Dict[str, float] = {}

    def run_step(self, name: str, extra: dict) -> Optional[ReportRecord]:
        """실험 하나 실행 (예외는 실패로 기록)"""
        label = f"{name} {extra}" if extra else name
        try:
            record = run_experiment(name, self.config, **extra)
        except GaussKuzminError as e:
            logger.error(f"❌ {label} 실행 오류: {e}")
            self.failures.append(label)
            return None

        self.records.append(record)
        if not record.passed:
            self.failures.append(label)
        return record

    def run_all(self, out=None) -> bool:
        """전체 계획 실행; 모두 통과하면 True"""
        out = out or sys.stdout
        started = time.perf_counter()
        logger.info(f"🌟 수락 실험 시작: {len(self.plan)}개 ({datetime.now().strftime('%Y-%m-%d %H:%M:%S')})")

        for name, extra in tqdm(self.plan, desc='실험', unit='exp', file=sys.stderr):
            record = self.run_step(name, extra)
            if record is not None:
                out.write(to_json(record) + '\n')
                out.flush()

        elapsed = time.perf_counter() - started
        success_count = len(self.plan) - len(self.failures)
        logger.info(f"📊 결과: {success_count}/{len(self.plan)} 통과, {elapsed:.1f}초")
        for label in self.failures:
            logger.warning(f"⚠️ 실패: {label}")

        self.timing = get_performance_logger().get_recent_metrics()['summary'].get('experiment', {})
        if self.timing:
            logger.info(f"⏱️ 실험 평균 {self.timing['avg_duration']:.3f}초, "
                        f"성공률 {self.timing['success_rate']:.1f}% (누적 {self.timing['total_operations']}회)")
        return not self.failures


def main(argv: Optional[List[str]] = None) -> int:
    """메인 실행 함수"""
    import argparse

    parser = argparse.ArgumentParser(description='연분수 / 가우스-쿠즈민 수락 실험')
    parser.add_argument('--seed', type=int, help='기본 시드')
    parser.add_argument('--samples', type=int, help='몬테카를로 표본 수')
    parser.add_argument('--grid', type=int, help='격자 구간 수 N')
    parser.add_argument('--workers', type=int, help='스레드 수')
    parser.add_argument('--out', help='JSON lines 출력 파일 (기본: 표준 출력)')
    args = parser.parse_args(argv)

    configure_logging()
    overrides = {key: value for key, value in
                 (('seed', args.seed), ('samples', args.samples), ('gridN', args.grid), ('workers', args.workers))
                 if value is not None}
    try:
        config = ExperimentConfig(output_format='json', **overrides)
    except DomainError as e:
        logger.error(f"❌ 입력 오류: {e}")
        return 2

    runner = AcceptanceRunner(config)
    if args.out:
        try:
            f = open(args.out, 'w', encoding='utf-8')
        except OSError as e:
            logger.error(f"❌ 출력 파일을 열 수 없습니다: {e}")
            return 2
        with f:
            ok = runner.run_all(f)
    else:
        ok = runner.run_all()
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
