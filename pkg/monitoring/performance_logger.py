#!/usr/bin/env python3
"""
실험 성능 모니터링 로거

각 실험의 처리 시간, 성공/실패를 기록한다.
GK_PERF_LOG 가 설정되어 있으면 JSON lines 로 파일에 추가 저장.
측정값은 보고서 내용에 들어가지 않는다.
"""

import json
import os
import threading
import time
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, List, Optional

from loguru import logger


class PerformanceLogger:
    def __init__(self, path: Optional[str] = None):
        self.path = path if path is not None else os.getenv('GK_PERF_LOG')
        self.records: List[Dict[str, Any]] = []
        self.lock = threading.Lock()

    def log_performance(self, stage: str, operation: str, duration: float,
                        success: bool, error_message: Optional[str] = None,
                        metadata: Optional[Dict] = None):
        """성능 메트릭 로깅"""
        record = {
            'timestamp': datetime.now().isoformat(timespec='seconds'),
            'stage': stage,
            'operation': operation,
            'duration_seconds': duration,
            'success': success,
            'error_message': error_message,
            'metadata': metadata,
        }
        with self.lock:
            self.records.append(record)
            if not self.path:
                return
            try:
                with open(self.path, 'a', encoding='utf-8') as f:
                    f.write(json.dumps(record, ensure_ascii=False, default=str) + '\n')
            except OSError as e:
                logger.error(f"❌ 성능 로깅 실패: {e}")

    @contextmanager
    def measure_operation(self, stage: str, operation: str,
                          metadata: Optional[Dict] = None):
        """작업 시간 측정 컨텍스트 매니저"""
        start_time = time.perf_counter()
        success = False
        error_message = None

        try:
            yield
            success = True
        except Exception as e:
            error_message = str(e)
            raise
        finally:
            duration = time.perf_counter() - start_time
            self.log_performance(stage, operation, duration, success, error_message, metadata)

    def get_recent_metrics(self) -> Dict[str, Any]:
        """스테이지/작업별 집계"""
        with self.lock:
            records = list(self.records)

        grouped: Dict[tuple, List[Dict]] = {}
        for record in records:
            grouped.setdefault((record['stage'], record['operation']), []).append(record)

        result = {'summary': {}, 'detailed': []}
        stage_totals: Dict[str, Dict[str, float]] = {}

        for (stage, operation), items in sorted(grouped.items()):
            durations = [r['duration_seconds'] for r in items]
            success = sum(1 for r in items if r['success'])
            total = len(items)
            avg_duration = sum(durations) / total

            result['detailed'].append({
                'stage': stage,
                'operation': operation,
                'total_operations': total,
                'avg_duration': round(avg_duration, 3),
                'success_rate': round(success / total * 100, 1),
                'success_count': success,
                'failure_count': total - success,
                'max_duration': round(max(durations), 3),
                'min_duration': round(min(durations), 3),
            })

            totals = stage_totals.setdefault(stage, {'total_operations': 0, 'total_duration': 0.0,
                                                     'success_count': 0})
            totals['total_operations'] += total
            totals['total_duration'] += sum(durations)
            totals['success_count'] += success

        # 스테이지별 요약 계산
        for stage, totals in stage_totals.items():
            result['summary'][stage] = {
                'avg_duration': round(totals['total_duration'] / totals['total_operations'], 3),
                'success_rate': round(totals['success_count'] / totals['total_operations'] * 100, 1),
                'total_operations': totals['total_operations'],
            }

        return result


# 전역 로거 인스턴스
_performance_logger = None


def get_performance_logger() -> PerformanceLogger:
    """성능 로거 싱글톤 인스턴스 반환"""
    global _performance_logger
    if _performance_logger is None:
        _performance_logger = PerformanceLogger()
    return _performance_logger


@contextmanager
def measure_experiment(operation: str, metadata: Optional[Dict] = None):
    """실험 한 번의 실행 시간 측정"""
    perf = get_performance_logger()
    with perf.measure_operation('experiment', operation, metadata):
        yield
