import json

import pytest

from monitoring import performance_logger
from monitoring.performance_logger import PerformanceLogger, get_performance_logger, measure_experiment


def test_measure_operation_records_success_and_failure():
    perf = PerformanceLogger(path='')
    with perf.measure_operation('experiment', 'gk', {'gridN': 64}):
        pass
    with pytest.raises(ValueError):
        with perf.measure_operation('experiment', 'gk'):
            raise ValueError('boom')

    assert [r['success'] for r in perf.records] == [True, False]
    assert perf.records[1]['error_message'] == 'boom'
    assert perf.records[0]['metadata'] == {'gridN': 64}
    assert all(r['duration_seconds'] >= 0 for r in perf.records)


def test_records_are_appended_as_json_lines(tmp_path):
    path = tmp_path / 'perf.jsonl'
    perf = PerformanceLogger(path=str(path))
    perf.log_performance('experiment', 'epsilon', 0.5, True)
    perf.log_performance('experiment', 'contraction', 1.5, False, 'failed')

    lines = path.read_text(encoding='utf-8').splitlines()
    assert [json.loads(line)['operation'] for line in lines] == ['epsilon', 'contraction']


def test_recent_metrics_summary():
    perf = PerformanceLogger(path='')
    perf.log_performance('experiment', 'gk', 1.0, True)
    perf.log_performance('experiment', 'gk', 3.0, False)
    perf.log_performance('experiment', 'operator', 2.0, True)

    metrics = perf.get_recent_metrics()
    summary = metrics['summary']['experiment']
    assert summary['total_operations'] == 3
    assert summary['avg_duration'] == 2.0
    assert summary['success_rate'] == pytest.approx(66.7)

    gk = next(d for d in metrics['detailed'] if d['operation'] == 'gk')
    assert gk['failure_count'] == 1
    assert gk['max_duration'] == 3.0 and gk['min_duration'] == 1.0


def test_measure_experiment_uses_singleton(monkeypatch):
    monkeypatch.setattr(performance_logger, '_performance_logger', PerformanceLogger(path=''))
    with measure_experiment('digit-law', {'seed': 1}):
        pass
    records = get_performance_logger().records
    assert len(records) == 1
    assert records[0]['stage'] == 'experiment'
