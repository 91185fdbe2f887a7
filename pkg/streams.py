#!/usr/bin/env python3
"""
재현 가능한 난수 스트림과 청크 단위 병렬 실행

스트림은 (seed, 실험 이름, 청크 번호)로 결정되므로
워커 수나 스케줄링 순서와 무관하게 같은 결과가 나온다.
"""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

from errors import DomainError

T = TypeVar('T')

# 청크당 샘플 수 (결과가 이 값에 의존하므로 바꾸면 재현성이 깨짐)
CHUNK_SIZE = 1 << 16


def experiment_key(name: str) -> int:
    """실험 이름을 안정적인 64비트 정수로 변환 (파이썬 hash()는 실행마다 달라짐)"""
    digest = hashlib.sha256(name.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


def stream(seed: int, experiment: str, chunk: int = 0) -> np.random.Generator:
    """카운터 기반 Philox 생성기 반환"""
    if seed < 0:
        raise DomainError(f"seed는 0 이상이어야 합니다: {seed}")
    seq = np.random.SeedSequence([seed, experiment_key(experiment), chunk])
    return np.random.Generator(np.random.Philox(seq))


def chunk_sizes(total: int, chunk_size: int = CHUNK_SIZE) -> List[int]:
    """total 개를 고정 크기 청크로 분할"""
    if total < 0:
        raise DomainError(f"샘플 수는 음수일 수 없습니다: {total}")
    full, rest = divmod(total, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def map_chunks(fn: Callable[[np.random.Generator, int], T], total: int,
               seed: int, experiment: str, workers: int = 1,
               chunk_size: int = CHUNK_SIZE) -> List[T]:
    """
    청크마다 fn(rng, size)를 실행하고 청크 순서대로 결과를 반환

    Args:
        fn: 청크 하나를 처리하는 함수
        total: 전체 샘플 수
        seed: 기본 시드
        experiment: 스트림 분리용 실험 이름
        workers: 스레드 수 (결과에는 영향 없음)
    """
    sizes = chunk_sizes(total, chunk_size)

    def run(indexed):
        chunk, size = indexed
        return fn(stream(seed, experiment, chunk), size)

    if workers <= 1 or len(sizes) <= 1:
        return [run(item) for item in enumerate(sizes)]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map은 입력 순서를 보존
        return list(pool.map(run, enumerate(sizes)))
