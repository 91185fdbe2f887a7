#!/usr/bin/env python3
"""
연분수 / 가우스-쿠즈민 실험 공통 예외 정의

라이브러리 코드는 예외를 던지기만 하고, 종료 코드 변환은 CLI와 러너가 담당한다.
"""


class GaussKuzminError(Exception):
    """모든 실험 예외의 기반 클래스"""


class DomainError(GaussKuzminError, ValueError):
    """사전 조건 위반 (정의역 밖 입력, 잘못된 설정 등)"""


class GridResolutionError(GaussKuzminError):
    """격자 해상도가 부족해 수치 결과를 신뢰할 수 없음"""


class UnsupportedOrderError(GaussKuzminError, NotImplementedError):
    """지원하지 않는 차수 요청 (예: r_k 에서 k > 2)"""
