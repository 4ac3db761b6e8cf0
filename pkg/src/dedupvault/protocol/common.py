"""Settings and helpers shared by the three actors."""

from __future__ import annotations

from dataclasses import dataclass

from .. import messages as m
from ..errors import ErrorCode
from ..possession import DEFAULT_C, DEFAULT_K, DEFAULT_N


@dataclass(frozen=True)
class ProtocolConfig:
    n_regions: int = DEFAULT_N
    k_retained: int = DEFAULT_K
    c_challenged: int = DEFAULT_C
    session_timeout: float = 30.0
    retry_interval: float = 1.0
    owner_timeout: float = 5.0
    du_retry: float = 3.0
    du_max_attempts: int = 40
    busy_backoff: float = 0.5


def error(code: ErrorCode, file_id: bytes = m.ZERO_ID, ref: bytes = m.ZERO_REF) -> m.Error:
    return m.Error(int(code), file_id, ref)
