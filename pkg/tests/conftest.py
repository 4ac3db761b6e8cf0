import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

from dedupvault.protocol import Deployment  # noqa: E402
from dedupvault.rng import DeterministicRng  # noqa: E402


@pytest.fixture
def rng():
    return DeterministicRng(1234)


@pytest.fixture
def deployment(tmp_path):
    dep = Deployment(tmp_path, seed=5)
    yield dep
    dep.close()


@pytest.fixture
def file_a():
    return DeterministicRng("file-a").bytes(30_000)


_ACCEPTANCE: list[str] = []


class _Criterion:
    def __init__(self, number: int, title: str) -> None:
        self.number, self.title, self.notes = number, title, []

    def note(self, text: str) -> None:
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.notes + ([f"{exc_type.__name__}: {exc}"] if exc_type else []))
        line = f"[{verdict}] criterion {self.number}: {self.title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
