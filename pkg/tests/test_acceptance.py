"""The twelve acceptance criteria at their stated tolerances (slow: several minutes)."""

import time

import pytest

from fracboltz import acceptance


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA), ids=lambda n: f"criterion_{n:02d}")
def test_criterion(number, capsys):
    start = time.perf_counter()
    result = acceptance.CRITERIA[number](scale=1.0)
    with capsys.disabled():
        print(f"\n{result.line()}  [{time.perf_counter() - start:.1f}s]", flush=True)
    assert result.number == number
    assert result.passed, result.line()
