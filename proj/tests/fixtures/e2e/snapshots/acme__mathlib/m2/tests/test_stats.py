import pytest

from mathlib import stats


def test_mean_basic():
    assert stats.mean([1, 2, 3]) == 2
