from mathlib import ops


def test_add():
    assert ops.add(2, 3) == 5


def test_sub():
    assert ops.sub(5, 3) == 2


def test_clamp_lower():
    assert ops.clamp(-4, 0, 10) == 0


def test_clamp_upper():
    assert ops.clamp(42, 0, 10) == 10
