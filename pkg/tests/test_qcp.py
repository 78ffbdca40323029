import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdlab.qcp import QcpError, QuadConstraints, barrier, find_interior, polish, projected_subgradient

DISK = QuadConstraints(np.array([[2.0, 2.0]]), np.zeros((1, 2)), np.array([-1.0]))


def test_disk_by_hand():
    # min -y1 on the unit disk: y = (1, 0), multiplier 1/2
    res = barrier([-1.0, 0.0], DISK, [0.0, 0.0])
    assert res.status == "optimal"
    np.testing.assert_allclose(res.y, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(res.mu, [0.5], atol=1e-12)


@given(st.floats(0, 2 * np.pi))
def test_disk_any_direction(angle):
    c = np.array([np.cos(angle), np.sin(angle)])
    res = barrier(c, DISK, [0.0, 0.0])
    np.testing.assert_allclose(res.y, -c, atol=1e-9)
    assert res.value == pytest.approx(-1.0, abs=1e-9)


def test_linear_program_through_barrier():
    # min y1 + y2 over the box [-1, 2]^2 written as four linear constraints
    B = np.array([[-1.0, 0], [1, 0], [0, -1], [0, 1]])
    e = np.array([-1.0, -2, -1, -2])
    cons = QuadConstraints(np.zeros((4, 2)), B, e)
    res = barrier([1.0, 1.0], cons, [0.0, 0.0])
    np.testing.assert_allclose(res.y, [-1.0, -1.0], atol=1e-9)
    np.testing.assert_allclose(res.mu, [1.0, 0.0, 1.0, 0.0], atol=1e-9)


def test_unbounded_direction_detected():
    cons = QuadConstraints(np.zeros((1, 2)), np.array([[1.0, 0.0]]), np.array([-1.0]))
    assert barrier([1.0, 0.0], cons, [0.0, 0.0]).status == "unbounded"


def test_start_must_be_strict():
    with pytest.raises(QcpError):
        barrier([1.0, 0.0], DISK, [1.0, 0.0])


def test_polish_keeps_input_when_nothing_is_active():
    y, mu = polish(np.zeros(2), DISK, np.zeros(2), np.zeros(1))
    np.testing.assert_array_equal(y, np.zeros(2))


def test_phase_one():
    shifted = QuadConstraints(DISK.Q, np.array([[-6.0, 0.0]]), np.array([8.0]))  # disk of radius 1 at (3, 0)
    y, best = find_interior(shifted, [0.0, 0.0])
    assert y is not None and best < 0
    assert shifted.values(y)[0] < 0
    empty = QuadConstraints(np.array([[2.0, 2.0]]), np.zeros((1, 2)), np.array([1.0]))
    y, best = find_interior(empty, [0.0, 0.0])
    assert y is None and best > 0


def test_projected_subgradient_on_abs():
    def vg(x):
        return float(np.sum(np.abs(x - 0.3))), np.sign(x - 0.3)

    x, v = projected_subgradient(vg, np.array([2.0, -1.0]), np.array([-5.0, -5.0]), np.array([5.0, 5.0]))
    assert v < 1e-3
    np.testing.assert_allclose(x, [0.3, 0.3], atol=1e-3)
