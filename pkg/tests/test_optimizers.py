import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gradguide.exceptions import LineSearchError, UsageError
from gradguide.optimizers import (
    AdamState,
    LbfgsState,
    adam_step,
    armijo_line_search,
    lbfgs_direction,
    project_box,
    projected_lbfgs,
)

from oracles import scalar_adam


def test_adam_first_step_is_signed_lr():
    g = np.array([3.0, -0.5, 120.0, -0.07])
    p = np.array([1.0, 2.0, 3.0, 4.0])
    state = AdamState.zeros_like(p, lr=0.05)
    new_state, new_p = adam_step(state, p, g)
    np.testing.assert_allclose(new_p - p, -0.05 * np.sign(g), rtol=1e-6)
    assert new_state.step_count == 1
    # inputs untouched
    assert not np.any(state.m)


def test_adam_zero_grad_keeps_params():
    p = np.array([0.3, -1.0])
    _, new_p = adam_step(AdamState.zeros_like(p), p, np.zeros(2))
    np.testing.assert_array_equal(new_p, p)


def test_adam_quadratic_matches_reference_recurrence():
    state = AdamState.zeros_like(np.zeros(1), lr=0.1)
    p = np.zeros(1)
    path = []
    for _ in range(500):
        state, p = adam_step(state, p, p - 3.0)
        path.append(p[0])
    ref = scalar_adam(lambda q: q - 3.0, 0.0, 0.1, 500)
    np.testing.assert_allclose(path, ref, rtol=1e-12, atol=1e-12)
    assert abs(p[0] - 3.0) < 0.01


def test_adam_shape_mismatch():
    with pytest.raises(UsageError):
        adam_step(AdamState.zeros_like(np.zeros(2)), np.zeros(2), np.zeros(3))


@given(arrays(np.float64, 5, elements=st.floats(-10, 10)),
       st.lists(arrays(np.float64, 5, elements=st.floats(-5, 5)), min_size=1, max_size=6),
       st.floats(-100, 100))
@settings(max_examples=50, deadline=None)
def test_adam_translation_equivariant_and_deterministic(p, grads, c):
    s1 = s2 = s3 = AdamState.zeros_like(p, lr=0.01)
    p1, p2, p3 = p.copy(), p + c, p.copy()
    for g in grads:
        s1, p1 = adam_step(s1, p1, g)
        s2, p2 = adam_step(s2, p2, g)
        s3, p3 = adam_step(s3, p3, g)
    np.testing.assert_allclose((p2 - (p + c)), (p1 - p), atol=1e-9 * (1 + abs(c)))
    np.testing.assert_array_equal(p1, p3)
    assert np.all(s1.v >= 0)


def test_lbfgs_empty_history_is_steepest_descent():
    np.testing.assert_array_equal(lbfgs_direction(LbfgsState(), np.array([2.0, -4.0])), [-2.0, 4.0])
    np.testing.assert_array_equal(lbfgs_direction(LbfgsState(), np.zeros(3)), np.zeros(3))


def _quad(p):
    h = np.array([1.0, 10.0])
    return 0.5 * float(p @ (h * p)), h * p


def test_lbfgs_quadratic_converges():
    res = projected_lbfgs(_quad, np.array([1.0, 1.0]), max_iter=20, tol=0.0)
    assert np.linalg.norm(res.x) < 1e-6


def test_lbfgs_direction_closer_to_newton_with_one_pair():
    h = np.array([1.0, 10.0])
    p0 = np.array([1.0, 1.0])
    p1 = np.array([0.8, 0.3])
    state = LbfgsState()
    assert state.update(p1 - p0, h * p1 - h * p0)
    g = h * p1
    d = lbfgs_direction(state, g)
    newton = -g / h

    def angle(a, b):
        return np.arccos(a @ b / np.linalg.norm(a) / np.linalg.norm(b))

    assert angle(d, newton) < angle(-g, newton)


def test_lbfgs_skips_non_curvature_pairs():
    state = LbfgsState()
    assert not state.update(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    assert len(state.history) == 0


@st.composite
def curvature_history(draw):
    n = draw(st.integers(1, 6))
    pairs = []
    for _ in range(draw(st.integers(0, 12))):
        s = draw(arrays(np.float64, n, elements=st.floats(-3, 3)))
        # y = A s with A symmetric positive definite keeps s.y > 0
        diag = draw(arrays(np.float64, n, elements=st.floats(0.1, 10)))
        pairs.append((s, diag * s))
    g = draw(arrays(np.float64, n, elements=st.floats(-5, 5)))
    return pairs, g


@given(curvature_history())
@settings(max_examples=100, deadline=None)
def test_lbfgs_direction_always_descends(case):
    pairs, g = case
    state = LbfgsState()
    for s, y in pairs:
        state.update(s, y)
    d = lbfgs_direction(state, g)
    if np.linalg.norm(g) > 1e-6:
        assert d @ g < 0


def test_armijo_accepts_full_step_on_exact_decrease():
    def f(p):
        return 0.5 * float(p @ p)

    assert armijo_line_search(f, np.array([1.0]), np.array([-1.0]), np.array([1.0])) == 1.0


def test_armijo_backs_off_a_cliff():
    def f(p):
        q = p[0]
        return 0.5 * q * q if q >= 0.4 else 100.0

    p, d, g = np.array([1.0]), np.array([-1.0]), np.array([1.0])
    alpha = armijo_line_search(f, p, d, g)
    assert alpha in (0.5, 0.25)
    assert f(p + alpha * d) <= f(p) + 1e-4 * alpha * float(d @ g)


def test_armijo_rejects_ascent_and_reports_failure():
    with pytest.raises(UsageError):
        armijo_line_search(lambda p: 0.0, np.array([1.0]), np.array([1.0]), np.array([1.0]))
    with pytest.raises(LineSearchError):
        armijo_line_search(lambda p: float(p[0] != 1.0), np.array([1.0]),
                           np.array([-1.0]), np.array([1.0]))


def test_project_box_examples():
    np.testing.assert_array_equal(project_box([-0.1, 0.5, 1.2], 0, 1), [0, 0.5, 1])
    inside = np.array([0.2, 0.9])
    np.testing.assert_array_equal(project_box(inside, 0, 1), inside)


@given(arrays(np.float64, st.integers(1, 10), elements=st.floats(-1e3, 1e3)),
       st.floats(-10, 10), st.floats(0, 10))
def test_project_box_idempotent_and_contained(t, lo, width):
    hi = lo + width
    once = project_box(t, lo, hi)
    np.testing.assert_array_equal(project_box(once, lo, hi), once)
    assert np.all(once >= lo) and np.all(once <= hi)


def test_projected_lbfgs_respects_box():
    # unconstrained minimizer (2, -3) lies outside [0, 1]^2
    target = np.array([2.0, -3.0])

    def fg(p):
        return float((p - target) @ (p - target)), 2 * (p - target)

    res = projected_lbfgs(fg, np.array([0.5, 0.5]), 0.0, 1.0, max_iter=50)
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-9)
    assert res.converged
