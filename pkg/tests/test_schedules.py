import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from leapprune import errors
from leapprune.masks import BlockGeometry, PrunableMatrix
from leapprune.schedules import (
    ScheduleParams,
    cubic_sparsity,
    magnitude_keep_mask,
    soft_threshold_mask,
    soft_threshold_step
)
from leapprune.tensor import Tape, Tensor, backward, stable_sigmoid

schedules = st.builds(
    lambda s0, gap, t0, ramp, tc: ScheduleParams(s0=s0, sf=min(s0 + gap, 1.0), t0=t0, tc=tc, tf=t0 + ramp + tc),
    st.floats(0.0, 0.9),
    st.floats(0.01, 1.0),
    st.integers(0, 50),
    st.integers(1, 200),
    st.integers(0, 50)
)


def test_docstring_example():
    assert cubic_sparsity(50, ScheduleParams(s0=0.0, sf=0.9, t0=0, tc=0, tf=100)) == pytest.approx(0.7875)

@given(schedules)
def test_schedule_endpoints(p):
    assert cubic_sparsity(0, p) == pytest.approx(p.s0)
    assert cubic_sparsity(p.t0, p) == pytest.approx(p.s0)
    assert cubic_sparsity(p.ramp_end, p) == pytest.approx(p.sf)
    assert cubic_sparsity(p.tf, p) == pytest.approx(p.sf)
    assert cubic_sparsity(p.tf + 1000, p) == p.sf

@given(schedules, st.integers(0, 400), st.integers(0, 400))
def test_schedule_is_monotone(p, a, b):
    low, high = sorted((a, b))
    assert cubic_sparsity(low, p) <= cubic_sparsity(high, p) + 1e-15

@given(schedules, st.floats(0.0, 400.0))
def test_schedule_is_continuous(p, t):
    step = 1e-7
    assert abs(cubic_sparsity(t + step, p) - cubic_sparsity(t, p)) < 1e-5

def test_cool_down_holds_final_sparsity():
    p = ScheduleParams(s0=0.0, sf=0.8, t0=10, tc=20, tf=110)
    assert p.ramp_end == 90
    assert cubic_sparsity(89, p) < 0.8
    assert cubic_sparsity(95, p) == 0.8

def test_schedule_validation():
    with pytest.raises(errors.ConfigurationError):
        ScheduleParams(s0=0.5, sf=0.4, t0=0, tc=0, tf=10)
    with pytest.raises(errors.ConfigurationError):
        ScheduleParams(s0=0.0, sf=0.9, t0=10, tc=0, tf=10)
    with pytest.raises(errors.ConfigurationError):
        ScheduleParams(s0=0.0, sf=0.9, t0=0, tc=-1, tf=10)
    with pytest.raises(errors.InputError):
        cubic_sparsity(-1, ScheduleParams(s0=0.0, sf=0.9, t0=0, tc=0, tf=10))

def test_magnitude_keeps_largest_absolute_values():
    np.testing.assert_array_equal(magnitude_keep_mask(np.array([3.0, -4.0, 1.0, 0.0]), 0.5), [[1.0, 1.0, 0.0, 0.0]])

def test_magnitude_mask_with_blocks():
    weight = np.array([
        [1.0, 1.0, 0.1, 0.1],
        [1.0, 1.0, 0.1, 0.1],
        [0.1, 0.1, -3.0, 0.0],
        [0.1, 0.1, 0.0, 0.0]
    ])
    geometry = BlockGeometry(2, 4, 4)
    np.testing.assert_array_equal(magnitude_keep_mask(weight, 0.5, geometry, "l1"), [[1.0, 0.0], [0.0, 1.0]])
    # l2 ranks the lone large entry above the four unit entries
    np.testing.assert_array_equal(magnitude_keep_mask(weight, 0.75, geometry, "l2"), [[0.0, 0.0], [0.0, 1.0]])
    with pytest.raises(errors.ConfigurationError):
        magnitude_keep_mask(weight, 0.5, geometry, "linf")  # type: ignore[arg-type]

@given(st.floats(0.01, 100.0), st.floats(0.0, 1.0))
def test_magnitude_mask_is_scale_invariant(factor, sparsity):
    weight = np.random.default_rng(3).normal(size=(4, 6))
    np.testing.assert_array_equal(
        magnitude_keep_mask(weight, sparsity),
        magnitude_keep_mask(weight * factor, sparsity)
    )

def test_magnitude_rejects_bad_sparsity():
    with pytest.raises(errors.InputError):
        magnitude_keep_mask(np.ones(4), 1.5)

def test_soft_threshold_mask_is_strict():
    np.testing.assert_array_equal(soft_threshold_mask(np.array([-2.0, 0.0, 2.0]), 0.5), [0.0, 0.0, 1.0])

@given(st.floats(-20, 20), st.floats(0.0, 1.0))
def test_soft_threshold_mask_agrees_with_sigmoid(score, s_t):
    assume(abs(float(stable_sigmoid(score)) - s_t) > 1e-12)
    expected = 1.0 if float(stable_sigmoid(score)) > s_t else 0.0
    assert soft_threshold_mask(np.array([score]), s_t)[0] == expected

def test_soft_threshold_step_installs_masks_and_penalty():
    matrices = []
    for index, scores in enumerate(([[-2.0, 0.0], [2.0, 4.0]], [[1.0, -1.0], [0.0, 3.0]])):
        geometry = BlockGeometry(1, 2, 2)
        weight = Tensor(np.ones((2, 2)), requires_grad=True)
        score = Tensor(scores, requires_grad=True, name=f"s{index}")
        matrices.append(PrunableMatrix(f"m{index}", weight, score, geometry, index))
    with Tape():
        penalty = soft_threshold_step(matrices, 0.5)
        backward(penalty)
    np.testing.assert_array_equal(matrices[0].mask, [[0.0, 0.0], [1.0, 1.0]])
    np.testing.assert_array_equal(matrices[1].mask, [[1.0, 0.0], [0.0, 1.0]])
    every = np.concatenate([p.score.values.reshape(-1) for p in matrices])
    assert penalty.item() == pytest.approx(stable_sigmoid(every).mean())
    s = stable_sigmoid(matrices[0].score.values)
    np.testing.assert_allclose(matrices[0].score.grad, s * (1 - s) / 8)
    with pytest.raises(errors.UsageError):
        soft_threshold_step([], 0.5)
