import numpy as np
import pytest
from hypothesis import given, strategies as st

from leapprune import errors
from leapprune.distillation import distill_objective, pure_distill_loss
from leapprune.tensor import Tape, Tensor, backward, kl_divergence, softmax_cross_entropy
from leapprune.thresholds import ThresholdBank

rng = np.random.default_rng(11)
STUDENT = rng.normal(size=(6, 2))
TEACHER = rng.normal(size=(6, 2))
LABELS = np.array([0, 1, 1, 0, 1, 0])

def bank(target: float = 0.1) -> ThresholdBank:
    return ThresholdBank.initialize([64, 64], temperature=8.0, target_ratio=target, lambda_max=320.0, lambda_min=10.0)


def test_alpha_zero_is_cross_entropy_without_teacher():
    loss, terms = pure_distill_loss(Tensor(STUDENT), None, LABELS, 0.0)
    assert loss.item() == pytest.approx(softmax_cross_entropy(Tensor(STUDENT), LABELS).item())
    assert terms.kl == 0.0
    assert terms.pure_loss == terms.cross_entropy

def test_alpha_one_with_identical_logits_has_zero_kl():
    loss, terms = pure_distill_loss(Tensor(STUDENT), Tensor(STUDENT), LABELS, 1.0)
    assert terms.kl == pytest.approx(0.0, abs=1e-15)
    assert loss.item() == pytest.approx(0.0, abs=1e-15)

@given(st.floats(0.0, 1.0), st.floats(0.5, 4.0))
def test_pure_loss_recombines_its_terms(alpha, temperature):
    loss, terms = pure_distill_loss(Tensor(STUDENT), Tensor(TEACHER), LABELS, alpha, temperature)
    expected = alpha * terms.kl + (1 - alpha) * terms.cross_entropy
    assert loss.item() == pytest.approx(expected, rel=1e-12, abs=1e-15)
    if alpha > 0:
        assert terms.kl == pytest.approx(kl_divergence(Tensor(STUDENT), Tensor(TEACHER), temperature).item())

def test_alpha_must_be_a_fraction():
    with pytest.raises(errors.ConfigurationError) as e:
        pure_distill_loss(Tensor(STUDENT), Tensor(TEACHER), LABELS, 1.5)
    assert e.value.field == "alpha"
    with pytest.raises(errors.ConfigurationError):
        pure_distill_loss(Tensor(STUDENT), Tensor(TEACHER), LABELS, -0.1)

def test_positive_alpha_needs_teacher_logits():
    with pytest.raises(errors.ConfigurationError):
        pure_distill_loss(Tensor(STUDENT), None, LABELS, 0.5)

def test_teacher_receives_no_gradient():
    student = Tensor(STUDENT, requires_grad=True)
    teacher = Tensor(TEACHER)
    with Tape():
        loss, _ = pure_distill_loss(student, teacher, LABELS, 0.9)
        backward(loss)
    assert teacher.grad is None
    assert np.abs(student.grad).sum() > 0

def test_objective_conserves_its_parts():
    b = bank()
    objective, terms, state = distill_objective(Tensor(STUDENT), Tensor(TEACHER), LABELS, 0.9, b)
    assert objective.item() == pytest.approx(terms.pure_loss + state.lambda_reg * state.reg_loss_value, rel=1e-12)
    assert state.current_R == pytest.approx(0.9933071490757153)

def test_objective_in_constant_mode():
    _, _, state = distill_objective(
        Tensor(STUDENT), Tensor(TEACHER), LABELS, 0.9, bank(), mode="constant", constant_lambda=7.0
    )
    assert state.lambda_reg == 7.0

def test_objective_sends_gradient_to_sigma():
    b = bank()
    with Tape():
        objective, _, _ = distill_objective(Tensor(STUDENT), Tensor(TEACHER), LABELS, 0.9, b)
        backward(objective)
    assert (b.sigma.grad > 0).all()
