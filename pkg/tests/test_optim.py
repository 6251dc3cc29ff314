"""Adam update behaviour and the finite-difference harness itself."""

import numpy as np
import pytest

from sinformer.errors import ContractError
from sinformer.gradcheck import grad_check
from sinformer.optim import AdamState, adam_step
from sinformer.tensor import Tape, Tensor, backward, mul, record, sub, sum_all, zero_grads


def test_zero_gradient_leaves_params_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    state = AdamState([p])
    before = p.data.copy()
    p.grad = np.zeros(3)
    adam_step([p], state, lr=0.1)
    np.testing.assert_array_equal(p.data, before)
    assert state.t == 1


def test_first_step_magnitude_is_lr_and_sign_opposes_gradient():
    for g in (0.017, 3.4, 250.0):
        p = Tensor(np.array([1.0]), requires_grad=True)
        state = AdamState([p])
        p.grad = np.array([g])
        adam_step([p], state, lr=0.01)
        delta = p.data[0] - 1.0
        assert delta < 0  # sign = -sign(g)
        assert abs(abs(delta) - 0.01) < 1e-6


def test_scalar_quadratic_converges():
    # 200 steps on f(w) = (w - 3)^2 from w = 0 with lr = 0.1
    w = Tensor(np.array([0.0]), requires_grad=True)
    state = AdamState([w])
    for _ in range(200):
        zero_grads([w])
        tape = Tape()
        with record(tape):
            resid = sub(w, Tensor(np.array([3.0])))
            loss = sum_all(mul(resid, resid))
        backward(loss, tape)
        adam_step([w], state, lr=0.1)
    assert abs(w.data[0] - 3.0) < 0.05


def test_adam_rejects_nonpositive_lr_and_mismatched_state():
    p = Tensor(np.array([1.0]), requires_grad=True)
    state = AdamState([p])
    with pytest.raises(ContractError):
        adam_step([p], state, lr=0.0)
    q = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    from sinformer.errors import ShapeError
    q.grad = np.zeros(2)
    with pytest.raises(ShapeError):
        adam_step([q], state, lr=0.1)


def test_step_counter_increments_by_one():
    p = Tensor(np.array([1.0]), requires_grad=True)
    state = AdamState([p])
    p.grad = np.array([1.0])
    for expected in (1, 2, 3):
        adam_step([p], state, lr=0.01)
        assert state.t == expected


# ---------------------------------------------------------------------------
# grad_check harness
# ---------------------------------------------------------------------------

def test_grad_check_exact_on_linear_function():
    x = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
    c = Tensor(np.array([2.0, -1.0, 0.5]))
    assert grad_check(lambda: sum_all(mul(x, c)), [x]) < 1e-10


def test_grad_check_detects_corrupted_gradient():
    x = Tensor(np.array([0.7, -0.4]), requires_grad=True)
    err = grad_check(lambda: sum_all(mul(x, x)), [x], corrupt=(0, 0))
    assert err > 0.3


def test_grad_check_subsampling_is_deterministic():
    rng = np.random.default_rng(5)
    x = Tensor(rng.uniform(-1, 1, (6, 6)), requires_grad=True)
    w = Tensor(rng.uniform(-1, 1, (6, 6)))

    def f():
        return sum_all(mul(mul(x, x), w))

    e1 = grad_check(f, [x], max_coords_per_param=5, seed=11)
    e2 = grad_check(f, [x], max_coords_per_param=5, seed=11)
    assert e1 == e2
    assert e1 < 1e-6
