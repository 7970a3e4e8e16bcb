import numpy as np
import pytest

from captalk import autodiff as ad
from captalk.autodiff import Tensor
from captalk.errors import DomainError, NumericError, ShapeError
from captalk.optim import AdamW

from gradcheck import REL_TOL, check_case, op_cases


def test_add_elementwise():
    out = ad.op_forward("add", [Tensor([1.0, 2.0]), Tensor([3.0, 4.0])], {})
    np.testing.assert_array_equal(out.values, [4.0, 6.0])


def test_softmax_symmetry():
    out = ad.softmax(Tensor([0.0, 0.0]))
    np.testing.assert_allclose(out.values, [0.5, 0.5])


def test_matmul_ones():
    out = ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    np.testing.assert_array_equal(out.values, np.full((2, 2), 3.0))


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_add_shape_error():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_log_negative_domain_error():
    with pytest.raises(DomainError):
        ad.log(Tensor([-1.0]))
    with pytest.raises(DomainError):
        ad.sqrt(Tensor([-0.5]))


def test_nan_rejected():
    with pytest.raises(NumericError):
        Tensor([np.nan])
    with pytest.raises(NumericError):
        ad.exp(Tensor([1000.0]))  # overflow to inf


def test_backward_square():
    x = Tensor([3.0])
    y = ad.mul(x, x)
    ad.backward(y)
    np.testing.assert_allclose(x.grad, [6.0])


def test_backward_sigmoid_at_zero():
    x = Tensor(np.zeros(5))
    y = ad.sum_(ad.sigmoid(x))
    ad.backward(y)
    np.testing.assert_allclose(x.grad, np.full(5, 0.25))


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0])
    with pytest.raises(ShapeError):
        ad.backward(ad.mul(x, x))


def test_backward_accumulates_across_calls():
    x = Tensor([2.0])
    y = ad.mul(x, x)
    ad.backward(y)
    ad.backward(y)
    np.testing.assert_allclose(x.grad, [8.0])


def test_backward_fanout_accumulation():
    # y = x*x + x: two uses of x must sum their contributions
    x = Tensor([4.0])
    y = ad.add(ad.mul(x, x), x)
    ad.backward(y)
    np.testing.assert_allclose(x.grad, [9.0])


def test_every_reachable_tensor_gets_grad():
    x = Tensor([1.0, 2.0])
    c = Tensor([5.0, 5.0])
    mid = ad.mul(x, c)
    loss = ad.sum_(mid)
    ad.backward(loss)
    for t in (x, c, mid, loss):
        assert t.grad is not None and t.grad.shape == t.values.shape


def test_forward_deterministic():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    r1 = ad.matmul(ad.gelu(Tensor(a)), Tensor(b)).values
    r2 = ad.matmul(ad.gelu(Tensor(a)), Tensor(b)).values
    assert np.array_equal(r1, r2)


def test_unknown_op_rejected():
    with pytest.raises(ValueError):
        ad.op_forward("conv2d", [Tensor([1.0])], {})


# --- resize -----------------------------------------------------------------

def test_resize_hand_example():
    out = ad.linear_resize_time(Tensor([[0.0], [3.0]]), 4)
    np.testing.assert_allclose(out.values[:, 0], [0.0, 1.0, 2.0, 3.0])


def test_resize_constant_any_length():
    const = Tensor(np.full((3, 2), 5.0))
    for target in (1, 2, 3, 7, 50):
        out = ad.linear_resize_time(const, target)
        assert np.array_equal(out.values, np.full((target, 2), 5.0))


def test_resize_identity_exact():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(9, 4))
    out = ad.linear_resize_time(Tensor(x), 9)
    assert np.array_equal(out.values, x)


def test_resize_down_then_up_constant_exact():
    const = np.full((10, 3), -2.5)
    down = ad.linear_resize_time(Tensor(const), 4)
    up = ad.linear_resize_time(down, 10)
    assert np.array_equal(up.values, const)


def test_resize_source_length_one_broadcasts():
    out = ad.linear_resize_time(Tensor([[1.0, 2.0]]), 5)
    np.testing.assert_array_equal(out.values, np.tile([1.0, 2.0], (5, 1)))


# --- rope -------------------------------------------------------------------

def test_rope_zero_frequencies_identity():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 6))
    out = ad.rope_rotate(Tensor(x), np.array([5.0, 9.0, 100.0]), np.zeros(3))
    np.testing.assert_allclose(out.values, x)


def test_rope_relative_shift_invariance():
    rng = np.random.default_rng(3)
    q = rng.normal(size=(4, 8))
    k = rng.normal(size=(6, 8))
    tq, tk = rng.uniform(0, 50, 4), rng.uniform(0, 50, 6)
    freqs = rng.uniform(0.01, 1.0, 4)

    def logits(shift):
        rq = ad.rope_rotate(Tensor(q), tq + shift, freqs).values
        rk = ad.rope_rotate(Tensor(k), tk + shift, freqs).values
        return rq @ rk.T

    np.testing.assert_allclose(logits(0.0), logits(17.3), atol=1e-9)


# --- pass-through -----------------------------------------------------------

def test_pass_through_routes_gradient_to_surrogate():
    target = Tensor([1.0, -1.0])
    surrogate = Tensor([0.3, 0.4])
    out = ad.pass_through(target, surrogate)
    np.testing.assert_array_equal(out.values, target.values)
    loss = ad.sum_(ad.mul(out, Tensor([2.0, 5.0])))
    ad.backward(loss)
    np.testing.assert_allclose(surrogate.grad, [2.0, 5.0])
    np.testing.assert_allclose(target.grad, [0.0, 0.0])


# --- finite differences -----------------------------------------------------

@pytest.mark.parametrize("case_idx,name", [(j, name) for j, (name, _) in enumerate(op_cases())])
def test_gradient_matches_finite_differences(case_idx, name):
    builder = op_cases()[case_idx][1]
    rng = np.random.default_rng(990000 + case_idx)
    worst = 0.0
    for _ in range(20):
        inputs, attrs = builder(rng)
        worst = max(worst, check_case(name, inputs, attrs, rng))
    assert worst < REL_TOL, f"{name}: worst rel error {worst:.3e}"


# --- AdamW ------------------------------------------------------------------

def test_adamw_first_step_hand_computed():
    p = Tensor([1.0])
    p.grad = np.array([1.0])
    opt = AdamW([p], lr=0.1, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01)
    opt.step()
    # Independent hand evaluation of the update rule at t=1:
    m_hat = (0.1 * 1.0) / (1 - 0.9)
    v_hat = (0.001 * 1.0) / (1 - 0.999)
    expected = 1.0 - 0.1 * (m_hat / (np.sqrt(v_hat) + 1e-8) + 0.01 * 1.0)
    np.testing.assert_allclose(p.values, [expected])
    assert abs(expected - 0.899) < 1e-6
    assert opt.t == 1


def test_adamw_zero_grad_zero_decay_fixed_point():
    p = Tensor([1.5, -2.0])
    p.grad = np.zeros(2)
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    opt.step()
    np.testing.assert_array_equal(p.values, [1.5, -2.0])


def test_adamw_zero_lr_keeps_params():
    p = Tensor([1.5])
    p.grad = np.array([3.0])
    opt = AdamW([p], lr=0.0, weight_decay=0.01)
    opt.step()
    np.testing.assert_array_equal(p.values, [1.5])


def test_adamw_nan_grad_raises():
    p = Tensor([1.0])
    p.grad = np.array([np.nan])
    opt = AdamW([p])
    with pytest.raises(NumericError):
        opt.step()


def test_adamw_deterministic_runs():
    def run():
        rng = np.random.default_rng(7)
        p = Tensor(rng.normal(size=8))
        opt = AdamW([p], lr=1e-2)
        for _ in range(25):
            opt.zero_grad()
            loss = ad.sum_(ad.mul(p, p))
            ad.backward(loss)
            opt.step()
        return p.values.copy()

    a, b = run(), run()
    assert np.array_equal(a, b)
