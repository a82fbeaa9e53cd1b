import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from udelab import autodiff as ad
from udelab.autodiff import SGD, GradientError, ShapeError, Tensor

from gradcheck import REL_TOL, analytic_grad, max_rel_error, numeric_grad

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)


def test_softmax_symmetric_input():
    np.testing.assert_array_equal(ad.softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])


def test_relu_definition():
    np.testing.assert_array_equal(ad.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])


def test_square_gradient():
    w = Tensor(3.0, requires_grad=True)
    ad.square(w).backward()
    assert w.grad == pytest.approx(6.0)


def test_sum_of_softmax_has_zero_gradient():
    w = Tensor(np.random.default_rng(0).normal(size=(1, 5)), requires_grad=True)
    ad.sum(ad.softmax(w)).backward()
    np.testing.assert_allclose(w.grad, 0.0, atol=1e-12)


def test_backward_rejects_non_scalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(GradientError):
        ad.mul(w, 2.0).backward()


def test_repeated_backward_accumulates():
    w = Tensor(3.0, requires_grad=True)
    ad.square(w).backward()
    ad.square(w).backward()
    assert w.grad == pytest.approx(12.0)


def test_shared_subexpression_counts_both_paths():
    w = Tensor(2.0, requires_grad=True)
    y = ad.mul(w, w)
    ad.add(y, y).backward()  # 2 w^2
    assert w.grad == pytest.approx(8.0)


def test_shape_errors_name_op_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_batchnorm_training_moments():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(3.0, 5.0, size=(64, 7)))
    out, mu, var = ad.batch_norm(x, Tensor(np.ones(7)), Tensor(np.zeros(7)), eps=0.0)
    np.testing.assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.data.var(axis=0), 1.0, atol=1e-6)
    np.testing.assert_allclose(mu, x.data.mean(axis=0))


def test_affine_norm_is_rowwise():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(10, 3))
    args = (rng.normal(size=3), rng.uniform(0.5, 2, size=3), Tensor(np.ones(3)), Tensor(np.zeros(3)))
    full = ad.affine_norm(Tensor(x), *args).data
    single = np.vstack([ad.affine_norm(Tensor(x[i : i + 1]), *args).data for i in range(10)])
    np.testing.assert_allclose(full, single, rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 6), elements=finite))
def test_softmax_rows_sum_to_one(x):
    p = ad.softmax(Tensor(x), axis=1).data
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 6), elements=finite))
def test_log_softmax_matches_log_of_softmax(x):
    np.testing.assert_allclose(
        ad.log_softmax(Tensor(x), axis=1).data, np.log(ad.softmax(Tensor(x), axis=1).data), atol=1e-9
    )


def test_grad_reverse_forward_is_identity():
    x = np.random.default_rng(3).normal(size=(5, 4))
    np.testing.assert_array_equal(ad.grad_reverse(Tensor(x), 3.0).data, x)


# --------------------------------------------------------------------------
# finite-difference checks, one per op


def _rand(rng, *shape, positive=False):
    data = rng.uniform(0.5, 2.0, shape) if positive else rng.normal(size=shape)
    return Tensor(data, requires_grad=True)


def _weights(rng, shape):
    return rng.normal(size=shape)


OPS = {
    "add": lambda r: ((a := _rand(r, 3, 4)), (b := _rand(r, 4)), lambda: ad.add(a, b), [a, b]),
    "sub": lambda r: ((a := _rand(r, 3, 4)), (b := _rand(r, 3, 4)), lambda: ad.sub(a, b), [a, b]),
    "mul": lambda r: ((a := _rand(r, 3, 4)), (b := _rand(r, 1, 4)), lambda: ad.mul(a, b), [a, b]),
    "div": lambda r: ((a := _rand(r, 3, 4)), (b := _rand(r, 3, 4, positive=True)), lambda: ad.div(a, b), [a, b]),
    "exp": lambda r: ((a := _rand(r, 3, 4)), None, lambda: ad.exp(a), [a]),
    "log": lambda r: ((a := _rand(r, 3, 4, positive=True)), None, lambda: ad.log(a), [a]),
    "square": lambda r: ((a := _rand(r, 3, 4)), None, lambda: ad.square(a), [a]),
    "relu": lambda r: ((a := _rand(r, 3, 4)), None, lambda: ad.relu(a), [a]),
    "sigmoid": lambda r: ((a := _rand(r, 3, 4)), None, lambda: ad.sigmoid(a), [a]),
    "matmul": lambda r: ((a := _rand(r, 3, 4)), (b := _rand(r, 4, 2)), lambda: ad.matmul(a, b), [a, b]),
    "linear": lambda r: (
        (a := _rand(r, 5, 3)),
        (wb := (_rand(r, 3, 2), _rand(r, 2))),
        lambda: ad.linear(a, *wb),
        [a, *wb],
    ),
    "outer_rows": lambda r: ((a := _rand(r, 3, 4)), (b := _rand(r, 3, 2)), lambda: ad.outer_rows(a, b), [a, b]),
    "softmax": lambda r: ((a := _rand(r, 3, 4)), None, lambda: ad.softmax(a, axis=1), [a]),
    "log_softmax": lambda r: ((a := _rand(r, 3, 4)), None, lambda: ad.log_softmax(a, axis=1), [a]),
    "mean": lambda r: ((a := _rand(r, 3, 4)), None, lambda: ad.mean(a, axis=0), [a]),
    "sum": lambda r: ((a := _rand(r, 3, 4)), None, lambda: ad.sum(a, axis=1), [a]),
    "reshape": lambda r: ((a := _rand(r, 3, 4)), None, lambda: ad.reshape(a, (4, 3)), [a]),
    "concat": lambda r: ((a := _rand(r, 3, 4)), (b := _rand(r, 2, 4)), lambda: ad.concat([a, b]), [a, b]),
    "take_rows": lambda r: ((a := _rand(r, 5, 4)), None, lambda: ad.take_rows(a, [0, 2, 2, 4]), [a]),
    "batch_norm": lambda r: (
        (a := _rand(r, 6, 3)),
        (gb := (_rand(r, 3), _rand(r, 3))),
        lambda: ad.batch_norm(a, *gb)[0],
        [a, *gb],
    ),
    "affine_norm": lambda r: (
        (a := _rand(r, 6, 3)),
        (gb := (_rand(r, 3), _rand(r, 3))),
        lambda: ad.affine_norm(a, np.array([0.1, -0.2, 0.3]), np.array([1.5, 0.7, 2.0]), *gb),
        [a, *gb],
    ),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradient_matches_finite_differences(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    _, _, out_fn, params = OPS[name](rng)
    w = _weights(rng, out_fn().shape)
    # random projection so every output element contributes to the scalar
    assert max_rel_error(lambda: ad.sum(ad.mul(out_fn(), w)), params) < REL_TOL


@pytest.mark.parametrize("coeff", [0.0, 0.7, 3.0])
def test_grad_reverse_gradient_is_negated_finite_difference(coeff):
    # the finite-difference oracle sees an identity, the tape must see -coeff * identity
    rng = np.random.default_rng(4)
    a = _rand(rng, 3, 4)
    w = rng.normal(size=(3, 4))
    f = lambda: ad.sum(ad.mul(ad.grad_reverse(a, coeff), w))
    (analytic,) = analytic_grad(f, [a])
    (numeric,) = numeric_grad(f, [a])
    np.testing.assert_allclose(analytic, -coeff * numeric, rtol=1e-6, atol=1e-9)


def test_grad_reverse_rejects_negative_coeff():
    with pytest.raises(ValueError):
        ad.grad_reverse(Tensor([1.0], requires_grad=True), -1.0)


# --------------------------------------------------------------------------
# optimizer


def test_sgd_plain_step():
    p = Tensor(1.0, requires_grad=True)
    p.grad = np.array(2.0)
    SGD([p], lr=0.1).step()
    assert p.item() == pytest.approx(0.8)
    assert p.grad is None


def test_sgd_zero_lr_is_identity():
    p = Tensor([1.0, -2.0], requires_grad=True)
    p.grad = np.array([5.0, 5.0])
    SGD([p], lr=0.0, momentum=0.9, weight_decay=0.1).step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_sgd_momentum_second_update_is_1_9_times_first():
    p = Tensor(0.0, requires_grad=True)
    opt = SGD([p], lr=0.1, momentum=0.9)
    p.grad = np.array(1.0)
    opt.step()
    first = -p.item()
    p.grad = np.array(1.0)
    before = p.item()
    opt.step()
    assert (before - p.item()) == pytest.approx(1.9 * first)


def test_sgd_weight_decay_enters_velocity():
    p = Tensor(2.0, requires_grad=True)
    p.grad = np.array(0.0)
    SGD([p], lr=0.5, weight_decay=0.1).step()
    assert p.item() == pytest.approx(2.0 - 0.5 * 0.1 * 2.0)


def test_sgd_missing_grad_is_contract_error():
    p = Tensor(1.0, requires_grad=True)
    with pytest.raises(GradientError):
        SGD([p], lr=0.1).step()


def test_sgd_velocity_shapes_match():
    params = [Tensor(np.zeros((3, 2)), True), Tensor(np.zeros(2), True)]
    opt = SGD(params, lr=0.1, momentum=0.5)
    assert [v.shape for v in opt.velocity] == [(3, 2), (2,)]


def test_sgd_step_helper_checks_param_list():
    a, b = Tensor(1.0, True), Tensor(2.0, True)
    opt = SGD([a], lr=0.1)
    a.grad = np.array(1.0)
    ad.sgd_step([a], opt)
    with pytest.raises(GradientError):
        ad.sgd_step([b], opt)
