import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from madst import autograd as ag
from madst.autograd import Tensor
from madst.gradcheck import check_gradients, relative_error


def param(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_matmul_identity():
    out = ag.matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[3.0], [4.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [4.0]])


def test_matmul_hand_product():
    out = Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])
    np.testing.assert_array_equal(out.data, [[11.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ag.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_sum_gradient_matches_fd(rng):
    a, b = param(rng, 3, 4), param(rng, 4, 2)
    res = check_gradients(lambda: ag.sum_(a @ b), {"a": a, "b": b}, max_entries=None)
    assert res.max_rel_error < 1e-6


def test_softmax_examples():
    np.testing.assert_allclose(ag.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3)
    big = ag.softmax(Tensor([1000.0, 0.0])).data
    assert np.isfinite(big).all() and big[0] == pytest.approx(1.0) and big[1] == pytest.approx(0.0)
    np.testing.assert_allclose(ag.softmax(Tensor([1.0, 2.0, 3.0])).data, [0.09003, 0.24473, 0.66524], atol=1e-5)


def test_masked_softmax_gives_exact_zero():
    p = ag.softmax(Tensor([[1.0, 5.0, 2.0]]), mask=np.array([[True, False, True]])).data
    assert p[0, 1] == 0.0
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6),
                  elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_softmax_rows_sum_to_one(x):
    p = ag.softmax(Tensor(x), axis=-1).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-9)
    assert (p >= 0).all()


UNARY = {
    "relu": lambda x: ag.relu(x),
    "tanh": ag.tanh,
    "sigmoid": ag.sigmoid,
    "exp": ag.exp,
    "log": lambda x: ag.log(ag.exp(x)),
    "softmax": lambda x: ag.softmax(x, axis=-1),
    "log_softmax": lambda x: ag.log_softmax(x, axis=-1),
    "masked_softmax": lambda x: ag.softmax(x, axis=-1, mask=np.array([True, False, True, True])),
    "mean": lambda x: ag.mean(x, axis=0, keepdims=True),
    "reshape": lambda x: ag.reshape(x, (4, 3)),
    "swapaxes": lambda x: ag.swapaxes(x, 0, 1),
    "basic_index": lambda x: x[1:, ::2],
    "fancy_index": lambda x: ag.getitem(x, np.array([0, 2, 0])),
    "div": lambda x: x / (ag.exp(x) + 1.0),
    "neg_sub": lambda x: 1.0 - x * 2.0,
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_op_gradients(name, rng):
    x = param(rng, 3, 4)
    if name == "relu":
        x.data += np.sign(x.data) * 0.1  # keep entries away from the kink
    w = rng.normal(size=UNARY[name](Tensor(x.data)).shape)
    res = check_gradients(lambda: ag.sum_(UNARY[name](x) * Tensor(w)), {"x": x}, max_entries=None)
    assert res.max_rel_error < 1e-4, res


def test_binary_broadcast_gradients(rng):
    a, b, c = param(rng, 3, 4), param(rng, 4), param(rng, 3, 1)
    f = lambda: ag.sum_(ag.tanh(a * b + c - a / (ag.exp(c) + 1.0)))
    assert check_gradients(f, {"a": a, "b": b, "c": c}, max_entries=None).ok


def test_concat_stack_where_gradients(rng):
    a, b = param(rng, 2, 3), param(rng, 2, 2)
    cond = np.array([[True, False, True, False, True], [False, False, True, True, False]])
    f = lambda: ag.sum_(ag.where(cond, ag.concat([a, b], axis=1), 0.5) * ag.concat([b, a], axis=1))
    assert check_gradients(f, {"a": a, "b": b}, max_entries=None).ok
    coef = Tensor(rng.normal(size=(2, 2, 3)))
    g = lambda: ag.sum_(ag.stack([a, a * 2.0], axis=1) * coef)
    assert check_gradients(g, {"a": a}, max_entries=None).ok


def test_cross_entropy_and_nll_gradients(rng):
    logits = param(rng, 5, 4)
    target = np.array([0, 3, 1, 1, 2])
    assert check_gradients(lambda: ag.cross_entropy(logits, target), {"l": logits}, max_entries=None).ok
    f = lambda: ag.nll_from_probs(ag.softmax(logits), target, reduction="sum")
    assert check_gradients(f, {"l": logits}, max_entries=None).ok
    np.testing.assert_allclose(ag.cross_entropy(logits, target).item(),
                               ag.nll_from_probs(ag.softmax(logits), target).item(), rtol=1e-10)


def test_scatter_sum_oracle_and_gradient(rng):
    w = param(rng, 2, 3, 4)
    ids = np.array([[1, 0, 1, 2], [3, 3, 3, 0]])
    out = ag.scatter_sum(w, ids, 5).data
    brute = np.zeros((2, 3, 5))
    for n in range(2):
        for t in range(3):
            for j in range(4):
                brute[n, t, ids[n, j]] += w.data[n, t, j]
    np.testing.assert_allclose(out, brute)
    coef = Tensor(rng.normal(size=(2, 3, 5)))
    assert check_gradients(lambda: ag.sum_(ag.scatter_sum(w, ids, 5) * coef), {"w": w}, max_entries=None).ok


def test_gru_scan_gradients_with_mask_and_h0(rng):
    xp, u, h0 = param(rng, 2, 3, 5, 9), param(rng, 2, 9, 3), param(rng, 2, 3, 3)
    mask = rng.random((2, 3, 5)) > 0.3
    coef = Tensor(rng.normal(size=(2, 3, 5, 3)))
    res = check_gradients(lambda: ag.sum_(ag.gru_scan(xp, u, mask, h0) * coef), {"xp": xp, "u": u, "h0": h0},
                          max_entries=30)
    assert res.max_rel_error < 1e-4, res


def test_unused_parameter_gets_exact_zero_grad(rng):
    used, unused = param(rng, 3), param(rng, 3)
    used.zero_grad()
    unused.zero_grad()
    ag.sum_(used * used).backward()
    assert np.array_equal(unused.grad, np.zeros(3))
    assert np.abs(used.grad).sum() > 0


def test_shared_subexpression_accumulates(rng):
    x = param(rng, 4)
    y = ag.tanh(x)
    ag.sum_(y * y + y).backward()
    t = np.tanh(x.data)
    np.testing.assert_allclose(x.grad, (2 * t + 1) * (1 - t * t))


def test_no_grad_records_nothing(rng):
    x = param(rng, 3)
    with ag.no_grad():
        y = ag.exp(x)
    assert y._backward is None and not y.requires_grad


def test_backward_needs_scalar_or_seed(rng):
    with pytest.raises(ag.ShapeError):
        ag.exp(param(rng, 3)).backward()


def test_log_eps_clamps():
    assert np.isfinite(ag.log(Tensor([0.0]), eps=1e-12).data).all()


def test_relative_error_floor():
    assert relative_error(0.0, 1e-9) < 1e-3
    assert relative_error(1.0, 1.0001) == pytest.approx(1e-4, rel=1e-3)
