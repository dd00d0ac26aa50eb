import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from madst import autograd as ag
from madst.attention import (SymAttention, attention_weights, cross_fuse, fuse, self_attend_fuse, sym_attend,
                             sym_scores, word_level_cross)
from madst.autograd import Tensor
from madst.gradcheck import check_gradients


def att(rng, d=4, a=5):
    return SymAttention(d, a, rng)


def test_zero_diag_gives_uniform_weights(rng):
    p = att(rng)
    p.diag.data[...] = 0.0
    values = Tensor(rng.normal(size=(6, 3)))
    out, w = sym_attend(Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(6, 4))), values, p)
    np.testing.assert_allclose(w.data, np.full((2, 6), 1 / 6))
    np.testing.assert_allclose(out.data, np.tile(values.data.mean(axis=0), (2, 1)))


def test_single_key_gets_all_weight(rng):
    p = att(rng)
    v = Tensor(rng.normal(size=(1, 3)))
    out, w = sym_attend(Tensor(rng.normal(size=(4, 4))), Tensor(rng.normal(size=(1, 4))), v, p)
    assert np.array_equal(w.data, np.ones((4, 1)))
    np.testing.assert_allclose(out.data, np.tile(v.data, (4, 1)))


def test_hand_computed_two_by_two(rng):
    p = SymAttention(1, 1, rng)
    p.proj.data[...] = 1.0
    p.diag.data[...] = 1.0
    q = Tensor([[1.0], [2.0]])
    k = Tensor([[1.0], [3.0]])
    scores = sym_scores(p.features(q), p.features(k), p).data
    np.testing.assert_allclose(scores, [[1, 3], [2, 6]])
    w = attention_weights(q, k, p).data
    np.testing.assert_allclose(w[0], [0.1192, 0.8808], atol=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_weights_rows_and_convex_hull(a, b, seed):
    rng = np.random.default_rng(seed)
    p = att(rng)
    mask = rng.random(b) > 0.4
    mask[rng.integers(b)] = True
    values = rng.normal(size=(b, 3))
    out, w = sym_attend(Tensor(rng.normal(size=(a, 4))), Tensor(rng.normal(size=(b, 4))), Tensor(values), p, mask)
    np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-9)
    assert (w.data[:, ~mask] == 0.0).all()
    live = values[mask]
    assert (out.data >= live.min(axis=0) - 1e-12).all() and (out.data <= live.max(axis=0) + 1e-12).all()


def test_scores_are_symmetric(rng):
    p = att(rng)
    q, k = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(5, 4)))
    s_qk = sym_scores(p.features(q), p.features(k), p).data
    s_kq = sym_scores(p.features(k), p.features(q), p).data
    np.testing.assert_allclose(s_qk, s_kq.T, atol=1e-13)


def test_fuse_examples(rng):
    h = rng.normal(size=(2, 3))
    v = rng.normal(size=(1, 3))
    p = SymAttention(3, 4, rng)
    out = cross_fuse(Tensor(h), Tensor(v), p).data
    for row, hr in zip(out, h):
        np.testing.assert_allclose(row, np.concatenate([hr, v[0], v[0] + hr, v[0] * hr]))
    hh = rng.normal(size=(1, 3))
    zero = fuse(Tensor(np.zeros((1, 3))), Tensor(hh)).data
    np.testing.assert_allclose(zero, np.concatenate([np.zeros((1, 3)), hh, hh, np.zeros((1, 3))], axis=1))


def test_cross_fuse_width_and_errors(rng):
    p = SymAttention(4, 3, rng)
    assert cross_fuse(Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(2, 4))), p).shape == (3, 16)
    with pytest.raises(ag.ShapeError):
        cross_fuse(Tensor(np.ones((3, 4))), Tensor(np.ones((2, 5))), p)
    with pytest.raises(ValueError):
        attention_weights(Tensor(np.ones((3, 4))), Tensor(np.ones((2, 4))), p, np.array([False, False]))


def test_cross_fuse_gradients_match_fd(rng):
    p = SymAttention(4, 4, rng)
    h_a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    h_b = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    coef = Tensor(rng.normal(size=(3, 16)))
    params = {"proj": p.proj, "diag": p.diag, "h_a": h_a, "h_b": h_b}
    p.diag.data[...] = rng.normal(size=4)
    res = check_gradients(lambda: ag.sum_(cross_fuse(h_a, h_b, p) * coef), params, max_entries=None)
    assert res.max_rel_error < 1e-4, res


def test_word_level_cross(rng):
    p = SymAttention(4, 3, rng)
    conv, slot = Tensor(rng.normal(size=(5, 4))), Tensor(rng.normal(size=(1, 4)))
    out = word_level_cross(conv, slot, p).data
    assert out.shape == (5, 8)
    np.testing.assert_allclose(out[:, 4:], np.tile(slot.data, (5, 1)))
    slot2 = Tensor(rng.normal(size=(3, 4)))
    w = attention_weights(conv, slot2, p).data
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-9)
    coef = Tensor(rng.normal(size=(5, 8)))
    res = check_gradients(lambda: ag.sum_(word_level_cross(conv, slot2, p) * coef),
                          {"proj": p.proj, "diag": p.diag}, max_entries=None)
    assert res.ok


def test_self_attention_cases(rng):
    p = SymAttention(3, 4, rng)
    h = rng.normal(size=(1, 3))
    np.testing.assert_allclose(self_attend_fuse(Tensor(h), p).data, np.concatenate([h, h, 2 * h, h * h], axis=1))

    seq = rng.normal(size=(5, 3))
    perm = rng.permutation(5)
    out = self_attend_fuse(Tensor(seq), p).data
    np.testing.assert_allclose(self_attend_fuse(Tensor(seq[perm]), p).data, out[perm], atol=1e-13)

    seq[3] = seq[1]
    w = attention_weights(Tensor(seq), Tensor(seq), p).data
    np.testing.assert_allclose(w[:, 1], w[:, 3])

    coef = Tensor(rng.normal(size=(5, 12)))
    x = Tensor(seq, requires_grad=True)
    res = check_gradients(lambda: ag.sum_(self_attend_fuse(x, p) * coef), {"proj": p.proj, "diag": p.diag, "x": x},
                          max_entries=None)
    assert res.max_rel_error < 1e-4, res


def test_batched_matches_unbatched(rng):
    p = att(rng)
    q, k = rng.normal(size=(3, 2, 4)), rng.normal(size=(3, 5, 4))
    batched = attention_weights(Tensor(q), Tensor(k), p).data
    for i in range(3):
        np.testing.assert_allclose(batched[i], attention_weights(Tensor(q[i]), Tensor(k[i]), p).data, atol=1e-14)
