import numpy as np
import pytest

import leci.tensor as T
from leci.errors import ContractError
from leci.tensor import Rng, Tensor

from fdcheck import gradcheck, max_rel_err


# ---------------------------------------------------------------------------
# backward basics


def test_backward_square_sum():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = T.sum_all(T.mul(x, x))
    loss.backward()
    assert np.allclose(x.grad, [2.0, 4.0, 6.0])


def test_backward_sum_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    T.backward(T.sum_all(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_backward_sigmoid_matches_finite_differences():
    x = np.array([0.5, -1.2])
    err = gradcheck(lambda t: T.sum_all(T.sigmoid(t)), x, step=1e-4, tol=1e-6)
    assert err < 1e-6


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        T.backward(T.mul(x, x))


def test_backward_twice_accumulates_exactly_double():
    x = Tensor([1.5, -0.5, 2.0], requires_grad=True)

    def build():
        return T.sum_all(T.mul(T.sigmoid(x), x))

    loss = build()
    T.backward(loss)
    once = x.grad.copy()
    T.backward(build())
    assert np.array_equal(x.grad, 2.0 * once)


def test_gradients_accumulate_across_paths():
    x = Tensor([2.0], requires_grad=True)
    y = T.add(T.mul(x, 3.0), T.mul(x, x))  # 3x + x^2 -> dy/dx = 3 + 2x = 7
    T.backward(T.sum_all(y))
    assert np.allclose(x.grad, [7.0])


# ---------------------------------------------------------------------------
# per-op finite-difference checks (the A1 backbone, exercised per op here)


def _rand(shape, seed):
    return Rng(seed).uniform(size=shape, low=-1.5, high=1.5)


@pytest.mark.parametrize("name,build,shape", [
    ("add", lambda t: T.sum_all(T.mul(T.add(t, 0.3), T.add(t, 0.3))), (4, 3)),
    ("mul", lambda t: T.sum_all(T.mul(t, T.sigmoid(t))), (5,)),
    ("matmul", lambda t: T.sum_all(T.matmul(t, _rand((3, 2), 7))), (4, 3)),
    ("relu", lambda t: T.sum_all(T.relu(t)), (6,)),
    ("sigmoid", lambda t: T.sum_all(T.sigmoid(t)), (4, 2)),
    ("log", lambda t: T.sum_all(T.log(T.add(T.sigmoid(t), 0.1))), (5,)),
    ("mean_all", lambda t: T.mean_all(T.mul(t, t)), (3, 3)),
    ("concat_last",
     lambda t: T.sum_all(T.mul(c := T.concat_last_dim(t, T.sigmoid(t)), c)), (3, 2)),
    ("concat_rows", lambda t: T.sum_all(T.mul(c := T.concat_rows(t, T.mul(t, 2.0)), c)), (3, 2)),
    ("slice_rows", lambda t: T.sum_all(T.mul(s := T.slice_rows(t, 2), s)), (4, 3)),
    ("gather_rows", lambda t: T.sum_all(T.mul(g := T.gather_rows(t, [0, 2, 2, 1]), g)), (3, 2)),
    ("unsqueeze", lambda t: T.sum_all(T.mul(T.unsqueeze_last(t), T.unsqueeze_last(t))), (4,)),
    ("squeeze", lambda t: T.sum_all(T.mul(s := T.squeeze_last(t), s)), (4, 1)),
    ("segment_sum", lambda t: T.sum_all(T.mul(s := T.segment_sum(t, [0, 0, 1, 2], 3), s)), (4, 2)),
    ("segment_mean", lambda t: T.sum_all(T.mul(s := T.segment_mean(t, [0, 0, 1, 1], 2), s)), (4, 2)),
    ("log_softmax", lambda t: T.nll_loss(T.log_softmax(t), [0, 2, 1]), (3, 3)),
])
def test_op_gradients_match_finite_differences(name, build, shape):
    err = gradcheck(build, _rand(shape, seed=42), step=1e-4, tol=1e-4)
    assert err < 1e-4


def test_broadcast_add_bias_gradient():
    w = _rand((4, 3), 11)

    def build(b):
        return T.sum_all(T.sigmoid(T.add(Tensor(w), b)))

    gradcheck(build, _rand((3,), 12))


def test_dropout_gradient_with_frozen_mask():
    def build(t):
        return T.sum_all(T.dropout(t, 0.5, train=True, rng=Rng(99)))

    gradcheck(build, _rand((6, 4), 13))


def test_matmul_identity():
    m = _rand((3, 3), 5)
    out = T.matmul(Tensor(np.eye(3)), Tensor(m))
    assert np.allclose(out.data, m)


def test_matmul_shape_mismatch_raises():
    with pytest.raises(ContractError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_sigmoid_at_zero():
    assert T.sigmoid(Tensor([0.0])).data[0] == 0.5


def test_one_hot_logits_give_near_zero_loss():
    logits = Tensor([[10.0, -10.0, -10.0]])
    loss = T.nll_loss(T.log_softmax(logits), [0])
    assert loss.data <= 1e-4


def test_uniform_logits_give_log_k_loss():
    logits = Tensor(np.zeros((5, 3)))
    loss = T.nll_loss(T.log_softmax(logits), [0, 1, 2, 0, 1])
    assert abs(loss.data - np.log(3)) < 1e-12


def test_dropout_eval_mode_is_identity():
    x = Tensor(_rand((5, 2), 3))
    assert np.array_equal(T.dropout(x, 0.5, train=False).data, x.data)


def test_dropout_inverted_scaling_preserves_mean():
    x = Tensor(np.ones((200, 50)))
    out = T.dropout(x, 0.4, train=True, rng=Rng(7))
    kept = out.data[out.data > 0]
    assert np.allclose(kept, 1.0 / 0.6)
    assert abs(out.data.mean() - 1.0) < 0.02


def test_segment_ops_reject_bad_lengths():
    with pytest.raises(ContractError):
        T.segment_sum(Tensor(np.ones((3, 2))), [0, 1], 2)
    with pytest.raises(ContractError):
        T.segment_mean(Tensor(np.ones((2, 2))), [0, 0], 2)  # empty segment 1


# ---------------------------------------------------------------------------
# gradient reversal


def test_grad_reverse_forward_is_identity():
    x = Tensor([3.0, -1.0], requires_grad=True)
    assert np.array_equal(T.grad_reverse(x, 0.5).data, [3.0, -1.0])


def test_grad_reverse_unit_lambda_gives_minus_ones():
    x = Tensor(_rand((4,), 1), requires_grad=True)
    T.backward(T.sum_all(T.grad_reverse(x, 1.0)))
    assert np.array_equal(x.grad, -np.ones(4))


def test_grad_reverse_zero_lambda_blocks_gradient():
    x = Tensor(_rand((4,), 2), requires_grad=True)
    T.backward(T.sum_all(T.mul(s := T.sigmoid(T.grad_reverse(x, 0.0)), s)))
    assert np.array_equal(x.grad, np.zeros(4))


@pytest.mark.parametrize("lam", [0.5, 2.0, 8.0])
def test_grad_reverse_scales_downstream_gradient_exactly(lam):
    # power-of-two lambdas: scaling commutes with every float op exactly
    x0 = _rand((5,), 21)
    w = _rand((5, 4), 22)

    def run(with_reversal):
        x = Tensor(x0.copy(), requires_grad=True)
        inner = T.grad_reverse(x, lam) if with_reversal else x
        h = T.sigmoid(T.matmul(T.unsqueeze_last(inner), Tensor(w[:1])))
        T.backward(T.mean_all(T.mul(h, h)))
        return x.grad

    assert np.array_equal(run(True), -lam * run(False))


def test_grad_reverse_rejects_negative_lambda():
    with pytest.raises(ContractError):
        T.grad_reverse(Tensor([1.0]), -0.1)


# ---------------------------------------------------------------------------
# gumbel-sigmoid


def test_gumbel_hard_mode_is_binary():
    out = T.gumbel_sigmoid(Tensor(np.zeros(1000)), tau=1.0, hard=True, rng=Rng(3))
    assert set(np.unique(out.data)) <= {0.0, 1.0}


def test_gumbel_soft_mean_at_zero_logit():
    out = T.gumbel_sigmoid(Tensor(np.zeros(100_000)), tau=1.0, rng=Rng(4))
    assert abs(out.data.mean() - 0.5) < 0.01
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def test_gumbel_soft_mean_saturates_at_large_logit():
    out = T.gumbel_sigmoid(Tensor(np.full(100_000, 10.0)), tau=1.0, rng=Rng(5))
    assert out.data.mean() >= 0.99


@pytest.mark.parametrize("logit", [-2.0, 0.0, 2.0])
def test_gumbel_hard_mean_matches_sigmoid(logit):
    # P(logit + logistic noise > 0) = sigmoid(logit), so hard draws are
    # Bernoulli(sigmoid(logit)) exactly
    out = T.gumbel_sigmoid(Tensor(np.full(100_000, logit)), tau=1.0, hard=True,
                           rng=Rng(6))
    assert abs(out.data.mean() - 1 / (1 + np.exp(-logit))) < 0.01


def test_gumbel_hard_mean_error_shrinks_like_sqrt_n():
    # O(1/sqrt(N)) convergence: average |error| over repeats drops with N
    sig = 0.5
    errs = {}
    for n in (100, 10_000):
        samples = []
        for rep in range(20):
            out = T.gumbel_sigmoid(Tensor(np.zeros(n)), tau=1.0, hard=True,
                                   rng=Rng(7).fork(n).fork(rep))
            samples.append(abs(out.data.mean() - sig))
        errs[n] = np.mean(samples)
    ratio = errs[100] / errs[10_000]
    assert 3.0 < ratio < 30.0  # ideal sqrt(10000/100) = 10


def test_gumbel_gradient_matches_finite_differences():
    def build(t):
        return T.sum_all(T.mul(g := T.gumbel_sigmoid(t, 0.7, rng=Rng(8)), g))

    gradcheck(build, _rand((6,), 30))


def test_gumbel_rejects_bad_tau():
    with pytest.raises(ContractError):
        T.gumbel_sigmoid(Tensor([0.0]), tau=0.0, rng=Rng(1))


# ---------------------------------------------------------------------------
# Rng contract


def test_rng_same_seed_same_stream():
    assert np.array_equal(Rng(5).uniform(size=10), Rng(5).uniform(size=10))


def test_rng_fork_is_call_order_independent():
    r = Rng(5)
    a_first = r.fork("a").uniform(size=4)
    b_after = r.fork("b").uniform(size=4)
    r2 = Rng(5)
    b_first = r2.fork("b").uniform(size=4)
    a_after = r2.fork("a").uniform(size=4)
    assert np.array_equal(a_first, a_after)
    assert np.array_equal(b_after, b_first)


def test_rng_forks_are_distinct_and_nested():
    r = Rng(5)
    assert not np.array_equal(r.fork(0).uniform(size=4), r.fork(1).uniform(size=4))
    assert not np.array_equal(r.fork(0).fork(1).uniform(size=4),
                              r.fork(1).fork(0).uniform(size=4))
