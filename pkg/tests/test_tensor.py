"""Tensor engine semantics: forward values, gradients, and graph behavior.

Expected gradients here are hand-derived from the calculus of each operation;
the systematic finite-difference sweep lives in test_acceptance (criterion 2)
and mclswt.gradcheck.
"""

import math

import numpy as np
import pytest

from mclswt.errors import DimensionError, NumericError
from mclswt.tensor import (
    BatchNormState,
    Tensor,
    avg_pool_time,
    batch_norm,
    clamp_max,
    conv2d_valid,
    elementwise,
    gelu,
    layer_norm,
    linear,
    log,
    matmul,
    mean_all,
    no_grad,
    pairwise_distance,
    pick_class,
    reshape,
    roll,
    softmax_lastdim,
    square,
    sum_all,
    transpose,
)


def leaf(data):
    return Tensor(np.asarray(data, dtype=float), requires_grad=True)


# ---------------------------------------------------------------------------
# arithmetic and broadcasting
# ---------------------------------------------------------------------------


def test_add_mul_values_and_operators():
    x = Tensor([1.0, 2.0])
    y = Tensor([3.0, 5.0])
    assert np.array_equal((x + y).data, [4.0, 7.0])
    assert np.array_equal((x * y).data, [3.0, 10.0])
    assert np.array_equal((x - y).data, [-2.0, -3.0])
    assert np.array_equal((-x).data, [-1.0, -2.0])
    assert np.array_equal((2.0 + x).data, [3.0, 4.0])
    assert np.array_equal((2.0 * x).data, [2.0, 4.0])
    assert np.array_equal((2.0 - x).data, [1.0, 0.0])


def test_add_broadcast_gradient_unbroadcasts():
    x = leaf(np.ones(3))
    y = leaf(np.ones((2, 3)))
    (x + y).sum().backward()
    # x is broadcast over 2 rows, so its gradient sums them
    assert np.array_equal(x.grad, [2.0, 2.0, 2.0])
    assert np.array_equal(y.grad, np.ones((2, 3)))


def test_mul_gradient_is_other_factor():
    x = leaf([1.0, 2.0])
    y = leaf([3.0, 5.0])
    (x * y).sum().backward()
    assert np.array_equal(x.grad, [3.0, 5.0])
    assert np.array_equal(y.grad, [1.0, 2.0])


def test_reuse_accumulates_gradient():
    x = leaf([1.0, 2.0])
    (x + x).sum().backward()
    assert np.array_equal(x.grad, [2.0, 2.0])


def test_matmul_batched_matches_numpy(rng):
    a = rng.standard_normal((2, 3, 4, 5))
    b = rng.standard_normal((2, 3, 5, 6))
    out = matmul(Tensor(a), Tensor(b))
    assert out.shape == (2, 3, 4, 6)
    np.testing.assert_allclose(out.data, a @ b, rtol=1e-12)


def test_matmul_gradients():
    a = leaf([[1.0, 2.0]])
    b = leaf([[3.0], [4.0]])
    (a @ b).sum().backward()
    assert np.array_equal(a.grad, [[3.0, 4.0]])
    assert np.array_equal(b.grad, [[1.0], [2.0]])


def test_reshape_transpose_roundtrip(rng):
    x = leaf(rng.standard_normal((2, 3, 4)))
    y = transpose(reshape(x, (2, 12)), (1, 0))
    assert y.shape == (12, 2)
    y.sum().backward()
    assert np.array_equal(x.grad, np.ones((2, 3, 4)))


def test_roll_forward_and_gradient(rng):
    data = rng.standard_normal((2, 6, 3))
    x = leaf(data)
    y = roll(x, 2, axis=1)
    np.testing.assert_array_equal(y.data, np.roll(data, 2, axis=1))
    # roll is a permutation: weighting the output rolls the weights back
    w = rng.standard_normal((2, 6, 3))
    (y * Tensor(w)).sum().backward()
    np.testing.assert_array_equal(x.grad, np.roll(w, -2, axis=1))


# ---------------------------------------------------------------------------
# affine maps and convolution
# ---------------------------------------------------------------------------


def test_linear_identity_map(rng):
    x = Tensor(rng.standard_normal((4, 3)))
    out = linear(x, Tensor(np.eye(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, x.data)


def test_linear_matches_manual_affine(rng):
    x = rng.standard_normal((2, 5, 3))
    w = rng.standard_normal((3, 4))
    b = rng.standard_normal(4)
    out = linear(Tensor(x), Tensor(w), Tensor(b))
    np.testing.assert_allclose(out.data, x @ w + b, rtol=1e-12)


def test_conv2d_box_kernel_sums_adjacent_samples():
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 4, 1))
    k = Tensor(np.array([1.0, 1.0]).reshape(1, 1, 2, 1))
    out = conv2d_valid(x, k, Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data.ravel(), [3.0, 5.0, 7.0])


def test_conv2d_default_feature_shape():
    x = Tensor(np.zeros((2, 1, 1120, 3)))
    k = Tensor(np.zeros((40, 1, 25, 1)))
    out = conv2d_valid(x, k, Tensor(np.zeros(40)))
    assert out.shape == (2, 40, 1096, 3)


def test_conv2d_adds_bias_per_channel():
    x = Tensor(np.zeros((1, 1, 4, 2)))
    k = Tensor(np.zeros((3, 1, 2, 1)))
    out = conv2d_valid(x, k, Tensor(np.array([1.0, 2.0, 3.0])))
    for c, expect in enumerate([1.0, 2.0, 3.0]):
        assert np.all(out.data[:, c] == expect)


def test_conv2d_channel_mismatch_raises(rng):
    x = Tensor(rng.standard_normal((1, 2, 6, 3)))
    k = Tensor(rng.standard_normal((4, 3, 2, 1)))  # kernel expects 3 in-channels
    with pytest.raises(DimensionError):
        conv2d_valid(x, k, Tensor(np.zeros(4)))


def test_conv2d_kernel_larger_than_input_raises(rng):
    x = Tensor(rng.standard_normal((1, 1, 4, 1)))
    k = Tensor(rng.standard_normal((1, 1, 6, 1)))
    with pytest.raises(DimensionError):
        conv2d_valid(x, k, Tensor(np.zeros(1)))


# ---------------------------------------------------------------------------
# normalizations
# ---------------------------------------------------------------------------


def test_batch_norm_train_standardizes_per_channel(rng):
    x = Tensor(rng.standard_normal((8, 3, 5, 2)) * 4.0 + 7.0)
    state = BatchNormState.create(3)
    out = batch_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), state, mode="train")
    mean = out.data.mean(axis=(0, 2, 3))
    var = out.data.var(axis=(0, 2, 3))
    assert np.all(np.abs(mean) < 1e-5)
    assert np.all(np.abs(var - 1.0) < 1e-4)


def test_batch_norm_constant_input_maps_to_zero():
    x = Tensor(np.full((4, 2, 3, 3), 5.0))
    state = BatchNormState.create(2)
    out = batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), state, mode="train")
    assert np.all(np.abs(out.data) < 1e-5)


def test_batch_norm_eval_uses_running_stats(rng):
    state = BatchNormState.create(2)
    state.running_mean[:] = [1.0, -1.0]
    state.running_var[:] = [4.0, 9.0]
    x = rng.standard_normal((3, 2, 2, 2))
    out = batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)),
                     state, mode="eval")
    expect = (x - np.array([1.0, -1.0]).reshape(1, 2, 1, 1)) / np.sqrt(
        np.array([4.0, 9.0]).reshape(1, 2, 1, 1) + state.eps)
    np.testing.assert_allclose(out.data, expect, rtol=1e-12)


def test_batch_norm_updates_running_stats(rng):
    state = BatchNormState.create(1, momentum=0.5)
    x = rng.standard_normal((16, 1, 10, 1)) + 3.0
    batch_norm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), state, mode="train")
    expect_mean = 0.5 * 0.0 + 0.5 * x.mean()
    assert abs(state.running_mean[0] - expect_mean) < 1e-12


def test_batch_norm_degenerate_batch_raises():
    state = BatchNormState.create(2)
    with pytest.raises(DimensionError):
        batch_norm(Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.ones(2)),
                   Tensor(np.zeros(2)), state, mode="train")


def test_batch_norm_bad_mode_raises():
    state = BatchNormState.create(1)
    with pytest.raises(ValueError):
        batch_norm(Tensor(np.zeros((2, 1, 2, 2))), Tensor(np.ones(1)),
                   Tensor(np.zeros(1)), state, mode="test")


def test_layer_norm_constant_row_maps_to_zero():
    x = Tensor(np.full((2, 5, 4), 3.0))
    out = layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
    assert np.all(np.abs(out.data) < 1e-6)


def test_layer_norm_affine_applied(rng):
    x = rng.standard_normal((3, 4))
    gamma, beta = np.array([1.0, 2.0, 3.0, 4.0]), np.array([5.0, 6.0, 7.0, 8.0])
    out = layer_norm(Tensor(x), Tensor(gamma), Tensor(beta))
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    expect = gamma * (x - mean) / np.sqrt(var + 1e-5) + beta
    np.testing.assert_allclose(out.data, expect, rtol=1e-12)


def test_layer_norm_shape_mismatch_raises(rng):
    with pytest.raises(DimensionError):
        layer_norm(Tensor(rng.standard_normal((2, 4))),
                   Tensor(np.ones(3)), Tensor(np.zeros(3)))


# ---------------------------------------------------------------------------
# softmax and elementwise
# ---------------------------------------------------------------------------


def test_softmax_symmetry_and_analytic_values():
    out = softmax_lastdim(Tensor([0.0, 0.0]))
    np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-15)
    out = softmax_lastdim(Tensor([0.0, math.log(2.0)]))
    np.testing.assert_allclose(out.data, [1.0 / 3.0, 2.0 / 3.0], atol=1e-12)


def test_softmax_rows_sum_to_one(rng):
    x = rng.standard_normal((4, 7, 5)) * 30.0  # large logits stress stability
    out = softmax_lastdim(Tensor(x))
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)
    # extreme rows can round to exactly 1.0 in double precision
    assert np.all(out.data > 0.0) and np.all(out.data <= 1.0)


def test_softmax_nan_input_raises():
    with pytest.raises(NumericError):
        softmax_lastdim(Tensor([1.0, float("nan")]))


def test_square_and_log_values():
    np.testing.assert_array_equal(square(Tensor([-2.0, 3.0])).data, [4.0, 9.0])
    np.testing.assert_allclose(log(Tensor([1.0, math.e])).data, [0.0, 1.0],
                               atol=1e-15)


def test_log_rejects_non_positive():
    with pytest.raises(NumericError):
        log(Tensor([1.0, 0.0]))
    with pytest.raises(NumericError):
        log(Tensor([-1.0]))


def test_gelu_fixed_point_and_gaussian_cdf_value():
    assert gelu(Tensor([0.0])).data[0] == 0.0
    # x * Phi(x) with Phi from the stdlib error function
    phi3 = 0.5 * (1.0 + math.erf(3.0 / math.sqrt(2.0)))
    np.testing.assert_allclose(gelu(Tensor([3.0])).data[0], 3.0 * phi3,
                               rtol=1e-12)
    assert abs(gelu(Tensor([3.0])).data[0] - 2.9960) < 1e-4


def test_elementwise_dispatch():
    x = Tensor([1.0, 4.0])
    np.testing.assert_array_equal(elementwise(x, "square").data, [1.0, 16.0])
    with pytest.raises(ValueError):
        elementwise(x, "tanh")


# ---------------------------------------------------------------------------
# pooling, reductions, loss primitives
# ---------------------------------------------------------------------------


def test_avg_pool_time_hand_values():
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 4))
    out = avg_pool_time(x, 2, 2)
    np.testing.assert_array_equal(out.data.ravel(), [1.5, 3.5])


def test_avg_pool_time_constant_and_reference_length():
    x = Tensor(np.full((2, 3, 20), 7.0))
    out = avg_pool_time(x, 5, 3)
    assert np.all(out.data == 7.0)
    out = avg_pool_time(Tensor(np.zeros((1, 1, 1096))), 75, 15)
    assert out.shape == (1, 1, 69)


def test_avg_pool_time_window_too_large_raises():
    with pytest.raises(DimensionError):
        avg_pool_time(Tensor(np.zeros((1, 1, 4))), 5, 1)


def test_avg_pool_gradient_spreads_mean():
    x = leaf(np.arange(4.0).reshape(1, 1, 4))
    avg_pool_time(x, 2, 2).sum().backward()
    np.testing.assert_array_equal(x.grad.ravel(), [0.5, 0.5, 0.5, 0.5])


def test_sum_mean_gradients():
    x = leaf([1.0, 2.0, 3.0, 4.0])
    sum_all(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones(4))
    y = leaf([1.0, 2.0, 3.0, 4.0])
    mean_all(y).backward()
    np.testing.assert_array_equal(y.grad, np.full(4, 0.25))


def test_pick_class_selects_and_routes_gradient():
    p = leaf([[0.9, 0.1], [0.2, 0.8], [0.4, 0.6]])
    out = pick_class(p, np.array([0, 1, 0]))
    np.testing.assert_array_equal(out.data, [0.9, 0.8, 0.4])
    out.sum().backward()
    np.testing.assert_array_equal(p.grad, [[1, 0], [0, 1], [1, 0]])


def test_pick_class_label_length_mismatch_raises():
    with pytest.raises(DimensionError):
        pick_class(Tensor(np.zeros((3, 2))), np.array([0, 1]))


def test_pairwise_distance_three_four_five():
    emb = Tensor([[0.0, 0.0], [3.0, 4.0]])
    out = pairwise_distance(emb, np.array([0]), np.array([1]))
    np.testing.assert_allclose(out.data, [5.0], atol=1e-9)


def test_pairwise_distance_gradient_is_unit_difference():
    emb = leaf([[0.0, 0.0], [3.0, 4.0]])
    pairwise_distance(emb, np.array([0]), np.array([1])).sum().backward()
    # d|e_i - e_j| / d e_i is the unit vector from e_j to e_i
    np.testing.assert_allclose(emb.grad, [[-0.6, -0.8], [0.6, 0.8]], atol=1e-9)


def test_clamp_max_values_and_gradient_mask():
    x = leaf([1.0, 5.0, 3.0])
    out = clamp_max(x, 3.0)
    np.testing.assert_array_equal(out.data, [1.0, 3.0, 3.0])
    out.sum().backward()
    # gradient flows only where x < cap (the 3.0 entry sits on the cap)
    np.testing.assert_array_equal(x.grad, [1.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# backward semantics
# ---------------------------------------------------------------------------


def test_backward_sum_of_squares():
    x = leaf([1.0, 2.0])
    square(x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_backward_requires_scalar():
    x = leaf([1.0, 2.0])
    with pytest.raises(DimensionError):
        (x * x).backward()


def test_backward_deterministic_bitwise(rng):
    data = rng.standard_normal((5, 4))
    grads = []
    for _ in range(2):
        x = leaf(data.copy())
        softmax_lastdim(x * x).sum().backward()
        grads.append(x.grad.copy())
    assert np.array_equal(grads[0], grads[1])


def test_backward_frees_graph_and_keeps_leaf_grads():
    x = leaf([1.0, 2.0])
    y = x * x
    loss = y.sum()
    loss.backward()
    assert np.array_equal(x.grad, [2.0, 4.0])
    # interior nodes release their closures so the graph can be reclaimed;
    # a second backward over the same graph is not supported
    assert y._backward is None and y._parents == ()


def test_no_grad_blocks_graph_recording():
    x = leaf([1.0, 2.0])
    with no_grad():
        y = x * x
    assert not y.requires_grad and y._parents == ()
    z = x * x  # recording resumes after the block
    assert z.requires_grad
    z.sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_constant_inputs_build_no_graph():
    a = Tensor([1.0, 2.0])
    b = Tensor([3.0, 4.0])
    out = a * b
    assert not out.requires_grad and out._parents == ()
