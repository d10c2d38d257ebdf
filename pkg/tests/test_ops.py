"""Tensor kernel tests: worked examples, brute-force oracles and gradient checks."""

import numpy as np
import pytest

from transnet import ops
from transnet.errors import NumericError
from transnet.ops import ConvKernel

from gradcheck import max_rel_err, numeric_grad


def conv3d_brute(x, weights, bias, dilation):
    """Independent reference convolution: explicit loops over every tap."""
    t_len, h_len, w_len, _ = x.shape
    out_ch = weights.shape[4]
    out = np.zeros((t_len, h_len, w_len, out_ch), dtype=np.float64)
    for t in range(t_len):
        for h in range(h_len):
            for w in range(w_len):
                acc = bias.astype(np.float64).copy()
                for kt in range(3):
                    tt = t + (kt - 1) * dilation
                    if not 0 <= tt < t_len:
                        continue
                    for kh in range(3):
                        hh = h + kh - 1
                        if not 0 <= hh < h_len:
                            continue
                        for kw in range(3):
                            ww = w + kw - 1
                            if not 0 <= ww < w_len:
                                continue
                            acc += x[tt, hh, ww].astype(np.float64) @ weights[kt, kh, kw]
                out[t, h, w] = acc
    return out


def random_kernel(rng, in_ch, out_ch, dilation, dtype=np.float64):
    return ConvKernel(
        weights=rng.standard_normal((3, 3, 3, in_ch, out_ch)).astype(dtype),
        bias=rng.standard_normal(out_ch).astype(dtype),
        temporal_dilation=dilation,
    )


class TestConvForward:
    def test_identity_kernel_passes_value_through(self):
        w = np.zeros((3, 3, 3, 1, 1), dtype=np.float32)
        w[1, 1, 1, 0, 0] = 1.0
        kernel = ConvKernel(w, np.zeros(1, dtype=np.float32))
        x = np.full((1, 1, 1, 1), 7.25, dtype=np.float32)
        out = ops.conv3d_forward(x, kernel)
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == pytest.approx(7.25)

    def test_all_ones_temporal_profile(self):
        # Zero padding: the edge frames see 2 temporal taps, interior 3.
        kernel = ConvKernel(np.ones((3, 3, 3, 1, 1), np.float32), np.zeros(1, np.float32))
        x = np.ones((5, 1, 1, 1), dtype=np.float32)
        out = ops.conv3d_forward(x, kernel)
        assert out[:, 0, 0, 0].tolist() == [2.0, 3.0, 3.0, 3.0, 2.0]

    def test_impulse_with_dilation_8(self):
        kernel = ConvKernel(
            np.ones((3, 3, 3, 1, 1), np.float32), np.zeros(1, np.float32), temporal_dilation=8
        )
        x = np.zeros((17, 1, 1, 1), dtype=np.float32)
        x[8] = 1.0
        out = ops.conv3d_forward(x, kernel)[:, 0, 0, 0]
        assert set(np.flatnonzero(out)) == {0, 8, 16}

    @pytest.mark.parametrize("dilation", [1, 2, 4, 8])
    def test_impulse_support_matches_dilation(self, dilation):
        rng = np.random.default_rng(dilation)
        kernel = random_kernel(rng, 1, 1, dilation, dtype=np.float32)
        kernel.bias[:] = 0
        t_len = 3 + 2 * dilation
        x = np.zeros((t_len, 1, 1, 1), dtype=np.float32)
        t0 = t_len // 2
        x[t0] = 1.0
        out = ops.conv3d_forward(x, kernel)[:, 0, 0, 0]
        nonzero = set(np.flatnonzero(out))
        assert nonzero <= {t0 - dilation, t0, t0 + dilation}

    @pytest.mark.parametrize("dilation", [1, 2, 4])
    def test_matches_brute_force(self, dilation):
        rng = np.random.default_rng(17 + dilation)
        x = rng.standard_normal((6, 4, 5, 2))
        kernel = random_kernel(rng, 2, 3, dilation)
        fast = ops.conv3d_forward(x, kernel)
        brute = conv3d_brute(x, kernel.weights, kernel.bias, dilation)
        np.testing.assert_allclose(fast, brute, rtol=1e-12, atol=1e-12)

    def test_linearity_with_bias_free_kernel(self):
        rng = np.random.default_rng(3)
        kernel = random_kernel(rng, 2, 2, 2)
        kernel.bias[:] = 0
        x = rng.standard_normal((5, 4, 4, 2))
        y = rng.standard_normal((5, 4, 4, 2))
        a, b = 1.7, -0.6
        lhs = ops.conv3d_forward(a * x + b * y, kernel)
        rhs = a * ops.conv3d_forward(x, kernel) + b * ops.conv3d_forward(y, kernel)
        np.testing.assert_allclose(lhs, rhs, atol=1e-5)

    def test_channel_mismatch_names_both_shapes(self):
        rng = np.random.default_rng(0)
        kernel = random_kernel(rng, 4, 2, 1)
        with pytest.raises(ValueError, match=r"\(2, 2, 2, 3\).*\(3, 3, 3, 4, 2\)"):
            ops.conv3d_forward(np.zeros((2, 2, 2, 3)), kernel)


class TestConvBackward:
    def test_zero_grad_out_gives_zero_grads(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((4, 3, 3, 2))
        kernel = random_kernel(rng, 2, 3, 2)
        gx, gw, gb = ops.conv3d_backward(x, kernel, np.zeros((4, 3, 3, 3)))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_identity_kernel_grad_passthrough(self):
        w = np.zeros((3, 3, 3, 1, 1))
        w[1, 1, 1, 0, 0] = 1.0
        kernel = ConvKernel(w, np.zeros(1))
        x = np.random.default_rng(2).standard_normal((4, 2, 2, 1))
        grad_out = np.random.default_rng(3).standard_normal((4, 2, 2, 1))
        gx, _, _ = ops.conv3d_backward(x, kernel, grad_out)
        np.testing.assert_array_equal(gx, grad_out)

    def test_grad_bias_sums_positions(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((3, 4, 4, 2))
        kernel = random_kernel(rng, 2, 3, 1)
        grad_out = rng.standard_normal((3, 4, 4, 3))
        _, _, gb = ops.conv3d_backward(x, kernel, grad_out)
        np.testing.assert_allclose(gb, grad_out.sum(axis=(0, 1, 2)))

    def test_finite_differences_64bit(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((6, 4, 4, 2))
        kernel = random_kernel(rng, 2, 3, 2)
        upstream = rng.standard_normal((6, 4, 4, 3))

        def loss():
            return float(np.sum(upstream * ops.conv3d_forward(x, kernel)))

        gx, gw, gb = ops.conv3d_backward(x, kernel, upstream)
        assert max_rel_err(gx, numeric_grad(loss, x)) < 1e-6
        assert max_rel_err(gw, numeric_grad(loss, kernel.weights)) < 1e-6
        assert max_rel_err(gb, numeric_grad(loss, kernel.bias)) < 1e-6

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((4, 3, 3, 2))
        kernel = random_kernel(rng, 2, 3, 1)
        with pytest.raises(ValueError, match="grad_out"):
            ops.conv3d_backward(x, kernel, np.zeros((4, 3, 3, 2)))


def pool_friendly(rng, shape):
    """Random values with spacing far above the FD step, so every pooling
    window has a unique maximum."""
    flat = rng.permutation(np.prod(shape)).astype(np.float64)
    return (0.1 * flat).reshape(shape)


class TestMaxPool:
    def test_window_max(self):
        x = np.array([1.0, 5.0, 3.0, 2.0], dtype=np.float32).reshape(1, 2, 2, 1)
        out = ops.maxpool3d_forward(x)
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 5.0

    def test_odd_extent_floor(self):
        x = np.zeros((2, 27, 48, 3), dtype=np.float32)
        assert ops.maxpool3d_forward(x).shape == (2, 13, 24, 3)

    @pytest.mark.parametrize("h,w", [(2, 2), (3, 5), (8, 9), (27, 48)])
    def test_floor_semantics_all_extents(self, h, w):
        x = np.random.default_rng(h * 100 + w).standard_normal((1, h, w, 1))
        assert ops.maxpool3d_forward(x).shape == (1, h // 2, w // 2, 1)

    def test_constant_input_constant_output(self):
        x = np.full((3, 4, 6, 2), 2.5, dtype=np.float32)
        assert (ops.maxpool3d_forward(x) == 2.5).all()

    def test_backward_routes_to_argmax(self):
        x = np.array([1.0, 5.0, 3.0, 2.0]).reshape(1, 2, 2, 1)
        g = ops.maxpool3d_backward(x, np.full((1, 1, 1, 1), 4.0))
        np.testing.assert_array_equal(g.ravel(), [0.0, 4.0, 0.0, 0.0])

    def test_tie_breaks_to_first_in_scan_order(self):
        x = np.array([7.0, 7.0, 0.0, 0.0]).reshape(1, 2, 2, 1)
        g = ops.maxpool3d_backward(x, np.full((1, 1, 1, 1), 3.0))
        np.testing.assert_array_equal(g.ravel(), [3.0, 0.0, 0.0, 0.0])

    def test_finite_differences_unique_maxima(self):
        rng = np.random.default_rng(7)
        x = pool_friendly(rng, (4, 6, 6, 3))
        upstream = rng.standard_normal((4, 3, 3, 3))

        def loss():
            return float(np.sum(upstream * ops.maxpool3d_forward(x)))

        gx = ops.maxpool3d_backward(x, upstream)
        assert max_rel_err(gx, numeric_grad(loss, x)) < 1e-6

    def test_small_extent_rejected(self):
        with pytest.raises(ValueError, match="H >= 2"):
            ops.maxpool3d_forward(np.zeros((1, 1, 4, 1)))

    def test_backward_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="pooled shape"):
            ops.maxpool3d_backward(np.zeros((1, 4, 4, 1)), np.zeros((1, 4, 4, 1)))


class TestDense:
    def test_identity_weights(self):
        x = np.random.default_rng(8).standard_normal((3, 4)).astype(np.float32)
        out = ops.dense_forward(x, np.eye(4, dtype=np.float32), np.zeros(4, np.float32))
        np.testing.assert_array_equal(out, x)

    def test_rows_are_independent_and_shared(self):
        rng = np.random.default_rng(9)
        w = rng.standard_normal((4, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        row = rng.standard_normal(4).astype(np.float32)
        x = np.stack([row, row])
        out = ops.dense_forward(x, w, b)
        np.testing.assert_array_equal(out[0], out[1])

    def test_finite_differences(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((5, 4))
        w = rng.standard_normal((4, 3))
        b = rng.standard_normal(3)
        upstream = rng.standard_normal((5, 3))

        def loss():
            return float(np.sum(upstream * ops.dense_forward(x, w, b)))

        gx, gw, gb = ops.dense_backward(x, w, upstream)
        assert max_rel_err(gx, numeric_grad(loss, x)) < 1e-6
        assert max_rel_err(gw, numeric_grad(loss, w)) < 1e-6
        assert max_rel_err(gb, numeric_grad(loss, b)) < 1e-6

    def test_inner_extent_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not match"):
            ops.dense_forward(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2))


class TestRelu:
    def test_forward(self):
        np.testing.assert_array_equal(
            ops.relu(np.array([-1.0, 0.0, 2.0])), np.array([0.0, 0.0, 2.0])
        )

    def test_backward_zero_at_zero(self):
        g = ops.relu_backward(np.array([-1.0, 0.0, 2.0]), np.array([5.0, 5.0, 5.0]))
        np.testing.assert_array_equal(g, [0.0, 0.0, 5.0])

    def test_finite_differences_away_from_zero(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0.05, 1.0, size=24) * rng.choice([-1.0, 1.0], size=24)
        upstream = rng.standard_normal(24)

        def loss():
            return float(np.sum(upstream * ops.relu(x)))

        gx = ops.relu_backward(x, upstream)
        assert max_rel_err(gx, numeric_grad(loss, x)) < 1e-6


class TestSoftmax:
    def test_symmetric_row(self):
        out = ops.softmax_rows(np.array([[0.0, 0.0]]))
        np.testing.assert_allclose(out, [[0.5, 0.5]])

    def test_large_equal_logits_no_overflow(self):
        out = ops.softmax_rows(np.array([[1000.0, 1000.0]]))
        np.testing.assert_allclose(out, [[0.5, 0.5]])

    def test_log3_gap(self):
        out = ops.softmax_rows(np.array([[0.0, np.log(3.0)]]))
        np.testing.assert_allclose(out, [[0.25, 0.75]], atol=1e-12)

    def test_rows_sum_to_one_extreme_logits(self):
        rng = np.random.default_rng(12)
        logits = rng.uniform(-1e4, 1e4, size=(64, 2))
        out = ops.softmax_rows(logits)
        assert (out >= 0).all()
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)


class TestCrossEntropy:
    def test_uniform_logits_give_ln2(self):
        loss, _ = ops.cross_entropy_from_logits(np.array([[0.0, 0.0]]), np.array([False]))
        assert loss == pytest.approx(np.log(2.0))

    def test_loss_vanishes_monotonically_with_confidence(self):
        gaps = [1.0, 2.0, 4.0, 8.0, 16.0]
        losses = []
        for gap in gaps:
            loss, _ = ops.cross_entropy_from_logits(np.array([[0.0, gap]]), np.array([True]))
            losses.append(loss)
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert losses[-1] < 1e-6

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        logits = rng.standard_normal((7, 2))
        labels = rng.random(7) < 0.5

        def loss():
            return ops.cross_entropy_from_logits(logits, labels)[0]

        _, grad = ops.cross_entropy_from_logits(logits, labels)
        assert max_rel_err(grad, numeric_grad(loss, logits)) < 1e-6

    def test_non_finite_logits_rejected(self):
        with pytest.raises(NumericError, match="non-finite"):
            ops.cross_entropy_from_logits(np.array([[np.inf, 0.0]]), np.array([True]))

    def test_label_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            ops.cross_entropy_from_logits(np.zeros((3, 2)), np.array([True]))


class TestGradientSuiteRandomized:
    """Spec-level invariant: every backward pass agrees with central finite
    differences on random 64-bit instances with dims <= 8."""

    @pytest.mark.parametrize("seed", range(5))
    def test_conv_random_instances(self, seed):
        rng = np.random.default_rng(100 + seed)
        t, h, w = rng.integers(2, 8, size=3)
        ci, co = rng.integers(1, 4, size=2)
        dilation = int(rng.choice([1, 2, 4, 8]))
        x = rng.standard_normal((t, h, w, ci))
        kernel = random_kernel(rng, ci, co, dilation)
        upstream = rng.standard_normal((t, h, w, co))

        def loss():
            return float(np.sum(upstream * ops.conv3d_forward(x, kernel)))

        gx, gw, gb = ops.conv3d_backward(x, kernel, upstream)
        assert max_rel_err(gx, numeric_grad(loss, x)) < 1e-4
        assert max_rel_err(gw, numeric_grad(loss, kernel.weights)) < 1e-4
        assert max_rel_err(gb, numeric_grad(loss, kernel.bias)) < 1e-4
