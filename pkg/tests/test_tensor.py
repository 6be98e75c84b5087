"""Layer primitive tests: hand-derived cases, independent summation
oracles, and finite-difference checks of every backward pass."""

import math

import numpy as np
import pytest

from iarn.errors import ConfigError, DimensionError, NumericError
from iarn.tensor import (
    ConvParams,
    TensorCL,
    affine_backward,
    affine_forward,
    conv1d_backward,
    conv1d_forward,
    grad_check,
    relu_backward,
    relu_forward,
    softmax_length_backward,
    softmax_length_forward,
)


def conv_by_summation(x, weights, bias):
    """Direct-summation convolution oracle: explicit loops over a
    zero-padded input, no shared code with the implementation."""
    out_c, in_c, k = len(weights), len(weights[0]), len(weights[0][0])
    length = len(x[0])
    pad = (k - 1) // 2
    out = [[0.0] * length for _ in range(out_c)]
    for o in range(out_c):
        for t in range(length):
            acc = bias[o]
            for i in range(in_c):
                for j in range(k):
                    src = t + j - pad
                    if 0 <= src < length:
                        acc += weights[o][i][j] * x[i][src]
            out[o][t] = acc
    return out


def rand_conv(rng, out_c, in_c, k, zero_bias=False):
    return ConvParams(
        weights=rng.uniform(-1, 1, size=(out_c, in_c, k)),
        bias=np.zeros(out_c) if zero_bias else rng.uniform(-1, 1, size=out_c),
    )


class TestTensorCL:
    def test_shape_properties(self):
        t = TensorCL(np.ones((3, 5)))
        assert t.channels == 3 and t.length == 5

    def test_rejects_wrong_rank(self):
        with pytest.raises(DimensionError):
            TensorCL(np.ones((2, 2, 2)))

    def test_rejects_non_finite(self):
        with pytest.raises(NumericError):
            TensorCL(np.array([[1.0, np.nan]]))
        with pytest.raises(NumericError):
            TensorCL(np.array([[np.inf, 0.0]]))


class TestConvParams:
    def test_rejects_even_kernel(self):
        with pytest.raises(ConfigError):
            ConvParams(weights=np.ones((1, 1, 2)), bias=np.zeros(1))

    def test_rejects_bias_mismatch(self):
        with pytest.raises(DimensionError):
            ConvParams(weights=np.ones((2, 1, 3)), bias=np.zeros(3))


class TestConvForward:
    def test_edge_detector_case(self):
        # Oracle value from conv_by_summation on the padded input.
        x = TensorCL.from_rows([1.0, 2.0, 3.0, 4.0])
        p = ConvParams(weights=np.array([[[1.0, 0.0, -1.0]]]), bias=np.zeros(1))
        expected = conv_by_summation([[1.0, 2.0, 3.0, 4.0]], [[[1.0, 0.0, -1.0]]], [0.0])
        np.testing.assert_array_equal(expected, [[-2.0, -2.0, -2.0, 3.0]])
        np.testing.assert_allclose(conv1d_forward(x, p).data, expected, rtol=0, atol=0)

    def test_k1_identity(self):
        rng = np.random.default_rng(3)
        x = TensorCL(rng.uniform(-5, 5, size=(2, 7)))
        p = ConvParams(
            weights=np.array([[[1.0], [0.0]], [[0.0], [1.0]]]), bias=np.zeros(2)
        )
        np.testing.assert_array_equal(conv1d_forward(x, p).data, x.data)

    def test_zero_input_gives_bias(self):
        rng = np.random.default_rng(4)
        p = rand_conv(rng, 3, 2, 5)
        x = TensorCL(np.zeros((2, 6)))
        out = conv1d_forward(x, p)
        np.testing.assert_allclose(out.data, np.tile(p.bias[:, None], (1, 6)))

    def test_matches_summation_oracle_random(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            c_in, c_out = rng.integers(1, 4, size=2)
            k = int(rng.choice([1, 3, 5]))
            length = int(rng.integers(1, 9))
            x = rng.uniform(-2, 2, size=(c_in, length))
            p = rand_conv(rng, c_out, c_in, k)
            got = conv1d_forward(TensorCL(x), p).data
            want = conv_by_summation(x.tolist(), p.weights.tolist(), p.bias.tolist())
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_preserves_length(self):
        rng = np.random.default_rng(6)
        for length in (1, 2, 5, 8):
            x = TensorCL(rng.uniform(-1, 1, size=(3, length)))
            p = rand_conv(rng, 2, 3, 3)
            assert conv1d_forward(x, p).length == length

    def test_linear_in_input_with_zero_bias(self):
        rng = np.random.default_rng(7)
        p = rand_conv(rng, 2, 3, 3, zero_bias=True)
        x = rng.uniform(-1, 1, size=(3, 6))
        y = rng.uniform(-1, 1, size=(3, 6))
        a, b = 1.7, -0.3
        lhs = conv1d_forward(TensorCL(a * x + b * y), p).data
        rhs = a * conv1d_forward(TensorCL(x), p).data + b * conv1d_forward(TensorCL(y), p).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_channel_mismatch(self):
        p = rand_conv(np.random.default_rng(8), 2, 3, 3)
        with pytest.raises(DimensionError):
            conv1d_forward(TensorCL(np.ones((2, 4))), p)

    def test_large_magnitude_stays_finite(self):
        rng = np.random.default_rng(9)
        x = TensorCL(rng.uniform(-1e6, 1e6, size=(2, 8)))
        p = rand_conv(rng, 2, 2, 3)
        out = conv1d_forward(x, p)
        assert np.all(np.isfinite(out.data))


class TestConvBackward:
    def test_zero_cotangent(self):
        rng = np.random.default_rng(10)
        x = TensorCL(rng.uniform(-1, 1, size=(2, 5)))
        p = rand_conv(rng, 3, 2, 3)
        gx, gp = conv1d_backward(TensorCL(np.zeros((3, 5))), x, p)
        assert not gx.data.any()
        assert not gp.weights.any() and not gp.bias.any()

    def test_k1_identity_passthrough(self):
        rng = np.random.default_rng(11)
        g = rng.uniform(-1, 1, size=(1, 6))
        x = TensorCL(rng.uniform(-1, 1, size=(1, 6)))
        p = ConvParams(weights=np.array([[[1.0]]]), bias=np.zeros(1))
        gx, _ = conv1d_backward(TensorCL(g), x, p)
        np.testing.assert_array_equal(gx.data, g)

    def test_matches_finite_differences(self):
        # <g, conv(x; w, b)> differentiated w.r.t. x, w and b.
        rng = np.random.default_rng(12)
        x0 = rng.uniform(-1, 1, size=(1, 5))
        p = rand_conv(rng, 2, 1, 3)
        g = rng.uniform(-1, 1, size=(2, 5))
        gx, gp = conv1d_backward(TensorCL(g), TensorCL(x0), p)
        analytic = np.concatenate([gx.data.ravel(), gp.weights.ravel(), gp.bias])

        def objective(flat):
            x = flat[:5].reshape(1, 5)
            w = flat[5:11].reshape(2, 1, 3)
            b = flat[11:]
            out = conv_by_summation(x.tolist(), w.tolist(), b.tolist())
            return float(np.sum(g * np.asarray(out)))

        flat0 = np.concatenate([x0.ravel(), p.weights.ravel(), p.bias])
        eps = 1e-5
        for i in range(flat0.size):
            up, down = flat0.copy(), flat0.copy()
            up[i] += eps
            down[i] -= eps
            numeric = (objective(up) - objective(down)) / (2 * eps)
            err = abs(analytic[i] - numeric) / max(1, abs(analytic[i]), abs(numeric))
            assert err < 1e-6

    def test_matches_finite_differences_random_shapes(self):
        rng = np.random.default_rng(77)
        for _ in range(5):
            c_in = int(rng.integers(1, 5))
            c_out = int(rng.integers(1, 5))
            k = int(rng.choice([1, 3]))
            length = int(rng.integers(1, 9))
            x0 = rng.uniform(-1, 1, size=(c_in, length))
            p = rand_conv(rng, c_out, c_in, k)
            g = rng.uniform(-1, 1, size=(c_out, length))
            gx, gp = conv1d_backward(TensorCL(g), TensorCL(x0), p)
            analytic = np.concatenate([gx.data.ravel(), gp.weights.ravel(), gp.bias])

            nx, nw = x0.size, p.weights.size

            def objective(flat):
                x = flat[:nx].reshape(c_in, length)
                w = flat[nx:nx + nw].reshape(c_out, c_in, k)
                b = flat[nx + nw:]
                out = conv_by_summation(x.tolist(), w.tolist(), b.tolist())
                return float(np.sum(g * np.asarray(out)))

            flat0 = np.concatenate([x0.ravel(), p.weights.ravel(), p.bias])
            eps = 1e-5
            for i in range(flat0.size):
                up, down = flat0.copy(), flat0.copy()
                up[i] += eps
                down[i] -= eps
                numeric = (objective(up) - objective(down)) / (2 * eps)
                err = abs(analytic[i] - numeric) / max(1, abs(analytic[i]), abs(numeric))
                assert err < 1e-6

    def test_shape_mismatch(self):
        rng = np.random.default_rng(13)
        x = TensorCL(rng.uniform(-1, 1, size=(2, 5)))
        p = rand_conv(rng, 3, 2, 3)
        with pytest.raises(DimensionError):
            conv1d_backward(TensorCL(np.zeros((3, 4))), x, p)


class TestRelu:
    def test_definition(self):
        out = relu_forward(TensorCL.from_rows([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 2.0]])

    def test_identity_on_nonnegative(self):
        x = TensorCL.from_rows([0.0, 1.0, 5.0])
        np.testing.assert_array_equal(relu_forward(x).data, x.data)

    def test_backward_masks_by_sign(self):
        g = relu_backward(TensorCL.from_rows([5.0, 7.0]), TensorCL.from_rows([-1.0, 3.0]))
        np.testing.assert_array_equal(g.data, [[0.0, 7.0]])

    def test_backward_zero_at_exact_zero(self):
        g = relu_backward(TensorCL.from_rows([4.0]), TensorCL.from_rows([0.0]))
        assert g.data[0, 0] == 0.0


class TestSoftmaxLength:
    def test_uniform_input(self):
        out = softmax_length_forward(TensorCL.from_rows([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [[1 / 3] * 3], rtol=0, atol=1e-15)

    def test_two_point_case(self):
        # Scalar oracle: exp(1)/(exp(1)+exp(2)) and exp(2)/(exp(1)+exp(2)).
        denom = math.exp(1.0) + math.exp(2.0)
        expected = [math.exp(1.0) / denom, math.exp(2.0) / denom]
        out = softmax_length_forward(TensorCL.from_rows([1.0, 2.0]))
        np.testing.assert_allclose(out.data, [expected], atol=1e-15)
        np.testing.assert_allclose(out.data, [[0.26894142, 0.73105858]], atol=1e-8)

    def test_shift_invariance(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(-3, 3, size=(3, 6))
        a = softmax_length_forward(TensorCL(x)).data
        b = softmax_length_forward(TensorCL(x + 17.5)).data
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_rows_sum_to_one_and_bounded(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            c = int(rng.integers(1, 5))
            length = int(rng.integers(1, 9))
            x = rng.uniform(-30, 30, size=(c, length))
            s = softmax_length_forward(TensorCL(x)).data
            np.testing.assert_allclose(s.sum(axis=1), np.ones(c), atol=1e-12)
            assert np.all(s > 0) and np.all(s <= 1)

    def test_extreme_magnitudes_stay_finite_and_normalized(self):
        # exp underflows to exactly 0 for huge spreads; rows must still
        # be finite and normalized.
        rng = np.random.default_rng(19)
        x = rng.uniform(-1e6, 1e6, size=(3, 8))
        s = softmax_length_forward(TensorCL(x)).data
        assert np.all(np.isfinite(s))
        np.testing.assert_allclose(s.sum(axis=1), np.ones(3), atol=1e-12)
        assert np.all(s >= 0) and np.all(s <= 1)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        x0 = rng.uniform(-2, 2, size=(2, 5))
        g = rng.uniform(-1, 1, size=(2, 5))
        s = softmax_length_forward(TensorCL(x0))
        analytic = softmax_length_backward(TensorCL(g), s).data

        def objective(flat):
            out = softmax_length_forward(TensorCL(flat.reshape(2, 5))).data
            return float(np.sum(g * out))

        eps = 1e-5
        flat0 = x0.ravel()
        for i in range(flat0.size):
            up, down = flat0.copy(), flat0.copy()
            up[i] += eps
            down[i] -= eps
            numeric = (objective(up) - objective(down)) / (2 * eps)
            a = analytic.ravel()[i]
            assert abs(a - numeric) / max(1, abs(a), abs(numeric)) < 1e-6


class TestAffine:
    def test_dot_product_by_hand(self):
        assert affine_forward(np.array([1.0, 2.0]), np.array([3.0, 4.0]), 1.0) == 12.0

    def test_constant_head(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            x = rng.uniform(-10, 10, size=4)
            assert affine_forward(x, np.zeros(4), 0.5) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            affine_forward(np.ones(3), np.ones(4), 0.0)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(18)
        x0 = rng.uniform(-1, 1, size=8)
        w0 = rng.uniform(-1, 1, size=8)
        b0 = 0.3
        gx, gw, gb = affine_backward(1.0, x0, w0)
        analytic = np.concatenate([gx, gw, [gb]])

        def objective(flat):
            return affine_forward(flat[:8], flat[8:16], flat[16])

        flat0 = np.concatenate([x0, w0, [b0]])
        eps = 1e-5
        for i in range(flat0.size):
            up, down = flat0.copy(), flat0.copy()
            up[i] += eps
            down[i] -= eps
            numeric = (objective(up) - objective(down)) / (2 * eps)
            a = analytic[i]
            assert abs(a - numeric) / max(1, abs(a), abs(numeric)) < 1e-6


class TestGradCheck:
    def test_quadratic(self):
        def f(p):
            return float(p[0] ** 2), np.array([2.0 * p[0]])

        assert grad_check(f, np.array([3.0]), eps=1e-4) < 1e-8

    def test_constant_function(self):
        def f(p):
            return 1.25, np.zeros_like(p)

        assert grad_check(f, np.array([0.4, -0.2]), eps=1e-4) == 0.0

    def test_detects_wrong_gradient(self):
        def f(p):
            return float(p[0] ** 2), np.array([3.0 * p[0]])  # wrong slope

        assert grad_check(f, np.array([3.0]), eps=1e-4) > 0.1

    def test_rejects_bad_eps(self):
        with pytest.raises(ConfigError):
            grad_check(lambda p: (0.0, p), np.zeros(1), eps=0.0)

    def test_non_finite_evaluation(self):
        def f(p):
            return float("nan"), np.zeros_like(p)

        with pytest.raises(NumericError):
            grad_check(f, np.zeros(2), eps=1e-4)
