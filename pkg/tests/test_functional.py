"""Convolution, pooling, loss and reversal ops: values and gradient checks."""

import numpy as np
import pytest

from lirrdet.autodiff import (
    ShapeError,
    Tensor,
    backward,
    binary_cross_entropy_logit,
    concat,
    conv2d,
    gather_rows,
    global_avg_pool,
    grad_reverse,
    precision,
    smooth_l1,
    softmax_cross_entropy,
)

from _gradcheck import finite_diff_grads, max_rel_err


class TestConv2d:
    def test_sum_kernel(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        k = Tensor(np.ones((1, 1, 2, 2)))
        out = conv2d(x, k)
        np.testing.assert_allclose(out.data, [[[[10.0]]]])

    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 3, 5, 5)).astype(np.float32)
        k = np.zeros((3, 3, 1, 1), dtype=np.float32)
        for c in range(3):
            k[c, c, 0, 0] = 1.0
        out = conv2d(Tensor(x), Tensor(k))
        np.testing.assert_allclose(out.data, x, rtol=1e-6)

    def test_output_geometry(self):
        x = Tensor(np.zeros((1, 1, 7, 9)))
        k = Tensor(np.zeros((2, 1, 3, 3)))
        assert conv2d(x, k, stride=2, padding=1).data.shape == (1, 2, 4, 5)

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 4, 4))))

    def test_direct_matches_im2col(self):
        rng = np.random.default_rng(7)
        with precision("float64"):
            x = Tensor(rng.normal(size=(2, 3, 6, 7)))
            k = Tensor(rng.normal(size=(4, 3, 3, 3)))
            b = Tensor(rng.normal(size=4))
            fast = conv2d(x, k, b, stride=2, padding=1, impl="im2col")
            slow = conv2d(x, k, b, stride=2, padding=1, impl="direct")
            assert np.max(np.abs(fast.data - slow.data)) < 1e-12

    @pytest.mark.parametrize("seed", range(3))
    def test_gradcheck_input_kernel_bias(self, seed):
        rng = np.random.default_rng(300 + seed)
        with precision("float64"):
            x0 = rng.uniform(-2, 2, size=(1, 2, 5, 5))
            k0 = rng.uniform(-2, 2, size=(3, 2, 3, 3))
            b0 = rng.uniform(-2, 2, size=3)

            def f(x, k, b):
                out = conv2d(Tensor(x), Tensor(k), Tensor(b), stride=2, padding=1)
                return float((out * out).mean().data)

            tx, tk, tb = (Tensor(a, requires_grad=True) for a in (x0, k0, b0))
            out = conv2d(tx, tk, tb, stride=2, padding=1)
            backward((out * out).mean())
            nx, nk, nb = finite_diff_grads(f, [x0, k0, b0])
            assert max_rel_err(tx.grad, nx) < 1e-6
            assert max_rel_err(tk.grad, nk) < 1e-6
            assert max_rel_err(tb.grad, nb) < 1e-6


class TestGlobalAvgPool:
    def test_constant_input(self):
        out = global_avg_pool(Tensor(np.full((2, 3, 4, 4), 3.0)))
        np.testing.assert_allclose(out.data, np.full((2, 3), 3.0))

    def test_hand_value(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        assert global_avg_pool(x).data[0, 0] == pytest.approx(2.5)

    def test_gradcheck(self):
        rng = np.random.default_rng(11)
        with precision("float64"):
            x0 = rng.uniform(-2, 2, size=(2, 3, 3, 4))

            def f(x):
                p = global_avg_pool(Tensor(x))
                return float((p * p).sum().data)

            tx = Tensor(x0, requires_grad=True)
            p = global_avg_pool(tx)
            backward((p * p).sum())
            (num,) = finite_diff_grads(f, [x0])
            assert max_rel_err(tx.grad, num) < 1e-6


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss = softmax_cross_entropy(Tensor(np.zeros((4, 2))), [0, 1, 0, 1])
        assert loss.item() == pytest.approx(np.log(2.0), abs=1e-6)

    def test_saturated(self):
        logits = np.zeros((1, 3))
        logits[0, 2] = 100.0
        assert softmax_cross_entropy(Tensor(logits), [2]).item() == pytest.approx(0.0, abs=1e-6)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])

    @pytest.mark.parametrize("seed", range(3))
    def test_gradient_is_softmax_minus_onehot(self, seed):
        rng = np.random.default_rng(400 + seed)
        with precision("float64"):
            z0 = rng.uniform(-2, 2, size=(5, 4))
            labels = rng.integers(0, 4, size=5)

            tz = Tensor(z0, requires_grad=True)
            backward(softmax_cross_entropy(tz, labels))

            ez = np.exp(z0 - z0.max(axis=1, keepdims=True))
            soft = ez / ez.sum(axis=1, keepdims=True)
            soft[np.arange(5), labels] -= 1.0
            np.testing.assert_allclose(tz.grad, soft / 5, atol=1e-12)

            def f(z):
                return float(softmax_cross_entropy(Tensor(z), labels).data)

            (num,) = finite_diff_grads(f, [z0])
            assert max_rel_err(tz.grad, num) < 1e-6


class TestBinaryCrossEntropyLogit:
    def test_zero_logit(self):
        for t in (0.0, 1.0):
            loss = binary_cross_entropy_logit(Tensor([0.0]), [t])
            assert loss.item() == pytest.approx(np.log(2.0), abs=1e-6)

    def test_saturated(self):
        assert binary_cross_entropy_logit(Tensor([20.0]), [1.0]).item() == pytest.approx(0.0, abs=1e-6)

    def test_non_binary_target_rejected(self):
        with pytest.raises(ValueError):
            binary_cross_entropy_logit(Tensor([0.0]), [0.5])

    @pytest.mark.parametrize("seed", range(3))
    def test_gradient_sigmoid_minus_target(self, seed):
        rng = np.random.default_rng(500 + seed)
        with precision("float64"):
            z0 = rng.uniform(-3, 3, size=6)
            t = rng.integers(0, 2, size=6).astype(float)

            tz = Tensor(z0, requires_grad=True)
            backward(binary_cross_entropy_logit(tz, t))
            sig = 1.0 / (1.0 + np.exp(-z0))
            np.testing.assert_allclose(tz.grad, (sig - t) / 6, atol=1e-12)

            def f(z):
                return float(binary_cross_entropy_logit(Tensor(z), t).data)

            (num,) = finite_diff_grads(f, [z0])
            assert max_rel_err(tz.grad, num) < 1e-6


class TestSmoothL1:
    def test_quadratic_branch(self):
        assert smooth_l1(Tensor([0.5]), Tensor([0.0])).item() == pytest.approx(0.125)

    def test_linear_branch(self):
        assert smooth_l1(Tensor([2.0]), Tensor([0.0])).item() == pytest.approx(1.5)

    def test_knee_continuity(self):
        with precision("float64"):
            lo = smooth_l1(Tensor([1.0 - 1e-9]), Tensor([0.0])).item()
            hi = smooth_l1(Tensor([1.0 + 1e-9]), Tensor([0.0])).item()
            assert abs(lo - 0.5) < 1e-6 and abs(hi - 0.5) < 1e-6
            assert abs(hi - lo) < 1e-6

    def test_derivative_continuity_at_knee(self):
        with precision("float64"):
            grads = []
            for e in (1.0 - 1e-9, 1.0 + 1e-9):
                p = Tensor([e], requires_grad=True)
                backward(smooth_l1(p, Tensor([0.0])))
                grads.append(p.grad[0])
            assert abs(grads[0] - grads[1]) < 1e-6

    def test_gradcheck_away_from_knee(self):
        rng = np.random.default_rng(600)
        with precision("float64"):
            e = rng.uniform(-2, 2, size=8)
            e[np.abs(np.abs(e) - 1.0) < 0.05] += 0.2  # stay off the knee
            t0 = np.zeros(8)

            def f(p, t):
                return float(smooth_l1(Tensor(p), Tensor(t)).data)

            tp, tt = Tensor(e, requires_grad=True), Tensor(t0, requires_grad=True)
            backward(smooth_l1(tp, tt))
            np_, nt = finite_diff_grads(f, [e.copy(), t0])
            assert max_rel_err(tp.grad, np_) < 1e-6
            assert max_rel_err(tt.grad, nt) < 1e-6


class TestGradReverse:
    def test_forward_is_bit_identical(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        out = grad_reverse(x, 1.0)
        assert out.data is x.data

    def test_backward_negates(self):
        with precision("float64"):
            x = Tensor([1.0], requires_grad=True)
            backward((grad_reverse(x, 1.0) * 2.0).sum())
            np.testing.assert_allclose(x.grad, [-2.0])

    def test_lambda_zero_annihilates(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward((grad_reverse(x, 0.0) * 5.0).sum())
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_exact_negation_of_unreversed_gradient(self):
        rng = np.random.default_rng(601)
        with precision("float64"):
            x0 = rng.normal(size=(3, 3))
            w0 = rng.normal(size=(3, 2))
            for lam in (1.0, 0.7):
                grads = []
                for use_grl in (True, False):
                    x = Tensor(x0, requires_grad=True)
                    h = grad_reverse(x, lam) if use_grl else x
                    loss = ((h @ Tensor(w0)).sigmoid()).sum()
                    backward(loss)
                    grads.append(x.grad.copy())
                np.testing.assert_allclose(grads[0], -lam * grads[1], atol=1e-15)


class TestGatherConcat:
    def test_gather_rows_forward(self):
        x = Tensor(np.arange(12.0).reshape(4, 3))
        out = gather_rows(x, [2, 0, 2])
        np.testing.assert_array_equal(out.data[0], [6.0, 7.0, 8.0])

    def test_gather_rows_backward_accumulates_duplicates(self):
        with precision("float64"):
            x = Tensor(np.ones((4, 2)), requires_grad=True)
            out = gather_rows(x, [1, 1, 3])
            backward(out.sum())
            np.testing.assert_array_equal(x.grad, [[0, 0], [2, 2], [0, 0], [1, 1]])

    def test_concat_gradcheck(self):
        rng = np.random.default_rng(602)
        with precision("float64"):
            a0 = rng.normal(size=(2, 3))
            b0 = rng.normal(size=(4, 3))

            def f(a, b):
                out = concat([Tensor(a), Tensor(b)], axis=0)
                return float((out * out).sum().data)

            ta, tb = Tensor(a0, requires_grad=True), Tensor(b0, requires_grad=True)
            out = concat([ta, tb], axis=0)
            backward((out * out).sum())
            na, nb = finite_diff_grads(f, [a0, b0])
            assert max_rel_err(ta.grad, na) < 1e-6
            assert max_rel_err(tb.grad, nb) < 1e-6


class TestCompositeModelGradient:
    def test_conv_relu_matmul_end_to_end(self):
        rng = np.random.default_rng(603)
        with precision("float64"):
            x0 = rng.uniform(-1, 1, size=(1, 1, 6, 6))
            k0 = rng.uniform(-1, 1, size=(2, 1, 3, 3))
            w0 = rng.uniform(-1, 1, size=(2, 3))

            def f(x, k, w):
                from lirrdet.autodiff import matmul
                h = conv2d(Tensor(x), Tensor(k), stride=1, padding=1).relu()
                pooled = global_avg_pool(h)
                return float(softmax_cross_entropy(matmul(pooled, Tensor(w)), [1]).data)

            from lirrdet.autodiff import matmul
            tx, tk, tw = (Tensor(a, requires_grad=True) for a in (x0, k0, w0))
            h = conv2d(tx, tk, stride=1, padding=1).relu()
            loss = softmax_cross_entropy(matmul(global_avg_pool(h), tw), [1])
            backward(loss)
            nx, nk, nw = finite_diff_grads(f, [x0, k0, w0])
            assert max_rel_err(tx.grad, nx) < 1e-6
            assert max_rel_err(tk.grad, nk) < 1e-6
            assert max_rel_err(tw.grad, nw) < 1e-6
