import numpy as np
import pytest

from rulkit.autodiff import Tensor, concat, finite_difference_check, linear
from rulkit.errors import NonScalarLoss, ShapeMismatch


class TestForwardValues:
    def test_softmax_symmetry(self):
        y = Tensor([0.0, 0.0]).softmax()
        np.testing.assert_allclose(y.data, [0.5, 0.5])

    def test_softmax_additive_mask(self):
        y = Tensor([3.0, 3.0]).softmax(additive_mask=np.array([0.0, -1e9]))
        assert y.data[0] == pytest.approx(1.0)
        assert y.data[1] < 1e-30

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        y = Tensor(rng.normal(size=(4, 7))).softmax()
        np.testing.assert_allclose(y.data.sum(axis=-1), 1.0, atol=1e-12)
        assert (y.data >= 0).all()

    def test_matmul_hand(self):
        a = Tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        b = Tensor([[7.0, 8.0], [9.0, 10.0], [11.0, 12.0]])
        np.testing.assert_allclose((a @ b).data, [[58.0, 64.0], [139.0, 154.0]])

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))


class TestBackward:
    def test_sum_grad_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_quadratic_grad(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_non_scalar_loss(self):
        with pytest.raises(NonScalarLoss):
            Tensor(np.zeros(3), requires_grad=True).backward()

    def test_accumulation_without_reset(self):
        x = Tensor([2.0], requires_grad=True)
        (x * x).sum().backward()
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, [8.0])

    def test_accumulation_linearity(self):
        rng = np.random.default_rng(1)
        data = rng.normal(size=5)
        a, b = 2.0, -0.5

        x = Tensor(data.copy(), requires_grad=True)
        (a * (x * x).sum() + b * x.exp().sum()).backward()
        combined = x.grad.copy()

        x1 = Tensor(data.copy(), requires_grad=True)
        (x1 * x1).sum().backward()
        x2 = Tensor(data.copy(), requires_grad=True)
        x2.exp().sum().backward()
        np.testing.assert_allclose(combined, a * x1.grad + b * x2.grad, rtol=1e-12)

    def test_broadcast_add_bias(self):
        x = Tensor(np.ones((4, 3)), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        (x + b).sum().backward()
        np.testing.assert_array_equal(b.grad, [4.0, 4.0, 4.0])


class TestFiniteDifference:
    def test_identity(self):
        x = Tensor([1.5], requires_grad=True)
        assert finite_difference_check(lambda: x.sum(), [x]) < 1e-9

    def test_quadratic_form(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(4, 4))
        x = Tensor(rng.normal(size=(1, 4)), requires_grad=True)

        def f():
            return (x @ Tensor(A) @ x.transpose_last()).sum()

        x.grad = None
        f().backward()
        expected = (x.data @ (A + A.T))
        np.testing.assert_allclose(x.grad, expected, rtol=1e-10)

    @pytest.mark.parametrize("op", ["exp", "tanh", "sqrt", "relu", "softmax",
                                    "mean", "var", "matmul", "div", "concat",
                                    "transpose", "slice"])
    def test_primitives(self, op):
        rng = np.random.default_rng(hash(op) % 2 ** 31)
        a = rng.normal(size=(3, 4))
        if op in ("relu",):
            a = np.where(np.abs(a) < 1e-3, 0.5, a)  # keep away from the kink
        if op == "sqrt":
            a = np.abs(a) + 0.5
        x = Tensor(a, requires_grad=True)
        w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)

        builders = {
            "exp": lambda: x.exp().sum(),
            "tanh": lambda: x.tanh().sum(),
            "sqrt": lambda: x.sqrt().sum(),
            "relu": lambda: (x.relu() * x.relu()).sum(),
            "softmax": lambda: (x.softmax() * np.arange(4.0)).sum(),
            "mean": lambda: (x.mean(axis=0) * np.arange(4.0)).sum(),
            "var": lambda: (x.var(axis=1) * np.arange(3.0)).sum(),
            "matmul": lambda: ((x @ w) * rng_const).sum(),
            "div": lambda: (x / (x * x + 1.0)).sum(),
            "concat": lambda: concat([x, x * 2.0], axis=-1).sum(),
            "transpose": lambda: (x.transpose_last() @ w2).sum(),
            "slice": lambda: (x[1:, :2] * x[1:, :2]).sum(),
        }
        rng_const = rng.normal(size=(3, 2))
        w2 = Tensor(rng.normal(size=(3, 2)))
        params = [x, w] if op == "matmul" else [x]
        assert finite_difference_check(builders[op], params, step=1e-6) < 1e-5

    def test_random_graph(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3,)), requires_grad=True)

        def f():
            h = linear(x, w, b).tanh()
            return (h.softmax() * h).sum() + h.var()

        assert finite_difference_check(f, [x, w, b], step=1e-6) < 1e-5


class TestDropout:
    def test_eval_identity(self):
        x = Tensor(np.ones((10, 10)))
        y = x.dropout(0.5, train=False, rng=None)
        assert y is x

    def test_train_fraction_and_scale(self):
        rng = np.random.default_rng(4)
        n = 40000
        r = 0.3
        x = Tensor(np.ones(n))
        y = x.dropout(r, train=True, rng=rng).data
        zeros = (y == 0).sum()
        sigma = np.sqrt(n * r * (1 - r))
        assert abs(zeros - n * r) < 3 * sigma
        survivors = y[y != 0]
        np.testing.assert_allclose(survivors, 1.0 / (1 - r))
