import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from marrprobe.exceptions import ContractError
from numerics import ops
from numerics.gradcheck import grad_check
from numerics.tensor import DTensor, Tape, backward, no_grad, precision


def _leaf(value):
    return DTensor(value, requires_grad=True)


class BackwardTests(SimpleTestCase):
    """
    Reverse-mode backward:
      - single-op and product/sum rules by hand
      - unused parameters get zero gradients
      - non-scalar roots are rejected
      - linearity and determinism
    """

    def setUp(self):
        self.enterContext(precision("float64"))

    def test_square(self):
        x = _leaf(3.0)
        with Tape() as tape:
            y = x * x
        backward(y, tape)
        self.assertEqual(float(x.grad), 6.0)

    def test_product_plus_sum(self):
        x, y = _leaf(2.0), _leaf(5.0)
        with Tape() as tape:
            f = x * y + x
        grads = backward(f, tape)
        self.assertEqual(float(grads[x]), 6.0)
        self.assertEqual(float(grads[y]), 2.0)

    def test_unused_parameter_gets_zero(self):
        x, unused = _leaf([1.0, 2.0]), _leaf([[3.0]])
        with Tape() as tape:
            f = ops.sum(x * x)
        backward(f, tape, params=[x, unused])
        assert_array_equal(unused.grad, [[0.0]])

    def test_non_scalar_root_rejected(self):
        x = _leaf([1.0, 2.0])
        with Tape() as tape:
            y = x * 2.0
        with self.assertRaises(ContractError):
            backward(y, tape)

    def test_no_grad_records_nothing(self):
        x = _leaf(1.0)
        with Tape() as tape:
            with no_grad():
                x * 2.0
        self.assertEqual(len(tape), 0)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        x = _leaf(rng.normal(size=(4,)))
        w = DTensor(rng.normal(size=(4, 4)))

        def f():
            return ops.sum(ops.tanh(ops.matmul(ops.reshape(x, (1, 4)), w)))

        def g():
            return ops.sum(ops.exp(x) * x)

        def grad_of(fn):
            with Tape() as tape:
                out = fn()
            return backward(out, tape, [x])[x].copy()

        combined = grad_of(lambda: f() * 2.5 + g() * -0.75)
        assert_allclose(combined, 2.5 * grad_of(f) - 0.75 * grad_of(g), atol=1e-10)

    def test_determinism(self):
        rng = np.random.default_rng(11)
        data = rng.normal(size=(3, 5))
        runs = []
        for _ in range(2):
            x = _leaf(data)
            with Tape() as tape:
                out = ops.sum(ops.softmax(x, axis=-1) * ops.gelu(x))
            backward(out, tape)
            runs.append((out.data.tobytes(), x.grad.tobytes()))
        self.assertEqual(runs[0], runs[1])


class GradCheckTests(SimpleTestCase):
    """
    Every exported op against central finite differences in 64-bit,
    on random inputs away from non-smooth points.
    """

    def setUp(self):
        self.enterContext(precision("float64"))
        self.rng = np.random.default_rng(5)

    def assertGradOk(self, f, params, tol=1e-5):
        result = grad_check(f, params, eps=1e-5)
        self.assertTrue(result.ok, result.nonfinite)
        self.assertLess(result.max_error, tol, result.worst)
        return result

    def _away_from_zero(self, shape):
        x = self.rng.uniform(0.2, 1.5, size=shape)
        return x * self.rng.choice([-1.0, 1.0], size=shape)

    def test_sum_of_squares_is_exact(self):
        x = _leaf(self.rng.normal(size=6))
        result = grad_check(lambda: ops.sum(x * x), [x])
        self.assertLess(result.max_error, 1e-8)

    def test_constant_function(self):
        x = _leaf(self.rng.normal(size=3))
        result = grad_check(lambda: DTensor(4.0), [x])
        self.assertEqual(result.max_error, 0.0)
        assert_array_equal(x.grad, np.zeros(3))

    def test_elementwise_ops(self):
        x = _leaf(self._away_from_zero((3, 4)))
        y = _leaf(self.rng.uniform(0.5, 2.0, size=(4,)))
        for fn in (
            lambda: ops.sum(ops.exp(x) * y),
            lambda: ops.sum(ops.log(y) + ops.sqrt(y)),
            lambda: ops.sum(ops.abs(x) / y),
            lambda: ops.sum(ops.relu(x) - ops.tanh(x)),
            lambda: ops.sum(ops.sin(x) * ops.cos(y)),
            lambda: ops.sum(ops.sigmoid(x) * ops.softplus(x)),
            lambda: ops.sum(ops.gelu(x) * -x),
            lambda: ops.mean(ops.maximum(x, y)),
        ):
            self.assertGradOk(fn, [x, y])

    def test_shape_ops(self):
        x = _leaf(self.rng.normal(size=(2, 3, 4)))
        weights = DTensor(self.rng.normal(size=(4, 3, 2)))
        for fn in (
            lambda: ops.sum(ops.transpose(x, (2, 1, 0)) * weights),
            lambda: ops.sum(ops.reshape(x, (6, 4)) * ops.reshape(weights, (6, 4))),
            lambda: ops.sum(x[:, ::2, 1:] * x[:, ::2, 1:]),
            lambda: ops.sum(ops.take(x, [0, 2, 2], axis=1) * 3.0),
            lambda: ops.sum(ops.concat([x, x * x], axis=2) * 0.5),
            lambda: ops.sum(ops.hflip(x, axis=-1) * ops.transpose(weights, (2, 1, 0))),
            lambda: ops.sum(ops.broadcast_to(x[:, :1, :], (2, 5, 4))),
        ):
            self.assertGradOk(fn, [x])

    def test_matmul_softmax_layer_norm_composite(self):
        x = _leaf(self.rng.normal(size=(1, 4)))
        w = _leaf(self.rng.normal(size=(4, 4)))
        gain = _leaf(self.rng.uniform(0.5, 1.5, size=4))
        bias = _leaf(self.rng.normal(size=4))
        target = DTensor(self.rng.normal(size=(1, 4)))

        def f():
            h = ops.layer_norm(ops.matmul(x, w), gain, bias)
            return ops.sum(ops.softmax(h, axis=-1) * target)

        self.assertGradOk(f, [x, w, gain, bias])

    def test_batched_matmul(self):
        a = _leaf(self.rng.normal(size=(2, 3, 4)))
        b = _leaf(self.rng.normal(size=(4, 2)))
        self.assertGradOk(lambda: ops.sum(ops.tanh(ops.matmul(a, b))), [a, b])

    def test_conv_and_upsample(self):
        x = _leaf(self.rng.normal(size=(2, 3, 3, 2)))
        w = _leaf(self.rng.normal(size=(3, 3, 2, 3)) * 0.3)
        b = _leaf(self.rng.normal(size=3))
        self.assertGradOk(
            lambda: ops.sum(ops.tanh(ops.conv3x3(ops.nearest_upsample(x), w, b))), [x, w, b]
        )

    def test_bilinear_sample_grid_and_coords(self):
        grid = _leaf(self.rng.normal(size=(5, 5, 2)))
        # keep coords off the integer lattice and inside the grid
        coords = _leaf(self.rng.integers(0, 4, size=(3, 3, 2)) + self.rng.uniform(0.2, 0.8, size=(3, 3, 2)))
        self.assertGradOk(lambda: ops.sum(ops.bilinear_sample(grid, coords) * 1.5), [grid, coords])

    def test_reports_nonfinite_coordinate(self):
        x = _leaf([1e-6, 1.0])
        result = grad_check(lambda: ops.sum(ops.log(x)), [x], eps=1e-3)
        self.assertFalse(result.ok)
        self.assertEqual(result.nonfinite[0][1], 0)
