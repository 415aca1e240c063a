from __future__ import absolute_import, division, print_function, unicode_literals
from .. import tensor, models
from ..tensor import Tensor, Tape, backward, ContractError, DimensionError, NonFiniteError
import threading
import unittest
import numpy as np
import numpy.testing as npt

def gradient_of(f, x):
    with Tape() as tape:
        leaf = tape.watch(x)
        out = f(leaf)
    return backward(tape, out)[leaf].data

class TensorTestCase(unittest.TestCase):

    def test_read_only(self):
        t = Tensor([1.0, 2.0])
        with self.assertRaises(ValueError):
            t.data[0] = 5.0
        copy = t.numpy()
        copy[0] = 5.0
        self.assertEqual(1.0, t.data[0])

    def test_float64(self):
        self.assertEqual(np.float64, Tensor([1, 2]).data.dtype)

    def test_operators(self):
        a, b = Tensor([1.0, 2.0]), Tensor([4.0, 8.0])
        npt.assert_array_equal([5.0, 10.0], (a + b).data)
        npt.assert_array_equal([-3.0, -6.0], (a - b).data)
        npt.assert_array_equal([4.0, 16.0], (a * b).data)
        npt.assert_array_equal([0.25, 0.25], (a / b).data)
        npt.assert_array_equal([0.0, 1.0], (a - 1).data)
        npt.assert_array_equal([2.0, 1.0], (3 - a).data)
        npt.assert_array_equal([-1.0, -2.0], (-a).data)

    def test_matmul(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        npt.assert_array_equal([[19.0, 22.0], [43.0, 50.0]], (a @ b).data)
        with self.assertRaises(DimensionError) as context:
            tensor.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        self.assertIn("(2, 3)", str(context.exception))

    def test_broadcast(self):
        with self.assertRaises(DimensionError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones(2))

    def test_reshape(self):
        self.assertEqual((3, 2), Tensor(np.arange(6)).reshape(3, 2).shape)
        self.assertEqual((6,), Tensor(np.ones((2, 3))).reshape((6,)).shape)
        self.assertRaises(DimensionError, lambda: Tensor(np.arange(6)).reshape(4, 2))

    def test_sum(self):
        x = Tensor([[1.0, 2.0], [3.0, 4.0]])
        self.assertEqual(10.0, x.sum().item())
        npt.assert_array_equal([4.0, 6.0], x.sum(axis=0).data)
        npt.assert_array_equal([3.0, 7.0], tensor.sum(x, axis=[1]).data)
        self.assertEqual(2.5, x.mean().item())

    def test_conv2d(self):
        x = Tensor(np.arange(9.0).reshape(1, 1, 3, 3))
        w = Tensor(np.ones((1, 1, 2, 2)))
        npt.assert_array_equal([[[[8.0, 12.0], [20.0, 24.0]]]], tensor.conv2d(x, w).data)

    def test_conv2d_direct(self):
        rng = np.random.default_rng(0)
        for case in range(20):
            x, w = rng.normal(size=(2, 3, 7, 6)), rng.normal(size=(4, 3, 3, 2))
            stride, padding = [(1, 0), (2, 1), (3, 2), (1, 1)][case % 4]
            npt.assert_array_equal(tensor.conv2d_direct(x, w, stride, padding),
                                   tensor.conv2d(x, w, stride, padding).data)

    def test_conv2d_shapes(self):
        self.assertRaises(DimensionError, lambda: tensor.conv2d(
            Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 2, 2)))))
        self.assertRaises(DimensionError, lambda: tensor.conv2d(
            Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3)))))

    def test_pad_reflect(self):
        x = Tensor([[1.0, 2.0, 3.0]])
        npt.assert_array_equal([[2.0, 1.0, 2.0, 3.0, 2.0]],
                               tensor.pad_reflect(x, ((0, 0), (1, 1))).data)
        self.assertRaises(DimensionError,
                          lambda: tensor.pad_reflect(x, ((0, 0), (3, 0))))

    def test_softmax_cross_entropy(self):
        logits = Tensor([[0.0, 0.0]])
        self.assertAlmostEqual(np.log(2.0), tensor.softmax_cross_entropy(logits, [1]).item())
        large = Tensor([[1000.0, 0.0]])
        self.assertAlmostEqual(0.0, tensor.softmax_cross_entropy(large, [0]).item())
        self.assertAlmostEqual(1000.0, tensor.softmax_cross_entropy(large, [1]).item())
        self.assertRaises(IndexError, lambda: tensor.softmax_cross_entropy(logits, [2]))
        self.assertRaises(DimensionError,
                          lambda: tensor.softmax_cross_entropy(logits, [0, 1]))

    def test_softmax(self):
        npt.assert_allclose([[0.5, 0.5], [1.0, 0.0]],
                            tensor.softmax([[3.0, 3.0], [1000.0, 0.0]]))

    def test_margin(self):
        logits = Tensor([[1.0, 3.0, 2.0], [5.0, 1.0, 1.0]])
        npt.assert_array_equal([-2.0, 4.0], tensor.margin(logits, [0, 0]).data)
        grad = gradient_of(lambda z: tensor.margin(z, [0, 0]).sum(), logits)
        npt.assert_array_equal([[1.0, -1.0, 0.0], [1.0, -1.0, 0.0]], grad)

    def test_mse(self):
        self.assertEqual(2.5, tensor.mse(Tensor([1.0, 3.0]), Tensor([0.0, 1.0])).item())
        self.assertRaises(DimensionError,
                          lambda: tensor.mse(Tensor([1.0]), Tensor([1.0, 2.0])))

    def test_non_finite(self):
        with np.errstate(all="ignore"):
            self.assertRaises(NonFiniteError, lambda: Tensor([1.0]) / Tensor([0.0]))
            self.assertRaises(NonFiniteError, lambda: Tensor([1e308]) * 10.0)


class TapeTestCase(unittest.TestCase):

    def assertGradientMatches(self, f, x, rtol=1e-5, atol=1e-7, h=1e-5):
        x = Tensor(x)
        npt.assert_allclose(tensor.finite_diff_grad(f, x, h).data, gradient_of(f, x),
                            rtol=rtol, atol=atol)

    def test_square(self):
        x = np.array([1.0, -2.0, 3.0])
        npt.assert_array_equal(2 * x, gradient_of(lambda v: tensor.square(v).sum(), x))

    def test_relu_at_zero(self):
        npt.assert_array_equal([0.0, 0.0, 1.0],
                               gradient_of(lambda v: tensor.relu(v).sum(), [-1.0, 0.0, 2.0]))

    def test_broadcast_gradient(self):
        with Tape() as tape:
            a = tape.watch(np.ones((2, 3)))
            b = tape.watch(np.ones(3))
            out = (a * b + b).sum()
        grads = backward(tape, out)
        npt.assert_array_equal([4.0, 4.0, 4.0], grads[b].data)
        npt.assert_array_equal(np.ones((2, 3)), grads[a].data)

    def assertGradientsMatch(self, make_case, count=100, seed=1, h=1e-5):
        rng = np.random.default_rng(seed)
        for _ in range(count):
            f, x = make_case(rng)
            self.assertGradientMatches(f, x, atol=1e-6, h=h)

    def test_cross_entropy_gradient(self):
        def case(rng):
            labels = rng.integers(0, 4, size=3)
            return (lambda z: tensor.softmax_cross_entropy(z, labels)), rng.normal(size=(3, 4))
        self.assertGradientsMatch(case)

    def test_elementwise_gradients(self):
        self.assertGradientsMatch(
            lambda rng: ((lambda z: tensor.tanh(z).sum()), rng.normal(size=5)))
        self.assertGradientsMatch(
            lambda rng: ((lambda z: (z / (tensor.square(z) + 1.0)).sum()), rng.normal(size=4)))

    def test_relu_gradient(self):
        def case(rng):
            x = rng.normal(size=(3, 4))
            # Kinks stay well outside the difference step.
            x = np.sign(x) * (np.abs(x) + 0.05)
            weights = Tensor(rng.normal(size=(3, 4)))
            return (lambda z: (tensor.relu(z) * weights).sum()), x
        self.assertGradientsMatch(case)

    def test_matmul_gradient(self):
        def case(rng):
            w = Tensor(rng.normal(size=(3, 2)))
            return (lambda z: tensor.square(tensor.matmul(z, w)).sum()), rng.normal(size=(2, 3))
        self.assertGradientsMatch(case)

    def test_mse_gradient(self):
        def case(rng):
            target = Tensor(rng.normal(size=(2, 3)))
            return (lambda z: tensor.mse(z, target)), rng.normal(size=(2, 3))
        self.assertGradientsMatch(case)

    def test_margin_gradient(self):
        def case(rng):
            labels = rng.integers(0, 3, size=2)
            return (lambda z: tensor.margin(z, labels).sum()), rng.normal(size=(2, 3))
        self.assertGradientsMatch(case)

    def test_conv2d_gradient(self):
        def input_case(rng):
            kernel = Tensor(rng.normal(size=(2, 2, 3, 3)))
            stride, padding = rng.integers(1, 3), rng.integers(0, 2)
            return ((lambda z: tensor.square(tensor.conv2d(z, kernel, stride, padding)).sum()),
                    rng.normal(size=(1, 2, 4, 4)))
        self.assertGradientsMatch(input_case)

        def kernel_case(rng):
            image = Tensor(rng.normal(size=(1, 2, 4, 4)))
            return ((lambda k: tensor.square(tensor.conv2d(image, k, 1, 1)).sum()),
                    rng.normal(size=(2, 2, 3, 3)))
        self.assertGradientsMatch(kernel_case, seed=2)

    def test_pad_reflect_gradient(self):
        def case(rng):
            weights = Tensor(rng.normal(size=(2, 6, 6)))
            return ((lambda z: (tensor.pad_reflect(z, ((1, 2), (2, 1))) * weights).sum()),
                    rng.normal(size=(2, 3, 3)))
        self.assertGradientsMatch(case, seed=3)

    def test_sum_reshape_gradient(self):
        def case(rng):
            weights = Tensor(rng.normal(size=(3, 2)))
            return ((lambda z: (tensor.sum(z.reshape(3, 2, 2), axis=2) * weights).mean()),
                    rng.normal(size=(2, 6)))
        self.assertGradientsMatch(case, seed=4)

    def test_classifier_loss_gradient(self):
        for descriptor, shape in [("mlp:6-5-3", (2, 6)),
                                  ("conv:1x5x5:2k3s1p1,2k3s2p0:4-3", (2, 1, 5, 5))]:
            def case(rng):
                model = models.init_params(descriptor, int(rng.integers(0, 1000)))
                labels = rng.integers(0, 3, size=2)
                return ((lambda z: tensor.softmax_cross_entropy(model.predict_logits(z), labels)),
                        rng.uniform(size=shape))
            # A short step keeps hidden ReLU kinks out of reach.
            self.assertGradientsMatch(case, count=30, seed=5, h=1e-7)

    def test_classifier_parameter_gradient(self):
        rng = np.random.default_rng(6)
        model = models.init_params("mlp:6-5-3", 7)
        x, labels = Tensor(rng.uniform(size=(4, 6))), rng.integers(0, 3, size=4)
        rest = model.parameters[1:]

        def loss(weights):
            logits = model.with_parameters((weights,) + rest).predict_logits(x)
            return tensor.softmax_cross_entropy(logits, labels)
        self.assertGradientMatches(loss, model.parameters[0].data, atol=1e-6, h=1e-7)

    def test_unused_leaf(self):
        with Tape() as tape:
            used = tape.watch([1.0, 2.0])
            unused = tape.watch([[3.0]])
            out = used.sum()
        grads = backward(tape, out)
        npt.assert_array_equal([[0.0]], grads[unused].data)
        self.assertNotIn(unused, grads)
        self.assertIn(used, grads)

    def test_repeated_backward(self):
        with Tape() as tape:
            x = tape.watch([0.5, -1.5])
            out = tensor.tanh(x * x).sum()
        first, second = backward(tape, out)[x].data, backward(tape, out)[x].data
        npt.assert_array_equal(first, second)

    def test_contracts(self):
        with Tape() as tape:
            x = tape.watch([1.0, 2.0])
            vector = x * 2.0
        self.assertRaises(ContractError, lambda: backward(tape, vector))
        self.assertRaises(ContractError, lambda: backward(Tape(), vector.sum()))
        self.assertRaises(ContractError, lambda: backward(tape, Tensor(1.0)))
        with Tape() as other:
            y = other.watch(1.0)
            out = y * 3.0
        self.assertRaises(ContractError, lambda: backward(other, out)[x])
        self.assertRaises(ContractError, lambda: backward(other, out)[out])

    def test_replay(self):
        with Tape() as tape:
            x = tape.watch([0.3, -0.7])
            h = tensor.tanh(x * 3.0) + 1.0
            out = tensor.square(h).sum()
        values = tape.replay()
        self.assertEqual(len(tape), len(values))
        for node, value in zip(tape.nodes, values):
            npt.assert_array_equal(node.value, value)
        self.assertEqual(["leaf", "mul", "tanh", "add", "square", "sum"],
                         [node.kind for node in tape.nodes])

    def test_constants_not_recorded(self):
        with Tape() as tape:
            constant = Tensor([1.0]) * 2.0
            x = tape.watch([1.0])
            with tensor.no_record():
                hidden = x * 2.0
        self.assertEqual(1, len(tape))
        self.assertIsNone(constant.tape)
        self.assertIsNone(hidden.tape)

    def test_nested_tapes(self):
        with Tape() as outer:
            x = outer.watch([2.0])
            with Tape() as inner:
                self.assertIs(inner, tensor.active_tape())
                y = x * 3.0
            z = x * 5.0
        self.assertIsNone(y.tape)
        self.assertIs(outer, z.tape)
        self.assertEqual(0, len(inner))
        self.assertIsNone(tensor.active_tape())

    def test_thread_local(self):
        seen = []
        with Tape():
            thread = threading.Thread(target=lambda: seen.append(tensor.active_tape()))
            thread.start()
            thread.join()
        self.assertEqual([None], seen)

    def test_finite_diff_step(self):
        self.assertRaises(ContractError,
                          lambda: tensor.finite_diff_grad(lambda z: z.sum(), Tensor([1.0]), 0.0))
