from __future__ import absolute_import, division, print_function, unicode_literals
from . import test_utils
from .. import attack, tensor
from ..attack import LossFn, PerturbBudget, CROSS_ENTROPY, MARGIN, MSE
from ..tensor import Tensor, ContractError, DimensionError
import unittest
import numpy as np
import numpy.testing as npt

class LossTestCase(unittest.TestCase):

    def test_names(self):
        self.assertEqual({"ce", "margin"}, set(attack.LOSSES))
        self.assertFalse(CROSS_ENTROPY.targeted)
        self.assertTrue(MSE.targeted)
        self.assertTrue(CROSS_ENTROPY.as_targeted().targeted)
        self.assertEqual("ce", CROSS_ENTROPY.as_targeted().name)

    def test_margin(self):
        logits = Tensor([[2.0, 0.0, 1.0]])
        self.assertEqual(-1.0, MARGIN(logits, [0]).item())

    def test_combined(self):
        logits, features = Tensor([[0.0, 0.0]]), Tensor([1.0, 2.0])
        combined = attack.combined_loss(CROSS_ENTROPY, MSE, weights=[2.0, 1.0])
        self.assertEqual("ce+mse", combined.name)
        self.assertAlmostEqual(2 * np.log(2.0) - 2.5,
                               combined((logits, features), ([0], Tensor([0.0, 0.0]))).item())
        self.assertRaises(ContractError, lambda: attack.combined_loss(MSE, weights=[1.0, 2.0]))
        self.assertRaises(ContractError, lambda: combined((logits,), ([0],)))


class BudgetTestCase(unittest.TestCase):

    def test_contracts(self):
        self.assertRaises(ContractError, lambda: PerturbBudget("l1", 0.1))
        self.assertRaises(ContractError, lambda: PerturbBudget("linf", -0.1))
        self.assertRaises(ContractError, lambda: PerturbBudget("linf", float("inf")))
        self.assertRaises(ContractError, lambda: PerturbBudget("l2", 1.0, 1.0, 0.0))

    def test_distance(self):
        x = np.zeros((2, 2))
        x_adv = np.array([[0.3, 0.4], [0.0, -0.1]])
        npt.assert_allclose([0.4, 0.1], PerturbBudget("linf", 1.0).distance(x_adv, x))
        npt.assert_allclose([0.5, 0.1], PerturbBudget("l2", 1.0).distance(x_adv, x))
        self.assertTrue(PerturbBudget("l2", 0.5, -1.0, 1.0).contains(x_adv, x))
        self.assertFalse(PerturbBudget("l2", 0.5).contains(x_adv, x))
        self.assertFalse(PerturbBudget("linf", 0.3, -1.0, 1.0).contains(x_adv, x))


class ProjectionTestCase(unittest.TestCase):

    def test_linf(self):
        npt.assert_array_equal([0.1], attack.project_linf([0.5], [0.0], 0.1).data)
        npt.assert_array_equal([0.05, -0.02],
                               attack.project_linf([0.05, -0.02], [0.0, 0.0], 0.1).data)

    def test_linf_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v, center = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
            eps = rng.uniform(0.0, 1.0)
            out = attack.project_linf(v, center, eps).data
            self.assertLessEqual(np.abs(out - center).max(), eps)

    def test_l2(self):
        npt.assert_allclose([0.6, 0.8], attack.project_l2([3.0, 4.0], [0.0, 0.0], 1.0).data)
        npt.assert_array_equal([1.0, 2.0], attack.project_l2([1.0, 2.0], [1.0, 2.0], 1.0).data)
        npt.assert_array_equal([0.3, 0.4], attack.project_l2([0.3, 0.4], [0.0, 0.0], 1.0).data)

    def test_l2_per_example(self):
        v = np.array([[3.0, 4.0], [0.3, 0.4]])
        npt.assert_allclose([[0.6, 0.8], [0.3, 0.4]],
                            attack.project_l2(v, np.zeros((2, 2)), 1.0).data)

    def test_l2_idempotent(self):
        rng = np.random.default_rng(1)
        v, center = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
        once = attack.project_l2(v, center, 0.5)
        npt.assert_allclose(once.data, attack.project_l2(once, center, 0.5).data,
                            rtol=1e-12, atol=1e-12)

    def test_shapes(self):
        self.assertRaises(DimensionError, lambda: attack.project_linf([1.0], [1.0, 2.0], 0.1))
        self.assertRaises(DimensionError, lambda: attack.project_l2([1.0], [1.0, 2.0], 0.1))


class MomentumTestCase(unittest.TestCase):

    def test_recursion(self):
        g = np.array([[1.0, -3.0]])
        unit = g / 4.0
        m = attack.accumulate_momentum(np.zeros_like(g), g, 0.5)
        npt.assert_allclose(unit, m)
        m = attack.accumulate_momentum(m, g, 0.5)
        npt.assert_allclose(1.5 * unit, m)

    def test_zero_gradient(self):
        m = np.array([[0.5, 0.5], [1.0, 0.0]])
        npt.assert_array_equal(0.5 * m, attack.accumulate_momentum(m, np.zeros((2, 2)), 0.5))


class PerturbIterativeTestCase(unittest.TestCase):

    def setUp(self):
        self.model = test_utils.linear_model(np.eye(2))
        self.x = Tensor([[0.6, 0.4]])

    def perturb(self, x, budget, nb_iter, eps_iter, **kwargs):
        return attack.perturb_iterative(x, [0], self.model.predict_logits, CROSS_ENTROPY,
                                        budget, nb_iter, eps_iter, **kwargs)

    def test_single_step(self):
        x_adv = self.perturb(self.x, PerturbBudget("linf", 0.1), 1, 0.1)
        npt.assert_allclose([[0.5, 0.5]], x_adv.data, atol=1e-12)
        npt.assert_array_equal([[0.6, 0.4]], self.x.data)

    def test_empty_ball(self):
        for norm in ("linf", "l2"):
            x_adv = self.perturb(self.x, PerturbBudget(norm, 0.0), 5, 0.1, rand_init=True, seed=3)
            npt.assert_array_equal(self.x.data, x_adv.data)

    def test_no_iterations(self):
        x_adv = self.perturb(self.x, PerturbBudget("linf", 0.3), 0, 0.1)
        npt.assert_array_equal(self.x.data, x_adv.data)

    def test_targeted(self):
        budget = PerturbBudget("linf", 0.3)
        x_adv = attack.perturb_iterative(self.x, [1], self.model.predict_logits,
                                         CROSS_ENTROPY.as_targeted(), budget, 3, 0.1)
        npt.assert_allclose([[0.3, 0.7]], x_adv.data, atol=1e-12)

    def test_zero_gradient(self):
        predict = test_utils.constant_predict([1.0, 0.0])
        x_adv = attack.perturb_iterative(self.x, [0], predict, CROSS_ENTROPY,
                                         PerturbBudget("l2", 1.0), 5, 0.5)
        npt.assert_array_equal(self.x.data, x_adv.data)

    def test_contracts(self):
        budget = PerturbBudget("linf", 0.1)
        self.assertRaises(ContractError, lambda: self.perturb(self.x, None, 1, 0.1))
        self.assertRaises(ContractError, lambda: self.perturb(self.x, budget, -1, 0.1))
        self.assertRaises(ContractError, lambda: self.perturb(self.x, budget, 1, 0.0))
        self.assertRaises(ContractError,
                          lambda: self.perturb(self.x, budget, 1, 0.1, momentum_decay=-1.0))
        self.assertRaises(ContractError,
                          lambda: self.perturb(Tensor([[1.5, 0.0]]), budget, 1, 0.1))

    def test_seed_determinism(self):
        rng = np.random.default_rng(0)
        model = test_utils.linear_model(rng.normal(size=(6, 3)))
        x = test_utils.random_batch(rng, 4, (6,))
        budget = PerturbBudget("linf", 0.2)
        run = lambda seed: attack.perturb_iterative(
            x, [0, 1, 2, 0], model.predict_logits, CROSS_ENTROPY, budget, 3, 0.05,
            rand_init=True, seed=seed).data
        npt.assert_array_equal(run(7), run(7))
        self.assertFalse(np.array_equal(run(7), run(8)))

    def test_constraints(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            model = test_utils.linear_model(rng.normal(size=(5, 3)))
            x = test_utils.random_batch(rng, 3, (5,))
            y = rng.integers(0, 3, size=3)
            for norm in ("linf", "l2"):
                budget = PerturbBudget(norm, rng.uniform(0.0, 0.5))
                x_adv = attack.perturb_iterative(
                    x, y, model.predict_logits, CROSS_ENTROPY, budget, 5,
                    rng.uniform(0.01, 0.3), rand_init=bool(trial % 2),
                    momentum_decay=float(trial % 3), seed=trial)
                self.assertTrue(budget.contains(x_adv, x), (trial, norm))

    def test_decoupling(self):
        rng = np.random.default_rng(2)
        model = test_utils.linear_model(rng.normal(size=(4, 3)))
        x = test_utils.random_batch(rng, 2, (4,))
        budget = PerturbBudget("l2", 0.5)

        direct = attack.perturb_iterative(
            x, [1, 2], model.predict_logits, CROSS_ENTROPY, budget, 4, 0.1, rand_init=True, seed=5)
        # The same gradient field, through a tuple output and a wrapping loss.
        wrapped = attack.perturb_iterative(
            x, ([1, 2],), lambda v: (model.predict_logits(v),),
            LossFn(lambda out, y: CROSS_ENTROPY(out[0], y[0])),
            budget, 4, 0.1, rand_init=True, seed=5)
        npt.assert_array_equal(direct.data, wrapped.data)

    def test_loss_gradient(self):
        loss, grad = attack.loss_gradient(self.x, [0], self.model.predict_logits, CROSS_ENTROPY)
        p = tensor.softmax([[0.6, 0.4]])[0]
        self.assertAlmostEqual(-np.log(p[0]), loss)
        npt.assert_allclose([[p[0] - 1.0, p[1]]], grad)
