#!/usr/bin/env python

"""Tests for `storage_dr.modeling.controllers`."""

import unittest
from dataclasses import astuple

import numpy as np

from storage_dr.exceptions import ConfigurationError
from storage_dr.modeling.controllers import (
    ControllerConfig,
    DrEsmController,
    EsmController,
    GreedyController,
    compute_theta,
    dresm_decide,
    dresm_lipschitz,
    dresm_objective,
    dresm_oracle,
    dresm_weights,
    esm_decide,
    esm_weights,
    greedy_decide,
    make_controller,
    storage_size_table,
)
from storage_dr.modeling.lp_kernel import StorageLP, brute_force_lp
from storage_dr.modeling.system import (
    CostMode,
    ExogenousSample,
    apply_storage_dynamics,
    check_feasibility,
    residual_load,
)
from tests.fixtures import ACCEPTANCE, hourly_disutility, hourly_params, random_sample


class TestSizing(unittest.TestCase):

    def setUp(self):
        self.params = hourly_params()

    def test_theta_and_capacity(self):
        cfg = ControllerConfig.from_v(5., self.params)
        self.assertAlmostEqual(cfg.theta, 105.)
        self.assertAlmostEqual(cfg.capacity, 114.6)
        self.assertAlmostEqual(cfg.epsilon, 0.2)
        for v in (1., 2., 10., 50.):
            self.assertAlmostEqual(ControllerConfig.from_v(v, self.params).capacity, 18. * v + 24.6)

    def test_theta_without_prices(self):
        params = hourly_params(p_max=0., q_max=0.)
        self.assertAlmostEqual(compute_theta(params, 1.), 15.)

    def test_theta_uses_smaller_of_load_and_discharge(self):
        params = hourly_params(c_dis=4.)
        self.assertAlmostEqual(compute_theta(params, 1.), 14.4 / 0.8 + 1.25 * 4.)

    def test_invalid_v(self):
        with self.assertRaises(ConfigurationError):
            ControllerConfig.from_v(0., self.params)
        with self.assertRaises(ConfigurationError):
            compute_theta(self.params, -1.)

    def test_discharge_above_load_limit_warns(self):
        with self.assertLogs('storage_dr.modeling.controllers', level='WARNING'):
            ControllerConfig.from_v(5., hourly_params(c_dis=13.))

    def test_storage_size_table(self):
        table = storage_size_table(self.params, [1., 5.])
        self.assertEqual(list(table.columns), ['v', 'epsilon', 'theta', 'capacity'])
        self.assertAlmostEqual(table['theta'].iloc[0], 33.)
        self.assertAlmostEqual(table['capacity'].iloc[1], 114.6)


class TestWeights(unittest.TestCase):

    def setUp(self):
        self.params = hourly_params()
        self.cfg = ControllerConfig.from_v(5., self.params)
        self.x = ExogenousSample(p=10., q=4., r=0., s='H')

    def test_weights_at_theta(self):
        w = esm_weights(self.cfg.theta, self.x, self.cfg, self.params)
        self.assertAlmostEqual(w.w_h, 20.)
        self.assertAlmostEqual(w.w_s, 50.)
        self.assertAlmostEqual(w.w_c, 50.)
        self.assertEqual(w.w_r, 0.)

    def test_esm_weight_arithmetic(self):
        w = esm_weights(100., self.x, self.cfg, self.params)
        self.assertAlmostEqual(w.w_s, 43.75)
        self.assertAlmostEqual(w.w_h - w.w_s, (self.x.q - self.x.p) / self.cfg.epsilon)

    def test_weights_negative_at_low_energy(self):
        e = self.cfg.theta - 14.4 / (self.cfg.epsilon * self.params.eta_i)
        for p in (0., 5., 14.4):
            x = ExogenousSample(p=p, q=p, r=0., s='H')
            w = esm_weights(e, x, self.cfg, self.params)
            self.assertLessEqual(w.w_c, 1e-9)
            self.assertLess(w.w_r, 0.)
            self.assertLessEqual(dresm_weights(e, x, self.cfg, self.params).w_l, 1e-9)

    def test_dresm_weights(self):
        w = dresm_weights(self.cfg.theta, self.x, self.cfg, self.params)
        self.assertEqual(w.w_d, 0.)
        self.assertAlmostEqual(w.w_l, 50.)
        self.assertAlmostEqual(dresm_weights(self.cfg.theta + 1., self.x, self.cfg, self.params).w_d, 1.25)


class TestEsm(unittest.TestCase):

    def setUp(self):
        self.params = hourly_params()
        self.cfg = ControllerConfig.from_v(5., self.params)

    def test_needs_given_load(self):
        with self.assertRaises(ConfigurationError):
            esm_decide(50., ExogenousSample(10., 4., 0., 'H'), self.cfg, self.params)

    def test_actions_feasible_and_optimal(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            x = random_sample(rng, self.params, load_serving=True)
            e = float(rng.uniform(0., self.cfg.capacity))
            a = esm_decide(e, x, self.cfg, self.params)
            self.assertEqual(check_feasibility(a, x, e, self.params), [])
            self.assertEqual(a.l_tilde, x.exo_load)
            w = esm_weights(e, x, self.cfg, self.params)
            load = residual_load(x.exo_load, x.r)
            lp = StorageLP.from_residual(w.w_h, w.w_s, w.w_c, w.w_r, load, self.params)
            value = a.h_s * w.w_h + a.d_s * w.w_s - a.d_c * w.w_c - a.r_c * w.w_r
            grid = brute_force_lp(lp, 0.05)
            self.assertGreaterEqual(value, grid.objective - 1e-9 * max(1., abs(value)))

    def test_no_charging_above_theta(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            x = random_sample(rng, self.params, load_serving=True)
            e = float(rng.uniform(self.cfg.theta + 1e-6, self.cfg.capacity))
            self.assertEqual(esm_decide(e, x, self.cfg, self.params).charge, 0.)

    def test_no_selling_near_empty(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            x = random_sample(rng, self.params, load_serving=True)
            e = float(rng.uniform(0., self.cfg.empty_threshold(self.params)))
            a = esm_decide(e, x, self.cfg, self.params)
            self.assertEqual(a.discharge, 0.)


class TestDrEsm(unittest.TestCase):

    def setUp(self):
        self.params = hourly_params()
        self.d = hourly_disutility()

    def test_curtails_and_sells(self):
        cfg = ControllerConfig.from_v(1., self.params)
        x = ExogenousSample(p=10., q=4., r=0., s='H')
        a = dresm_decide(cfg.theta, x, cfg, self.params, self.d)
        self.assertAlmostEqual(a.l_tilde, 10., places=9)
        self.assertAlmostEqual(a.d_s, 10., places=9)
        self.assertAlmostEqual(a.h_s, 2., places=9)
        self.assertAlmostEqual(a.d_l + a.d_c + a.r_c, 0., places=9)
        w = dresm_weights(cfg.theta, x, cfg, self.params)
        self.assertAlmostEqual(dresm_objective(a.l_tilde, a, x, w, cfg, self.d), -4., places=9)

    def test_free_renewable_reaches_target(self):
        cfg = ControllerConfig.from_v(5., self.params)
        x = ExogenousSample(p=0., q=0., r=9., s='L')
        a = dresm_decide(cfg.theta, x, cfg, self.params, self.d)
        self.assertAlmostEqual(a.l_tilde, 8., places=9)
        self.assertEqual(a.d_l, 0.)

    def test_matches_oracle(self):
        rng = np.random.default_rng(21)
        instances = 200 if ACCEPTANCE else 30
        for _ in range(instances):
            cfg = ControllerConfig.from_v(float(rng.choice([1., 2., 5., 20.])), self.params)
            x = random_sample(rng, self.params)
            e = float(rng.uniform(0., cfg.capacity))
            w = dresm_weights(e, x, cfg, self.params)
            exact = dresm_decide(e, x, cfg, self.params, self.d)
            self.assertEqual(check_feasibility(exact, x, e, self.params), [])
            exact_value = dresm_objective(exact.l_tilde, exact, x, w, cfg, self.d)
            step = 0.05
            oracle = dresm_oracle(e, x, cfg, self.params, self.d, step)
            oracle_value = dresm_objective(oracle.l_tilde, oracle, x, w, cfg, self.d)
            self.assertLessEqual(exact_value, oracle_value + 1e-6 * max(1., abs(oracle_value)))
            coarse = dresm_oracle(e, x, cfg, self.params, self.d, step, refine=False)
            coarse_value = dresm_objective(coarse.l_tilde, coarse, x, w, cfg, self.d)
            lipschitz = dresm_lipschitz(e, x, cfg, self.params, self.d)
            self.assertLessEqual(coarse_value, exact_value + lipschitz * step)

    def test_oracle_without_consumption_range(self):
        params = hourly_params(l_max=0.)
        cfg = ControllerConfig.from_v(5., params)
        x = ExogenousSample(p=10., q=4., r=3., s='H')
        self.assertEqual(dresm_oracle(10., x, cfg, params, self.d, 0.01).l_tilde, 0.)
        self.assertEqual(dresm_decide(10., x, cfg, params, self.d).l_tilde, 0.)

    def test_oracle_endpoints_only(self):
        cfg = ControllerConfig.from_v(5., self.params)
        x = ExogenousSample(p=10., q=4., r=0., s='H')
        a = dresm_oracle(50., x, cfg, self.params, self.d, self.params.l_max, refine=False)
        self.assertIn(a.l_tilde, (0., self.params.l_max))

    def test_monotone_near_empty_and_full(self):
        cfg = ControllerConfig.from_v(2., self.params)
        rng = np.random.default_rng(22)
        for _ in range(100):
            x = random_sample(rng, self.params)
            low = float(rng.uniform(0., cfg.empty_threshold(self.params)))
            a = dresm_decide(low, x, cfg, self.params, self.d)
            self.assertEqual(a.discharge, 0.)
            self.assertTrue(all(v >= 0. for v in astuple(a)), a)
            high = float(rng.uniform(cfg.theta + 1e-6, cfg.capacity))
            a = dresm_decide(high, x, cfg, self.params, self.d)
            self.assertEqual(a.charge, 0.)
            self.assertTrue(all(v >= 0. for v in astuple(a)), a)

    def test_energy_stays_in_bounds_under_extreme_samples(self):
        cfg = ControllerConfig.from_v(2., self.params)
        rng = np.random.default_rng(23)
        e = 0.
        for _ in range(1000):
            p = float(rng.choice([0., self.params.p_max]))
            r = float(rng.choice([0., self.params.r_max]))
            x = ExogenousSample(p=p, q=float(rng.choice([0., p])), r=r,
                                s=str(rng.choice(['H', 'L'])))
            a = dresm_decide(e, x, cfg, self.params, self.d)
            self.assertEqual(check_feasibility(a, x, e, self.params), [])
            e = apply_storage_dynamics(e, a, self.params)
            self.assertGreaterEqual(e, -1e-9)
            self.assertLessEqual(e, cfg.capacity + 1e-9)


class TestGreedy(unittest.TestCase):

    def setUp(self):
        self.params = hourly_params(r_max=12.)
        self.d = hourly_disutility()

    def test_examples(self):
        self.assertEqual(greedy_decide(ExogenousSample(0., 0., 0., 'H'), self.d, self.params).l_tilde, 12.)
        a = greedy_decide(ExogenousSample(4., 0., 0., 'H'), self.d, self.params)
        self.assertAlmostEqual(a.l_tilde, 10.)
        self.assertAlmostEqual(a.d_l, 10.)
        a = greedy_decide(ExogenousSample(10., 0., 12., 'H'), self.d, self.params)
        self.assertEqual((a.l_tilde, a.d_l), (12., 0.))

    def test_given_load_served_from_grid(self):
        a = greedy_decide(ExogenousSample(10., 4., 3., 'H', exo_load=5.), self.d, self.params)
        self.assertEqual((a.l_tilde, a.d_l, a.discharge, a.charge), (5., 2., 0., 0.))

    def test_matches_grid_minimum(self):
        rng = np.random.default_rng(31)
        grid = np.linspace(0., self.params.l_max, 12001)
        for _ in range(1000):
            x = random_sample(rng, self.params)
            state = self.d.lookup(x.s)
            costs = state.beta * (state.target - grid) ** 2 + x.p * np.maximum(grid - x.r, 0.)
            a = greedy_decide(x, self.d, self.params)
            cost = state.beta * (state.target - a.l_tilde) ** 2 + x.p * max(a.l_tilde - x.r, 0.)
            self.assertLessEqual(cost, costs.min() + 1e-9)
            self.assertEqual((a.d_c, a.d_s, a.h_s, a.r_c), (0., 0., 0., 0.))


class TestMakeController(unittest.TestCase):

    def setUp(self):
        self.params = hourly_params()
        self.cfg = ControllerConfig.from_v(5., self.params)
        self.d = hourly_disutility()

    def test_modes(self):
        esm = make_controller('esm', self.cfg, self.params, self.d, load_serving=True)
        self.assertIsInstance(esm, EsmController)
        dresm = make_controller('dresm', self.cfg, self.params, self.d)
        self.assertIsInstance(dresm, DrEsmController)
        self.assertIs(dresm.mode, CostMode.DEMAND_RESPONSE)
        greedy = make_controller('greedy', self.cfg, self.params, self.d, load_serving=True)
        self.assertIsInstance(greedy, GreedyController)
        self.assertIs(greedy.mode, CostMode.LOAD_SERVING)

    def test_rejects_mismatched_scenarios(self):
        with self.assertRaises(ConfigurationError):
            make_controller('esm', self.cfg, self.params, self.d)
        with self.assertRaises(ConfigurationError):
            make_controller('dresm', self.cfg, self.params, self.d, load_serving=True)
        with self.assertRaises(ConfigurationError):
            make_controller('oracle', self.cfg, self.params, self.d)
