#!/usr/bin/env python

"""
Long-running checks of the full pipeline; enabled with STORAGE_DR_ACCEPTANCE=1.
"""

import unittest

import numpy as np

from storage_dr.data.scenario import build_hourly_scenario, load_scenario_config
from storage_dr.modeling.controllers import ControllerConfig, make_controller
from storage_dr.simulate import lp_selftest, oracle_gap, run_simulation, sweep
from storage_dr.visualization.analysis import avg_cost_vs_v, compare_runs
from tests.fixtures import ACCEPTANCE


@unittest.skipUnless(ACCEPTANCE, 'set STORAGE_DR_ACCEPTANCE=1 to run acceptance checks')
class TestAcceptance(unittest.TestCase):

    def test_lp_kernel_against_grid(self):
        results = lp_selftest(1000, seed=1)
        self.assertTrue(results['passed'].all())

    def test_long_runs_are_clean(self):
        scenario, params, d = build_hourly_scenario()
        for v in (2., 5., 20.):
            cfg = ControllerConfig.from_v(v, params)
            result, _ = run_simulation(make_controller('dresm', cfg, params, d), scenario, params, cfg,
                                       100000, 0)
            self.assertEqual(result.violations, {})
            self.assertLessEqual(result.max_energy, cfg.capacity + 1e-9)

    def test_capacity_and_cost_follow_v(self):
        scenario, _, _ = build_hourly_scenario()
        runs = sweep(scenario, ['dresm', 'greedy'], [2., 20.], [0, 1], 50000, threads=1)
        capacity = {m.v: m.capacity for m in runs if m.controller == 'dresm'}
        self.assertGreater(capacity[20.], capacity[2.])
        costs = compare_runs(runs).set_index('v')['average_cost']
        self.assertLessEqual(costs.loc[20.], costs.loc[2.] + 0.02 * abs(costs.loc[2.]))

    def test_optimality_gap(self):
        scenario = load_scenario_config('oracle_small')
        for v in (5., 20.):
            report = oracle_gap(scenario, v, 0.5, delta_a=0.5, T=10 ** 5, seed=0)
            self.assertTrue(report.passed, report.to_dict())
            self.assertTrue(np.isfinite(report.gain))


@unittest.skipUnless(ACCEPTANCE, 'set STORAGE_DR_ACCEPTANCE=1 to run acceptance checks')
class TestHourlySweep(unittest.TestCase):
    '''
    DR-ESM and Greedy on the hourly scenario, every V in V_LIST with five
    seeds over 10^4 slots. The sweep uses STORAGE_DR_THREADS workers.
    '''
    V_LIST = [2., 5., 10., 20., 50.]
    SEEDS = [0, 1, 2, 3, 4]

    @classmethod
    def setUpClass(cls):
        cls.scenario, cls.params, _ = build_hourly_scenario()
        cls.runs = sweep(cls.scenario, ['dresm', 'greedy'], cls.V_LIST, cls.SEEDS, 10000, strict=False)

    def test_sample_path_bounds(self):
        dresm = [m for m in self.runs if m.controller == 'dresm']
        self.assertEqual(len(dresm), len(self.V_LIST) * len(self.SEEDS))
        for m in dresm:
            cfg = ControllerConfig.from_v(m.v, self.params)
            self.assertEqual(m.violations, {}, (m.v, m.seed))
            self.assertGreaterEqual(m.min_energy, -1e-9)
            self.assertLessEqual(m.max_energy, cfg.theta + self.params.eta_i * self.params.c_char + 1e-9)
            self.assertGreaterEqual(m.drift_margin_min, -1e-6)

    def test_dresm_beats_greedy(self):
        table = compare_runs(self.runs).set_index('v')
        self.assertEqual(list(table.index), self.V_LIST)
        for v, row in table.iterrows():
            self.assertLess(row['average_cost'], row['base_cost'], v)
            if v >= 5.:
                self.assertGreater(row['savings_percent'], 50., v)

    def test_cost_non_increasing_in_v(self):
        series = avg_cost_vs_v([m for m in self.runs if m.controller == 'dresm']).set_index('v')
        batch_se = {v: np.mean([m.standard_error for m in self.runs if m.controller == 'dresm' and m.v == v])
                    for v in self.V_LIST}
        se = {v: max(series.loc[v, 'standard_error'], batch_se[v] / np.sqrt(len(self.SEEDS)))
              for v in self.V_LIST}
        for small, large in zip(self.V_LIST, self.V_LIST[1:]):
            slack = 3. * np.hypot(se[small], se[large])
            self.assertLessEqual(series.loc[large, 'average_cost'],
                                 series.loc[small, 'average_cost'] + slack, (small, large))


@unittest.skipUnless(ACCEPTANCE, 'set STORAGE_DR_ACCEPTANCE=1 to run acceptance checks')
class TestMarkovSweep(unittest.TestCase):

    def test_bounds_hold_and_dresm_beats_greedy(self):
        scenario = load_scenario_config('markov4')
        runs = sweep(scenario, ['dresm', 'greedy'], [2., 5., 20.], [0], 10000, strict=False)
        for m in runs:
            if m.controller != 'dresm':
                continue
            cfg = ControllerConfig.from_v(m.v, scenario.params)
            self.assertEqual(m.violations, {}, m.v)
            self.assertGreaterEqual(m.min_energy, -1e-9)
            self.assertLessEqual(m.max_energy, cfg.capacity + 1e-9)
        table = compare_runs(runs)
        self.assertEqual(len(table), 3)
        self.assertTrue((table['average_cost'] < table['base_cost']).all(), table)
