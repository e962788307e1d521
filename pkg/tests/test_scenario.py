#!/usr/bin/env python

"""Tests for the scenario layer and the data getter."""

import json
import os
import tempfile
import unittest

import numpy as np

from storage_dr.data.datagetter import DataGetter
from storage_dr.data.scenario import (
    AdversarialScenario,
    IIDScenario,
    MarkovScenario,
    ProfileTable,
    build_hourly_scenario,
    chain_problem,
    load_scenario_config,
    sample_iid,
    save_scenario_config,
    scenario_from_dict,
    step_markov,
)
from storage_dr.exceptions import ScenarioError
from storage_dr.modeling.controllers import ControllerConfig
from storage_dr.modeling.system import ExogenousSample
from storage_dr.utils.rng import cumulative, draw_index, make_rng
from tests.fixtures import hourly_disutility, hourly_params


class TestHourly(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.scenario, cls.params, cls.disutility = build_hourly_scenario()

    def test_outcome_table(self):
        self.assertEqual(len(self.scenario.outcomes), 24 * 24 * 2)
        self.assertAlmostEqual(self.scenario.probabilities.sum(), 1., places=12)
        self.assertFalse(self.scenario.load_serving)
        self.assertEqual(self.scenario.name, 'hourly')

    def test_profile_statistics(self):
        profiles = self.scenario.profiles
        self.assertAlmostEqual(profiles.prices.mean(), 12., places=9)
        self.assertAlmostEqual(profiles.prices.max(), 14.4, places=9)
        self.assertAlmostEqual(profiles.wind.mean(), 8., places=9)
        self.assertLessEqual(profiles.wind.max(), 9. + 1e-9)

    def test_expected_values(self):
        p = np.array([x.p for x in self.scenario.outcomes])
        r = np.array([x.r for x in self.scenario.outcomes])
        q = np.array([x.q for x in self.scenario.outcomes])
        probabilities = self.scenario.probabilities
        self.assertAlmostEqual(probabilities @ p, 12., places=9)
        self.assertAlmostEqual(probabilities @ r, 8., places=9)
        np.testing.assert_allclose(q, p)

    def test_sample_means(self):
        stream = self.scenario.stream(seed=0)
        samples = [stream.next(None)[1] for _ in range(20000)]
        self.assertAlmostEqual(np.mean([x.p for x in samples]), 12., delta=0.1)
        self.assertAlmostEqual(np.mean([x.r for x in samples]), 8., delta=0.1)
        self.assertAlmostEqual(np.mean([x.s == 'H' for x in samples]), 0.5, delta=0.02)

    def test_load_serving_variant(self):
        scenario, _, _ = build_hourly_scenario(load_serving=True)
        self.assertTrue(scenario.load_serving)
        for x in scenario.outcomes[:10]:
            self.assertEqual(x.exo_load, 12. if x.s == 'H' else 8.)
        self.assertEqual(scenario.name, 'hourly_load')

    def test_overrides(self):
        scenario, params, _ = build_hourly_scenario(overrides={'c_char': 6.})
        self.assertEqual(params.c_char, 6.)
        self.assertEqual(scenario.params, params)
        with self.assertRaises(ScenarioError):
            build_hourly_scenario(overrides={'battery': 3.})

    def test_bundled_file_matches_builder(self):
        loaded = load_scenario_config('hourly')
        self.assertEqual(loaded.outcomes, self.scenario.outcomes)
        np.testing.assert_allclose(loaded.probabilities, self.scenario.probabilities)


class TestIIDScenario(unittest.TestCase):

    def setUp(self):
        self.params = hourly_params()
        self.d = hourly_disutility()
        self.outcomes = [ExogenousSample(10., 5., 0., 'H'), ExogenousSample(12., 6., 3., 'L')]

    def test_probabilities_must_sum_to_one(self):
        with self.assertRaises(ScenarioError) as ctx:
            IIDScenario(self.outcomes[:1], [0.9], self.params, self.d)
        self.assertEqual(ctx.exception.field, 'outcomes')

    def test_sample_bounds(self):
        with self.assertRaises(ScenarioError) as ctx:
            IIDScenario([ExogenousSample(20., 5., 0., 'H')], [1.], self.params, self.d)
        self.assertEqual(ctx.exception.field, 'outcomes[0]')
        self.assertIn('p=20', str(ctx.exception))

    def test_unknown_state(self):
        with self.assertRaises(ScenarioError):
            IIDScenario([ExogenousSample(10., 5., 0., 'X')], [1.], self.params, self.d)

    def test_mixed_given_load(self):
        outcomes = [self.outcomes[0], ExogenousSample(12., 6., 3., 'L', exo_load=4.)]
        with self.assertRaises(ScenarioError):
            IIDScenario(outcomes, [0.5, 0.5], self.params, self.d)

    def test_invalid_params(self):
        with self.assertRaises(ScenarioError) as ctx:
            IIDScenario(self.outcomes, [0.5, 0.5], hourly_params(c_grid=5.), self.d)
        self.assertEqual(ctx.exception.field, 'params')

    def test_streams_are_reproducible(self):
        scenario = IIDScenario(self.outcomes, [0.3, 0.7], self.params, self.d)
        a, b = scenario.stream(4), scenario.stream(4)
        draws_a = [a.next(None)[0] for _ in range(200)]
        self.assertEqual(draws_a, [b.next(None)[0] for _ in range(200)])
        other = scenario.stream(4, run_index=1)
        self.assertNotEqual(draws_a, [other.next(None)[0] for _ in range(200)])
        self.assertAlmostEqual(np.mean(draws_a), 0.7, delta=0.1)

    def test_sample_iid(self):
        scenario = IIDScenario(self.outcomes, [0., 1.], self.params, self.d)
        rng = make_rng(0)
        self.assertEqual({sample_iid(scenario, rng) for _ in range(50)}, {self.outcomes[1]})

    def test_transition_matrix(self):
        scenario = IIDScenario(self.outcomes, [0.3, 0.7], self.params, self.d)
        np.testing.assert_allclose(scenario.transition_matrix(), [[0.3, 0.7], [0.3, 0.7]])


class TestMarkovScenario(unittest.TestCase):

    def setUp(self):
        self.scenario = load_scenario_config('markov4')

    def test_chain_checks(self):
        self.assertIsNone(chain_problem(self.scenario.transition))
        self.assertEqual(chain_problem([[0., 1.], [1., 0.]]), 'chain is periodic (period 2)')
        self.assertEqual(chain_problem([[1., 0.], [0., 1.]]), 'chain is not irreducible')
        self.assertEqual(chain_problem([[0., 1., 0.], [0., 0., 1.], [1., 0., 0.]]),
                         'chain is periodic (period 3)')
        self.assertIsNone(chain_problem([[0., 1., 0.], [0., 0., 1.], [0.5, 0.5, 0.]]))

    def test_rejects_periodic_chain(self):
        emissions = self.scenario.outcomes[:2]
        with self.assertRaises(ScenarioError) as ctx:
            MarkovScenario(['a', 'b'], [[0., 1.], [1., 0.]], emissions, self.scenario.params,
                           self.scenario.disutility)
        self.assertEqual(ctx.exception.field, 'chain.transition')
        with self.assertRaises(ScenarioError):
            MarkovScenario(['a', 'b'], [[0.5, 0.4], [0.5, 0.5]], emissions, self.scenario.params,
                           self.scenario.disutility)

    def test_stationary_distribution(self):
        np.testing.assert_allclose(self.scenario.stationary_distribution(),
                                   [1. / 3.4, 0.8 / 3.4, 0.8 / 3.4, 0.8 / 3.4], atol=1e-12)

    def test_occupancy(self):
        stream = self.scenario.stream(seed=2)
        first, sample = stream.next(None)
        self.assertEqual(first, self.scenario.index('night'))
        self.assertEqual(sample, self.scenario.emission('night'))
        visits = np.bincount([stream.next(None)[0] for _ in range(50000)], minlength=4) / 50000.
        np.testing.assert_allclose(visits, self.scenario.stationary_distribution(), atol=0.02)

    def test_step_markov_follows_support(self):
        rng = make_rng(1)
        state = 'morning'
        for _ in range(200):
            following, sample = step_markov(self.scenario, state, rng)
            self.assertGreater(self.scenario.transition[self.scenario.index(state),
                                                        self.scenario.index(following)], 0.)
            self.assertEqual(sample, self.scenario.emission(following))
            state = following


class TestAdversarialScenario(unittest.TestCase):

    def setUp(self):
        self.params = hourly_params()
        self.scenario = AdversarialScenario(self.params, hourly_disutility())
        self.cfg = ControllerConfig.from_v(5., self.params)

    def test_needs_sizing(self):
        with self.assertRaises(ScenarioError):
            self.scenario.stream(0)

    def test_reacts_to_energy(self):
        stream = self.scenario.stream(0, cfg=self.cfg)
        _, high = stream.next(self.cfg.theta + 1.)
        self.assertEqual((high.p, high.q, high.r), (0., 0., self.params.r_max))
        _, low = stream.next(1.)
        self.assertEqual((low.p, low.q, low.r), (self.params.p_max, self.params.q_max, 0.))

    def test_samples_within_bounds(self):
        scenario = AdversarialScenario(self.params, hourly_disutility(), load_serving=True)
        stream = scenario.stream(0, cfg=self.cfg)
        for e in np.linspace(0., self.cfg.capacity, 100):
            index, x = stream.next(float(e))
            self.assertEqual(index, -1)
            self.assertEqual(x.validate(self.params), [])
            self.assertIsNotNone(x.exo_load)


class TestScenarioFiles(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_round_trip(self):
        for name in ('markov4', 'oracle_small', 'hourly'):
            scenario = load_scenario_config(name)
            target = save_scenario_config(scenario, self.path(f'{name}.json'))
            again = load_scenario_config(target)
            self.assertEqual(again.to_dict(), scenario.to_dict())

    def test_adversarial_round_trip(self):
        scenario = AdversarialScenario(hourly_params(), hourly_disutility(), load_serving=True)
        again = load_scenario_config(save_scenario_config(scenario, self.path('adv.json')))
        self.assertIsInstance(again, AdversarialScenario)
        self.assertTrue(again.load_serving)

    def test_parse_error_has_line(self):
        with open(self.path('broken.json'), 'w') as handle:
            handle.write('{\n  "name": "broken",\n  "mode": iid\n}\n')
        with self.assertRaises(ScenarioError) as ctx:
            load_scenario_config(self.path('broken.json'))
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn('line 3', str(ctx.exception))

    def test_missing_and_unknown_fields(self):
        values = load_scenario_config('oracle_small').to_dict()
        broken = dict(values)
        del broken['params']
        with self.assertRaises(ScenarioError) as ctx:
            scenario_from_dict(broken)
        self.assertEqual(ctx.exception.field, 'params')
        with self.assertRaises(ScenarioError) as ctx:
            scenario_from_dict(dict(values, mode='weekly'))
        self.assertEqual(ctx.exception.field, 'mode')
        broken = json.loads(json.dumps(values))
        del broken['outcomes'][1]['probability']
        with self.assertRaises(ScenarioError) as ctx:
            scenario_from_dict(broken)
        self.assertEqual(ctx.exception.field, 'outcomes[1]')

    def test_missing_file(self):
        with self.assertRaises(ScenarioError):
            load_scenario_config('no_such_scenario')


class TestDataGetter(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        os.makedirs(os.path.join(self.tmp.name, 'profiles'))

    def write_profile(self, name, values):
        with open(os.path.join(self.tmp.name, 'profiles', name), 'w') as handle:
            handle.write('# test profile\nhour,value\n')
            for hour, value in enumerate(values):
                handle.write(f'{hour},{value}\n')

    def test_bundled_profiles(self):
        prices = DataGetter().get_profile('price_hourly.csv')
        self.assertEqual(len(prices), 24)
        self.assertAlmostEqual(prices.max(), 14.4)

    def test_project_data_first(self):
        self.write_profile('price_hourly.csv', [1.] * 24)
        getter = DataGetter(project_data=self.tmp.name)
        np.testing.assert_array_equal(getter.get_profile('price_hourly.csv'), np.ones(24))
        self.assertEqual(len(getter.get_profile('wind_hourly.csv')), 24)

    def test_wrong_length(self):
        self.write_profile('short.csv', [1.] * 23)
        with self.assertRaises(ScenarioError):
            DataGetter(project_data=self.tmp.name).get_profile('short.csv')

    def test_flat_profile_table(self):
        self.write_profile('flat.csv', [2.] * 24)
        getter = DataGetter(project_data=self.tmp.name)
        table = ProfileTable.from_files('flat.csv', 'flat.csv', getter=getter)
        np.testing.assert_allclose(table.prices, 12.)
        np.testing.assert_allclose(table.wind, 8.)
        with self.assertRaises(ScenarioError):
            ProfileTable((1.,) * 24, (1.,) * 24, wind_capacity=5.)


class TestRng(unittest.TestCase):

    def test_streams(self):
        self.assertEqual(make_rng(3).random(), make_rng(3).random())
        self.assertNotEqual(make_rng(3, 0).random(), make_rng(3, 1).random())
        with self.assertRaises(ValueError):
            make_rng(-1)

    def test_draw_index(self):
        cdf = cumulative([0.2, 0.0, 0.8])
        rng = make_rng(0)
        draws = [draw_index(rng, cdf) for _ in range(5000)]
        self.assertNotIn(1, draws)
        self.assertAlmostEqual(draws.count(0) / 5000., 0.2, delta=0.03)
