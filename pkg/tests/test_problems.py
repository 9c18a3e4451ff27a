import pickle

import numpy as np
import pytest

from molelab import interaction as ci
from molelab import objectives as ob
from molelab import problems
from molelab import simpoplocal as sl

NAMES = sl.GENOME_FIELDS
GENOME = np.array([1e-4, 1e-5, 1.0, 0.05, 5000.0])
SMALL = sl.SimpopLocalParams(n_places=12, max_steps=200, max_innovations=300)


def test_simpoplocal_calibration_matches_direct_evaluation():
    prob = problems.SimpopLocalCalibration(NAMES, SMALL, replications=3)
    rec = ob.evaluate_simpoplocal(dict(zip(NAMES, GENOME)), 3, 11, SMALL)
    np.testing.assert_array_equal(prob(GENOME, 11), rec.objectives)
    assert pickle.loads(pickle.dumps(prob)) == prob


def test_simpoplocal_pattern_descriptor():
    prob = problems.SimpopLocalPattern(NAMES, SMALL, replications=3)
    pat = prob(GENOME, 2)
    rows = [problems.simpoplocal_pattern(sl.run(SMALL.with_genome(dict(zip(NAMES, GENOME))), ob.replication_seed(2, k)))
            for k in range(3)]
    np.testing.assert_array_equal(pat, np.median(rows, axis=0))
    assert pat[0] <= 0


def test_pattern_handles_extinct_places():
    places = [sl.Place(0, 0, 0, 100.0, 100.0), sl.Place(1, 1, 0, 0.0, 10.0)]
    out = sl.SimulationOutcome(places, 10, 0, "max_steps")
    np.testing.assert_array_equal(problems.simpoplocal_pattern(out), [0.0, 2.0, 0.0])


def test_city_calibration_zero_at_truth():
    system = ci.random_system(8, 0)
    truth = ci.InteractionParams(r0=0.01, w_gravity=0.02, w_network=0.01, steps=10)
    observed = ci.simulate(system, truth).population
    prob = problems.CityCalibration(system, observed, ci.InteractionParams(steps=10), ("r0", "w_gravity", "w_network"))
    np.testing.assert_allclose(prob([0.01, 0.02, 0.01]), [0.0, 0.0], atol=1e-18)
    assert np.all(prob([0.02, 0.02, 0.01]) > 0)


def test_city_regime_vector():
    system = ci.random_system(8, 1)
    names = ("r0", "w_gravity", "w_network", "capacity_rate")
    prob = problems.CityRegime(system, ci.InteractionParams(steps=20), names, tau_max=3)
    v = prob([0.01, 0.3, 0.2, 1.0])
    assert v.shape == (6,)
    assert set(v.tolist()) <= {-1.0, 0.0, 1.0}


def test_analytic_problems():
    assert problems.BiObjective()([0.25, 9.0]).tolist() == [0.0625, 0.5625]
    assert problems.Quadratic()([0.3, 0.7, 5.0])[0] == 0.0
    assert problems.Banana()([0.5, 0.5]).tolist() == pytest.approx([0.5, 2.5])
    front = problems.BiObjective.true_front(11)
    assert front[0].tolist() == [0.0, 1.0] and front[-1].tolist() == [1.0, 0.0]
