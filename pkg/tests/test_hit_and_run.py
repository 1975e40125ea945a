#  Copyright (c) 2021. Harvard University
#
#  Developed by Research Software Engineering,
#  Faculty of Arts and Sciences, Research Computing (FAS RC)
#  Author: Michael A Bouzinier
#
#  Licensed under the Apache License, Version 2.0 (the "License");
#  you may not use this file except in compliance with the License.
#  You may obtain a copy of the License at
#
#         http://www.apache.org/licenses/LICENSE-2.0
#
#  Unless required by applicable law or agreed to in writing, software
#  distributed under the License is distributed on an "AS IS" BASIS,
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#  See the License for the specific language governing permissions and
#  limitations under the License.
#

import numpy as np
import pytest

from hitandrun.directions import UniformSphere, CoordinateAxes
from hitandrun.errors import CoincidentPoints, UnsupportedLaw, \
    UnsupportedDimension, NumericalFailure, DimensionMismatch, BadInputs
from hitandrun.gaussian_model import build_covariance, identity, \
    log_density, sample_target
from hitandrun.hit_and_run import ChainState, displacement_law, \
    transition, step, advance, run_chain, transition_log_density, \
    kernel_mass

from conftest import random_rotation


def test_displacement_law(diag41):
    mean, variance = displacement_law(identity(3), [1.0, 2.0, 3.0],
                                      [0.0, 1.0, 0.0])
    assert mean == pytest.approx(-2.0)
    assert variance == pytest.approx(1.0)
    mean, variance = displacement_law(diag41, [2.0, 0.0], [1.0, 0.0])
    assert mean == pytest.approx(-2.0)
    assert variance == pytest.approx(4.0)
    mean, _ = displacement_law(diag41, [0.0, 0.0], [0.6, 0.8])
    assert mean == 0
    with pytest.raises(DimensionMismatch):
        displacement_law(diag41, [1.0, 2.0, 3.0], [1.0, 0.0])


def test_forced_transition(diag41):
    moved = transition(diag41, np.array([[2.0, 0.0]]),
                       np.array([[1.0, 0.0]]), np.array([0.0]))
    assert np.allclose(moved, [[0.0, 0.0]], atol=1e-15)


def test_transition_stays_on_line(rng, dense41):
    x = rng.standard_normal((500, 2)) * 3
    v = UniformSphere(2).sample(rng, 500)
    moved = transition(dense41, x, v, rng.standard_normal(500))
    delta = moved - x
    cross = delta[:, 0] * v[:, 1] - delta[:, 1] * v[:, 0]
    assert np.all(np.abs(cross) <= 1e-12 * (1 + np.abs(delta).sum(axis=1)))


def test_gibbs_step_resamples_one_coordinate(rng):
    state = ChainState([5.0, -3.0])
    new = step(identity(2), CoordinateAxes(2), state, rng)
    assert new.step_count == 1
    unchanged = np.isclose(new.position, state.position, rtol=0, atol=0)
    assert np.count_nonzero(unchanged) == 1


def test_chain_state_rejects_non_finite():
    with pytest.raises(NumericalFailure) as failure:
        ChainState([np.nan, 1.0], 4)
    assert failure.value.payload["step"] == 4


def test_two_forms_over_many_steps(rng):
    C = build_covariance([[3.0, 1.2, 0.1], [1.2, 2.0, -0.4],
                          [0.1, -0.4, 0.7]])
    x = sample_target(C, rng, 10000)
    for _ in range(3):
        x = advance(C, UniformSphere(3), x, rng)
    assert np.all(np.isfinite(x))


@pytest.mark.parametrize("k", [1, 10])
def test_target_is_invariant(rng, dense41, k):
    n = 10 ** 5
    x = sample_target(dense41, rng, n)
    for _ in range(k):
        x = advance(dense41, UniformSphere(2), x, rng)
    scale = np.sqrt(np.outer(np.diag(dense41.matrix),
                             np.diag(dense41.matrix)))
    assert np.all(np.abs(x.mean(axis=0))
                  <= 5 * np.sqrt(np.diag(dense41.matrix) / n))
    assert np.all(np.abs(np.cov(x.T) - dense41.matrix)
                  <= 5 * 1.5 * scale / np.sqrt(n))


def test_run_chain_zero_steps(diag41, rng):
    trajectory = run_chain(diag41, UniformSphere(2), [1.0, 2.0], 0, rng)
    assert trajectory.steps.tolist() == [0]
    assert np.array_equal(trajectory.positions, [[1.0, 2.0]])
    assert trajectory.final.step_count == 0
    with pytest.raises(BadInputs):
        run_chain(diag41, UniformSphere(2), [1.0, 2.0], -1, rng)


def test_run_chain_is_deterministic(diag41):
    runs = [run_chain(diag41, UniformSphere(2), [1.0, 2.0], 200,
                      np.random.Generator(np.random.PCG64(11)))
            for _ in range(2)]
    assert np.array_equal(runs[0].positions, runs[1].positions)
    assert np.array_equal(runs[0].natural_norms, runs[1].natural_norms)


def test_run_chain_thinning(diag41, rng):
    trajectory = run_chain(diag41, UniformSphere(2), [0.0, 0.0], 100, rng,
                           cap=16)
    assert len(trajectory.positions) < 16
    assert np.all(np.diff(trajectory.steps) == trajectory.steps[1])
    assert len(trajectory.natural_norms) == 101


def test_run_chain_stationary_variance(diag41, rng):
    trajectory = run_chain(diag41, UniformSphere(2), [10.0, 10.0], 10 ** 4,
                           rng)
    tail = trajectory.positions[5000:, 0]
    assert 3.4 <= np.var(tail) <= 4.6


def test_detailed_balance(rng, dense41):
    x = rng.standard_normal((1000, 2)) * 2
    y = rng.standard_normal((1000, 2)) * 2
    left = log_density(dense41, x) + transition_log_density(dense41, x, y)
    right = log_density(dense41, y) + transition_log_density(dense41, y, x)
    assert np.all(np.abs(left - right) <= 1e-9 * np.maximum(1, np.abs(left)))


def test_density_is_rotation_invariant_for_identity(rng):
    q = random_rotation(rng, 3)
    C = identity(3)
    for _ in range(20):
        x, y = rng.standard_normal((2, 3))
        assert transition_log_density(C, x, y) == \
            pytest.approx(transition_log_density(C, q @ x, q @ y),
                          abs=1e-10)


@pytest.mark.parametrize("x", [[-2.0, 0.0], [0.0, 1.0]])
def test_kernel_normalization(diag41, x):
    assert kernel_mass(diag41, x) == pytest.approx(1.0, abs=1e-6)


def test_density_errors(diag41):
    with pytest.raises(CoincidentPoints):
        transition_log_density(diag41, [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(UnsupportedLaw):
        transition_log_density(diag41, [1.0, 1.0], [0.0, 1.0],
                               CoordinateAxes(2))
    with pytest.raises(UnsupportedDimension):
        transition_log_density(identity(1), [1.0], [2.0])
    with pytest.raises(UnsupportedDimension):
        kernel_mass(identity(3), [0.0, 0.0, 0.0])
