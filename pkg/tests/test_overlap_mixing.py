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

import itertools

import numpy as np
import pytest

from hitandrun.errors import BadEpsilon, BadInputs, CoincidentPoints, \
    UnsupportedDimension
from hitandrun.gaussian_model import identity, \
    natural_norm, sample_target
from hitandrun.overlap_mixing import overlap_constants, overlap_terms, \
    tv_bound_pointwise, tv_quadrature_2d, tv_quadrature_report, \
    mixing_time_bound, tv_measure_bound, target_constant_moments, \
    chi_mean, epsilon_schedule, tv_after_steps_bound, \
    explicit_mixing_steps


FIGURE_X = [-2.0, 0.0]
FIGURE_XT = [0.0, 1.0]


def test_constants_at_origin():
    constants = overlap_constants(identity(2), [0.0, 0.0], 0.5)
    assert constants.c1 == pytest.approx(2.0)
    assert constants.c2 == pytest.approx(11.0)
    expected = np.sqrt(2) * np.sqrt(1 + np.log(2)) + 2 * np.sqrt(2)
    assert constants.c3 == pytest.approx(expected)
    assert constants.c3 == pytest.approx(4.669, abs=1e-3)


def test_constants_depend_on_natural_norm_only(diag41):
    a = overlap_constants(diag41, [2.0, 0.0], 0.3)
    b = overlap_constants(diag41, [0.0, 1.0], 0.3)
    assert natural_norm(diag41, [2.0, 0.0]) == \
        natural_norm(diag41, [0.0, 1.0])
    assert a.c3 == pytest.approx(b.c3)
    assert a.c1 == pytest.approx(b.c1)
    assert a.c2 == pytest.approx(b.c2)


def test_inverse_epsilon_terms_shrink(diag41):
    for epsilon in [0.01, 0.1, 0.4]:
        small = overlap_terms(diag41, 1.5, 2.25, epsilon)
        large = overlap_terms(diag41, 1.5, 2.25, 2 * epsilon)
        assert large["c1_inv_eps"] <= small["c1_inv_eps"]
        assert large["c2_inv_eps"] <= small["c2_inv_eps"]


def test_epsilon_must_be_in_unit_interval(diag41):
    for epsilon in [0.0, 1.0, -0.5]:
        with pytest.raises(BadEpsilon):
            overlap_constants(diag41, [0.0, 0.0], epsilon)


def test_pointwise_bound(diag41):
    bound = tv_bound_pointwise(diag41, FIGURE_X, FIGURE_XT, 0.1)
    assert np.isfinite(bound.raw)
    assert bound.clamped == min(1.0, bound.raw)
    previous = 0
    for t in np.linspace(0, 3, 10):
        value = tv_bound_pointwise(diag41, FIGURE_X,
                                   [-2.0 + t, 0.0], 0.1).raw
        assert value >= previous
        previous = value


def test_pointwise_bound_vanishes_with_epsilon(diag41):
    values = [tv_bound_pointwise(diag41, FIGURE_X, FIGURE_X, 10.0 ** -k).raw
              for k in range(1, 12)]
    assert np.all(np.diff(values) < 0)
    assert values[-1] < 1e-3


def test_tv_quadrature_figure_configuration(diag41):
    report = tv_quadrature_report(diag41, FIGURE_X, FIGURE_XT)
    assert 0 < report["tv"] < 1
    assert report["tail"] < 1e-3
    swapped = tv_quadrature_2d(diag41, FIGURE_XT, FIGURE_X)
    assert swapped == pytest.approx(report["tv"], abs=2e-4)
    bound = tv_bound_pointwise(diag41, FIGURE_X, FIGURE_XT, 0.1)
    assert report["tv"] <= bound.clamped + 1e-3


def test_tv_quadrature_continuity(diag41):
    assert tv_quadrature_2d(diag41, [0.5, 0.5], [0.5005, 0.5008]) <= 0.05


def test_tv_quadrature_errors(diag41):
    with pytest.raises(CoincidentPoints):
        tv_quadrature_2d(diag41, [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(UnsupportedDimension):
        tv_quadrature_2d(identity(3), [0.0, 0.0, 0.0], [1.0, 0.0, 0.0])


def start_grid():
    grid = np.linspace(-3, 3, 5)
    return [np.array(p) for p in itertools.product(grid, grid)]


def test_overlap_lemma_on_reduced_grid(diag41):
    points = start_grid()
    pairs = [(points[i], points[(7 * i + 3) % 25]) for i in range(0, 25, 4)]
    for x, xt in pairs:
        if np.array_equal(x, xt):
            continue
        tv = tv_quadrature_2d(diag41, x, xt, 256, 512)
        for epsilon in [0.05, 0.1, 0.3]:
            bound = tv_bound_pointwise(diag41, x, xt, epsilon)
            assert tv <= bound.clamped + 1e-3


@pytest.mark.slow
def test_overlap_lemma_on_full_grid(diag41):
    # TV is symmetric, every unordered pair of distinct starts
    for x, xt in itertools.combinations(start_grid(), 2):
        tv = tv_quadrature_2d(diag41, x, xt)
        for epsilon in [0.05, 0.1, 0.3]:
            bound = tv_bound_pointwise(diag41, x, xt, epsilon)
            assert tv <= bound.clamped + 1e-3


def test_mixing_time_bound(diag41):
    assert mixing_time_bound(diag41, 1 / 6, 0.1, np.sqrt(2)) == 29
    assert mixing_time_bound(diag41, 1 / 6, 0.5, 1 / 16) == 0
    assert mixing_time_bound(identity(2), 0.25, 0.01, 1.0) == 22
    assert mixing_time_bound(diag41, 0.1, 0.1, 1.0, 2.0, 3.0) == 110
    assert mixing_time_bound(diag41, 0.1, 0.1, 0.0) == 0


def test_mixing_time_bound_monotonicity(diag41):
    by_rho = [mixing_time_bound(diag41, rho, 0.1, 2.0)
              for rho in [0.05, 0.1, 0.2, 0.4]]
    assert by_rho == sorted(by_rho, reverse=True)
    by_eps = [mixing_time_bound(diag41, 0.1, eps, 2.0)
              for eps in [0.5, 0.1, 0.01, 0.001]]
    assert by_eps == sorted(by_eps)
    with pytest.raises(BadInputs):
        mixing_time_bound(diag41, 0.0, 0.1, 1.0)


def test_tv_measure_bound():
    C = identity(2)
    stats = target_constant_moments(C, 0.5)
    assert tv_measure_bound(C, stats, 0.0, 0.5) == \
        pytest.approx(np.sqrt(2) * stats[2] * np.sqrt(0.5))
    value = tv_measure_bound(C, stats, 0.3, 0.5)
    expected = np.sqrt(2) * (np.sqrt(stats[0]) * 0.3
                             + np.sqrt(stats[1]) * np.sqrt(0.3)
                             + stats[2] * np.sqrt(0.5))
    assert value == pytest.approx(expected)
    with pytest.raises(BadEpsilon):
        tv_measure_bound(C, stats, 0.3, 1.5)


def test_target_moments_by_monte_carlo(rng, diag41):
    epsilon = 0.2
    x = sample_target(diag41, rng, 10 ** 5)
    r = natural_norm(diag41, x)
    terms = overlap_terms(diag41, r, r * r, epsilon)
    c1 = terms["c1_inv_eps"] + terms["c1_rest"]
    expected = target_constant_moments(diag41, epsilon)
    se = np.std(c1, ddof=1) / np.sqrt(len(c1))
    assert abs(np.mean(c1) - expected[0]) <= 4 * se
    assert chi_mean(2) == pytest.approx(np.sqrt(np.pi / 2))
    upper = target_constant_moments(diag41, epsilon, exact=False)
    assert all(u >= e for u, e in zip(upper, expected))


def test_explicit_mixing_pipeline(diag41):
    epsilon = epsilon_schedule(diag41, 0.5)
    assert epsilon == pytest.approx(0.5 ** 4 / (16 * 4))
    n = explicit_mixing_steps(diag41, 1 / 6, 0.5, np.sqrt(2))
    assert n == 96
    assert tv_after_steps_bound(diag41, 1 / 6, np.sqrt(2), n, epsilon) \
        <= 0.5 * (1 + 1e-9)
    assert tv_after_steps_bound(diag41, 1 / 6, np.sqrt(2), n - 1,
                                epsilon) > 0.5
    # a coarse regularization leaves a floor above the target
    with pytest.raises(BadInputs):
        explicit_mixing_steps(diag41, 1 / 6, 0.5, np.sqrt(2), 0.5)
    epsilon = 1e-4
    n = explicit_mixing_steps(diag41, 1 / 6, 0.5, np.sqrt(2), epsilon)
    assert n >= 1
    assert tv_after_steps_bound(diag41, 1 / 6, np.sqrt(2), n, epsilon) \
        <= 0.5 * (1 + 1e-9)
    if n > 1:
        assert tv_after_steps_bound(diag41, 1 / 6, np.sqrt(2), n - 1,
                                    epsilon) > 0.5
    with pytest.raises(BadInputs):
        epsilon_schedule(diag41, 1.5)
