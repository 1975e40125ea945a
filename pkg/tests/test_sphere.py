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

from conftest import random_rotation
from hitandrun.sphere import circle_nodes, nodes_for_condition, \
    average_circle, average_sphere, DEFAULT_CIRCLE_NODES
from hitandrun.errors import BadInputs


def quadratic_monomials(points):
    return np.column_stack([points[:, 0] ** 2, points[:, 1] ** 2,
                            points[:, 0] * points[:, 1]])


def test_circle_nodes():
    nodes = circle_nodes(16)
    assert nodes.shape == (16, 2)
    assert np.allclose(np.linalg.norm(nodes, axis=1), 1, atol=1e-15)
    assert np.allclose(nodes[0], [1.0, 0.0])


def test_nodes_for_condition():
    assert nodes_for_condition(DEFAULT_CIRCLE_NODES, 1.0) == 2048
    assert nodes_for_condition(10, 100.0) == 4000
    assert nodes_for_condition(11, 0.0) == 12


def test_circle_average_of_polynomials():
    average = average_circle(quadratic_monomials, 64)
    assert np.allclose(average, [0.5, 0.5, 0.0], atol=1e-14)


def test_sphere_average_of_polynomials(rng):
    def func(points):
        return np.column_stack([points ** 2, points[:, 2] ** 4,
                                points[:, 0]])

    expected = [1 / 3, 1 / 3, 1 / 3, 1 / 5, 0.0]
    assert np.allclose(average_sphere(func, np.eye(3), 64), expected,
                       atol=1e-10)
    frame = random_rotation(rng, 3)
    rotated = average_sphere(func, frame, 64)
    assert np.allclose(rotated[:3], [1 / 3] * 3, atol=1e-10)
    assert np.sum(rotated[:3]) == pytest.approx(1.0, abs=1e-12)


def test_sphere_average_resolves_narrow_band():
    epsilon = 1e-4

    def func(points):
        return (1 / (epsilon + points[:, 2] ** 2))[:, None]

    expected = np.arctan(1 / np.sqrt(epsilon)) / np.sqrt(epsilon)
    value = average_sphere(func, np.eye(3), 8, breakpoints=[0.0])
    assert value[0] == pytest.approx(expected, rel=1e-8)


def test_gauss_legendre_product_rule(rng):
    def func(points):
        return np.column_stack([points ** 2, points[:, 2] ** 4,
                                points[:, 2] ** 6])

    expected = [1 / 3, 1 / 3, 1 / 3, 1 / 5, 1 / 7]
    assert np.allclose(average_sphere(func, np.eye(3), 16, polar_nodes=8),
                       expected, atol=1e-14)
    frame = random_rotation(rng, 3)
    fixed = average_sphere(func, frame, 64, breakpoints=[0.0],
                           polar_nodes=16)
    adaptive = average_sphere(func, frame, 64)
    assert np.allclose(fixed, adaptive, atol=1e-10)
    with pytest.raises(BadInputs):
        average_sphere(func, np.eye(3), 16, polar_nodes=0)


def test_fixed_rule_needs_more_nodes_on_narrow_band():
    epsilon = 1e-4

    def func(points):
        return (1 / (epsilon + points[:, 2] ** 2))[:, None]

    expected = np.arctan(1 / np.sqrt(epsilon)) / np.sqrt(epsilon)
    coarse = average_sphere(func, np.eye(3), 8, breakpoints=[0.0],
                            polar_nodes=8)
    adaptive = average_sphere(func, np.eye(3), 8, breakpoints=[0.0])
    assert abs(coarse[0] - expected) > 1e-3 * expected
    assert adaptive[0] == pytest.approx(expected, rel=1e-8)
