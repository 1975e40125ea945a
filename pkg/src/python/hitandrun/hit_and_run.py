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

"""
Generalized Hit-and-Run kernel for a centered Gaussian target N(0, C).

Given the state x, a direction v ~ tau is drawn together with a
standard normal Z and the chain moves to x + H v, where H is drawn from
the displacement law of the target restricted to the line x + R v.
In natural coordinates y = C^{-1/2} x the move is a projection:

    y' = (I - w w^T) y + Z w,    w = C^{-1/2} v / |C^{-1/2} v|

which is how the step is computed. The direct form is kept as an
assertion.
"""

import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln

from hitandrun.directions import DirectionLaw, UniformSphere
from hitandrun.errors import CoincidentPoints, UnsupportedLaw, \
    UnsupportedDimension, NumericalFailure, BadInputs
from hitandrun.gaussian_model import CovarianceSpec, natural_norm


TWO_FORM_TOLERANCE = 1e-10
DEFAULT_POSITION_CAP = 10 ** 6


class ChainState:
    """
    State of a single chain

    :ivar position: d-vector
    :ivar step_count: number of transitions applied
    """

    def __init__(self, position, step_count: int = 0):
        position = np.array(position, dtype=float)
        if not np.all(np.isfinite(position)):
            raise NumericalFailure(
                "Chain position is not finite",
                {"step": step_count, "position": position.tolist()}
            )
        self.position = position
        self.step_count = step_count

    def __repr__(self) -> str:
        return "ChainState({}, step_count={:d})".format(
            self.position.tolist(), self.step_count
        )


def displacement_law(C: CovarianceSpec, x, v) -> Tuple[float, float]:
    """
    Law of the target restricted to the line x + R v:
    N(-x.C^{-1}v / |C^{-1/2}v|^2, |C^{-1/2}v|^{-2})

    :return: mean and variance of the scalar displacement
    """

    y = C.apply_inv_sqrt(x)
    w = C.apply_inv_sqrt(v)
    w2 = np.sum(w * w, axis=-1)
    mean = -np.sum(y * w, axis=-1) / w2
    variance = 1.0 / w2
    if np.ndim(mean) == 0:
        return float(mean), float(variance)
    return mean, variance


def displacement(C: CovarianceSpec, x: np.ndarray, v: np.ndarray,
                 z: np.ndarray) -> np.ndarray:
    """
    Signed displacement H along v for given draws. Computed in natural
    coordinates: H = (z - y.w) / |C^{-1/2} v|.
    """

    y = C.apply_inv_sqrt(x)
    w = C.apply_inv_sqrt(v)
    norm = np.linalg.norm(w, axis=-1)
    w_hat = w / norm[..., None]
    return (z - np.sum(y * w_hat, axis=-1)) / norm


def transition(C: CovarianceSpec, x: np.ndarray, v: np.ndarray,
               z: np.ndarray) -> np.ndarray:
    """
    Applies the kernel for given directions and normal draws.

    :param x: (n, d) positions
    :param v: (n, d) unit directions
    :param z: n standard normal draws
    :return: (n, d) new positions
    """

    h = displacement(C, x, v, z)
    moved = x + h[..., None] * v
    if __debug__:
        _assert_two_forms(C, x, v, z, moved)
    return moved


def _assert_two_forms(C, x, v, z, moved):
    mean, variance = displacement_law(C, x, v)
    direct = x + (mean + np.sqrt(variance) * z)[..., None] * v
    y = C.apply_inv_sqrt(x)
    w = C.apply_inv_sqrt(v)
    w_hat = w / np.linalg.norm(w, axis=-1)[..., None]
    projected = y - np.sum(y * w_hat, axis=-1)[..., None] * w_hat \
        + z[..., None] * w_hat
    natural = C.apply_sqrt(projected)
    scale = 1 + np.linalg.norm(x, axis=-1) + np.linalg.norm(moved, axis=-1)
    gap = np.maximum(np.linalg.norm(direct - moved, axis=-1),
                     np.linalg.norm(natural - moved, axis=-1))
    assert np.all(gap <= TWO_FORM_TOLERANCE * scale), \
        "Direct and projection forms disagree by {:g}".format(
            float(np.max(gap / scale)))


def draw(law: DirectionLaw, rng: np.random.Generator,
         n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Directions and normal draws for n chains, in this order"""
    v = law.sample(rng, n)
    z = rng.standard_normal(n)
    return v, z


def advance(C: CovarianceSpec, law: DirectionLaw, positions: np.ndarray,
            rng: np.random.Generator) -> np.ndarray:
    """One transition of each of n independent chains"""
    v, z = draw(law, rng, positions.shape[0])
    return transition(C, positions, v, z)


def step(C: CovarianceSpec, law: DirectionLaw, state: ChainState,
         rng: np.random.Generator) -> ChainState:
    """
    One transition of the generalized Hit-and-Run chain.

    Consumes the random stream exactly as ``advance`` does for a
    single chain.
    """

    x = C.check(state.position)[None, :]
    moved = advance(C, law, x, rng)[0]
    return ChainState(moved, state.step_count + 1)


class Trajectory(NamedTuple):
    """
    Summary of a chain run

    :ivar steps: step indices of the stored positions
    :ivar positions: stored positions, uniformly thinned when the
        cap is reached
    :ivar natural_norms: |x_k|_{C^{-1/2}} for every k = 0..n
    :ivar mean: running mean over x_0..x_n
    :ivar covariance: running covariance over x_0..x_n
    :ivar final: last state
    """

    steps: np.ndarray
    positions: np.ndarray
    natural_norms: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray
    final: ChainState


class _Moments:
    """Welford accumulator of mean and covariance"""

    def __init__(self, d: int):
        self.n = 0
        self.mean = np.zeros(d)
        self.m2 = np.zeros((d, d))

    def add(self, x: np.ndarray):
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self.m2 = self.m2 + np.outer(delta, x - self.mean)

    @property
    def covariance(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.m2)
        return self.m2 / (self.n - 1)


def run_chain(C: CovarianceSpec, law: DirectionLaw, x0, n_steps: int,
              rng: np.random.Generator, keep_positions: bool = True,
              cap: int = DEFAULT_POSITION_CAP) -> Trajectory:
    """
    Runs a single chain for ``n_steps`` transitions.

    :param keep_positions: store positions (subject to ``cap``)
    :param cap: maximal number of stored positions; when reached,
        every other stored position is dropped and the recording
        stride doubles
    """

    if n_steps < 0:
        raise BadInputs("Number of steps must be non-negative")
    if cap < 2:
        raise BadInputs("Position cap must be at least 2")
    state = ChainState(C.check(x0))
    moments = _Moments(C.d)
    norms = np.empty(n_steps + 1)
    stored: List[np.ndarray] = []
    stored_steps: List[int] = []
    stride = 1

    def record(s: ChainState):
        nonlocal stored, stored_steps, stride
        moments.add(s.position)
        norms[s.step_count] = natural_norm(C, s.position)
        if not keep_positions or s.step_count % stride:
            return
        stored.append(s.position)
        stored_steps.append(s.step_count)
        if len(stored) >= cap:
            stored = stored[::2]
            stored_steps = stored_steps[::2]
            stride *= 2

    record(state)
    for _ in range(n_steps):
        state = step(C, law, state, rng)
        record(state)
    if stride > 1:
        logging.info("Stored positions thinned with stride {:d}"
                     .format(stride))
    positions = np.array(stored) if stored else np.empty((0, C.d))
    return Trajectory(np.array(stored_steps, dtype=int), positions, norms,
                      moments.mean, moments.covariance, state)


def log_sphere_area_ratio(d: int) -> float:
    """log(2 / a_{d-1}) with a_{d-1} = 2 pi^{d/2} / Gamma(d/2)"""
    return float(gammaln(d / 2) - (d / 2) * np.log(np.pi))


def transition_log_density(C: CovarianceSpec, x, y,
                           law: Optional[DirectionLaw] = None):
    """
    Log density p(x, y) of the uniform Hit-and-Run kernel with
    respect to Lebesgue measure:

    (2/a_{d-1}) |C^{-1/2}(y-x)| / (sqrt(2 pi) |y-x|^d)
    * exp(-|C^{-1/2}y|^2/2 + |C^{-1/2}x|^2/2
    - (x.C^{-1}(y-x))^2 / (2 |C^{-1/2}(y-x)|^2))

    :param x: d-vector or (n, d) stack
    :param y: d-vector or (n, d) stack
    :param law: must be uniform if given
    """

    if law is not None and not isinstance(law, UniformSphere):
        raise UnsupportedLaw("Closed-form density is known only for the "
                             "uniform law, got " + law.describe())
    if C.d < 2:
        raise UnsupportedDimension("Transition density requires d >= 2")
    x = C.check(x)
    y = C.check(y)
    delta = y - x
    dist = np.linalg.norm(delta, axis=-1)
    if np.any(dist == 0):
        raise CoincidentPoints("Transition density is singular at y = x")
    xn = C.apply_inv_sqrt(x)
    yn = C.apply_inv_sqrt(y)
    dn = yn - xn
    dn2 = np.sum(dn * dn, axis=-1)
    cross = np.sum(xn * dn, axis=-1)
    value = log_sphere_area_ratio(C.d) + 0.5 * np.log(dn2) \
        - 0.5 * np.log(2 * np.pi) - C.d * np.log(dist) \
        - 0.5 * np.sum(yn * yn, axis=-1) + 0.5 * np.sum(xn * xn, axis=-1) \
        - cross * cross / (2 * dn2)
    if np.ndim(value) == 0:
        return float(value)
    return value


def polar_radius(C: CovarianceSpec, x) -> float:
    """
    Radius around x beyond which every displacement law along a ray
    from x has less than 12 standard deviations of mass left
    """

    sigma = np.sqrt(C.eigenvalues[-1])
    return float(sigma * (12.0 + natural_norm(C, x)))


def polar_grid(n_radial: int, n_angle: int):
    """Gauss-Legendre nodes on [0, 1] and equispaced angles"""
    nodes, weights = leggauss(n_radial)
    theta = 2 * np.pi * np.arange(n_angle) / n_angle
    return (nodes + 1) / 2, weights / 2, theta


def kernel_mass(C: CovarianceSpec, x, n_radial: int = 512,
                n_angle: int = 1024) -> float:
    """
    Total mass of p(x, .) in d = 2 by quadrature in polar coordinates
    centered at x, where the radial Jacobian cancels the singularity.
    """

    if C.d != 2:
        raise UnsupportedDimension("Polar quadrature requires d = 2")
    x = C.check(x)
    radius = polar_radius(C, x)
    r, wr, theta = polar_grid(n_radial, n_angle)
    r = r * radius
    wr = wr * radius
    u = np.column_stack([np.cos(theta), np.sin(theta)])
    total = 0.0
    for k in range(n_angle):
        y = x + r[:, None] * u[k]
        density = np.exp(transition_log_density(C, x, y))
        total += np.sum(wr * r * density)
    return total * 2 * np.pi / n_angle
