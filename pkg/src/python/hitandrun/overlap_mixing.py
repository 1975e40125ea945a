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
Total variation bounds for the uniform Hit-and-Run kernel.

* ``overlap_constants`` - the constants C1(x), C2(x), C3(x) of the
  one-step overlap bound
  TV(p(x,.), p(x~,.)) <= sqrt(2) (C1^{1/2} r + C2^{1/2} r^{1/2}
  + C3 eps^{1/2}), r = |x - x~|_{C^{-1/2}}
* ``tv_quadrature_2d`` - the exact TV distance of two kernels in the
  plane by polar quadrature, used to check the bound
* ``mixing_time_bound`` - order-level mixing time, up to unspecified
  absolute constants
* ``explicit_mixing_steps`` - a constant-free step count obtained by
  combining the contraction rate with the measure-level overlap bound
"""

import logging
from typing import Dict, NamedTuple, Tuple

import numpy as np
from scipy.special import gammaln

from hitandrun.errors import BadEpsilon, BadInputs, CoincidentPoints, \
    UnsupportedDimension
from hitandrun.gaussian_model import CovarianceSpec, natural_norm
from hitandrun.hit_and_run import transition_log_density, polar_radius, \
    polar_grid


DEFAULT_RADIAL_NODES = 1024
DEFAULT_ANGULAR_NODES = 2048
ANGLE_CHUNK = 64
MIXING_LABEL = "up to unspecified absolute constants"


class OverlapConstants(NamedTuple):
    c1: float
    c2: float
    c3: float
    x: list
    epsilon: float
    m: float
    M: float
    kappa: float
    d: int


def _check_epsilon(epsilon: float):
    if not (0 < epsilon < 1):
        raise BadEpsilon("Epsilon must be in (0, 1), got {}"
                         .format(epsilon))


def overlap_terms(C: CovarianceSpec, r: float, r2: float,
                  epsilon: float) -> Dict[str, float]:
    """
    Individual terms of C1, C2, C3 given |x|_{C^{-1/2}} = r and
    |x|^2_{C^{-1/2}} = r2 (or their expectations). Keys ending in
    ``_inv_eps`` carry the factor 1/epsilon.
    """

    _check_epsilon(epsilon)
    d = C.d
    a = 1 / (epsilon * np.sqrt(C.m))
    root_kappa = np.sqrt(C.kappa)
    quarter = C.M ** 0.25
    spectral = C.M ** 0.5 + C.m ** -0.5 + 2
    return {
        "c1_inv_eps": a * r,
        "c1_rest": 2 * epsilon * np.sqrt(C.M) + 1,
        "c2_inv_eps": 2 * a * r2 + a * (d - 1) + 2 * a,
        "c2_rest": 2 * r + 2 * epsilon * root_kappa * (d - 1)
                   + spectral * root_kappa,
        "c3_norm": np.sqrt(3) * quarter * r,
        "c3_log": np.sqrt(2) * np.sqrt(1 + np.log(1 / epsilon)) * quarter
                  * np.sqrt(d - 1),
        "c3_rest": np.sqrt(2) * quarter * np.sqrt(spectral)
    }


def _sum_terms(terms: Dict[str, float]) -> Tuple[float, float, float]:
    c1 = terms["c1_inv_eps"] + terms["c1_rest"]
    c2 = terms["c2_inv_eps"] + terms["c2_rest"]
    c3 = terms["c3_norm"] + terms["c3_log"] + terms["c3_rest"]
    return float(c1), float(c2), float(c3)


def overlap_constants(C: CovarianceSpec, x, epsilon: float
                      ) -> OverlapConstants:
    """
    C1(x) = eps^{-1} m^{-1/2} |x| + 2 eps M^{1/2} + 1

    C2(x) = 2 eps^{-1} m^{-1/2} |x|^2 + 2 |x|
    + (eps^{-1} m^{-1/2} + 2 eps kappa^{1/2}) (d - 1)
    + 2 eps^{-1} m^{-1/2} + (M^{1/2} + m^{-1/2} + 2) kappa^{1/2}

    C3(x) = sqrt(3) M^{1/4} |x| + sqrt(2) (1 + log 1/eps)^{1/2}
    M^{1/4} (d - 1)^{1/2} + sqrt(2) M^{1/4} (M^{1/2} + m^{-1/2} + 2)^{1/2}

    with |x| the natural norm.
    """

    r = natural_norm(C, x)
    c1, c2, c3 = _sum_terms(overlap_terms(C, r, r * r, epsilon))
    return OverlapConstants(c1, c2, c3, C.check(x).tolist(), epsilon,
                            C.m, C.M, C.kappa, C.d)


class TVBound(NamedTuple):
    raw: float
    clamped: float


def tv_bound_pointwise(C: CovarianceSpec, x, xt, epsilon: float) -> TVBound:
    """One-step overlap bound, raw and clamped at 1"""
    constants = overlap_constants(C, x, epsilon)
    r = natural_norm(C, C.check(xt) - C.check(x))
    raw = np.sqrt(2) * (np.sqrt(constants.c1) * r
                        + np.sqrt(constants.c2) * np.sqrt(r)
                        + constants.c3 * np.sqrt(epsilon))
    return TVBound(float(raw), float(min(1.0, raw)))


def _patch(C: CovarianceSpec, center: np.ndarray, other: np.ndarray,
           x: np.ndarray, xt: np.ndarray, radius: float,
           n_radial: int, n_angle: int) -> np.ndarray:
    """
    Integrals over the half plane closer to ``center`` of
    |p(x,.) - p(xt,.)|, p(x,.) and p(xt,.) in polar coordinates about
    ``center``. Each ray is split into two Gauss-Legendre panels at
    three times the distance between the centers.
    """

    offset = other - center
    separation = float(np.linalg.norm(offset))
    nodes, weights, theta = polar_grid(max(n_radial // 2, 2), n_angle)
    totals = np.zeros(3)
    for start in range(0, n_angle, ANGLE_CHUNK):
        angles = theta[start:start + ANGLE_CHUNK]
        u = np.column_stack([np.cos(angles), np.sin(angles)])
        toward = u @ offset
        limit = np.full(len(angles), radius)
        ahead = toward > 0
        limit[ahead] = np.minimum(radius,
                                  separation ** 2 / (2 * toward[ahead]))
        split = np.minimum(limit, 3 * separation)
        r = np.concatenate([split[:, None] * nodes[None, :],
                            split[:, None] + (limit - split)[:, None]
                            * nodes[None, :]], axis=1)
        w = np.concatenate([split[:, None] * weights[None, :],
                            (limit - split)[:, None] * weights[None, :]],
                           axis=1)
        y = center + r[:, :, None] * u[:, None, :]
        flat = y.reshape(-1, 2)
        px = np.exp(transition_log_density(C, x, flat)).reshape(r.shape)
        pt = np.exp(transition_log_density(C, xt, flat)).reshape(r.shape)
        jac = w * r
        totals += [np.sum(jac * np.abs(px - pt)), np.sum(jac * px),
                   np.sum(jac * pt)]
    return totals * 2 * np.pi / n_angle


def tv_quadrature_report(C: CovarianceSpec, x, xt,
                         n_radial: int = DEFAULT_RADIAL_NODES,
                         n_angle: int = DEFAULT_ANGULAR_NODES) -> Dict:
    """
    TV distance between p(x,.) and p(xt,.) in d = 2 with the mass of
    each kernel captured by the truncated grid.
    """

    if C.d != 2:
        raise UnsupportedDimension("TV quadrature requires d = 2")
    x = C.check(x)
    xt = C.check(xt)
    separation = float(np.linalg.norm(xt - x))
    if separation == 0:
        raise CoincidentPoints("TV quadrature needs x != xt")
    radius = max(polar_radius(C, x), polar_radius(C, xt)) + separation
    first = _patch(C, x, xt, x, xt, radius, n_radial, n_angle)
    second = _patch(C, xt, x, x, xt, radius, n_radial, n_angle)
    total = first + second
    tv = float(min(1.0, max(0.0, 0.5 * total[0])))
    tail = float(max(abs(1 - total[1]), abs(1 - total[2])))
    logging.debug("TV quadrature {:.6g}, mass defect {:.3g}"
                  .format(tv, tail))
    return {"tv": tv, "mass_x": float(total[1]),
            "mass_xt": float(total[2]), "tail": tail}


def tv_quadrature_2d(C: CovarianceSpec, x, xt,
                     n_radial: int = DEFAULT_RADIAL_NODES,
                     n_angle: int = DEFAULT_ANGULAR_NODES) -> float:
    """
    1/2 int |p(x,y) - p(xt,y)| dy for the uniform kernel in the plane.
    The plane is split at the perpendicular bisector of [x, xt]; each
    half is integrated in polar coordinates about its own center, where
    the radial Jacobian cancels that kernel's singularity.
    """

    return tv_quadrature_report(C, x, xt, n_radial, n_angle)["tv"]


def mixing_time_bound(C: CovarianceSpec, rho: float, epsilon_target: float,
                      w2_init: float, const_c: float = 1.0,
                      const_cprime: float = 1.0) -> int:
    """
    ceil(c / rho * log(c' max(kappa, M, 1/m) d w2 / eps)), at least 0.
    The absolute constants c, c' are not known; the result is an
    order of magnitude.
    """

    if rho <= 0 or epsilon_target <= 0 or w2_init < 0 \
            or const_c <= 0 or const_cprime <= 0:
        raise BadInputs(
            "Invalid mixing bound inputs: rho={}, eps={}, w2={}, c={}, "
            "c'={}".format(rho, epsilon_target, w2_init, const_c,
                           const_cprime)
        )
    if w2_init == 0:
        return 0
    scale = max(C.kappa, C.M, 1 / C.m)
    argument = const_cprime * scale * C.d * w2_init / epsilon_target
    steps = int(np.ceil(const_c / rho * np.log(argument)))
    return max(0, steps)


def tv_measure_bound(C: CovarianceSpec, eta_stats: Tuple[float, float, float],
                     w2: float, epsilon: float) -> float:
    """
    TV(eta p, nu p) <= sqrt(2) (eta(C1)^{1/2} W + eta(C2)^{1/2} W^{1/2}
    + eta(C3) eps^{1/2}) for a Wasserstein distance W between eta and nu.
    """

    _check_epsilon(epsilon)
    e1, e2, e3 = eta_stats
    if min(e1, e2, e3) < 0 or w2 < 0:
        raise BadInputs("Statistics and distance must be non-negative")
    return float(np.sqrt(2) * (np.sqrt(e1) * w2 + np.sqrt(e2) * np.sqrt(w2)
                               + e3 * np.sqrt(epsilon)))


def chi_mean(d: int) -> float:
    """E|g| for a standard normal d-vector"""
    return float(np.sqrt(2) * np.exp(gammaln((d + 1) / 2) - gammaln(d / 2)))


def target_constant_moments(C: CovarianceSpec, epsilon: float,
                            exact: bool = True
                            ) -> Tuple[float, float, float]:
    """
    Expectations of C1, C2, C3 under the target N(0, C), using
    E|x|^2 = d and E|x| = chi mean (``exact``) or its bound sqrt(d).
    """

    r = chi_mean(C.d) if exact else np.sqrt(C.d)
    return _sum_terms(overlap_terms(C, r, float(C.d), epsilon))


def epsilon_schedule(C: CovarianceSpec, epsilon_target: float,
                     const: float = 1.0) -> float:
    """eps = c max(kappa, M, 1/m)^{-2} d^{-2} eps_target^4"""
    if not (0 < epsilon_target < 1) or const <= 0:
        raise BadInputs("Target accuracy must be in (0, 1)")
    scale = max(C.kappa, C.M, 1 / C.m)
    return float(const * scale ** -2 * C.d ** -2 * epsilon_target ** 4)


def tv_after_steps_bound(C: CovarianceSpec, rho: float, w2_init: float,
                         n: int, epsilon: float) -> float:
    """
    Bound on TV(target, law after n >= 1 steps) from a start at
    distance w2_init: the overlap bound applied to the last step with
    W <= exp(-rho (n - 1)) w2_init.
    """

    if n < 1 or rho <= 0:
        raise BadInputs("Need n >= 1 and rho > 0")
    stats = target_constant_moments(C, epsilon, exact=False)
    w = np.exp(-rho * (n - 1)) * w2_init
    return tv_measure_bound(C, stats, w, epsilon)


def explicit_mixing_steps(C: CovarianceSpec, rho: float,
                          epsilon_target: float, w2_init: float,
                          epsilon: float = None) -> int:
    """
    Smallest n >= 1 with ``tv_after_steps_bound`` <= epsilon_target.

    :param epsilon: regularization parameter, defaults to
        ``epsilon_schedule``
    """

    if rho <= 0 or w2_init < 0:
        raise BadInputs("Need rho > 0 and w2_init >= 0")
    if epsilon is None:
        epsilon = epsilon_schedule(C, epsilon_target)
    e1, e2, e3 = target_constant_moments(C, epsilon, exact=False)
    budget = epsilon_target / np.sqrt(2) - e3 * np.sqrt(epsilon)
    if budget <= 0:
        raise BadInputs("Regularization floor {:g} exceeds the target"
                        .format(np.sqrt(2) * e3 * np.sqrt(epsilon)))
    # with q = exp(-rho (n - 1) / 2): a q^2 + b q <= budget
    a = np.sqrt(e1) * w2_init
    b = np.sqrt(e2) * np.sqrt(w2_init)
    if a == 0 and b == 0:
        return 1
    if a == 0:
        q = budget / b
    else:
        q = (-b + np.sqrt(b * b + 4 * a * budget)) / (2 * a)
    if q >= 1:
        return 1
    return 1 + int(np.ceil(2 * np.log(1 / q) / rho))
