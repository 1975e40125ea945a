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
Contraction rate of generalized Hit-and-Run in the natural metric,

    rho = 1/2 inf_{|zeta| = 1} E (zeta . w)^2 = 1/2 lambda_min(M_tau),

its closed forms for the benchmark covariances, and the action of the
kernel on linear test functions, I - M_tau.
"""

import logging
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh
from scipy.stats import linregress

from hitandrun.directions import DirectionLaw, Estimator, UniformSphere, \
    QUADRATURE, INTEGRAL, pushforward_second_moment, \
    pushforward_expectation, map_matrix, method_tag, mean_direction, \
    second_moment_matrix, monte_carlo
from hitandrun.errors import BadKappa, BadDimensions, BadInputs, \
    NumericalFailure
from hitandrun.gaussian_model import CovarianceSpec, build_covariance


DEGENERACY_TOLERANCE = 1e-9
TRACE_TOLERANCE = 1e-8
EQUATOR_TOLERANCE = 1e-6

CASES = ["bivariate", "3d-low", "3d-high", "4d-low", "two-scale"]
TABLE1_CASES = ["bivariate", "3d-low", "3d-high", "4d-low"]
TABLE1_KAPPAS = [1e2, 1e3, 1e4, 1e5]


class RateReport(NamedTuple):
    """
    :ivar rho: contraction rate
    :ivar method: closed-form, quadrature, eigen-exact or eigen-mc
    :ivar minimizer: unit vector zeta* attaining the infimum
    :ivar std_error: Monte Carlo standard error, 0 for exact methods
    :ivar eigenspace_dim: multiplicity of lambda_min
    :ivar metadata: kappa, d, case and estimator details
    """

    rho: float
    method: str
    minimizer: np.ndarray
    std_error: float = 0.0
    eigenspace_dim: int = 1
    metadata: Dict = {}


def canonical_minimizer(basis: np.ndarray) -> np.ndarray:
    """
    Deterministic unit vector in the span of the orthonormal columns
    of ``basis``: the one with the largest first non-vanishing
    component, taken positive.
    """

    d = basis.shape[0]
    for j in range(d):
        p = basis @ basis[j, :]
        norm = np.linalg.norm(p)
        if norm > 1e-12 and abs(p[j]) > 1e-12:
            p = p / norm
            return p if p[j] > 0 else -p
    raise NumericalFailure("Empty eigenspace")


def _check_kappa(kappa: float):
    if not np.isfinite(kappa) or kappa < 1:
        raise BadKappa("Condition number must be >= 1, got {}"
                       .format(kappa))


def rate_from_moment(matrix: np.ndarray, method: str,
                     batches: Optional[List[np.ndarray]] = None,
                     metadata: Dict = None) -> RateReport:
    """
    Turns a second-moment matrix into a rate: rho = lambda_min / 2.

    :param batches: Monte Carlo batch estimates of the matrix; the
        standard error of rho is derived from their spread
    """

    evals, evecs = eigh(matrix)
    lam = float(evals[0])
    m = matrix.shape[0]
    trace = float(np.trace(matrix))
    if abs(trace - 1) > TRACE_TOLERANCE and batches is None:
        raise NumericalFailure("Second moment has trace {:.17g}"
                               .format(trace), {"trace": trace})
    if lam <= 0:
        raise BadInputs("Directions do not span the space: "
                        "lambda_min = {:g}".format(lam))
    dim = int(np.count_nonzero(evals <= lam + DEGENERACY_TOLERANCE))
    minimizer = canonical_minimizer(evecs[:, :dim])
    std_error = 0.0
    if batches:
        lows = [float(eigh(b, eigvals_only=True)[0]) for b in batches]
        std_error = 0.5 * float(np.std(lows, ddof=1) / np.sqrt(len(lows)))
    rho = 0.5 * lam
    assert rho <= 0.5 / m * (1 + TRACE_TOLERANCE) + 4 * std_error, \
        "rho = {:g} exceeds 1/(2d)".format(rho)
    meta = dict(metadata or {})
    meta["d"] = m
    return RateReport(rho, method, minimizer, std_error, dim, meta)


def rho_general(law: DirectionLaw, C: CovarianceSpec,
                estimator: Estimator = None) -> RateReport:
    """
    rho = lambda_min(M_tau) / 2 for any law and covariance.

    :param estimator: exact, quadrature, integral or mc
    """

    result = pushforward_second_moment(law, map_matrix(C), estimator)
    return rate_from_moment(
        result.value, method_tag(result.estimator), result.batches,
        {"kappa": C.kappa, "law": law.describe(),
         "estimator": str(result.estimator)}
    )


def rho_variance_form(law: DirectionLaw, C: CovarianceSpec,
                      estimator: Estimator = None) -> float:
    """
    Half the smallest eigenvalue of Cov(w); equals rho for laws
    symmetric under v -> -v, where E[w] = 0.
    """

    m = second_moment_matrix(law, C, estimator)
    mu = mean_direction(law, C, estimator)
    return 0.5 * float(eigh(m - np.outer(mu, mu), eigvals_only=True)[0])


def rho_bivariate(kappa: float) -> float:
    """rho for C = diag(kappa, 1) and the uniform law: 1/(2(sqrt(kappa)+1))"""
    _check_kappa(kappa)
    return 0.5 / (np.sqrt(kappa) + 1)


def rho_3d_one_low(kappa: float) -> float:
    """
    rho for C = diag(kappa, 1, 1), uniform law:
    1/2 int_0^{pi/2} sin(a) / (kappa tan^2(a) + 1) da, evaluated
    after the substitution c = cos(a) as
    1/2 int_0^1 c^2 / (kappa (1 - c^2) + c^2) dc.
    """

    _check_kappa(kappa)

    def integrand(c):
        return c * c / (kappa * (1 - c * c) + c * c)

    points = None
    if kappa > 1:
        points = [1 - 1 / kappa]
    value, _ = quad(integrand, 0.0, 1.0, points=points, epsabs=1e-13,
                    epsrel=1e-12, limit=500)
    return 0.5 * value


def rho_3d_one_low_closed(kappa: float) -> float:
    _check_kappa(kappa)
    if kappa == 1:
        return 1 / 6
    q = np.sqrt(1 - 1 / kappa)
    return (np.arctanh(q) / q - 1) / (2 * (kappa - 1))


def rho_3d_one_high_closed(kappa: float) -> float:
    _check_kappa(kappa)
    if kappa == 1:
        return 1 / 6
    a = np.sqrt(kappa - 1)
    return kappa / (4 * (kappa - 1)) * (np.arctan(a) / a - 1 / kappa)


def rho_3d_one_high_report(kappa: float,
                           estimator: Estimator = QUADRATURE) -> RateReport:
    _check_kappa(kappa)
    report = rho_general(UniformSphere(3),
                         build_covariance([kappa, kappa, 1.0]), estimator)
    if abs(report.minimizer[2]) >= EQUATOR_TOLERANCE:
        raise NumericalFailure(
            "Minimizer is not equatorial",
            {"kappa": kappa, "minimizer": report.minimizer.tolist()}
        )
    return report


def rho_3d_one_high(kappa: float,
                    estimator: Estimator = QUADRATURE) -> float:
    """
    rho for C = diag(kappa, kappa, 1), uniform law, by sphere
    quadrature. The minimizer must lie on the equator e1-e2.
    """

    return rho_3d_one_high_report(kappa, estimator).rho


def rho_4d_one_low(kappa: float) -> float:
    """rho for C = diag(kappa, 1, 1, 1): kappa^{-1}/(2(1+kappa^{-1/2})^2)"""
    _check_kappa(kappa)
    return (1 / kappa) / (2 * (1 + kappa ** -0.5) ** 2)


def rho_two_scale_approx(d1: int, d2: int, kappa: float) -> float:
    """
    Large-dimension approximation 1/(2(d1 + kappa d2)) for d1 modes
    of variance kappa and d2 modes of variance 1. Not a bound.
    """

    if d1 < 0 or d2 < 0 or d1 + d2 < 1:
        raise BadDimensions("Need d1, d2 >= 0 and d1 + d2 >= 1, got "
                            "{}, {}".format(d1, d2))
    _check_kappa(kappa)
    return 0.5 / (d1 + kappa * d2)


def case_covariance(case: str, kappa: float, d1: int = None,
                    d2: int = None) -> CovarianceSpec:
    _check_kappa(kappa)
    if case == "bivariate":
        return build_covariance([kappa, 1.0])
    if case == "3d-low":
        return build_covariance([kappa, 1.0, 1.0])
    if case == "3d-high":
        return build_covariance([kappa, kappa, 1.0])
    if case == "4d-low":
        return build_covariance([kappa, 1.0, 1.0, 1.0])
    if case == "two-scale":
        if d1 is None or d2 is None or d1 < 0 or d2 < 0 or d1 + d2 < 1:
            raise BadDimensions("two-scale case needs d1, d2")
        return build_covariance([kappa] * d1 + [1.0] * d2)
    raise BadInputs("Unknown case: " + str(case))


def case_rate(case: str, kappa: float, d1: int = None,
              d2: int = None) -> RateReport:
    """
    Rate of a benchmark case from its closed form or dedicated
    quadrature. The minimizer is e1, the mode of variance kappa.
    """

    covariance = case_covariance(case, kappa, d1, d2)
    e1 = np.eye(covariance.d)[0]
    meta = {"case": case, "kappa": kappa}
    if case == "bivariate":
        return RateReport(rho_bivariate(kappa), "closed-form", e1,
                          metadata=dict(meta, d=2))
    if case == "3d-low":
        return RateReport(rho_3d_one_low(kappa), "quadrature", e1,
                          metadata=dict(meta, d=3))
    if case == "3d-high":
        report = rho_3d_one_high_report(kappa)
        return report._replace(metadata=dict(report.metadata, **meta))
    if case == "4d-low":
        return RateReport(rho_4d_one_low(kappa), "closed-form", e1,
                          metadata=dict(meta, d=4))
    return RateReport(rho_two_scale_approx(d1, d2, kappa), "closed-form",
                      e1, metadata=dict(meta, d=d1 + d2, d1=d1, d2=d2,
                                        approximation=True))


def averaged_linear_action(law: DirectionLaw, C: CovarianceSpec,
                           estimator: Estimator = None) -> np.ndarray:
    """
    Matrix I - M_tau: the kernel maps f(x) = zeta . C^{-1/2} x to
    ((I - M_tau) zeta) . C^{-1/2} x.
    """

    return np.eye(C.d) - second_moment_matrix(law, C, estimator)


def sandwich(law: DirectionLaw, C: CovarianceSpec,
             estimator: Estimator = None) -> Dict:
    """
    Action of the kernel on the slowest linear test function against
    the window [1 - 3 rho, 1 - rho]
    """

    m = second_moment_matrix(law, C, estimator)
    report = rate_from_moment(m, "eigen-exact")
    action = np.eye(C.d) - m
    norm = float(np.linalg.norm(action @ report.minimizer))
    return {
        "rho": report.rho,
        "action_norm": norm,
        "expected": 1 - 2 * report.rho,
        "lower": 1 - 3 * report.rho,
        "upper": 1 - report.rho
    }


def global_move_mass(law: DirectionLaw, C: CovarianceSpec, angle: float,
                     minimizer: np.ndarray = None,
                     estimator: Estimator = None) -> float:
    """
    Probability that the line direction in natural coordinates is
    within ``angle`` of the slowest direction zeta*. Only such
    directions move the chain far along zeta* in one step.
    """

    if minimizer is None:
        minimizer = rho_general(law, C, estimator).minimizer
    threshold = np.cos(angle)

    def inside(w: np.ndarray) -> np.ndarray:
        return (np.abs(w @ minimizer) >= threshold)[:, None].astype(float)

    if estimator is None and not law.is_discrete:
        estimator = monte_carlo()
    return float(pushforward_expectation(law, map_matrix(C), inside,
                                         estimator).value[0])


class Table1(NamedTuple):
    """
    Rates of the benchmark cases over a condition number sweep

    :ivar rows: (case, kappa, rho) triples
    :ivar slopes: log-log slope of rho(kappa) per case
    :ivar compensated: rho kappa / log kappa per kappa for 3d-low
    """

    rows: List
    slopes: Dict[str, float]
    compensated: List[float]

    @property
    def compensated_spread(self) -> float:
        return max(self.compensated) / min(self.compensated) - 1


def table1(kappas: Sequence[float] = None) -> Table1:
    """
    Sweeps the four scaling cases. Rates are computed numerically:
    circle quadrature (bivariate), one-dimensional quadrature (3d-low),
    sphere quadrature (3d-high) and the radial integral (4d-low).
    """

    if kappas is None:
        kappas = TABLE1_KAPPAS
    kappas = [float(k) for k in kappas]
    if len(kappas) < 2:
        raise BadInputs("Need at least two condition numbers")
    for k in kappas:
        _check_kappa(k)
        if k <= 1:
            raise BadKappa("Sweep needs condition numbers > 1")
    rows = []
    slopes = {}
    for case in TABLE1_CASES:
        values = []
        for kappa in kappas:
            if case == "bivariate":
                rho = rho_general(UniformSphere(2),
                                  case_covariance(case, kappa),
                                  QUADRATURE).rho
            elif case == "3d-low":
                rho = rho_3d_one_low(kappa)
            elif case == "3d-high":
                rho = rho_3d_one_high(kappa)
            else:
                rho = rho_general(UniformSphere(4),
                                  case_covariance(case, kappa),
                                  INTEGRAL).rho
            logging.debug("{} kappa={:g}: rho={:.17g}"
                          .format(case, kappa, rho))
            values.append(rho)
            rows.append((case, kappa, rho))
        slopes[case] = float(linregress(np.log(kappas),
                                        np.log(values)).slope)
    compensated = [r[2] * r[1] / np.log(r[1]) for r in rows
                   if r[0] == "3d-low"]
    return Table1(rows, slopes, compensated)
