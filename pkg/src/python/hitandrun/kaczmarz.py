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
Randomized Kaczmarz iteration for consistent overdetermined systems
A x = b, A of size d x m with d >= m and full column rank.

A direction v ~ tau on S^{d-1} selects the hyperplane
H(v) = {x : v.(Ax - b) = 0} and the iterate is projected onto it:

    x' = x - ((g.x - v.b) / |g|^2) g,    g = A^T v

The classical solver draws v = e_i with probability |A^T e_i|^2 /
||A||_F^2; the coordinate-free solver draws v uniformly.
"""

import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import eigh, lstsq

from hitandrun.coupling import SeriesAccumulator, SeriesFit, \
    default_window, reduce_series, asymptotic_decay_rate, FIT_GROUPS
from hitandrun.directions import DirectionLaw, Estimator, RowWeighted, \
    UniformSphere, pushforward_second_moment, method_tag
from hitandrun.errors import RankDeficient, Inconsistent, \
    DegenerateDirection, BadA, BadInputs, DimensionMismatch, \
    InsufficientReplicas
from hitandrun.rates import RateReport, rate_from_moment
from hitandrun.seeding import map_blocks


RANK_TOLERANCE = 1e-10
CONSISTENCY_TOLERANCE = 1e-8
DEGENERACY_THRESHOLD = 1e-14
HYPERPLANE_TOLERANCE = 1e-10
MAX_RETRIES = 100
ITERATIONS_PER_RATE = 6
MAX_RECORDED_STEPS = 20000
EXAMPLE_START = (-10.0, 0.0)


class KaczmarzProblem:
    """
    Consistent system A x = b with its solution

    :ivar A: d x m matrix
    :ivar b: d-vector
    :ivar x_star: least-squares (here exact) solution
    :ivar frobenius_sq: ||A||_F^2
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, x_star: np.ndarray):
        self.A = A
        self.b = b
        self.x_star = x_star
        self.frobenius_sq = float(np.sum(A * A))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.A.shape


def build_problem(A, b) -> KaczmarzProblem:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    d, m = A.shape
    if not (d >= m >= 1):
        raise BadInputs("Need d >= m >= 1, got A of shape {}"
                        .format(A.shape))
    if b.shape[0] != d:
        raise DimensionMismatch("A has {:d} rows, b has {:d} entries"
                                .format(d, b.shape[0]))
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= RANK_TOLERANCE * s[0]:
        raise RankDeficient("Matrix does not have full column rank, "
                            "singular values {}".format(s.tolist()))
    x_star = lstsq(A, b)[0]
    residual = float(np.linalg.norm(A @ x_star - b))
    if residual > CONSISTENCY_TOLERANCE * (1 + np.linalg.norm(b)):
        raise Inconsistent("System has no exact solution, residual {:g}"
                           .format(residual))
    return KaczmarzProblem(A, b, x_star)


def example_matrix(a: float) -> np.ndarray:
    """[[0, 1], [a, 1]]: two nearly parallel hyperplanes"""
    if not (0 < a < 1):
        raise BadA("Parameter a must be in (0, 1), got {}".format(a))
    return np.array([[0.0, 1.0], [a, 1.0]])


def _directions(problem: KaczmarzProblem, law: DirectionLaw,
                rng: np.random.Generator, n: int):
    v = law.sample(rng, n)
    g = v @ problem.A
    norms = np.linalg.norm(g, axis=1)
    threshold = DEGENERACY_THRESHOLD * np.sqrt(problem.frobenius_sq)
    bad = norms < threshold
    retries = 0
    while np.any(bad):
        if law.is_discrete:
            raise DegenerateDirection("Selected equation has A^T v = 0")
        if retries >= MAX_RETRIES:
            raise DegenerateDirection(
                "No admissible direction after {:d} retries"
                .format(MAX_RETRIES)
            )
        retries += 1
        logging.warning("Resampling {:d} degenerate directions"
                        .format(int(np.sum(bad))))
        v[bad] = law.sample(rng, int(np.sum(bad)))
        g[bad] = v[bad] @ problem.A
        norms = np.linalg.norm(g, axis=1)
        bad = norms < threshold
    return v, g, norms


def project(problem: KaczmarzProblem, x: np.ndarray, v: np.ndarray,
            g: np.ndarray) -> np.ndarray:
    """Projections of the rows of x onto the hyperplanes H(v)"""
    g2 = np.sum(g * g, axis=1)
    shift = (np.sum(g * x, axis=1) - v @ problem.b) / g2
    moved = x - shift[:, None] * g
    if __debug__:
        vb = v @ problem.b
        miss = np.abs(np.sum(g * moved, axis=1) - vb)
        scale = 1 + np.abs(vb) + np.sqrt(g2) * np.linalg.norm(moved, axis=1)
        assert np.all(miss <= HYPERPLANE_TOLERANCE * scale), \
            "Iterate left the hyperplane by {:g}".format(float(np.max(miss)))
    return moved


def kaczmarz_advance(problem: KaczmarzProblem, law: DirectionLaw,
                     x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One iteration for each row of x"""
    v, g, _ = _directions(problem, law, rng, x.shape[0])
    return project(problem, x, v, g)


def kaczmarz_step(problem: KaczmarzProblem, law: DirectionLaw, x,
                  rng: np.random.Generator) -> np.ndarray:
    """
    One iteration from x: projection onto the hyperplane selected by
    v ~ tau.
    """

    _check_law(problem, law)
    x = np.asarray(x, dtype=float)
    return kaczmarz_advance(problem, law, x[None, :], rng)[0]


def _check_law(problem: KaczmarzProblem, law: DirectionLaw):
    if law.d != problem.A.shape[0]:
        raise DimensionMismatch(
            "Direction law lives in dimension {:d}, system has {:d} "
            "equations".format(law.d, problem.A.shape[0])
        )


def rate_classical(A) -> RateReport:
    """
    rho = lambda_min(A^T A) / (2 ||A||_F^2). The lower bound
    1/2 ||A||_F^{-2} ||A^{-1}||^{-2} uses the smallest singular value
    and coincides with it.
    """

    A = np.atleast_2d(np.asarray(A, dtype=float))
    frobenius_sq = float(np.sum(A * A))
    gram = A.T @ A
    evals = eigh(gram, eigvals_only=True)
    sigma_min = float(np.linalg.svd(A, compute_uv=False)[-1])
    report = rate_from_moment(gram / frobenius_sq, "eigen-exact",
                              metadata={"variant": "classical"})
    meta = dict(report.metadata)
    meta["lambda_min"] = float(evals[0])
    meta["lower_bound"] = 0.5 * sigma_min ** 2 / frobenius_sq
    return report._replace(metadata=meta)


def rate_general(A, law: DirectionLaw,
                 estimator: Estimator = None) -> RateReport:
    """
    rho = lambda_min(E[g g^T]) / 2 with g = A^T v / |A^T v|, v ~ law
    """

    A = np.atleast_2d(np.asarray(A, dtype=float))
    if law.d != A.shape[0]:
        raise DimensionMismatch(
            "Direction law lives in dimension {:d}, matrix has {:d} rows"
            .format(law.d, A.shape[0])
        )
    result = pushforward_second_moment(law, A.T, estimator)
    return rate_from_moment(result.value, method_tag(result.estimator),
                            result.batches,
                            {"law": law.describe(),
                             "estimator": str(result.estimator)})


def rate_coordinate_free_example(a: float) -> float:
    """
    Exact coordinate-free rate for the example matrix:
    (a + lambda_min(A^T A)) / (2 (2 + 2a + a^2))
    """

    gram = example_matrix(a).T @ example_matrix(a)
    lam = float(eigh(gram, eigvals_only=True)[0])
    return (a + lam) / (2 * (2 + 2 * a + a * a))


def rate_coordinate_free_leading(a: float) -> float:
    """Leading-order form a(1+a) / (2(2 + a(2+a))) of the same rate"""
    example_matrix(a)
    return a * (1 + a) / (2 * (2 + a * (2 + a)))


class Solution(NamedTuple):
    iterates: np.ndarray
    errors: np.ndarray


def solve(problem: KaczmarzProblem, law: DirectionLaw, x0, n_iters: int,
          rng: np.random.Generator) -> Solution:
    """
    Single run of ``n_iters`` iterations.

    :return: iterates x_0..x_n and errors |x_k - x_star|
    """

    if n_iters < 0:
        raise BadInputs("Number of iterations must be non-negative")
    _check_law(problem, law)
    x = np.asarray(x0, dtype=float)
    if x.shape != problem.x_star.shape:
        raise DimensionMismatch("Start has shape {}, expected {}"
                                .format(x.shape, problem.x_star.shape))
    iterates = np.empty((n_iters + 1, x.shape[0]))
    iterates[0] = x
    for k in range(n_iters):
        x = kaczmarz_advance(problem, law, x[None, :], rng)[0]
        iterates[k + 1] = x
    errors = np.linalg.norm(iterates - problem.x_star, axis=1)
    assert np.all(np.diff(errors) <= 1e-12 * (1 + errors[:-1])), \
        "Error increased"
    return Solution(iterates, errors)


def convergence_curve(problem: KaczmarzProblem, law: DirectionLaw, x0,
                      n_iters: int, n_replicas: int, seed: int,
                      workers: int = 1, stride: int = None,
                      window: Tuple[int, int] = None) -> SeriesFit:
    """
    Replica average of |x_k - x_star|^2 and its fitted decay rate.

    :param stride: record every ``stride``-th iteration, chosen so that
        at most 20000 steps are recorded when omitted
    """

    _check_law(problem, law)
    if n_replicas < 2:
        raise InsufficientReplicas("At least 2 replicas needed")
    if n_iters < 1:
        raise BadInputs("At least one iteration needed")
    if stride is None:
        stride = max(1, -(-n_iters // MAX_RECORDED_STEPS))
    if window is None:
        window = default_window(n_iters)
    x0 = np.asarray(x0, dtype=float)
    groups = min(FIT_GROUPS, n_replicas // 2)

    def run_block(block, rng):
        x = np.tile(x0, (block.size, 1))
        series = SeriesAccumulator(n_iters, stride, groups, block.start,
                                   block.size)
        err = np.sum((x - problem.x_star) ** 2, axis=1)
        series.add(0, err)
        for k in range(1, n_iters + 1):
            x = kaczmarz_advance(problem, law, x, rng)
            new_err = np.sum((x - problem.x_star) ** 2, axis=1)
            assert np.all(new_err <= err * (1 + 1e-12) + 1e-24), \
                "Error increased"
            err = new_err
            series.add(k, err)
        return series

    parts = map_blocks(run_block, n_replicas, seed, workers)
    return reduce_series(parts, n_replicas, window)


class FigureResult(NamedTuple):
    """
    One variant of the convergence experiment

    :ivar rate: rate of the variant (eigen route)
    :ivar asymptotic_rate: -log of the spectral radius of the
        mean-square transfer operator
    :ivar curve: replica averages and fit
    """

    a: float
    variant: str
    rate: RateReport
    asymptotic_rate: float
    curve: SeriesFit
    order_level: float

    @property
    def mean_error(self) -> np.ndarray:
        return np.sqrt(self.curve.mean_sq)

    @property
    def mean_error_rate(self) -> Optional[float]:
        if self.curve.rate is None:
            return None
        return self.curve.rate / 2

    def summary(self) -> dict:
        return {
            "a": self.a,
            "variant": self.variant,
            "rho": self.rate.rho,
            "two_rho": 2 * self.rate.rho,
            "asymptotic_rate": self.asymptotic_rate,
            "fitted_rate": self.curve.rate,
            "fit_error": self.curve.fit_error,
            "fitted_mean_error_rate": self.mean_error_rate,
            "order_level_rate": self.order_level,
            "window": list(self.curve.window)
        }


VARIANTS = ("classical", "coordinate-free")


def variant_law(variant: str, A: np.ndarray) -> DirectionLaw:
    if variant == "classical":
        return RowWeighted(A)
    if variant in ("coordinate-free", "free"):
        return UniformSphere(A.shape[0])
    raise BadInputs("Unknown variant: " + variant)


def variant_rate(variant: str, A: np.ndarray) -> RateReport:
    if variant == "classical":
        return rate_classical(A)
    report = rate_general(A, variant_law(variant, A))
    if A.shape == (2, 2) and A[0, 0] == 0 and A[0, 1] == 1 \
            and A[1, 1] == 1 and 0 < A[1, 0] < 1:
        meta = dict(report.metadata)
        meta["order_level"] = rate_coordinate_free_leading(float(A[1, 0]))
        report = report._replace(metadata=meta)
    return report


def convergence_experiment(a: float, variant: str, replicas: int,
                           iters: Optional[int], seed: int,
                           workers: int = 1) -> FigureResult:
    """
    Solves [[0, 1], [a, 1]] x = 0 from x0 = (-10, 0).

    :param iters: number of iterations, about 6/rho when omitted
    """

    A = example_matrix(a)
    problem = build_problem(A, np.zeros(2))
    law = variant_law(variant, A)
    rate = variant_rate(variant, A)
    if iters is None:
        iters = int(np.ceil(ITERATIONS_PER_RATE / rate.rho))
    asymptotic = asymptotic_decay_rate(law, A.T)
    if variant == "classical":
        order_level = a * a / 4
    else:
        order_level = a / 4
    logging.info("Kaczmarz {} a={:g}: rho={:.6g}, {:d} iterations"
                 .format(variant, a, rate.rho, iters))
    curve = convergence_curve(problem, law, np.array(EXAMPLE_START), iters,
                              replicas, seed, workers)
    return FigureResult(a, variant, rate, asymptotic, curve, order_level)
