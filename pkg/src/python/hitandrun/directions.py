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
Direction laws on the unit sphere and the pushforward of a direction
through a linear map, v -> Bv/|Bv|.

For the Hit-and-Run sampler B = C^{-1/2} and the pushforward is the
direction of the line in natural coordinates; for the Kaczmarz solver
B = A^T. Every rate in the package is governed by the second-moment
matrix E[w w^T] of the normalized pushforward w, computed here either
exactly (discrete laws), by sphere quadrature (uniform law, d = 2, 3),
by a one-dimensional radial integral (uniform law, any d) or by
Monte Carlo.
"""

import logging
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from hitandrun import sphere
from hitandrun.errors import EmptySupport, ZeroVector, BadInputs, \
    UnsupportedEstimator, DimensionMismatch
from hitandrun.gaussian_model import CovarianceSpec
from hitandrun.seeding import map_blocks


WEIGHT_TOLERANCE = 1e-9
MC_BATCHES = 20
MC_CHUNK = 1 << 16
DEFAULT_MC_SAMPLES = 10 ** 6


class DirectionLaw:
    """
    A probability law tau on the unit sphere S^{d-1}.

    Discrete laws keep their support as rows of ``support`` with
    probabilities ``weights``.
    """

    name = None

    def __init__(self, d: int, symmetric: bool):
        if d < 1:
            raise BadInputs("Direction law dimension must be >= 1")
        self.d = d
        self.symmetric = symmetric
        self.support = None
        self.weights = None

    @property
    def is_discrete(self) -> bool:
        return self.support is not None

    def sample(self, rng: np.random.Generator,
               size: Optional[int] = None) -> np.ndarray:
        if size is None:
            return self._draw(rng, 1)[0]
        return self._draw(rng, size)

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        index = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.support[index]

    def describe(self) -> str:
        return self.name


class UniformSphere(DirectionLaw):
    """Uniform law on S^{d-1}: the classical Hit-and-Run"""

    name = "uniform"

    def __init__(self, d: int):
        super().__init__(d, symmetric=True)

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        g = rng.standard_normal((n, self.d))
        norms = np.linalg.norm(g, axis=1)
        while np.any(norms == 0):
            zero = norms == 0
            g[zero] = rng.standard_normal((int(np.sum(zero)), self.d))
            norms = np.linalg.norm(g, axis=1)
        return g / norms[:, None]


class FiniteSupport(DirectionLaw):
    """
    Law supported on finitely many unit vectors.

    :param vectors: k x d array, one direction per row; rows are
        normalized, zero rows are rejected
    :param weights: k probabilities, uniform if omitted
    :param symmetric: caller's declaration that tau(A) = tau(-A)
    """

    name = "support"

    def __init__(self, vectors, weights: Sequence[float] = None,
                 symmetric: bool = False):
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        if vectors.shape[0] == 0 or vectors.size == 0:
            raise EmptySupport("Direction law has no support vectors")
        super().__init__(vectors.shape[1], symmetric)
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0):
            raise ZeroVector("Support vectors must be non-zero")
        self.support = vectors / norms[:, None]
        self.weights = _probabilities(weights, vectors.shape[0])


class CoordinateAxes(FiniteSupport):
    """
    Law on the coordinate axes e_1..e_d: random-scan Gibbs sampling
    """

    name = "axes"

    def __init__(self, d: int, weights: Sequence[float] = None):
        super().__init__(np.eye(d), weights, symmetric=True)

    def describe(self) -> str:
        return "axes:" + ",".join("{:.17g}".format(w) for w in self.weights)


class RowWeighted(FiniteSupport):
    """
    Law on the standard basis of R^d with P(e_i) proportional to
    |A^T e_i|^2, the squared norm of row i of A. Zero rows are not
    in the support.

    :param matrix: d x m matrix A
    """

    name = "rows"

    def __init__(self, matrix):
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        row_sq = np.sum(a * a, axis=1)
        total = float(np.sum(row_sq))
        if total == 0:
            raise EmptySupport("All rows of the matrix are zero")
        rows = np.flatnonzero(row_sq > 0)
        basis = np.eye(a.shape[0])[rows]
        super().__init__(basis, row_sq[rows] / total, symmetric=True)
        self.d = a.shape[0]
        self.matrix = a


def _probabilities(weights: Optional[Sequence[float]], k: int) -> np.ndarray:
    if weights is None:
        return np.full(k, 1.0 / k)
    w = np.asarray(weights, dtype=float)
    if w.shape != (k,):
        raise DimensionMismatch("Expected {:d} weights, got {}"
                                .format(k, w.shape))
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise BadInputs("Weights must be non-negative: " + str(w.tolist()))
    total = np.sum(w)
    if abs(total - 1) > WEIGHT_TOLERANCE:
        raise BadInputs("Weights must sum to 1, got {:.17g}".format(total))
    return w / total


def sample_direction(law: DirectionLaw, rng: np.random.Generator,
                     size: Optional[int] = None) -> np.ndarray:
    return law.sample(rng, size)


def normalize_rows(w: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(w, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroVector("Pushforward of a direction vanished")
    return w / norms


def pushforward_direction(C: CovarianceSpec, v) -> np.ndarray:
    """
    Direction of the line through x along v in natural coordinates:
    C^{-1/2} v / |C^{-1/2} v|
    """

    return normalize_rows(C.apply_inv_sqrt(v))


class Estimator(NamedTuple):
    """
    How expectations over a direction law are computed.

    * ``exact`` - weighted sum over the support of a discrete law
    * ``quadrature`` - sphere quadrature, uniform law, d in {2, 3};
      ``n`` is the minimal node count (circle) or azimuth node
      count (sphere)
    * ``integral`` - radial integral, uniform law, second moments only
    * ``mc`` - Monte Carlo with ``n`` samples in 20 batches
    * ``auto`` - exact, quadrature or Monte Carlo, in this order
    """

    kind: str = "auto"
    n: Optional[int] = None
    seed: int = 0
    workers: int = 1

    @staticmethod
    def parse(text: str, seed: int = 0, workers: int = 1) -> "Estimator":
        kind, _, arg = text.strip().partition(':')
        kind = kind.lower()
        if kind not in ("auto", "exact", "quadrature", "integral", "mc"):
            raise UnsupportedEstimator("Unknown estimator: " + text)
        n = None
        if arg:
            try:
                n = int(float(arg))
            except ValueError:
                raise UnsupportedEstimator("Bad estimator size: " + text)
            if n < 1:
                raise UnsupportedEstimator("Bad estimator size: " + text)
        return Estimator(kind, n, seed, workers)

    def __str__(self):
        if self.n is None:
            return self.kind
        return "{}:{:d}".format(self.kind, self.n)


EXACT = Estimator("exact")
QUADRATURE = Estimator("quadrature")
INTEGRAL = Estimator("integral")


def monte_carlo(n: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                workers: int = 1) -> Estimator:
    return Estimator("mc", n, seed, workers)


def resolve(law: DirectionLaw, estimator: Optional[Estimator]) -> Estimator:
    if estimator is None:
        estimator = Estimator()
    kind = estimator.kind
    if kind == "auto":
        if law.is_discrete:
            kind = "exact"
        elif isinstance(law, UniformSphere) and law.d in (2, 3):
            kind = "quadrature"
        else:
            kind = "mc"
        estimator = estimator._replace(kind=kind)
    if kind == "exact" and not law.is_discrete:
        raise UnsupportedEstimator(
            "Exact estimator requires a discrete law, got " + law.describe()
        )
    if kind in ("quadrature", "integral"):
        if not isinstance(law, UniformSphere):
            raise UnsupportedEstimator(
                "{} estimator requires the uniform law, got {}"
                .format(kind, law.describe())
            )
        if kind == "quadrature" and law.d not in (2, 3):
            raise UnsupportedEstimator(
                "Sphere quadrature supports d = 2, 3, got d = {:d}"
                .format(law.d)
            )
    return estimator


def method_tag(estimator: Estimator) -> str:
    return {
        "exact": "eigen-exact",
        "integral": "eigen-exact",
        "quadrature": "quadrature",
        "mc": "eigen-mc"
    }[estimator.kind]


class Expectation(NamedTuple):
    """
    Expectation of a function of the pushforward direction.

    :ivar value: the estimate
    :ivar batches: per-batch estimates for Monte Carlo, else None
    :ivar estimator: resolved estimator
    """

    value: np.ndarray
    batches: Optional[List[np.ndarray]]
    estimator: Estimator

    @property
    def std_error(self) -> Optional[np.ndarray]:
        if not self.batches:
            return None
        stack = np.array(self.batches)
        return np.std(stack, axis=0, ddof=1) / np.sqrt(len(self.batches))


def map_matrix(C: CovarianceSpec) -> np.ndarray:
    """Linear map B = C^{-1/2} whose pushforward drives Hit-and-Run"""
    return C.inv_sqrt_matrix


def pushforward_expectation(law: DirectionLaw, B: np.ndarray,
                            func: Callable[[np.ndarray], np.ndarray],
                            estimator: Estimator = None) -> Expectation:
    """
    E[func(Bv/|Bv|)] for v ~ law.

    :param law: direction law on S^{d-1}
    :param B: m x d matrix
    :param func: maps an (n, m) array of unit vectors to (n, k) values
    :param estimator: exact, quadrature or mc
    """

    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[1] != law.d:
        raise DimensionMismatch(
            "Map has {:d} columns, law has dimension {:d}"
            .format(B.shape[1], law.d)
        )
    estimator = resolve(law, estimator)

    def composite(v: np.ndarray) -> np.ndarray:
        return func(normalize_rows(v @ B.T))

    if estimator.kind == "exact":
        value = law.weights @ composite(law.support)
        return Expectation(value, None, estimator)
    if estimator.kind == "quadrature":
        return Expectation(_quadrature(law.d, B, composite, estimator),
                           None, estimator)
    if estimator.kind == "mc":
        return _monte_carlo(law, composite, estimator)
    raise UnsupportedEstimator(
        "Estimator {} cannot average arbitrary functions".format(estimator)
    )


def _quadrature(d: int, B: np.ndarray, composite, estimator: Estimator):
    _, s, vt = np.linalg.svd(B, full_matrices=True)
    s_full = np.zeros(d)
    s_full[:len(s)] = s
    positive = s_full[s_full > 0]
    condition = positive.max() / positive.min()
    if d == 2:
        n = sphere.nodes_for_condition(
            estimator.n or sphere.DEFAULT_CIRCLE_NODES, condition
        )
        logging.debug("Circle quadrature with {:d} nodes".format(n))
        return sphere.average_circle(composite, n)
    # the singular direction farthest from the others (in log scale)
    # becomes the polar axis
    logs = np.log(np.maximum(s_full, 1e-300))
    spread = np.abs(logs - np.median(logs))
    polar = int(np.argmax(spread))
    order = [i for i in range(3) if i != polar] + [polar]
    frame = vt.T[:, order]
    ring = s_full[order[:2]]
    ring_condition = 1.0
    if ring.min() > 0:
        ring_condition = ring.max() / ring.min()
    n_azimuth = sphere.nodes_for_condition(
        estimator.n or sphere.DEFAULT_AZIMUTH_NODES, ring_condition
    )
    width = 1.0 / condition
    breakpoints = [-width, width, -1 + width * width, 1 - width * width]
    return sphere.average_sphere(composite, frame, n_azimuth, breakpoints)


def _monte_carlo(law: DirectionLaw, composite, estimator: Estimator):
    n = estimator.n or DEFAULT_MC_SAMPLES
    batch = -(-n // MC_BATCHES)

    def run_batch(block, rng):
        total = None
        done = 0
        while done < block.size:
            size = min(MC_CHUNK, block.size - done)
            values = composite(law.sample(rng, size))
            s = np.sum(values, axis=0)
            total = s if total is None else total + s
            done += size
        return total / block.size

    batches = map_blocks(run_batch, n, estimator.seed,
                         workers=estimator.workers, block_size=batch)
    sizes = [min(batch, n - i * batch) for i in range(len(batches))]
    value = np.average(np.array(batches), axis=0, weights=sizes)
    return Expectation(value, batches, estimator)


def _outer(w: np.ndarray) -> np.ndarray:
    return np.einsum("ni,nj->nij", w, w).reshape(w.shape[0], -1)


def radial_integral_moment(B: np.ndarray) -> np.ndarray:
    """
    Exact E[w w^T], w = Bg/|Bg|, g standard normal (equivalently v
    uniform on the sphere).

    With B = U diag(s) V^T the matrix is U diag(M_i) U^T where
    M_i = s_i^2 * int_0^inf (1 + 2 t s_i^2)^{-1}
    prod_j (1 + 2 t s_j^2)^{-1/2} dt. The integral is evaluated in
    log t with breakpoints at the scales 1/s_j^2.
    """

    B = np.atleast_2d(np.asarray(B, dtype=float))
    u, s, _ = np.linalg.svd(B, full_matrices=False)
    s = s / s.max()
    keep = s > 0
    u = u[:, keep]
    s2 = s[keep] ** 2
    scales = -np.log(s2)
    lower = -40.0
    upper = 2 * scales.max() + 80.0
    points = sorted(set(np.round(scales, 12)))
    diagonal = np.empty(len(s2))
    for i in range(len(s2)):
        def integrand(y, i=i):
            t = np.exp(y)
            terms = 1.0 + 2.0 * t * s2
            return s2[i] * t * np.exp(-0.5 * np.sum(np.log(terms))) \
                / terms[i]
        value, _ = quad(integrand, lower, upper, points=points,
                        epsabs=1e-15, epsrel=1e-13, limit=2000)
        diagonal[i] = value
    return (u * diagonal) @ u.T


def pushforward_second_moment(law: DirectionLaw, B: np.ndarray,
                              estimator: Estimator = None) -> Expectation:
    """
    Second-moment matrix E[w w^T] of the normalized pushforward
    w = Bv/|Bv|, v ~ law.

    For Monte Carlo with the uniform law and a diagonal map the
    off-diagonal entries vanish by symmetry and are set to zero.
    """

    B = np.atleast_2d(np.asarray(B, dtype=float))
    estimator = resolve(law, estimator)
    m = B.shape[0]
    if estimator.kind == "integral":
        if B.shape[1] != law.d:
            raise DimensionMismatch(
                "Map has {:d} columns, law has dimension {:d}"
                .format(B.shape[1], law.d)
            )
        return Expectation(radial_integral_moment(B), None, estimator)
    result = pushforward_expectation(law, B, _outer, estimator)
    value = result.value.reshape(m, m)
    value = (value + value.T) / 2
    batches = None
    if result.batches is not None:
        batches = [b.reshape(m, m) for b in result.batches]
        if isinstance(law, UniformSphere) and _is_diagonal(B):
            value = np.diag(np.diag(value))
            batches = [np.diag(np.diag(b)) for b in batches]
    return Expectation(value, batches, estimator)


def _is_diagonal(B: np.ndarray) -> bool:
    return B.shape[0] == B.shape[1] and not np.any(B - np.diag(np.diag(B)))


def second_moment_matrix(law: DirectionLaw, C: CovarianceSpec,
                         estimator: Estimator = None) -> np.ndarray:
    """
    M_tau = E[w w^T] for w = C^{-1/2}v/|C^{-1/2}v|, v ~ law.

    :param law: direction law
    :param C: covariance
    :param estimator: exact (discrete laws), quadrature (uniform,
        d = 2, 3), integral (uniform) or mc
    :return: d x d symmetric positive semi-definite matrix, trace 1
    """

    if law.d != C.d:
        raise DimensionMismatch("Law dimension {:d} != covariance "
                                "dimension {:d}".format(law.d, C.d))
    return pushforward_second_moment(law, map_matrix(C), estimator).value


def mean_direction(law: DirectionLaw, C: CovarianceSpec,
                   estimator: Estimator = None) -> np.ndarray:
    """E[w]; vanishes for symmetric laws"""
    return pushforward_expectation(law, map_matrix(C), lambda w: w,
                                   estimator).value
