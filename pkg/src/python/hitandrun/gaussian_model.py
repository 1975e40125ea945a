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
Centered Gaussian target N(0, C): covariance with cached spectral
data, natural coordinates x -> C^{-1/2} x, natural norm, log density
and exact sampling.

All vector arguments may be a single d-vector or a stack of vectors
of shape (n, d); operators act along the last axis.
"""

from typing import Sequence, Tuple, Union

import numpy as np

from hitandrun.errors import NonSymmetric, NotPositiveDefinite, \
    DimensionZero, DimensionMismatch


SYMMETRY_TOLERANCE = 1e-10

ArrayLike = Union[Sequence[float], Sequence[Sequence[float]], np.ndarray]


class CovarianceSpec:
    """
    Symmetric positive definite covariance matrix C together with
    its eigendecomposition. Spectral constants refer to the
    precision matrix C^{-1}:

    * ``m`` - smallest eigenvalue of C^{-1}
    * ``M`` - largest eigenvalue of C^{-1}
    * ``kappa`` - condition number M/m

    Instances are immutable after construction.
    """

    def __init__(self, matrix: np.ndarray, diagonal: bool):
        self.d = matrix.shape[0]
        self.matrix = matrix
        self.diagonal = diagonal
        if diagonal:
            variances = np.diag(matrix).copy()
            order = np.argsort(variances, kind="stable")
            self.eigenvalues = variances[order]
            self.eigenvectors = np.eye(self.d)[:, order]
            self._sqrt_diag = np.sqrt(variances)
            self._inv_sqrt_diag = 1.0 / self._sqrt_diag
        else:
            self.eigenvalues, self.eigenvectors = np.linalg.eigh(matrix)
            self._sqrt_diag = None
            self._inv_sqrt_diag = None
        if self.eigenvalues[0] <= 0:
            raise NotPositiveDefinite(
                "Covariance has a non-positive eigenvalue: {:g}"
                .format(self.eigenvalues[0])
            )
        V = self.eigenvectors
        s = np.sqrt(self.eigenvalues)
        self.sqrt_matrix = (V * s) @ V.T
        self.inv_sqrt_matrix = (V / s) @ V.T
        self.inverse = (V / self.eigenvalues) @ V.T
        self.m = 1.0 / self.eigenvalues[-1]
        self.M = 1.0 / self.eigenvalues[0]
        self.kappa = self.eigenvalues[-1] / self.eigenvalues[0]
        self.log_det = float(np.sum(np.log(self.eigenvalues)))

    def __repr__(self) -> str:
        return "CovarianceSpec(d={:d}, kappa={:g}, diagonal={})".format(
            self.d, self.kappa, self.diagonal
        )

    def check(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.d:
            raise DimensionMismatch(
                "Expected vector(s) of dimension {:d}, got shape {}"
                .format(self.d, x.shape)
            )
        return x

    def apply_sqrt(self, x: ArrayLike) -> np.ndarray:
        """Returns C^{1/2} x"""
        x = self.check(x)
        if self.diagonal:
            return x * self._sqrt_diag
        return x @ self.sqrt_matrix

    def apply_inv_sqrt(self, x: ArrayLike) -> np.ndarray:
        """Returns C^{-1/2} x, i.e. x in natural coordinates"""
        x = self.check(x)
        if self.diagonal:
            return x * self._inv_sqrt_diag
        return x @ self.inv_sqrt_matrix

    def apply_inverse(self, x: ArrayLike) -> np.ndarray:
        """Returns C^{-1} x"""
        x = self.check(x)
        if self.diagonal:
            return x * (self._inv_sqrt_diag ** 2)
        return x @ self.inverse

    def scaled(self, c: float) -> "CovarianceSpec":
        return build_covariance(c * self.matrix)

    def rotated(self, q: np.ndarray) -> "CovarianceSpec":
        """Returns the covariance Q C Q^T"""
        return build_covariance(q @ self.matrix @ q.T)


def build_covariance(rep: ArrayLike) -> CovarianceSpec:
    """
    Builds a covariance from either a list of d variances (diagonal
    covariance) or a square d x d matrix (dense covariance).

    Dense input is checked for symmetry (absolute tolerance relative
    to the largest entry) and symmetrized before decomposition.

    :param rep: diagonal variances or dense matrix
    :return: CovarianceSpec
    """

    data = np.asarray(rep, dtype=float)
    if data.size == 0:
        raise DimensionZero("Covariance must have dimension >= 1")
    if data.ndim == 1:
        if not np.all(np.isfinite(data)):
            raise NotPositiveDefinite("Variances must be finite")
        if np.any(data <= 0):
            raise NotPositiveDefinite(
                "Variances must be positive: " + str(data.tolist())
            )
        return CovarianceSpec(np.diag(data), diagonal=True)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise DimensionMismatch(
            "Covariance matrix must be square, got shape {}"
            .format(data.shape)
        )
    if not np.all(np.isfinite(data)):
        raise NotPositiveDefinite("Covariance entries must be finite")
    scale = np.max(np.abs(data))
    asymmetry = np.max(np.abs(data - data.T))
    if asymmetry > SYMMETRY_TOLERANCE * max(scale, 1e-300):
        raise NonSymmetric(
            "Covariance is not symmetric, max |C - C^T| = {:g}"
            .format(asymmetry)
        )
    data = (data + data.T) / 2
    off_diagonal = data - np.diag(np.diag(data))
    if not np.any(off_diagonal):
        if np.any(np.diag(data) <= 0):
            raise NotPositiveDefinite(
                "Variances must be positive: " + str(np.diag(data).tolist())
            )
        return CovarianceSpec(data, diagonal=True)
    return CovarianceSpec(data, diagonal=False)


def identity(d: int) -> CovarianceSpec:
    if d < 1:
        raise DimensionZero("Covariance must have dimension >= 1")
    return build_covariance(np.ones(d))


def natural_norm(C: CovarianceSpec, x: ArrayLike):
    """
    Norm |C^{-1/2} x| of the metric in which the target is standard.

    :return: a float for a single vector, array of norms for a stack
    """

    y = C.apply_inv_sqrt(x)
    n = np.linalg.norm(y, axis=-1)
    if np.ndim(n) == 0:
        return float(n)
    return n


def log_density(C: CovarianceSpec, x: ArrayLike):
    """
    Log density of N(0, C):
    -|x|^2_{C^{-1/2}}/2 - log((2 pi)^d det C)/2
    """

    y = C.apply_inv_sqrt(x)
    q = np.sum(y * y, axis=-1)
    value = -0.5 * q - 0.5 * (C.d * np.log(2 * np.pi) + C.log_det)
    if np.ndim(value) == 0:
        return float(value)
    return value


def sample_target(C: CovarianceSpec, rng: np.random.Generator,
                  size: int = None) -> np.ndarray:
    """
    Exact draw(s) C^{1/2} g with g standard normal.

    :param size: number of draws; ``None`` returns a single d-vector
    """

    if size is None:
        g = rng.standard_normal(C.d)
    else:
        g = rng.standard_normal((size, C.d))
    return C.apply_sqrt(g)


def euclidean_bounds(C: CovarianceSpec, x: ArrayLike) -> Tuple[float, float]:
    """
    Norm equivalence between the Euclidean and the natural metric.

    :return: (m^{-1/2} |x|_nat, M^{1/2} |x|), upper bounds for |x|
        and |x|_nat respectively
    """

    x = C.check(x)
    return (natural_norm(C, x) / np.sqrt(C.m),
            float(np.linalg.norm(x)) * np.sqrt(C.M))
