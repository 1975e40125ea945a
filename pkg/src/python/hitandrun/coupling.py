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
Synchronous coupling of two generalized Hit-and-Run chains.

Both chains use the same direction v and the same normal draw Z. In
natural coordinates their difference then evolves by a pure random
projection, delta' = (I - w w^T) delta, so the squared natural gap can
only shrink and its mean is governed by the second-moment matrix of w.
"""

import logging
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh, ArpackNoConvergence
from scipy.stats import linregress

from hitandrun.directions import DirectionLaw, Estimator, \
    pushforward_expectation, resolve, map_matrix, normalize_rows, \
    DEFAULT_MC_SAMPLES
from hitandrun.errors import ZeroDirection, InsufficientReplicas, \
    BadInputs, DimensionMismatch, NumericalFailure
from hitandrun.gaussian_model import CovarianceSpec
from hitandrun.hit_and_run import draw, transition
from hitandrun.seeding import map_blocks


IDENTITY_TOLERANCE = 1e-10
MONOTONE_TOLERANCE = 1e-12
FIT_GROUPS = 20
EXPLICIT_DIMENSION = 3
NODE_BUDGET = 10 ** 6
LANCZOS_TOLERANCE = 1e-12


def project_orthogonal(z, w) -> np.ndarray:
    """
    Projection of z onto the orthogonal complement of span(w):
    z - (z.w / |w|^2) w. Accepts stacks of vectors.
    """

    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    w2 = np.sum(w * w, axis=-1)
    if np.any(w2 == 0):
        raise ZeroDirection("Cannot project along a zero vector")
    return z - (np.sum(z * w, axis=-1) / w2)[..., None] * w


class CoupledPair:
    """
    Two chain positions driven by shared randomness.

    :ivar delta: C^{-1/2}(a - b), evolved by projections
    :ivar natural_gap: |delta|
    """

    def __init__(self, C: CovarianceSpec, position_a, position_b,
                 step_count: int = 0, delta=None):
        self.position_a = C.check(position_a).astype(float)
        self.position_b = C.check(position_b).astype(float)
        self.step_count = step_count
        if delta is None:
            delta = C.apply_inv_sqrt(self.position_a - self.position_b)
        self.delta = np.asarray(delta, dtype=float)
        self.natural_gap = float(np.linalg.norm(self.delta))


def coupled_transition(C: CovarianceSpec, a: np.ndarray, b: np.ndarray,
                       delta: np.ndarray, v: np.ndarray, z: np.ndarray
                       ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Moves both stacks of positions with the same draws and projects
    the tracked natural difference.
    """

    a_new = transition(C, a, v, z)
    b_new = transition(C, b, v, z)
    w = C.apply_inv_sqrt(v)
    delta_new = project_orthogonal(delta, w)
    if __debug__:
        direct = C.apply_inv_sqrt(a_new - b_new)
        scale = 1 + np.linalg.norm(C.apply_inv_sqrt(a_new), axis=-1) \
            + np.linalg.norm(C.apply_inv_sqrt(b_new), axis=-1)
        gap = np.linalg.norm(direct - delta_new, axis=-1)
        assert np.all(gap <= IDENTITY_TOLERANCE * scale), \
            "Coupled difference left the projection identity by {:g}" \
            .format(float(np.max(gap / scale)))
    return a_new, b_new, delta_new


def coupled_step(C: CovarianceSpec, law: DirectionLaw, pair: CoupledPair,
                 rng: np.random.Generator) -> CoupledPair:
    """
    One synchronous transition. Draws are consumed exactly as by
    ``hit_and_run.step``, hence position_a follows the uncoupled chain
    with the same stream.
    """

    v, z = draw(law, rng, 1)
    a, b, delta = coupled_transition(C, pair.position_a[None, :],
                                     pair.position_b[None, :],
                                     pair.delta[None, :], v, z)
    return CoupledPair(C, a[0], b[0], pair.step_count + 1, delta[0])


class SeriesAccumulator:
    """
    Streaming sums over replicas of a squared-distance series
    recorded every ``stride`` steps. Replicas are assigned to fit
    groups by global index modulo ``groups``.
    """

    def __init__(self, n_steps: int, stride: int, groups: int,
                 start: int, size: int):
        self.steps = np.arange(0, n_steps + 1, stride)
        if self.steps[-1] != n_steps:
            self.steps = np.append(self.steps, n_steps)
        self.slot = {int(k): i for i, k in enumerate(self.steps)}
        n = len(self.steps)
        self.groups = groups
        self.group = (start + np.arange(size)) % groups
        self.counts = np.bincount(self.group, minlength=groups)
        self.total = np.zeros(n)
        self.total_sq = np.zeros(n)
        self.total_root = np.zeros(n)
        self.group_total = np.zeros((groups, n))

    def add(self, k: int, squares: np.ndarray):
        i = self.slot.get(k)
        if i is None:
            return
        self.total[i] = np.sum(squares)
        self.total_sq[i] = np.sum(squares * squares)
        self.total_root[i] = np.sum(np.sqrt(squares))
        self.group_total[:, i] = np.bincount(self.group, weights=squares,
                                             minlength=self.groups)


class SeriesFit(NamedTuple):
    """
    Replica averages of a squared-distance series and its decay fit

    :ivar steps: recorded steps
    :ivar mean_sq: mean of the squares
    :ivar se: standard error of mean_sq
    :ivar mean_root: mean of the distances
    :ivar rate: -slope of log mean_sq over the window, None if
        fewer than two positive points
    :ivar fit_error: spread of the rates fitted on disjoint replica
        groups, regression error when there are too few replicas
    """

    steps: np.ndarray
    mean_sq: np.ndarray
    se: np.ndarray
    mean_root: np.ndarray
    rate: Optional[float]
    fit_error: Optional[float]
    window: Tuple[int, int]


def default_window(n_steps: int) -> Tuple[int, int]:
    return int(np.ceil(n_steps / 5)), n_steps


def fit_decay(steps: np.ndarray, series: np.ndarray,
              window: Tuple[int, int]) -> Optional[Tuple[float, float]]:
    """
    Least-squares fit of log(series) against steps over the window.

    :return: (rate, regression standard error) or None when fewer than
        two positive points are available
    """

    lo, hi = window
    select = (steps >= lo) & (steps <= hi) & (series > 0)
    if np.count_nonzero(select) < 2:
        return None
    fit = linregress(steps[select], np.log(series[select]))
    return -float(fit.slope), float(fit.stderr)


def reduce_series(parts: Sequence[SeriesAccumulator], n_replicas: int,
                  window: Tuple[int, int]) -> SeriesFit:
    """Combines block accumulators in block order and fits the decay"""

    steps = parts[0].steps
    total = sum(p.total for p in parts)
    total_sq = sum(p.total_sq for p in parts)
    total_root = sum(p.total_root for p in parts)
    group_total = sum(p.group_total for p in parts)
    counts = sum(p.counts for p in parts)
    n = float(n_replicas)
    mean_sq = total / n
    variance = np.maximum(total_sq / n - mean_sq * mean_sq, 0) * n / (n - 1)
    se = np.sqrt(variance / n)
    fit = fit_decay(steps, mean_sq, window)
    if fit is None:
        return SeriesFit(steps, mean_sq, se, total_root / n, None, None,
                         window)
    rate, fit_error = fit
    groups = len(counts)
    if groups >= 2 and np.all(counts >= 2):
        rates = []
        for g in range(groups):
            gf = fit_decay(steps, group_total[g] / counts[g], window)
            if gf is not None:
                rates.append(gf[0])
        if len(rates) >= 2:
            fit_error = float(np.std(rates, ddof=1) / np.sqrt(len(rates)))
    return SeriesFit(steps, mean_sq, se, total_root / n, rate, fit_error,
                     window)


class DecayTable(NamedTuple):
    """
    Result of a contraction experiment.

    :ivar mean_sq_gap: E[gap_k^2], k = 0..n
    :ivar se: standard error of mean_sq_gap
    :ivar mean_gap: E[gap_k]
    :ivar rate: fitted decay rate of the squared gap, -slope of
        log E[gap_k^2] over the fit window (None if coalesced)
    :ivar fit_error: standard error of the rate
    :ivar window: first and last step of the fit
    :ivar coalesced: the chains met, the fit is undefined
    """

    steps: np.ndarray
    mean_sq_gap: np.ndarray
    se: np.ndarray
    mean_gap: np.ndarray
    rate: Optional[float]
    fit_error: Optional[float]
    window: Tuple[int, int]
    coalesced: bool
    replicas: int

    @property
    def factor(self) -> Optional[float]:
        """Fitted per-step factor of the mean squared gap"""
        if self.rate is None:
            return None
        return float(np.exp(-self.rate))

    def one_step_factor(self) -> Tuple[float, float]:
        """E[gap_1^2] / gap_0^2 and its standard error"""
        g0 = self.mean_sq_gap[0]
        return float(self.mean_sq_gap[1] / g0), float(self.se[1] / g0)


def contraction_experiment(C: CovarianceSpec, law: DirectionLaw, a0, b0,
                           n_steps: int, n_replicas: int, seed: int,
                           workers: int = 1,
                           window: Tuple[int, int] = None) -> DecayTable:
    """
    Runs ``n_replicas`` synchronously coupled pairs from (a0, b0) and
    fits the decay of the mean squared natural gap.

    :param seed: stream seed, replica blocks derive their own seeds
    :param window: (first, last) step of the fit, default [n/5, n]
    """

    if n_replicas < 2:
        raise InsufficientReplicas(
            "At least 2 replicas needed, got {:d}".format(n_replicas)
        )
    if n_steps < 1:
        raise BadInputs("At least one step needed")
    a0 = C.check(a0)
    b0 = C.check(b0)
    if law.d != C.d:
        raise DimensionMismatch("Law dimension {:d} != covariance "
                                "dimension {:d}".format(law.d, C.d))
    if window is None:
        window = default_window(n_steps)
    delta0 = C.apply_inv_sqrt(a0 - b0)
    groups = min(FIT_GROUPS, n_replicas // 2)

    def run_block(block, rng):
        n = block.size
        a = np.tile(a0, (n, 1))
        b = np.tile(b0, (n, 1))
        delta = np.tile(delta0, (n, 1))
        series = SeriesAccumulator(n_steps, 1, groups, block.start, n)
        gap = np.linalg.norm(delta, axis=1)
        series.add(0, gap * gap)
        for k in range(1, n_steps + 1):
            v, z = draw(law, rng, n)
            a, b, delta = coupled_transition(C, a, b, delta, v, z)
            new_gap = np.linalg.norm(delta, axis=1)
            assert np.all(new_gap <= gap * (1 + MONOTONE_TOLERANCE)
                          + MONOTONE_TOLERANCE), "Natural gap increased"
            gap = new_gap
            series.add(k, gap * gap)
        return series

    parts = map_blocks(run_block, n_replicas, seed, workers)
    fit = reduce_series(parts, n_replicas, window)
    coalesced = fit.rate is None or fit.mean_sq[0] == 0
    if coalesced:
        logging.info("Coupled chains coalesced, no decay fit")
        return DecayTable(fit.steps, fit.mean_sq, fit.se, fit.mean_root,
                          None, None, window, True, n_replicas)
    logging.info("Squared gap decay rate {:.6g} +- {:.2g}"
                 .format(fit.rate, fit.fit_error))
    return DecayTable(fit.steps, fit.mean_sq, fit.se, fit.mean_root,
                      fit.rate, fit.fit_error, window, False, n_replicas)


def _kron_projections(w: np.ndarray) -> np.ndarray:
    n, m = w.shape
    p = np.eye(m)[None, :, :] - np.einsum("ni,nj->nij", w, w)
    return np.einsum("nik,njl->nijkl", p, p).reshape(n, m ** 4)


def _operator_estimator(law: DirectionLaw,
                        estimator: Optional[Estimator]) -> Estimator:
    estimator = resolve(law, estimator)
    if estimator.kind == "integral":
        kind = "quadrature" if law.d in (2, 3) else "mc"
        estimator = estimator._replace(kind=kind)
    return estimator


def transfer_operator(law: DirectionLaw, B: np.ndarray,
                      estimator: Estimator = None) -> np.ndarray:
    """
    Matrix of S -> E[P S P], P = I - w w^T, w = Bv/|Bv|, acting on
    row-major flattened m x m matrices. It propagates the second
    moment E[delta delta^T] of a coupled difference (or of a
    Kaczmarz error) by one step.

    The matrix has m^4 entries and every direction contributes one of
    them, use ``transfer_radius`` beyond a few dimensions.
    """

    B = np.atleast_2d(np.asarray(B, dtype=float))
    estimator = _operator_estimator(law, estimator)
    m = B.shape[0]
    value = pushforward_expectation(law, B, _kron_projections,
                                    estimator).value
    k = value.reshape(m * m, m * m)
    return (k + k.T) / 2


def direction_nodes(law: DirectionLaw, B: np.ndarray,
                    estimator: Estimator = None
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit pushforward directions w = Bv/|Bv| with their weights: the
    support of a discrete law, otherwise a Monte Carlo sample of at
    most NODE_BUDGET / m vectors drawn from the estimator's seed.
    """

    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[1] != law.d:
        raise DimensionMismatch(
            "Map has {:d} columns, law has dimension {:d}"
            .format(B.shape[1], law.d)
        )
    estimator = _operator_estimator(law, estimator)
    if estimator.kind == "exact":
        w = normalize_rows(law.support @ B.T)
        return w, np.asarray(law.weights, dtype=float)
    m = B.shape[0]
    n = DEFAULT_MC_SAMPLES
    if estimator.kind == "mc" and estimator.n:
        n = estimator.n
    limit = max(NODE_BUDGET // m, 1)
    if n > limit:
        logging.info("Transfer operator uses {:d} of {:d} directions"
                     .format(limit, n))
        n = limit

    def run_block(block, rng):
        return normalize_rows(law.sample(rng, block.size) @ B.T)

    w = np.vstack(map_blocks(run_block, n, estimator.seed,
                             workers=estimator.workers))
    return w, np.full(n, 1.0 / n)


def transfer_radius(w: np.ndarray, p: np.ndarray) -> float:
    """
    Largest eigenvalue of S -> sum_k p_k P_k S P_k by Lanczos
    iteration, each product costs O(n m^2).

    :param w: (n, m) unit vectors
    :param p: their weights
    """

    m = w.shape[1]
    moment = (w * p[:, None]).T @ w

    def apply(s: np.ndarray) -> np.ndarray:
        S = s.reshape(m, m)
        q = np.sum((w @ S) * w, axis=1)
        out = S - moment @ S - S @ moment + (w * (p * q)[:, None]).T @ w
        return out.ravel()

    if m * m <= 2:
        return float(apply(np.eye(m).ravel())[0])
    operator = LinearOperator((m * m, m * m), matvec=apply, dtype=float)
    start = np.eye(m).ravel() / np.sqrt(m)
    try:
        value = eigsh(operator, k=1, which="LA", v0=start,
                      tol=LANCZOS_TOLERANCE, return_eigenvectors=False)
    except ArpackNoConvergence as x:
        raise NumericalFailure("Transfer operator iteration did not "
                               "converge", {"m": m, "nodes": w.shape[0],
                                            "message": str(x)})
    return float(value[0])


def asymptotic_decay_rate(law: DirectionLaw, B: np.ndarray,
                          estimator: Estimator = None) -> float:
    """
    Asymptotic per-step decay rate -log r of the mean squared
    difference, r the spectral radius of the transfer operator.
    Always at least -log(1 - lambda_min(E[w w^T])).

    Up to EXPLICIT_DIMENSION rows the operator is built and
    diagonalized, larger maps go through ``transfer_radius``.
    """

    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] <= EXPLICIT_DIMENSION:
        k = transfer_operator(law, B, estimator)
        r = float(np.max(np.linalg.eigvalsh(k)))
    else:
        r = transfer_radius(*direction_nodes(law, B, estimator))
    if not (-IDENTITY_TOLERANCE <= r <= 1 + IDENTITY_TOLERANCE):
        raise NumericalFailure("Transfer operator radius {:g} outside "
                               "[0, 1]".format(r), {"radius": r})
    if r <= 0:
        return float("inf")
    return -float(np.log(r))


def asymptotic_gap_rate(law: DirectionLaw, C: CovarianceSpec,
                        estimator: Estimator = None) -> float:
    """Asymptotic decay rate of E[gap^2] for Hit-and-Run couplings"""
    return asymptotic_decay_rate(law, map_matrix(C), estimator)


def lemma_identity(z, w_hat: np.ndarray) -> Tuple[float, float]:
    """
    Both sides of mean_i |P_i z|^2 = |z|^2 - z^T M z for the empirical
    second moment M of the unit vectors ``w_hat``.
    """

    z = np.asarray(z, dtype=float)
    projected = project_orthogonal(np.tile(z, (w_hat.shape[0], 1)), w_hat)
    left = float(np.mean(np.sum(projected * projected, axis=1)))
    m = w_hat.T @ w_hat / w_hat.shape[0]
    right = float(z @ z - z @ m @ z)
    return left, right
