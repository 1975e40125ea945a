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
Command line runner of the experiments.

Usage::

    python -m hitandrun <kind> [--flag value ...] [--config file.yaml]

Kinds: ``sample``, ``couple``, ``rates`` (``rates table1`` for the
condition number sweep), ``table1``, ``overlap``, ``mix-bound``,
``kaczmarz`` and ``kaczmarz-figure``. Global flags are ``--seed``,
``--workers``, ``--out``, ``--format`` and ``--config``.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
failures (the diagnostic payload is printed to standard error as
JSON). No output file is produced on failure.
"""

import json
import logging
import sys
from typing import List

import numpy as np
from nsaph import init_logging

from hitandrun.config import ExperimentConfig, parse_covariance, \
    parse_law, parse_vector, parse_int, parse_float, parse_floats, \
    parse_estimator, parse_grid, parse_window, parse_system_matrix, \
    parse_rhs, validated
from hitandrun.coupling import contraction_experiment, asymptotic_gap_rate, \
    asymptotic_decay_rate
from hitandrun.directions import UniformSphere, RowWeighted
from hitandrun.errors import ConfigInvalid, InvalidInput, NumericalFailure
from hitandrun.gaussian_model import sample_target
from hitandrun.hit_and_run import run_chain
from hitandrun.kaczmarz import build_problem, convergence_curve, \
    convergence_experiment, rate_classical, rate_general, VARIANTS, \
    ITERATIONS_PER_RATE
from hitandrun.overlap_mixing import overlap_constants, tv_bound_pointwise, \
    tv_quadrature_report, mixing_time_bound, epsilon_schedule, \
    explicit_mixing_steps, MIXING_LABEL
from hitandrun.rates import CASES, case_rate, rho_general, sandwich, table1
from hitandrun.results import ResultTable, provenance, write
from hitandrun.seeding import derive_seed, generator


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# stream tags of derive_seed(master_seed, tag)
STREAM_CHAIN = 0
STREAM_START = 1
STREAM_REPLICAS = 2
STREAM_ESTIMATOR = 3
STREAM_VARIANT = {"classical": 4, "coordinate-free": 5}

# failures of numpy, scipy and internal checks reported as numerical
NUMERICAL_ERRORS = (np.linalg.LinAlgError, AssertionError, MemoryError,
                    FloatingPointError, ZeroDivisionError, OverflowError)


def sample(config: ExperimentConfig) -> ResultTable:
    C = parse_covariance(config.get("cov"))
    law = parse_law(config.get("tau"), C.d)
    steps = parse_int(config.get("steps"), "steps", minimum=0)
    seed = config.master_seed
    if config.get("x0") == "target":
        x0 = sample_target(C, generator(derive_seed(seed, STREAM_START)))
    else:
        x0 = parse_vector(config.get("x0"), "x0", C.d)
    trajectory = run_chain(C, law, x0, steps,
                           generator(derive_seed(seed, STREAM_CHAIN)))
    columns = ["step"] + ["x_{:d}".format(i + 1) for i in range(C.d)] \
        + ["nat_norm"]
    table = ResultTable("sample", columns, summary={
        "mean": trajectory.mean,
        "covariance": trajectory.covariance,
        "x0": x0
    })
    for k, x in zip(trajectory.steps, trajectory.positions):
        table.append([int(k)] + list(x) + [trajectory.natural_norms[k]])
    return table


def couple(config: ExperimentConfig) -> ResultTable:
    C = parse_covariance(config.get("cov"))
    law = parse_law(config.get("tau"), C.d)
    seed = config.master_seed
    workers = config.worker_count
    if config.get("a0") is None:
        a0 = C.sqrt_matrix[:, 0]
    else:
        a0 = parse_vector(config.get("a0"), "a0", C.d)
    if config.get("b0") is None:
        b0 = np.zeros(C.d)
    else:
        b0 = parse_vector(config.get("b0"), "b0", C.d)
    estimator = parse_estimator(config.get("estimator"),
                                derive_seed(seed, STREAM_ESTIMATOR), workers)
    decay = contraction_experiment(
        C, law, a0, b0,
        parse_int(config.get("steps"), "steps", minimum=1),
        parse_int(config.get("replicas"), "replicas", minimum=2),
        derive_seed(seed, STREAM_REPLICAS), workers,
        parse_window(config.get("window"))
    )
    rate = rho_general(law, C, estimator)
    table = ResultTable("couple", ["step", "mean_sq_gap", "se", "mean_gap"])
    for row in zip(decay.steps, decay.mean_sq_gap, decay.se,
                   decay.mean_gap):
        table.append(list(row))
    factor, factor_se = decay.one_step_factor()
    table.summary = {
        "rho": rate.rho,
        "rho_std_error": rate.std_error,
        "one_step_contraction": 1 - 2 * rate.rho,
        "one_step_factor": factor,
        "one_step_factor_se": factor_se,
        "fitted_rate": decay.rate,
        "fit_error": decay.fit_error,
        "fitted_factor": decay.factor,
        "asymptotic_rate": asymptotic_gap_rate(law, C, estimator),
        "window": list(decay.window),
        "coalesced": decay.coalesced,
        "replicas": decay.replicas
    }
    return table


RATE_COLUMNS = ["case", "kappa", "d", "rho", "method", "std_error",
                "eigenspace_dim", "minimizer"]


def rates(config: ExperimentConfig) -> ResultTable:
    case = config.get("case")
    if case not in CASES + ["general"]:
        raise ConfigInvalid("Unknown case: {}".format(case))
    table = ResultTable("rates", RATE_COLUMNS)
    if case == "general":
        C = parse_covariance(config.get("cov"))
        law = parse_law(config.get("tau"), C.d)
        estimator = parse_estimator(
            config.get("estimator"),
            derive_seed(config.master_seed, STREAM_ESTIMATOR),
            config.worker_count
        )
        report = rho_general(law, C, estimator)
        kappa = C.kappa
        table.summary = {"sandwich": sandwich(law, C, estimator),
                         "law": law.describe()}
    else:
        if config.get("kappa") is None:
            raise ConfigInvalid("Case {} needs kappa".format(case))
        kappa = parse_float(config.get("kappa"), "kappa")
        d1 = config.get("d1")
        d2 = config.get("d2")
        report = validated(
            case_rate, case, kappa,
            None if d1 is None else parse_int(d1, "d1", minimum=0),
            None if d2 is None else parse_int(d2, "d2", minimum=0)
        )
    table.append([case, kappa, report.metadata.get("d"), report.rho,
                  report.method, report.std_error, report.eigenspace_dim,
                  " ".join("{:.17g}".format(v) for v in report.minimizer)])
    table.summary["metadata"] = report.metadata
    return table


def sweep(config: ExperimentConfig) -> ResultTable:
    kappas = parse_floats(config.get("kappas"), "kappas")
    result = validated(table1, kappas)
    table = ResultTable("table1", ["case", "kappa", "rho", "slope"])
    for case, kappa, rho in result.rows:
        table.append([case, kappa, rho, result.slopes[case]])
    table.summary = {
        "slopes": result.slopes,
        "compensated_3d_low": result.compensated,
        "compensated_spread": result.compensated_spread
    }
    return table


def overlap(config: ExperimentConfig) -> ResultTable:
    C = parse_covariance(config.get("cov"))
    x = parse_vector(config.get("x"), "x", C.d)
    xt = parse_vector(config.get("xt"), "xt", C.d)
    epsilon = parse_float(config.get("eps"), "eps")
    n_radial, n_angle = parse_grid(config.get("grid"))
    constants = validated(overlap_constants, C, x, epsilon)
    bound = validated(tv_bound_pointwise, C, x, xt, epsilon)
    tv = validated(tv_quadrature_report, C, x, xt, n_radial, n_angle)
    table = ResultTable("overlap", [
        "tv_quadrature", "tv_bound_raw", "tv_bound_clamped", "c1", "c2",
        "c3", "tail"
    ])
    table.append([tv["tv"], bound.raw, bound.clamped, constants.c1,
                  constants.c2, constants.c3, tv["tail"]])
    table.summary = {
        "tv_quadrature": tv["tv"],
        "tv_bound_raw": bound.raw,
        "tv_bound_clamped": bound.clamped,
        "constants": {"c1": constants.c1, "c2": constants.c2,
                      "c3": constants.c3},
        "mass_x": tv["mass_x"],
        "mass_xt": tv["mass_xt"],
        "tail": tv["tail"]
    }
    return table


def mix_bound(config: ExperimentConfig) -> ResultTable:
    C = parse_covariance(config.get("cov"))
    if config.get("rho") is None:
        rho = rho_general(UniformSphere(C.d), C).rho
    else:
        rho = parse_float(config.get("rho"), "rho")
    epsilon_target = parse_float(config.get("eps"), "eps")
    if config.get("w2") is None:
        w2 = float(np.sqrt(C.d))
    else:
        w2 = parse_float(config.get("w2"), "w2")
    const_c = parse_float(config.get("c"), "c")
    const_cprime = parse_float(config.get("cprime"), "cprime")
    steps = validated(mixing_time_bound, C, rho, epsilon_target, w2,
                      const_c, const_cprime)
    epsilon = None
    explicit = None
    try:
        epsilon = epsilon_schedule(C, epsilon_target)
        explicit = explicit_mixing_steps(C, rho, epsilon_target, w2,
                                         epsilon)
    except InvalidInput as x:
        logging.warning("No explicit mixing bound: {}".format(x))
    table = ResultTable("mix-bound", [
        "steps_bound", "rho", "eps", "w2", "c", "cprime",
        "explicit_steps", "epsilon_reg"
    ])
    table.append([steps, rho, epsilon_target, w2, const_c, const_cprime,
                  explicit, epsilon])
    table.summary = {"label": MIXING_LABEL, "steps_bound": steps,
                     "explicit_steps": explicit}
    return table


CURVE_COLUMNS = ["iter", "mean_error", "mean_sq_error", "se"]


def kaczmarz(config: ExperimentConfig) -> ResultTable:
    A = parse_system_matrix(config.get("matrix"))
    d, m = A.shape
    b = parse_rhs(config.get("b"), d)
    problem = validated(build_problem, A, b)
    variant = config.get("variant")
    seed = config.master_seed
    workers = config.worker_count
    if variant == "classical":
        law = RowWeighted(A)
        report = rate_classical(A)
    elif variant == "free":
        law = UniformSphere(d)
        report = rate_general(A, law)
    elif variant.startswith("tau:"):
        law = parse_law(variant[len("tau:"):], d)
        report = rate_general(A, law)
    else:
        raise ConfigInvalid("Unknown variant: " + variant)
    if config.get("iters") is None:
        iters = int(np.ceil(ITERATIONS_PER_RATE / report.rho))
    else:
        iters = parse_int(config.get("iters"), "iters", minimum=1)
    x0 = parse_vector(config.get("x0"), "x0", m)
    curve = validated(
        convergence_curve, problem, law, x0, iters,
        parse_int(config.get("replicas"), "replicas", minimum=2),
        derive_seed(seed, STREAM_REPLICAS), workers, None,
        parse_window(config.get("window"))
    )
    table = ResultTable("kaczmarz", CURVE_COLUMNS)
    for row in zip(curve.steps, np.sqrt(curve.mean_sq), curve.mean_sq,
                   curve.se):
        table.append(list(row))
    table.summary = {
        "rho": report.rho,
        "two_rho": 2 * report.rho,
        "asymptotic_rate": asymptotic_decay_rate(law, A.T),
        "fitted_rate": curve.rate,
        "fit_error": curve.fit_error,
        "window": list(curve.window),
        "iters": iters,
        "rate_metadata": report.metadata
    }
    return table


def kaczmarz_figure(config: ExperimentConfig) -> ResultTable:
    a = parse_float(config.get("a"), "a")
    replicas = parse_int(config.get("replicas"), "replicas", minimum=2)
    iters = config.get("iters")
    if iters is not None:
        iters = parse_int(iters, "iters", minimum=1)
    table = ResultTable("kaczmarz-figure", ["variant"] + CURVE_COLUMNS)
    summaries = {}
    for variant in VARIANTS:
        result = validated(
            convergence_experiment, a, variant, replicas, iters,
            derive_seed(config.master_seed, STREAM_VARIANT[variant]),
            config.worker_count
        )
        curve = result.curve
        for row in zip(curve.steps, result.mean_error, curve.mean_sq,
                       curve.se):
            table.append([variant] + list(row))
        summaries[variant] = result.summary()
    classical = summaries["classical"]
    free = summaries["coordinate-free"]
    speed_up = None
    if classical["fitted_rate"] and free["fitted_rate"]:
        speed_up = free["fitted_rate"] / classical["fitted_rate"]
    table.summary = {
        "a": a,
        "variants": summaries,
        "speed_up": speed_up,
        "asymptotic_speed_up": free["asymptotic_rate"]
        / classical["asymptotic_rate"],
        "rate_ratio": free["rho"] / classical["rho"]
    }
    return table


EXPERIMENTS = {
    "sample": sample,
    "couple": couple,
    "rates": rates,
    "table1": sweep,
    "overlap": overlap,
    "mix-bound": mix_bound,
    "kaczmarz": kaczmarz,
    "kaczmarz-figure": kaczmarz_figure
}


def run(config: ExperimentConfig) -> ResultTable:
    """
    Runs the configured experiment and writes its output

    :return: the result table with its provenance block
    """

    if config.values is None:
        config.resolve()
    seed = config.master_seed
    workers = config.worker_count
    logging.info("Running {} with seed {:d} on {:d} workers"
                 .format(config.kind, seed, workers))
    try:
        table = EXPERIMENTS[config.kind](config)
    except NUMERICAL_ERRORS as x:
        raise NumericalFailure(
            "{} failed: {}".format(config.kind, x),
            {"experiment": config.kind, "error": type(x).__name__,
             "message": str(x)}
        ) from x
    table.provenance = provenance(config.echo(), seed, workers)
    write(table, config.get("out"), config.get("format"))
    return table


def main(argv: List[str] = None) -> int:
    init_logging()
    if argv is None:
        argv = sys.argv[1:]
    try:
        config = ExperimentConfig.from_command_line(list(argv), __doc__)
        run(config)
    except SystemExit as x:
        if isinstance(x.code, int):
            return x.code
        return EXIT_CONFIG
    except InvalidInput as x:
        logging.error("Invalid configuration: {}".format(x))
        return EXIT_CONFIG
    except NumericalFailure as x:
        logging.exception("Numerical failure")
        sys.stderr.write(json.dumps(x.payload, sort_keys=True,
                                    default=str) + "\n")
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
