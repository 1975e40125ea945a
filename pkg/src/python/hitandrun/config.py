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
Configuration of experiment runs.

An experiment is selected by its kind (the first command line token)
and parameterized by keys that come, in order of precedence, from
command line flags, the kind's section of a YAML configuration file,
the ``defaults`` section of that file and the built-in defaults of
the kind. Sample configuration file::

    defaults:
      seed: 20240101
      workers: 4
    couple:
      cov: diag:4,1
      replicas: 100000
    kaczmarz-figure:
      a: 0.01
      replicas: 1000

Values are kept as text until the experiment parses them with the
functions of this module.
"""

import argparse
import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml
from nsaph_utils.utils.context import Context, Argument, Cardinality
from nsaph_utils.utils.io_utils import fopen

from hitandrun.directions import DirectionLaw, Estimator, UniformSphere, \
    CoordinateAxes, RowWeighted, FiniteSupport
from hitandrun.errors import ConfigInvalid, InvalidInput
from hitandrun.gaussian_model import CovarianceSpec, build_covariance, \
    identity
from hitandrun.kaczmarz import example_matrix


KINDS = ["sample", "couple", "rates", "table1", "overlap", "mix-bound",
         "kaczmarz", "kaczmarz-figure"]

GLOBAL_KEYS = ["seed", "workers", "out", "format"]

KIND_KEYS = {
    "sample": ["cov", "tau", "x0", "steps"],
    "couple": ["cov", "tau", "a0", "b0", "steps", "replicas", "window",
               "estimator"],
    "rates": ["case", "kappa", "d1", "d2", "cov", "tau", "estimator"],
    "table1": ["kappas"],
    "overlap": ["cov", "x", "xt", "eps", "grid"],
    "mix-bound": ["cov", "rho", "eps", "w2", "c", "cprime"],
    "kaczmarz": ["matrix", "b", "variant", "x0", "iters", "replicas",
                 "window"],
    "kaczmarz-figure": ["a", "replicas", "iters"]
}

DEFAULTS = {
    "seed": "0",
    "workers": "1",
    "format": "csv",
    "sample": {"cov": "diag:4,1", "tau": "uniform", "x0": "target",
               "steps": "1000"},
    "couple": {"cov": "diag:4,1", "tau": "uniform", "steps": "8",
               "replicas": "100000", "estimator": "auto"},
    "rates": {"case": "general", "cov": "diag:4,1", "tau": "uniform",
              "estimator": "auto"},
    "table1": {"kappas": "100,1000,10000,100000"},
    "overlap": {"cov": "diag:4,1", "x": "-2,0", "xt": "0,1", "eps": "0.1",
                "grid": "r:1024,theta:2048"},
    "mix-bound": {"cov": "diag:4,1", "eps": "0.1", "c": "1",
                  "cprime": "1"},
    "kaczmarz": {"matrix": "example:a=0.1", "b": "zero",
                 "variant": "classical", "x0": "-10,0",
                 "replicas": "10000"},
    "kaczmarz-figure": {"a": "0.1", "replicas": "10000"}
}

ALIASES = {("rates", "table1"): "table1"}

ALL_KEYS = ["config"] + GLOBAL_KEYS + sorted(
    {key for keys in KIND_KEYS.values() for key in keys}
)


class ExperimentConfig(Context):
    """
    Configuration object of an experiment run: Hit-and-Run sampling,
    coupling, contraction rates, overlap and mixing bounds, Kaczmarz
    """

    _config = Argument("config",
            help = "Path to a YAML file with a 'defaults' section "
                   + "and one section per experiment kind",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _seed = Argument("seed",
            help = "Master seed, a 64-bit integer",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _workers = Argument("workers",
            help = "Number of worker threads",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _out = Argument("out",
            help = "Output file, standard output if omitted",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _format = Argument("format",
            help = "Output format: csv or json",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _cov = Argument("cov",
            help = "Covariance: diag:<v1,...,vd>, eye:<d> or "
                   + "file:<path.csv>",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _tau = Argument("tau",
            help = "Direction law: uniform, axes, axes:<w1,...,wd>, "
                   + "rows:<matrix.csv> or support:<vectors.csv>",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _x0 = Argument("x0",
            help = "Starting point as a comma separated list; "
                   + "'target' draws it from the target",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _steps = Argument("steps",
            help = "Number of chain steps",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _a0 = Argument("a0",
            help = "Start of the first coupled chain, "
                   + "C^{1/2} e_1 if omitted",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _b0 = Argument("b0",
            help = "Start of the second coupled chain, 0 if omitted",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _replicas = Argument("replicas",
            help = "Number of independent replicas",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _window = Argument("window",
            help = "First and last step of the decay fit: <lo>,<hi>",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _estimator = Argument("estimator",
            help = "auto, exact, quadrature[:n], integral or mc[:n]",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _case = Argument("case",
            help = "bivariate, 3d-low, 3d-high, 4d-low, two-scale "
                   + "or general",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _kappa = Argument("kappa",
            help = "Condition number of the benchmark case",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _d1 = Argument("d1",
            help = "Number of directions with variance kappa "
                   + "(two-scale case)",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _d2 = Argument("d2",
            help = "Number of directions with variance 1 "
                   + "(two-scale case)",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _kappas = Argument("kappas",
            help = "Comma separated condition numbers of the sweep",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _x = Argument("x",
            help = "First starting point of the overlap comparison",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _xt = Argument("xt",
            help = "Second starting point of the overlap comparison",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _eps = Argument("eps",
            help = "Regularization parameter (overlap) or target "
                   + "accuracy (mix-bound)",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _grid = Argument("grid",
            help = "Polar grid of the TV quadrature: r:<n>,theta:<n>",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _rho = Argument("rho",
            help = "Contraction rate, computed for the uniform law "
                   + "if omitted",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _w2 = Argument("w2",
            help = "Initial Wasserstein distance, sqrt(d) "
                   + "(start at the origin) if omitted",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _c = Argument("c",
            help = "Absolute constant in front of the mixing bound",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _cprime = Argument("cprime",
            help = "Absolute constant inside the logarithm",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _matrix = Argument("matrix",
            help = "System matrix: example:a=<a> or a CSV file",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _b = Argument("b",
            help = "Right hand side: zero or a CSV file",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _variant = Argument("variant",
            help = "classical, free or tau:<direction law>",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _iters = Argument("iters",
            help = "Number of iterations, about 6/rho if omitted",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )
    _a = Argument("a",
            help = "Parameter of the matrix [[0, 1], [a, 1]]",
            type = str, default = None, required = False,
            cardinality = Cardinality.single
        )

    def __init__(self, doc = None, kind: str = None, **values):
        self.kind = kind
        ''' Experiment kind '''
        for key in ALL_KEYS:
            setattr(self, key, values.pop(key, None))
        if values:
            raise ConfigInvalid("Unknown configuration keys: "
                                + ", ".join(sorted(values)))
        self.values = None
        ''' Resolved values, filled by resolve() '''
        self.usage = doc
        ''' Description shown by --help '''
        super().__init__(ExperimentConfig, doc, include_default = False)

    @classmethod
    def from_command_line(cls, argv: List[str], doc: str = None):
        """
        Builds the configuration from command line tokens: the kind
        followed by flags
        """

        kind, rest = split_kind(argv)
        config = cls(doc, kind)
        config.parse_tokens(rest)
        return config.resolve()

    def parser(self) -> argparse.ArgumentParser:
        """
        Parser with one optional flag per declared argument. Errors
        and --help exit through SystemExit like any argparse tool.
        """

        parser = argparse.ArgumentParser(
            prog="hitandrun {}".format(self.kind or "<kind>"),
            description=self.usage, allow_abbrev=False
        )
        for key in ALL_KEYS:
            argument = type(self).__dict__.get("_" + key)
            parser.add_argument("--" + key, dest=key, type=str,
                                default=None,
                                help=getattr(argument, "help", None))
        return parser

    def parse_tokens(self, tokens: List[str]) -> "ExperimentConfig":
        """Sets the arguments given as flags in ``tokens``"""
        args = self.parser().parse_args(list(tokens))
        for key in ALL_KEYS:
            value = getattr(args, key)
            if value is not None:
                setattr(self, key, value)
        return self

    def explicit(self) -> Dict[str, str]:
        """Keys set on the command line or by the caller"""
        result = {}
        for key in ALL_KEYS:
            value = getattr(self, key, None)
            if value is not None and key != "config":
                result[key] = as_text(value, key)
        return result

    def resolve(self) -> "ExperimentConfig":
        """
        Merges built-in defaults, the configuration file and explicit
        values, and validates the keys against the kind
        """

        if self.kind not in KINDS:
            raise ConfigInvalid("Unknown experiment kind: {}"
                                .format(self.kind))
        allowed = set(GLOBAL_KEYS + KIND_KEYS[self.kind])
        values = {key: DEFAULTS[key] for key in GLOBAL_KEYS
                  if key in DEFAULTS}
        values.update(DEFAULTS[self.kind])
        if self.config:
            defaults, section = load_file(self.config, self.kind)
            check_keys(defaults, allowed | set(ALL_KEYS),
                       "'defaults' section of " + self.config)
            values.update({k: v for k, v in defaults.items()
                           if k in allowed})
            check_keys(section, allowed,
                       "'{}' section of {}".format(self.kind, self.config))
            values.update(section)
        explicit = self.explicit()
        check_keys(explicit, allowed, "command line")
        values.update(explicit)
        if values["format"] not in ("csv", "json"):
            raise ConfigInvalid("Unknown output format: " + values["format"])
        self.values = values
        logging.info("Experiment {}: {}".format(self.kind, values))
        return self

    def get(self, key: str, default = None) -> Optional[str]:
        value = self.values.get(key)
        return default if value is None else value

    def echo(self) -> Dict[str, str]:
        """Resolved configuration, sufficient to rerun the experiment"""
        echo = {"kind": self.kind}
        echo.update({k: v for k, v in self.values.items() if v is not None})
        return echo

    @property
    def master_seed(self) -> int:
        return parse_int(self.values["seed"], "seed", minimum=0)

    @property
    def worker_count(self) -> int:
        return parse_int(self.values["workers"], "workers", minimum=1)


def split_kind(argv: List[str]) -> Tuple[str, List[str]]:
    if not argv or argv[0].startswith("-"):
        raise ConfigInvalid("Experiment kind is missing, one of: "
                            + ", ".join(KINDS))
    kind = argv[0]
    rest = list(argv[1:])
    if rest and (kind, rest[0]) in ALIASES:
        kind = ALIASES[(kind, rest.pop(0))]
    if kind not in KINDS:
        raise ConfigInvalid("Unknown experiment kind: " + kind)
    return kind, rest


def load_file(path: str, kind: str) -> Tuple[Dict, Dict]:
    if not os.path.isfile(path):
        raise ConfigInvalid("Configuration file not found: " + path)
    with fopen(path, "rt") as f:
        try:
            content = yaml.safe_load(f)
        except yaml.YAMLError as x:
            raise ConfigInvalid("Malformed configuration file {}: {}"
                                .format(path, x))
    if content is None:
        content = {}
    if not isinstance(content, dict):
        raise ConfigInvalid("Configuration file must be a mapping: " + path)
    unknown = [k for k in content if k != "defaults" and k not in KINDS]
    if unknown:
        raise ConfigInvalid("Unknown sections in {}: {}"
                            .format(path, ", ".join(map(str, unknown))))
    sections = []
    for name in ("defaults", kind):
        section = content.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigInvalid("Section '{}' must be a mapping".format(name))
        sections.append({str(k): as_text(v, str(k))
                         for k, v in section.items()})
    return sections[0], sections[1]


def check_keys(values: Dict, allowed, where: str):
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigInvalid("Keys not applicable in {}: {}"
                            .format(where, ", ".join(unknown)))


def as_text(value, key: str) -> str:
    """Normalizes YAML scalars and lists to the command line syntax"""
    if isinstance(value, bool) or isinstance(value, dict):
        raise ConfigInvalid("Bad value for '{}': {}".format(key, value))
    if isinstance(value, (list, tuple)):
        return ",".join(as_text(v, key) for v in value)
    if isinstance(value, float):
        return "{:.17g}".format(value)
    return str(value).strip()


def parse_int(text: str, key: str, minimum: int = None) -> int:
    try:
        value = int(str(text))
    except ValueError:
        value = parse_float(text, key)
        if value != int(value):
            raise ConfigInvalid("'{}' must be an integer, got {}"
                                .format(key, text))
        value = int(value)
    except TypeError:
        raise ConfigInvalid("'{}' must be an integer, got {}"
                            .format(key, text))
    if minimum is not None and value < minimum:
        raise ConfigInvalid("'{}' must be >= {:d}, got {:d}"
                            .format(key, minimum, value))
    return value


def parse_float(text: str, key: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ConfigInvalid("'{}' must be a number, got {}"
                            .format(key, text))
    if not np.isfinite(value):
        raise ConfigInvalid("'{}' must be finite, got {}".format(key, text))
    return value


def parse_floats(text: str, key: str) -> List[float]:
    items = [item for item in str(text).split(',') if item.strip()]
    if not items:
        raise ConfigInvalid("'{}' must be a comma separated list"
                            .format(key))
    return [parse_float(item, key) for item in items]


def parse_vector(text: str, key: str, d: int = None) -> np.ndarray:
    vector = np.array(parse_floats(text, key))
    if d is not None and vector.shape[0] != d:
        raise ConfigInvalid("'{}' must have {:d} entries, got {:d}"
                            .format(key, d, vector.shape[0]))
    return vector


def read_matrix(path: str) -> np.ndarray:
    """Reads a dense matrix from a comma separated file"""
    if not os.path.isfile(path):
        raise ConfigInvalid("File not found: " + path)
    with fopen(path, "rt") as f:
        try:
            return np.loadtxt(f, delimiter=",", ndmin=2)
        except ValueError as x:
            raise ConfigInvalid("Malformed matrix file {}: {}"
                                .format(path, x))


def validated(factory, *args):
    try:
        return factory(*args)
    except ConfigInvalid:
        raise
    except InvalidInput as x:
        raise ConfigInvalid(str(x))


def parse_covariance(text: str) -> CovarianceSpec:
    kind, _, arg = str(text).partition(':')
    if kind == "diag":
        return validated(build_covariance, parse_floats(arg, "cov"))
    if kind == "eye":
        return validated(identity, parse_int(arg, "cov", minimum=1))
    if kind == "file":
        return validated(build_covariance, read_matrix(arg))
    raise ConfigInvalid("Unknown covariance syntax: " + text)


def parse_law(text: str, d: int) -> DirectionLaw:
    kind, _, arg = str(text).partition(':')
    if kind == "uniform" and not arg:
        return UniformSphere(d)
    if kind == "axes":
        weights = parse_floats(arg, "tau") if arg else None
        if weights is not None and len(weights) != d:
            raise ConfigInvalid("Axis weights must have {:d} entries"
                                .format(d))
        return validated(CoordinateAxes, d, weights)
    if kind == "rows" and arg:
        law = validated(RowWeighted, read_matrix(arg))
    elif kind == "support" and arg:
        table = read_matrix(arg)
        if table.shape[1] == d + 1:
            law = validated(FiniteSupport, table[:, :d], table[:, d])
        else:
            law = validated(FiniteSupport, table)
    else:
        raise ConfigInvalid("Unknown direction law syntax: " + text)
    if law.d != d:
        raise ConfigInvalid("Direction law lives in dimension {:d}, "
                            "expected {:d}".format(law.d, d))
    return law


def parse_estimator(text: str, seed: int, workers: int) -> Estimator:
    return validated(Estimator.parse, text, seed, workers)


def parse_grid(text: str) -> Tuple[int, int]:
    """r:<n>,theta:<n> -> (radial nodes, angular nodes)"""
    nodes = {}
    for item in str(text).split(','):
        name, _, value = item.partition(':')
        nodes[name.strip()] = parse_int(value, "grid", minimum=2)
    if set(nodes) != {"r", "theta"}:
        raise ConfigInvalid("Grid must be r:<n>,theta:<n>, got " + text)
    return nodes["r"], nodes["theta"]


def parse_window(text: Optional[str]) -> Optional[Tuple[int, int]]:
    if text is None:
        return None
    values = [parse_int(v, "window", minimum=0) for v in str(text).split(',')]
    if len(values) != 2 or values[0] >= values[1]:
        raise ConfigInvalid("Window must be <lo>,<hi> with lo < hi")
    return values[0], values[1]


def parse_example(text: str) -> Optional[float]:
    """a from example:a=<a>, None for other matrix specifications"""
    if not str(text).startswith("example:"):
        return None
    name, _, value = str(text)[len("example:"):].partition('=')
    if name.strip() != "a":
        raise ConfigInvalid("Example matrix syntax is example:a=<a>")
    return parse_float(value, "matrix")


def parse_system_matrix(text: str) -> np.ndarray:
    a = parse_example(text)
    if a is not None:
        return validated(example_matrix, a)
    path = str(text)
    if path.startswith("file:"):
        path = path[len("file:"):]
    return read_matrix(path)


def parse_rhs(text: str, d: int) -> np.ndarray:
    if text == "zero":
        return np.zeros(d)
    path = str(text)
    if path.startswith("file:"):
        path = path[len("file:"):]
    b = read_matrix(path).reshape(-1)
    if b.shape[0] != d:
        raise ConfigInvalid("Right hand side must have {:d} entries, "
                            "got {:d}".format(d, b.shape[0]))
    return b
