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
Result tables of experiment runs and their writers.

CSV outputs carry the data rows only; their provenance and run
summaries go to a YAML side-car ``<out>.meta.yaml``. JSON outputs
embed both. Nothing time dependent is written, so reruns with the
same configuration, seed and worker count are byte-identical.
"""

import csv
import io
import json
import logging
import os
import sys
import tempfile
from typing import Dict, List, Sequence

import numpy as np
import yaml

from hitandrun import __version__
from hitandrun.seeding import rng_description


META_SUFFIX = ".meta.yaml"


def plain(value):
    """Converts numpy scalars and arrays to plain Python values"""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def format_cell(value) -> str:
    value = plain(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "{:.17g}".format(value)
    return str(value)


class ResultTable:
    """
    Rows of an experiment with a fixed column schema

    :ivar kind: experiment kind
    :ivar columns: column names
    :ivar rows: list of rows, one value per column
    :ivar summary: scalar results (rates, fits, bounds)
    :ivar provenance: configuration echo, seed, workers, version, RNG
    """

    def __init__(self, kind: str, columns: Sequence[str],
                 rows: List[Sequence] = None, summary: Dict = None):
        self.kind = kind
        self.columns = list(columns)
        self.rows = []
        self.summary = summary or {}
        self.provenance = {}
        for row in rows or []:
            self.append(row)

    def append(self, row: Sequence):
        if len(row) != len(self.columns):
            raise ValueError("Row has {:d} values, table has {:d} columns"
                             .format(len(row), len(self.columns)))
        self.rows.append(list(row))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(v) for v in row])
        return buffer.getvalue()

    def metadata(self) -> Dict:
        return plain({"provenance": self.provenance,
                      "summary": self.summary})

    def to_meta_yaml(self) -> str:
        return yaml.safe_dump(self.metadata(), default_flow_style=False,
                              sort_keys=True)

    def to_json(self) -> str:
        content = dict(plain(self.summary))
        content["columns"] = self.columns
        content["rows"] = plain(self.rows)
        content["provenance"] = plain(self.provenance)
        return json.dumps(content, indent=2, sort_keys=True) + "\n"


def provenance(config_echo: Dict, master_seed: int, workers: int) -> Dict:
    return {
        "config": dict(config_echo),
        "master_seed": master_seed,
        "workers": workers,
        "version": __version__,
        "rng": rng_description()
    }


def atomic_write(path: str, text: str):
    """Writes a temporary file next to ``path`` and renames it"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write(table: ResultTable, out: str = None, fmt: str = "csv"):
    """
    Writes the table to ``out`` or to standard output

    :param fmt: csv (plus YAML side-car) or json
    """

    if fmt == "json":
        text = table.to_json()
    else:
        text = table.to_csv()
    if out is None:
        sys.stdout.write(text)
        return
    atomic_write(out, text)
    if fmt != "json":
        atomic_write(out + META_SUFFIX, table.to_meta_yaml())
    logging.info("Written {:d} rows to {}".format(len(table.rows), out))
