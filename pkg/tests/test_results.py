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

import json
import os

import numpy as np
import pytest
import yaml

from hitandrun import __version__
from hitandrun.results import ResultTable, plain, format_cell, provenance, \
    atomic_write, write, META_SUFFIX


def small_table():
    table = ResultTable("couple", ["step", "mean_sq_gap"],
                        summary={"rate": np.float64(0.5),
                                 "window": (np.int64(2), 8)})
    table.append([0, 1.0])
    table.append([1, np.float64(1 / 3)])
    table.provenance = provenance({"kind": "couple", "steps": "1"}, 7, 2)
    return table


def test_plain():
    value = plain({"a": np.arange(3), "b": (np.float32(0.5), np.bool_(True)),
                   1: None})
    assert value == {"a": [0, 1, 2], "b": [0.5, True], "1": None}
    assert type(value["a"][0]) is int


def test_format_cell():
    assert format_cell(None) == ""
    assert format_cell(np.bool_(False)) == "false"
    assert format_cell(np.int64(12)) == "12"
    assert format_cell(0.1) == "0.10000000000000001"
    assert float(format_cell(1 / 3)) == 1 / 3
    assert format_cell("3d-low") == "3d-low"


def test_csv_and_column():
    table = small_table()
    lines = table.to_csv().splitlines()
    assert lines[0] == "step,mean_sq_gap"
    assert lines[1] == "0,1"
    assert float(lines[2].split(",")[1]) == 1 / 3
    assert table.column("step") == [0, 1]


def test_json_layout():
    content = json.loads(small_table().to_json())
    assert content["rate"] == 0.5
    assert content["window"] == [2, 8]
    assert content["columns"] == ["step", "mean_sq_gap"]
    assert content["rows"][1] == [1, 1 / 3]
    assert content["provenance"]["master_seed"] == 7
    assert content["provenance"]["workers"] == 2
    assert content["provenance"]["version"] == __version__
    assert content["provenance"]["rng"].startswith("numpy.random.PCG64")


def test_write_csv_with_side_car(tmp_path):
    out = str(tmp_path / "sub" / "couple.csv")
    write(small_table(), out)
    assert sorted(os.listdir(tmp_path / "sub")) == \
        ["couple.csv", "couple.csv" + META_SUFFIX]
    with open(out + META_SUFFIX) as f:
        meta = yaml.safe_load(f)
    assert meta["summary"]["rate"] == 0.5
    assert meta["provenance"]["config"] == {"kind": "couple", "steps": "1"}


def test_write_json_and_stdout(tmp_path, capsys):
    out = str(tmp_path / "couple.json")
    write(small_table(), out, "json")
    assert os.listdir(tmp_path) == ["couple.json"]
    write(small_table())
    assert capsys.readouterr().out.startswith("step,mean_sq_gap\n")


def test_atomic_write_replaces(tmp_path):
    path = str(tmp_path / "value.txt")
    atomic_write(path, "first")
    atomic_write(path, "second")
    with open(path) as f:
        assert f.read() == "second"
    assert os.listdir(tmp_path) == ["value.txt"]


def test_ragged_row():
    with pytest.raises(ValueError):
        ResultTable("sample", ["a"], rows=[[1, 2]])
