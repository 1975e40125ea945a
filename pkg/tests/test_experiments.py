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

import csv
import json
import os

import numpy as np
import pytest
import yaml

from hitandrun import experiments, __version__
from hitandrun.config import ExperimentConfig
from hitandrun.errors import NumericalFailure
from hitandrun.experiments import main, run, EXIT_OK, EXIT_CONFIG, \
    EXIT_NUMERICAL
from hitandrun.rates import case_rate, TABLE1_CASES
from hitandrun.results import META_SUFFIX


WORKED_EXAMPLE = ["--rho", "0.16666666666666666", "--eps", "0.1",
                  "--w2", "1.4142135623730951"]


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def test_mixing_bound_worked_example(workdir):
    out = str(workdir / "mix.csv")
    assert main(["mix-bound"] + WORKED_EXAMPLE + ["--out", out]) == EXIT_OK
    rows = read_rows(out)
    assert len(rows) == 1
    assert int(rows[0]["steps_bound"]) == 29
    with open(out + META_SUFFIX) as f:
        meta = yaml.safe_load(f)
    assert meta["summary"]["steps_bound"] == 29
    assert meta["provenance"]["master_seed"] == 0
    assert meta["provenance"]["config"]["kind"] == "mix-bound"
    assert meta["provenance"]["version"] == __version__


def test_run_returns_table(capsys):
    config = ExperimentConfig(None, "mix-bound", rho="0.25", eps="0.01",
                              w2="1", cov="eye:2")
    table = run(config)
    assert table.column("steps_bound") == [22]
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("steps_bound,rho,eps")


def test_configuration_errors(workdir):
    out = str(workdir / "bad.csv")
    assert main(["sample", "--rho", "0.1", "--out", out]) == EXIT_CONFIG
    assert not os.path.exists(out)
    assert main(["simulate", "--out", out]) == EXIT_CONFIG
    assert main(["sample", "--bogus", "1", "--out", out]) == EXIT_CONFIG
    assert main(["sample", "--cov", "diag:1,-1", "--out", out]) \
        == EXIT_CONFIG
    assert main(["rates", "--case", "3d-low", "--out", out]) == EXIT_CONFIG
    assert main(["overlap", "--xt=-2,0", "--out", out]) == EXIT_CONFIG
    assert not os.path.exists(out)


def test_couple_in_ten_dimensions(workdir):
    out = str(workdir / "couple10.csv")
    argv = ["couple", "--cov", "eye:10", "--steps", "3", "--replicas",
            "200", "--estimator", "mc:20000", "--out", out]
    assert main(argv) == EXIT_OK
    with open(out + META_SUFFIX) as f:
        summary = yaml.safe_load(f)["summary"]
    assert summary["asymptotic_rate"] == pytest.approx(-np.log(0.9),
                                                       rel=0.1)


def test_numerical_failure(workdir, monkeypatch, capsys):
    def failing(config):
        raise NumericalFailure("Non-finite position", {"step": 3})

    monkeypatch.setitem(experiments.EXPERIMENTS, "sample", failing)
    out = str(workdir / "failed.csv")
    assert main(["sample", "--out", out]) == EXIT_NUMERICAL
    assert not os.path.exists(out)
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload == {"step": 3}


@pytest.mark.parametrize("error", [
    np.linalg.LinAlgError("Singular matrix"),
    AssertionError("Coupled difference left the projection identity"),
    MemoryError("Unable to allocate 3.73 GiB")
])
def test_library_failures_exit_as_numerical(workdir, monkeypatch, capsys,
                                            error):
    def failing(config):
        raise error

    monkeypatch.setitem(experiments.EXPERIMENTS, "couple", failing)
    out = str(workdir / "failed.csv")
    assert main(["couple", "--out", out]) == EXIT_NUMERICAL
    assert not os.path.exists(out)
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload["experiment"] == "couple"
    assert payload["error"] == type(error).__name__
    assert payload["message"] == str(error)


@pytest.mark.parametrize("argv", [
    ["sample", "--steps", "50", "--seed", "9", "--x0", "1,1"],
    ["sample", "--steps", "20", "--tau", "axes", "--cov", "eye:3"],
    ["couple", "--steps", "4", "--replicas", "500", "--workers", "2"],
    ["kaczmarz", "--matrix", "example:a=0.5", "--variant", "free",
     "--iters", "30", "--replicas", "300"],
    ["rates", "--case", "3d-low", "--kappa", "100"],
    ["rates", "--cov", "diag:3,2,1", "--estimator", "mc:20000"],
    ["rates", "table1", "--kappas", "100,1000"],
    ["table1", "--kappas", "100,1000"],
    ["overlap", "--grid", "r:64,theta:128"],
    ["mix-bound"] + WORKED_EXAMPLE,
    ["kaczmarz-figure", "--a", "0.5", "--iters", "30", "--replicas", "300"]
])
def test_reruns_are_byte_identical(workdir, argv):
    out = str(workdir / "run.csv")
    assert main(argv + ["--out", out]) == EXIT_OK
    first = read_bytes(out), read_bytes(out + META_SUFFIX)
    assert main(argv + ["--out", out]) == EXIT_OK
    second = read_bytes(out), read_bytes(out + META_SUFFIX)
    assert first == second


def test_worker_count_does_not_change_couple(workdir):
    argv = ["couple", "--steps", "4", "--replicas", "3000"]
    one = str(workdir / "one.csv")
    four = str(workdir / "four.csv")
    assert main(argv + ["--workers", "1", "--out", one]) == EXIT_OK
    assert main(argv + ["--workers", "4", "--out", four]) == EXIT_OK
    assert read_bytes(one) == read_bytes(four)


def test_sample_output(workdir):
    out = str(workdir / "chain.csv")
    assert main(["sample", "--steps", "10", "--x0", "3,0",
                 "--out", out]) == EXIT_OK
    rows = read_rows(out)
    assert [int(r["step"]) for r in rows] == list(range(11))
    assert float(rows[0]["x_1"]) == 3.0
    assert float(rows[0]["nat_norm"]) == pytest.approx(1.5)


def test_rates_json(workdir):
    out = str(workdir / "rates.json")
    assert main(["rates", "--case", "bivariate", "--kappa", "4",
                 "--format", "json", "--out", out]) == EXIT_OK
    assert not os.path.exists(out + META_SUFFIX)
    with open(out) as f:
        content = json.load(f)
    row = dict(zip(content["columns"], content["rows"][0]))
    assert row["case"] == "bivariate"
    assert row["rho"] == pytest.approx(case_rate("bivariate", 4.0).rho,
                                       rel=1e-12)
    assert content["provenance"]["config"]["kappa"] == "4"
    assert content["provenance"]["workers"] == 1
    assert content["metadata"]["case"] == "bivariate"


def test_rates_general_sandwich(workdir):
    out = str(workdir / "general.json")
    assert main(["rates", "--format", "json", "--out", out]) == EXIT_OK
    with open(out) as f:
        content = json.load(f)
    rho = content["rows"][0][content["columns"].index("rho")]
    box = content["sandwich"]
    assert box["lower"] <= rho * (1 + 1e-9)
    assert rho <= box["upper"] * (1 + 1e-9)


def test_table1_alias(workdir):
    out = str(workdir / "table1.csv")
    assert main(["rates", "table1", "--kappas", "100,1000",
                 "--out", out]) == EXIT_OK
    rows = read_rows(out)
    assert len(rows) == 2 * len(TABLE1_CASES)
    assert {r["case"] for r in rows} == set(TABLE1_CASES)
    slopes = {r["case"]: float(r["slope"]) for r in rows}
    assert slopes["bivariate"] == pytest.approx(-0.5, abs=0.06)
    assert slopes["4d-low"] == pytest.approx(-1.0, abs=0.1)


def test_overlap_output(workdir):
    out = str(workdir / "overlap.json")
    assert main(["overlap", "--grid", "r:256,theta:512", "--format", "json",
                 "--out", out]) == EXIT_OK
    with open(out) as f:
        content = json.load(f)
    assert 0 < content["tv_quadrature"] < 1
    assert content["tv_bound_clamped"] == min(1.0, content["tv_bound_raw"])
    assert content["constants"]["c1"] > 0


def test_kaczmarz_output(workdir):
    out = str(workdir / "kaczmarz.json")
    assert main(["kaczmarz", "--matrix", "example:a=0.5", "--iters", "40",
                 "--replicas", "500", "--format", "json",
                 "--out", out]) == EXIT_OK
    with open(out) as f:
        content = json.load(f)
    assert content["columns"] == ["iter", "mean_error", "mean_sq_error",
                                  "se"]
    assert content["rows"][0][1] == pytest.approx(10.0)
    assert content["two_rho"] == pytest.approx(2 * content["rho"])
    assert content["iters"] == 40
    mean_sq = np.array([row[2] for row in content["rows"]])
    assert np.all(np.diff(mean_sq) <= 1e-12)


def test_kaczmarz_figure_output(workdir):
    out = str(workdir / "figure.json")
    assert main(["kaczmarz-figure", "--a", "0.5", "--iters", "40",
                 "--replicas", "500", "--format", "json",
                 "--out", out]) == EXIT_OK
    with open(out) as f:
        content = json.load(f)
    variants = {row[0] for row in content["rows"]}
    assert variants == {"classical", "coordinate-free"}
    assert content["asymptotic_speed_up"] > 1
    assert set(content["variants"]) == variants
