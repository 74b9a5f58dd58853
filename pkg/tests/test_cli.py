import csv
import hashlib
import json
import math

import pytest

from sievelab import distributions as dist
from sievelab.cli import (
    EXIT_CONFIG,
    EXIT_FAIL,
    EXIT_OK,
    EXIT_UNSUPPORTED,
    ConfigError,
    ExperimentConfig,
    main,
    parse_count,
    parse_law,
    parse_real,
    read_config_file,
)


def _md5(path):
    return hashlib.md5(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------- parsing


@pytest.mark.parametrize(
    "text,expected",
    [
        ("100", 100),
        ("1e12", 10**12),
        ("10**15", 10**15),
        ("exp(30)", round(math.exp(30))),
        ("1000000000000000000000", 10**21),
    ],
)
def test_parse_count(text, expected):
    assert parse_count(text) == expected


@pytest.mark.parametrize("text", ["1.5", "-3", "abc", "__import__('os')"])
def test_parse_count_rejects(text):
    with pytest.raises(ConfigError):
        parse_count(text)


def test_parse_real():
    assert parse_real("1/3") == pytest.approx(1 / 3)
    assert parse_real("2*pi") == pytest.approx(2 * math.pi)
    with pytest.raises(ConfigError):
        parse_real("open('x')")


def test_parse_law_forms():
    assert parse_law("Uniform01") == dist.Uniform01()
    assert parse_law("Beta(2, 3)") == dist.Beta(2, 3)
    assert parse_law("TwoSidedLogPareto(p=1/3, theta=0.5)") == dist.TwoSidedLogPareto(1 / 3, 0.5, 0.5)
    assert parse_law("TwoSidedLogPareto(p=0.5, θ0=1.5, θ1=0.2, xm=1)") == dist.TwoSidedLogPareto(0.5, 1.5, 0.2)
    assert parse_law("RightLogPareto(β=0.5)") == dist.RightLogPareto(0.5)
    shock = parse_law("CommonShock(IndependentExpPareto(1, 0.5), 2)")
    assert shock == dist.CommonShock(dist.IndependentExpPareto(1, 0.5), 2.0)


@pytest.mark.parametrize("text", ["Nope(1)", "Beta(-1, 2)", "Beta(2", "os.system('x')", "Beta(a=__import__('os'))"])
def test_parse_law_rejects(text):
    with pytest.raises(ConfigError):
        parse_law(text)


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nlaw = Uniform01\nn = 100   # trailing\ntrials = 200\nplot-data = x.csv\n")
    values = read_config_file(path)
    assert values == {"law": "Uniform01", "n": "100", "trials": "200", "plot_data": "x.csv"}
    path.write_text("lwa = Uniform01\n")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_config_hash_ignores_output_settings():
    a = ExperimentConfig(law="Uniform01", n="100", threads=1, out="a.csv")
    b = ExperimentConfig(law="Uniform01", n="100", threads=8, out="b.csv")
    c = ExperimentConfig(law="Uniform01", n="101")
    assert a.config_hash() == b.config_hash() != c.config_hash()


# ---------------------------------------------------------------- commands


def test_simulate_is_deterministic_across_threads(tmp_path):
    outs = []
    for threads in (1, 3):
        out = tmp_path / f"run{threads}.csv"
        args = ["simulate", "--law", "Beta(2, 3)", "--n", "1000", "--trials", "40", "--seed", "7"]
        assert main(args + ["--threads", str(threads), "--out", str(out)]) == EXIT_OK
        outs.append(out)
    assert _md5(outs[0]) == _md5(outs[1])
    rows = list(csv.DictReader(outs[0].open()))
    assert len(rows) == 40 and [int(r["trial_index"]) for r in rows] == list(range(40))
    for r in rows:
        assert int(r["L"]) == int(r["M"]) - int(r["K"])


def test_simulate_seed_changes_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["simulate", "--law", "Uniform01", "--n", "100", "--trials", "50"]
    main(base + ["--seed", "1", "--out", str(a)])
    main(base + ["--seed", "2", "--out", str(b)])
    assert _md5(a) != _md5(b)


def test_simulate_config_and_flags(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("law = Uniform01\nn = 50\ntrials = 10\n")
    out = tmp_path / "o.csv"
    assert main(["simulate", "--config", str(cfg), "--trials", "12", "--out", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 13


def test_moments_command(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["moments", "--a", "0.5", "--k", "3", "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert [float(r["moment"]) for r in rows] == [1.0, 3.0, 13.0]


def test_symmetric_limit_check_report(tmp_path):
    out, plot = tmp_path / "r.json", tmp_path / "p.csv"
    args = ["limit-check", "--law", "Uniform01", "--n", "100", "--trials", "2000", "--out", str(out), "--plot-data", str(plot)]
    assert main(args) == EXIT_OK
    rep = json.loads(out.read_text())
    for key in ("config_hash", "regime", "centering", "norming", "tests", "runtime_seconds", "version", "verdict"):
        assert key in rep
    assert rep["tests"][0]["pass"] is True
    assert plot.read_text().startswith("series,x,y\n")


def test_limit_check_failure_exit(tmp_path):
    # an absurd threshold forces a failing verdict
    out = tmp_path / "r.json"
    args = ["limit-check", "--law", "Uniform01", "--n", "100", "--trials", "500", "--threshold", "0.9999", "--out", str(out)]
    assert main(args) == EXIT_FAIL
    assert json.loads(out.read_text())["verdict"] is False


@pytest.mark.parametrize(
    "args",
    [
        ["limit-check", "--law", "TwoSidedLogPareto(p=0.5, theta0=1.5, theta1=1/3)", "--n", "1000"],
        ["limit-check", "--law", "Beta(2, 3)", "--n", "1000"],
        ["shotnoise", "--pair", "IndependentParetoPareto(1.5, 1/3)", "--t", "100"],
    ],
)
def test_unsupported_exit(args, tmp_path):
    assert main(args + ["--out", str(tmp_path / "r.json"), "--trials", "10"]) == EXIT_UNSUPPORTED


@pytest.mark.parametrize(
    "args",
    [
        ["simulate", "--law", "Nope", "--n", "10"],
        ["simulate", "--law", "Uniform01"],
        ["simulate", "--law", "Uniform01", "--n", "10", "--trials", "0"],
        ["simulate", "--law", "Uniform01", "--n", "1e9", "--simulator", "direct"],
        ["moments", "--a", "0", "--k", "3"],
        ["shotnoise", "--pair", "Uniform01", "--t", "10"],
    ],
)
def test_config_errors_exit(args):
    assert main(args) == EXIT_CONFIG


def test_unknown_config_key_exit(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("law = Uniform01\nballs = 10\n")
    assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG


def test_shotnoise_report(tmp_path):
    out = tmp_path / "s.json"
    args = ["shotnoise", "--pair", "IndependentExpPareto(1, 0.5)", "--t", "200", "--trials", "300", "--out", str(out)]
    code = main(args)
    rep = json.loads(out.read_text())
    assert rep["regime"] == "Replaceable" and rep["configured_verdict"] == "replaceable"
    assert code == (EXIT_OK if rep["verdict"] else EXIT_FAIL)
    assert [t["name"] for t in rep["tests"]] == ["ks_normal_random_centering", "ks_normal_deterministic_centering"]
