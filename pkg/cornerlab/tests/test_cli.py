import math

import pytest

from app.config import get_config, parse_experiment_config
from app.errors import ConfigurationError
from app.main import EXIT_CONFIG, EXIT_OK, main
from app.schemas import ResultRow
from app.services.acceptance import (
    check_constants,
    check_gamma,
    gamma_phase_series,
    perturbation_rows,
    run_suite,
)
from app.services.results_service import (
    RESULT_FIELDS,
    format_float,
    read_acceptance,
    read_results,
    write_results,
)

ROOTS = """
[run]
mode = roots

[corner]
stokes = true
"""

EMPTY_HALFLINE = """
[run]
mode = halfline

[corner]
stokes = true

[ladder]
k_min = 3
k_max = 2
"""

INTERVAL = """
[run]
mode = interval

[corner]
stokes = true

[ladder]
k_min = 1
k_max = 3
delta = 0.6
"""


def write_config(tmp_path, text, name="experiment.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def run_cli(tmp_path, text, command="run", out="out", extra=()):
    config = write_config(tmp_path, text)
    out_dir = tmp_path / out
    status = main([command, "--config", config, "--out", str(out_dir), *extra])
    return status, out_dir


# ---- config parsing ----

def test_defaults_fill_missing_sections():
    config = parse_experiment_config(ROOTS)
    assert config.run.mode == "roots"
    assert config.corner.stokes
    assert config.ladder.k_range == (0, 3)
    assert config.tolerances.oracle_rel == 1e-3


def test_criteria_list_is_split():
    config = parse_experiment_config("[run]\nmode = roots\ncriteria = gamma, constants\n")
    assert config.run.criteria == ("gamma", "constants")


@pytest.mark.parametrize("text", [
    "[run]\nmode = roots\nspeed = 3\n",
    "[extras]\nkey = 1\n",
    "[run]\nmode = spectra\n",
    "[run]\ncriteria = everything\n",
    "[corner]\nstokes = true\nrho0 = 0.5\n",
    "[corner]\nalpha_star = 1.0\n",
    "[corner]\nstokes = true\ngamma = 3.5\n",
    "[mesh]\nn_angular = 7\n",
    "[mesh]\nstraight_cutoff = 1.5\n",
    "[ladder]\ndelta = -0.1\n",
    "not an ini file",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigurationError):
        parse_experiment_config(text)


def test_environment_defaults(monkeypatch):
    for name in ("LADDER_THREADS", "LADDER_LOG_LEVEL", "LADDER_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    env = get_config()
    assert env == {"LADDER_THREADS": 1, "LADDER_LOG_LEVEL": "INFO", "LADDER_OUTPUT_DIR": "results"}


def test_invalid_thread_variable(monkeypatch):
    monkeypatch.setenv("LADDER_THREADS", "zero")
    with pytest.raises(ConfigurationError):
        get_config()


# ---- CSV format ----

def test_floats_use_shortest_round_trip_form():
    assert format_float(0.1) == "0.1"
    assert format_float(1e-300) == "1e-300"
    assert float(format_float(math.pi)) == math.pi
    assert format_float(math.nan) == "nan"


def test_results_csv_round_trip(tmp_path):
    rows = [
        ResultRow(mode="roots", quantity="kappa", prediction=1.07, computed=1.0704, residual=2.2e-16),
        ResultRow(mode="halfline", k=-2, quantity="tau", prediction=0.1, computed=0.30000000000000004,
                  residual=-1e-5),
    ]
    path = write_results(tmp_path / "results.csv", rows)
    assert read_results(path) == rows


def test_nan_prediction_survives_round_trip(tmp_path):
    row = ResultRow(mode="roots", k=2, quantity="mu", prediction=math.nan, computed=4.5, residual=0.0)
    parsed = read_results(write_results(tmp_path / "results.csv", [row]))[0]
    assert math.isnan(parsed.prediction)
    assert parsed.k == 2 and parsed.computed == 4.5


def test_foreign_csv_rejected(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        read_results(path)


# ---- run ----

def test_roots_for_stokes_corner(tmp_path):
    status, out = run_cli(tmp_path, ROOTS)
    assert status == EXIT_OK
    rows = read_results(out / "results.csv")
    quantities = [row.quantity for row in rows]
    assert quantities[:2] == ["kappa", "gamma_kappa"]
    assert [row.k for row in rows if row.quantity == "mu"] == [1, 2, 3, 4]
    kappa = rows[0]
    assert 1.065 <= kappa.computed <= 1.075
    assert abs(kappa.residual) <= 1e-12
    assert all(abs(row.residual) <= 1e-10 for row in rows if row.quantity == "mu")
    tau1 = next(row for row in rows if row.quantity == "tau1")
    assert 1.75 <= tau1.computed <= 1.85
    assert (out / "summary.txt").read_text(encoding="utf-8").startswith("cornerlab run: mode roots")


def test_runs_are_byte_identical(tmp_path):
    _, first = run_cli(tmp_path, ROOTS, out="first")
    _, second = run_cli(tmp_path, ROOTS, out="second")
    assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()


def test_empty_halfline_range_gives_header_only(tmp_path):
    status, out = run_cli(tmp_path, EMPTY_HALFLINE)
    assert status == EXIT_OK
    assert (out / "results.csv").read_text(encoding="utf-8") == ",".join(RESULT_FIELDS) + "\n"
    assert read_results(out / "results.csv") == []


def test_interval_run_passes_its_thresholds(tmp_path):
    status, out = run_cli(tmp_path, INTERVAL, extra=("--threads", "2"))
    assert status == EXIT_OK
    rows = read_results(out / "results.csv")
    assert [row.k for row in rows if row.quantity == "tau_hat"] == [1, 2, 3]
    for row in rows:
        if row.quantity == "tau_fd":
            assert abs(row.residual) <= 1e-3
    assert all(row.passed for row in read_acceptance(out / "acceptance.csv"))
    assert (out / "interval_mode.dat").exists()


def test_plot_data_can_be_disabled(tmp_path):
    status, out = run_cli(tmp_path, INTERVAL + "\n[output]\nplot_data = false\n")
    assert status == EXIT_OK
    assert not list(out.glob("*.dat"))


def test_unknown_key_exits_with_config_status(tmp_path):
    status, _ = run_cli(tmp_path, ROOTS + "colour = blue\n")
    assert status == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.ini")]) == EXIT_CONFIG


def test_zero_threads_rejected(tmp_path):
    status, _ = run_cli(tmp_path, ROOTS, extra=("--threads", "0"))
    assert status == EXIT_CONFIG


def test_mode_needing_stokes_corner(tmp_path):
    text = "[run]\nmode = waterwave\n\n[corner]\nalpha_star = 1.0\nrho0 = 0.8\n"
    status, _ = run_cli(tmp_path, text)
    assert status == EXIT_CONFIG


def test_numerical_failure_exits_with_status_one(tmp_path):
    text = INTERVAL.replace("delta = 0.6", "delta = 0.1")
    status, _ = run_cli(tmp_path, text)
    assert status == 1


# ---- verify ----

def test_empty_suite_is_a_no_op(tmp_path):
    status, out = run_cli(tmp_path, ROOTS, command="verify")
    assert status == EXIT_OK
    assert read_acceptance(out / "acceptance.csv") == []


def test_verify_constants_and_gamma(tmp_path, capsys):
    status, out = run_cli(tmp_path, ROOTS.replace("mode = roots", "mode = roots\ncriteria = constants, gamma"),
                          command="verify")
    assert status == EXIT_OK
    rows = read_acceptance(out / "acceptance.csv")
    assert [row.criterion for row in rows] == [
        "constants.kappa", "constants.tau1", "constants.mu1", "gamma.modulus", "gamma.phase",
    ]
    assert "PASS" in capsys.readouterr().out


def test_failed_threshold_exits_with_status_one(tmp_path):
    text = ROOTS.replace("mode = roots", "mode = roots\ncriteria = gamma") + "\n[tolerances]\ngamma_phase = 1e-30\n"
    status, out = run_cli(tmp_path, text, command="verify")
    assert status == 1
    assert not all(row.passed for row in read_acceptance(out / "acceptance.csv"))


# ---- acceptance criteria ----

def test_gamma_series_oracle():
    mpmath = pytest.importorskip("mpmath")
    for kappa in (0.1, 1.07, 7.5):
        expected = float(mpmath.arg(mpmath.gamma(1 + 1j * mpmath.mpf(kappa))))
        # arg is principal; the series is the continuous branch
        assert math.remainder(gamma_phase_series(kappa) - expected, 2 * math.pi) == pytest.approx(0.0, abs=1e-11)


def test_constant_and_gamma_criteria_pass():
    config = parse_experiment_config(ROOTS)
    rows = check_constants(config) + check_gamma(config)
    assert all(row.passed for row in rows)


def test_run_suite_with_no_names():
    assert run_suite(parse_experiment_config(ROOTS), ()) == ()


@pytest.mark.parametrize("normalized, passed", [
    ([0.05, 0.2, 0.9], False),
    ([0.05, 0.2, 0.06], False),
    ([0.3, 0.25, 0.2], True),
    ([-0.05, 0.04, -0.06], True),
    ([0.0, 1e-3], False),
])
def test_perturbation_growth_is_relative_to_first_rung(normalized, passed):
    tol = parse_experiment_config(ROOTS).tolerances
    rows = perturbation_rows(normalized, tol)
    assert [row.criterion for row in rows] == ["perturbation.rows", "perturbation.growth"]
    assert rows[1].passed is passed


def test_perturbation_needs_two_rungs():
    rows = perturbation_rows([0.1], parse_experiment_config(ROOTS).tolerances)
    assert len(rows) == 1 and not rows[0].passed


@pytest.mark.parametrize("criterion", ["bessel", "halfline", "interval", "properties"])
def test_one_dimensional_criteria_pass(criterion):
    config = parse_experiment_config(ROOTS)
    rows = run_suite(config, (criterion,))
    assert rows
    assert all(row.passed for row in rows), [row for row in rows if not row.passed]


@pytest.mark.slow
def test_model_domain_criteria_pass(tmp_path):
    text = """
[run]
mode = solve2d
criteria = ladder2d, structure

[corner]
stokes = true
gamma = 1.0
"""
    status, out = run_cli(tmp_path, text, command="verify")
    assert status == EXIT_OK
    assert all(row.passed for row in read_acceptance(out / "acceptance.csv"))
