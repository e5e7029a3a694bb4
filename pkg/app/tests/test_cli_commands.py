import csv
import io
import json
import pytest
from api.commands import bound, sweep
from exceptions.bound_exceptions import BoundEvaluationException
from main import run
from schemas.models import Constellation
from services.bound_services import BoundService

BOUND_ARGS = ["bound", "--n", "2", "--m", "16", "--snr-db", "10", "--method", "exact", "--no-timestamp"]


def read_csv(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_missing_command_is_a_usage_error(capsys):
    assert run([]) == 2
    assert "usage" in capsys.readouterr().err


def test_version_flag(capsys):
    assert run(["--version"]) == 0
    assert "awgn-flb" in capsys.readouterr().out


def test_bound_as_json(capsys):
    assert run(BOUND_ARGS + ["--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["value"] == pytest.approx(0.15, abs=0.005)
    assert payload["method_used"] == "exact"
    assert payload["bound_name"] == "ht-maximal"
    assert payload["config"]["command"] == "bound"
    assert "generated" not in payload
    assert set(bound.COLUMNS) <= set(payload)


def test_bound_output_is_reproducible(capsys):
    run(BOUND_ARGS)
    first = capsys.readouterr().out
    run(BOUND_ARGS)
    assert capsys.readouterr().out == first
    rows = read_csv(first)
    assert list(rows[0]) == list(bound.COLUMNS)
    assert float(rows[0]["m"]) == pytest.approx(16.0)


def test_fixed_theta_needs_a_variance(capsys):
    assert run(BOUND_ARGS + ["--theta", "fixed"]) == 2


def test_rate_and_size_are_exclusive(capsys):
    assert run(BOUND_ARGS + ["--rate-bits", "1.0"]) == 2


def test_numeric_failure_exit_code(mocker, capsys):
    mocker.patch.object(BoundService, "compute_bound", side_effect=BoundEvaluationException("boom", None))
    assert run(BOUND_ARGS) == 3
    assert capsys.readouterr().out == ""


def test_bound_through_a_transform(capsys):
    assert run(BOUND_ARGS + ["--transform", "maximal-to-average", "--split", "0.5", "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["s_star"] == pytest.approx(0.5)
    assert payload["bound_name"].endswith("/maximal_to_average")


def test_invalid_workers(capsys):
    assert run(BOUND_ARGS + ["--workers", "0"]) == 2


def test_error_sweep_csv(capsys):
    args = ["sweep", "--n", "2,4,8", "--rate-bits", "1.5", "--snr-db", "10", "--method", "exact", "--no-timestamp"]
    assert run(args) == 0
    out = capsys.readouterr().out
    assert "# capacity_bits: " in out
    rows = read_csv(out)
    assert list(rows[0]) == list(sweep.COLUMNS)
    assert [row["n"] for row in rows] == ["2", "4", "8"]
    assert all(row["error"] == "" for row in rows)


def test_error_vs_m_needs_a_grid(capsys):
    assert run(["sweep", "--mode", "error-vs-m", "--n", "2", "--snr-db", "10"]) == 2


def test_envelope_table(capsys, tmp_path):
    target = tmp_path / "boundary.csv"
    args = ["envelope", "--n", "6", "--theta2", "2", "--grid", "4", "--output", str(target), "--no-timestamp"]
    assert run(args) == 0
    rows = read_csv(target.read_text(encoding="utf-8"))
    assert [float(row["gamma"]) for row in rows] == pytest.approx([1.0, 2.0, 3.0, 4.0])
    assert all(float(row["bar_beta"]) < float(row["beta0"]) for row in rows)


def test_envelope_point_needs_power(capsys):
    assert run(["envelope", "--n", "6", "--theta2", "2", "--beta", "1e-4"]) == 2


def test_exponent_table(capsys):
    assert run(["exponent", "--snr-db", "5", "--rates", "0.3,0.6", "--format", "json", "--no-timestamp"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["capacity_bits"] == pytest.approx(1.03, abs=0.005)
    assert payload["critical_rate_bits"] == pytest.approx(0.577, abs=0.005)
    assert [row["rate_bits"] for row in payload["rows"]] == [0.3, 0.6]
    assert payload["rows"][0]["esp"] > payload["rows"][1]["esp"]


def test_conepack(capsys):
    assert run(["conepack", "--n", "2", "--m", "16", "--snr-db", "10", "--format", "json", "--no-timestamp"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.38, abs=0.005)
    assert run(["conepack", "--n", "2", "--m", "16", "--snr-db", "10", "--maximal", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.08, abs=0.005)


def test_simulate_saves_the_code(capsys, tmp_path):
    target = tmp_path / "apsk.txt"
    args = [
        "simulate", "--family", "apsk", "--m", "16", "--snr-db", "10", "--constraint", "maximal",
        "--trials", "1e4", "--seed", "7", "--save", str(target), "--format", "json",
    ]
    assert run(args) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["trials"] == 10_000
    assert payload["seed"] == 7
    assert Constellation.from_text(target.read_text(encoding="utf-8")).size == 16


def test_simulate_rejects_origin_under_equal_power(capsys):
    args = ["simulate", "--family", "apsk", "--m", "16", "--snr-db", "10", "--constraint", "equal", "--trials", "1e4"]
    assert run(args) == 2


def test_selftest_quick_suite(mocker):
    main = mocker.patch("api.commands.selftest.pytest.main", return_value=pytest.ExitCode.OK)
    assert run(["selftest"]) == 0
    options = main.call_args.args[0]
    assert options[-2:] == ["-m", "not slow"]
    main.return_value = pytest.ExitCode.TESTS_FAILED
    assert run(["selftest", "--suite", "full"]) == 3
    assert "-m" not in main.call_args.args[0]
