import hashlib
import json

import numpy as np
import pytest

import qdroop
from qdroop.cli import main, parse_network, serialize_network

TWO_BUS_CP_PAST_FOLD = """\
buses:
  - id: load1
    kind: load
  - id: inv1
    kind: inverter
    K: -1.0
    E_star: 1.0
loads:
  - bus: load1
    model: cp
    Q: -0.2
branches:
  - i: load1
    j: inv1
    b: 1.0
"""

POCKET_BEHIND_WEAK_BRIDGE = """\
buses:
  - id: load1
    kind: load
  - id: load2
    kind: load
  - id: inv1
    kind: inverter
    K: -1.0
    E_star: 1.0
branches:
  - i: load1
    j: inv1
    b: 1.0
  - i: load1
    j: load2
    b: 1.0e-14
loads:
  - bus: load1
    model: zi
    b_shunt: -0.1
"""

COLLAPSING_SIMULATION = """\
buses:
  - id: load1
    kind: load
  - id: inv1
    kind: inverter
    K: -1.0
    E_star: 1.0
branches:
  - i: load1
    j: inv1
    b: 1.0
loads:
  - bus: load1
    model: cp
    Q: -0.05
simulation:
  dt: 0.001
  t_end: 1.0
  schedule:
    - type: step
      time: 0.2
      bus: load1
      parameter: Q
      value: -0.2
"""


def write_net(tmp_path, text, name="case.net"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


# ---------------------------------------------------------------- parsing


def test_round_trip_two_bus(two_bus_path, tmp_path):
    parsed = parse_network(two_bus_path)
    text = serialize_network(parsed)
    again = parse_network(write_net(tmp_path, text))
    assert again.model == parsed.model
    assert np.array_equal(again.spec.b_shunt, parsed.spec.b_shunt)
    assert np.array_equal(again.spec.I_shunt, parsed.spec.I_shunt)
    assert np.array_equal(again.spec.Q_const, parsed.spec.Q_const)
    assert again.spec.kind is parsed.spec.kind
    assert np.array_equal(again.tau, parsed.tau)
    assert again.sim.dt == parsed.sim.dt
    assert again.sim.t_end == parsed.sim.t_end
    assert again.sim.schedule.steps == parsed.sim.schedule.steps


def test_round_trip_fig1b(fig1b_path, tmp_path):
    parsed = parse_network(fig1b_path)
    text = serialize_network(parsed)
    again = parse_network(write_net(tmp_path, text))
    assert again.model == parsed.model
    assert again.spec.kind is parsed.spec.kind
    assert np.array_equal(again.spec.Q_const, parsed.spec.Q_const)
    assert np.array_equal(again.spec.T, parsed.spec.T)
    assert again.sim.schedule.sines == parsed.sim.schedule.sines
    assert again.sim.schedule.steps == parsed.sim.schedule.steps
    assert again.sim.settle_rate == parsed.sim.settle_rate


def test_unknown_sections_are_rejected_before_entries(tmp_path):
    from qdroop import NetworkFileError

    text = TWO_BUS_CP_PAST_FOLD + "unknown_section: {}\n"
    with pytest.raises(NetworkFileError) as err:
        parse_network(write_net(tmp_path, text))
    assert "unknown top-level sections" in str(err.value)


def test_entry_errors_are_aggregated(tmp_path):
    bad = """\
buses:
  - id: load1
    kind: load
    K: -1.0
  - id: inv1
    kind: inverter
    K: 2.0
    E_star: 1.0
branches:
  - i: load1
    j: nowhere
    b: -1.0
loads:
  - bus: load1
    model: zi
    b_shunt: 0.1
"""
    from qdroop import NetworkFileError

    with pytest.raises(NetworkFileError) as err:
        parse_network(write_net(tmp_path, bad))
    text = str(err.value)
    assert "load buses cannot set" in text
    assert "K must be negative" in text
    assert "nowhere" in text
    assert "b must be positive" in text
    assert "capacitive" in text  # positive shunt needs the explicit flag


def test_positive_load_requires_capacitive_flag(tmp_path):
    ok = TWO_BUS_CP_PAST_FOLD.replace("Q: -0.2", "Q: 0.05\n    capacitive: true")
    parsed = parse_network(write_net(tmp_path, ok))
    assert parsed.spec.Q_const[0] == 0.05


def test_digest_matches_file_bytes(two_bus_path):
    parsed = parse_network(two_bus_path)
    with open(two_bus_path, "rb") as fh:
        assert parsed.digest == hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------- exit codes


def test_exit_ok_validate_and_solve(two_bus_path, capsys):
    code, report = run_json(capsys, ["validate", two_bus_path])
    assert code == 0
    assert report["result"]["susceptance_checks"]["passed"] is True

    code, report = run_json(capsys, ["solve", two_bus_path])
    assert code == 0
    assert report["result"]["method"] == "closed_form_zi"
    assert report["result"]["E_L"][0] == pytest.approx(5 / 6, abs=1e-12)


def test_exit_negative_on_collapse(tmp_path, capsys):
    path = write_net(tmp_path, TWO_BUS_CP_PAST_FOLD)
    assert main(["solve", path]) == 1
    assert "error" in capsys.readouterr().err or True

    path = write_net(tmp_path, COLLAPSING_SIMULATION, "collapse.net")
    code, report = run_json(capsys, ["simulate", path])
    assert code == 1
    assert report["result"]["status"] == "collapsed"


def test_exit_input_errors(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.net")]) == 2
    capsys.readouterr()

    bad_yaml = write_net(tmp_path, "buses: [unclosed\n", "bad.yaml.net")
    assert main(["solve", bad_yaml]) == 2
    capsys.readouterr()

    unknown = write_net(
        tmp_path, TWO_BUS_CP_PAST_FOLD + "extra_key: 1\n", "unknown.net"
    )
    assert main(["solve", unknown]) == 2
    capsys.readouterr()

    # forcing the closed-form solver onto a constant-power file
    cp = write_net(tmp_path, TWO_BUS_CP_PAST_FOLD.replace("-0.2", "-0.05"), "cp.net")
    assert main(["solve", cp, "--model", "zi"]) == 2
    capsys.readouterr()

    # simulate requires a simulation section
    assert main(["simulate", cp]) == 2
    err = capsys.readouterr().err
    assert "simulation" in err


def test_exit_numeric_on_ill_conditioned_reduction(tmp_path, capsys):
    path = write_net(tmp_path, POCKET_BEHIND_WEAK_BRIDGE)
    assert main(["reduce", path]) == 3
    assert "numeric failure" in capsys.readouterr().err


def test_share_flag_conflict(two_bus_path):
    with pytest.raises(SystemExit) as exc:
        main(["share", two_bus_path, "--gain-scale", "2.0", "--limit", "high"])
    assert exc.value.code == 2


# ---------------------------------------------------------------- reports


def test_report_shape_and_meta(two_bus_path, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["stability", two_bus_path, "-o", str(out)])
    assert code == 0
    assert capsys.readouterr().out == ""
    text = out.read_text()
    report = json.loads(text)
    # canonical serialization: sorted keys, two-space indent
    assert text == json.dumps(report, indent=2, sort_keys=True) + "\n"
    meta = report["meta"]
    assert meta["tool"] == "qdroop"
    assert meta["version"] == qdroop.__version__
    assert meta["input"] == two_bus_path
    assert len(meta["input_sha256"]) == 64
    assert "tol_fixed" in meta["tolerances"]
    result = report["result"]
    assert result["hurwitz"] is True
    for pair in result["eigenvalues"]:
        assert len(pair) == 2
        assert pair[0] == float(f"{pair[0]:.12g}")
    reals = [p[0] for p in result["eigenvalues"]]
    assert reals == sorted(reals, reverse=True)


def test_tolerance_override_via_environment(two_bus_path, capsys, monkeypatch):
    monkeypatch.setenv("QDROOP_TOL", "1e-7")
    code, report = run_json(capsys, ["solve", two_bus_path])
    assert code == 0
    assert report["meta"]["tolerances"]["tol_fixed"] == 1e-7


def test_simulate_csv_flag(two_bus_path, tmp_path, capsys):
    csv = tmp_path / "trace.csv"
    code, report = run_json(capsys, ["simulate", two_bus_path, "--csv", str(csv)])
    assert code == 0
    assert report["result"]["status"] == "converged"
    header = csv.read_text().split("\n")[0]
    assert header.startswith("t,E_L_1,E_I_1")


def test_share_reports_limits_and_general(two_bus_path, capsys):
    code, report = run_json(capsys, ["share", two_bus_path, "--limit", "high"])
    assert code == 0
    assert report["result"]["regime"] == "high_gain_limit"

    code, report = run_json(capsys, ["share", two_bus_path, "--gain-scale", "2.0"])
    assert code == 0
    assert report["result"]["regime"] == "gain_scale=2"
    assert "shares_realized" in report["result"]


def test_reduce_payload(two_bus_path, capsys):
    code, report = run_json(capsys, ["reduce", two_bus_path])
    assert code == 0
    res = report["result"]
    assert res["B_red"][0][0] == pytest.approx(-0.5, abs=1e-12)
    assert res["E_load_open"][0] == pytest.approx(1.0, abs=1e-12)
    assert res["checks"]["passed"] is True


def test_optimality_payload(two_bus_path, capsys):
    code, report = run_json(capsys, ["optimality", two_bus_path])
    assert code == 0
    res = report["result"]
    assert res["passed"] is True
    assert res["gradient_norm"] <= 1e-8
