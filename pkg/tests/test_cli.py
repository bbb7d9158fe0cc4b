import csv
import io
import json
import math

import pytest

from conftest import reference_params
from lwi.cli import (EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_PARTIAL, InvalidSpec, SweepSpec,
                     compare_methods, main, run_sweep)


def _rows(text):
    lines = text.splitlines()
    assert lines[0].startswith("# ")
    return json.loads(lines[0][2:]), list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


PHASE = ("phase-diagram", "--pumps", "0:0.5:6", "--detunings=-2:2:5", "--g", "0.9",
         "--kappa", "0.8", "--Omega", "1", "--omega-e", "1", "--gamma-T", "1")


def test_repeated_runs_are_byte_identical(capsys):
    a = _run(capsys, *PHASE)
    b = _run(capsys, *PHASE)
    assert a[0] == EXIT_OK and a[1] == b[1]
    header, rows = _rows(a[1])
    assert len(rows) == 30
    assert "timestamp" not in header


def test_parallel_equals_serial(capsys):
    serial = _run(capsys, "pump-sweep", "--pumps", "0.1:0.5:5", "--gamma-T", "1", "--g", "0.9",
                  "--kappa", "0.8", "--Omega", "1", "--omega-e", "1")
    par = _run(capsys, "pump-sweep", "--pumps", "0.1:0.5:5", "--gamma-T", "1", "--g", "0.9",
               "--kappa", "0.8", "--Omega", "1", "--omega-e", "1", "--jobs", "3")
    assert serial[0] == par[0] == EXIT_OK
    # the header echoes the sweep spec, which omits the worker count
    assert serial[1] == par[1]


def test_row_major_order():
    spec = SweepSpec("three_level", "stability", reference_params(),
                     (("delta_omega", (0.5, 1.0)), ("pump_ratio", (0.1, 0.2, 0.3))), gamma_T=1.0)
    res = run_sweep(spec)
    assert [pt for pt, *_ in res.rows] == [(0.5, 0.1), (0.5, 0.2), (0.5, 0.3), (1.0, 0.1),
                                           (1.0, 0.2), (1.0, 0.3)]
    assert all(status == "ok" for *_, status in res.rows)


def test_empty_axes_give_one_row():
    res = run_sweep(SweepSpec("three_level", "meanfield", reference_params()))
    assert len(res.rows) == 1


def test_timestamp_only_on_request():
    res = run_sweep(SweepSpec("two_level", "stability", reference_params()), timestamp=True)
    assert "timestamp" in res.header


@pytest.mark.parametrize("spec", [
    SweepSpec("three_level", "bogus", reference_params()),
    SweepSpec("five_level", "meanfield", reference_params()),
    SweepSpec("two_level", "meanfield", reference_params(), (("phi", (0.0, 1.0)),)),
    SweepSpec("three_level", "meanfield", reference_params(), (("nope", (0.0,)),)),
    SweepSpec("three_level", "meanfield", reference_params(), (("g", ()),)),
    SweepSpec("three_level", "meanfield", reference_params(), (), ("g2",)),
])
def test_invalid_specs(spec):
    with pytest.raises(InvalidSpec):
        run_sweep(spec)


def test_compare_unknown_method():
    with pytest.raises(InvalidSpec):
        compare_methods(reference_params(), [0.2], [2], methods=("meanfield", "magic"))


def test_invalid_exit_code(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"warp": 1}}))
    assert _run(capsys, "pump-sweep", "--config", str(cfg))[0] == EXIT_INVALID
    assert _run(capsys, "pump-sweep", "--kappa", "-1")[0] == EXIT_INVALID


def test_io_exit_code(capsys, tmp_path):
    code, _, err = _run(capsys, "dims", "--out", str(tmp_path / "missing" / "x.csv"))
    assert code == EXIT_IO and err


def test_partial_failure_exit_code(capsys):
    # the first pump puts gamma_down below zero: that point fails, the rest run
    code, out, _ = _run(capsys, "pump-sweep", "--pumps", "0.3,0.6", "--gamma-T", "1",
                        "--method", "meanfield")
    assert code == EXIT_PARTIAL
    _, rows = _rows(out)
    assert rows[0]["status"] == "ok" and rows[1]["status"].startswith("error:")


def test_json_output_and_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"g": 0.9, "kappa": 0.8, "Omega": 1.0, "omega_e": 1.0},
                               "gamma_T": 1.0}))
    out_file = tmp_path / "o.json"
    code, _, _ = _run(capsys, "threshold", "--config", str(cfg), "--detunings", "0.5,1.0",
                      "--format", "json", "--out", str(out_file))
    assert code == EXIT_OK
    data = json.loads(out_file.read_text())
    assert [r["delta_omega"] for r in data["rows"]] == [0.5, 1.0]
    assert data["header"]["spec"]["params"]["g"] == 0.9
    assert all(r["threshold"] > 0 for r in data["rows"])


def test_dims_command(capsys):
    code, out, _ = _run(capsys, "dims", "--n-list", "2,8")
    _, rows = _rows(out)
    assert code == EXIT_OK
    assert [int(r["symmetric"]) for r in rows] == [45, 12870]


def test_minima_track_command(capsys):
    code, out, _ = _run(capsys, "minima-track", "--phis", "0,0.5", "--g", "0.9", "--kappa", "0.8",
                        "--Omega", "1", "--omega-e", "1", "--gamma-up", "0.25",
                        "--gamma-down", "0.25", "--step", "0.05")
    _, rows = _rows(out)
    assert code == EXIT_OK and len(rows) == 2
    assert abs(float(rows[0]["positive_detuning"]) - 1.0) < 0.05


def test_compare_layout():
    p = reference_params(phi=3 * math.pi / 4).replace(fock_dim=6)
    res = compare_methods(p, [0.2, 0.3], [2], gamma_T=1.0)
    assert res.columns == ("inversion", "photon_density", "truncated")
    keys = [k for k, *_ in res.rows]
    assert keys == [(0.2, "inf", "meanfield"), (0.2, 2, "cumulant"), (0.2, 2, "exact"),
                    (0.3, "inf", "meanfield"), (0.3, 2, "cumulant"), (0.3, 2, "exact")]
    assert all(s == "ok" for *_, s in res.rows)


def test_single_atom_comparison():
    # one atom: the closure is the only approximation; regression bound from a verified run
    res = compare_methods(reference_params().replace(fock_dim=10), [0.1, 0.3, 0.5], [1],
                          methods=("cumulant", "exact"), gamma_T=1.0)
    by = {(k[0], k[2]): v for k, v, _ in res.rows}
    for r in (0.1, 0.3, 0.5):
        c, e = by[(r, "cumulant")], by[(r, "exact")]
        assert abs(c["photon_density"] / e["photon_density"] - 1) < 0.15
        assert abs(c["inversion"] - e["inversion"]) < 0.15


def test_photon_stats_command(capsys):
    code, out, _ = _run(capsys, "photon-stats", "--model", "two_level", "--pumps", "0.3,0.9",
                        "--n-emitters", "2", "--fock-dim", "8", "--g", "0.9", "--kappa", "0.8",
                        "--gamma-T", "1", "--nu", "1", "--omega-e", "1")
    header, rows = _rows(out)
    assert code == EXIT_OK
    assert list(rows[0]) == ["pump_ratio", "g2", "fano", "top_fock_occupation", "truncated",
                             "status"]
    assert float(rows[0]["g2"]) > float(rows[1]["g2"])
