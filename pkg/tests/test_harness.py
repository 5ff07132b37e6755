import csv
import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from lattice_kg import AdmissibilityError, ConfigError, LatticeShape, PolynomialPotential, SimState, Stepper
from lattice_kg.cli import main
from lattice_kg.harness import (
    CSV_COLUMNS,
    config_from_dict,
    dispersion_omega,
    generate_initial,
    initial_state,
    load_config,
    run,
)
from lattice_kg.lattice import l2_norm_sq
from lattice_kg.rng import splitmix64, standard_normal


def base_config(tmp_path, **over):
    raw = {
        "shape": {"dims": [32], "epsilon": 1.0},
        "potential": {"mass": 1.0, "coeffs": [0.0, 1.0]},
        "steps": 20,
        "ratio": 1.0,
        "initial": {"kind": "gaussian_pulse", "width": 3.0, "amplitude": 0.8, "mode": [2]},
        "output": {"out_dir": str(tmp_path / "out")},
        "seed": 5,
    }
    raw.update(over)
    return raw


def read_series(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_validation(tmp_path):
    raw = base_config(tmp_path)
    config_from_dict(raw)
    for bad in [
        {"tau": 0.5},  # both tau and ratio
        {"steps": 0},
        {"admissibility": "loose"},
        {"initial": {"kind": "soliton"}},
        {"N": 0},
        {"shape": {"dims": [2]}},
    ]:
        with pytest.raises(ConfigError):
            config_from_dict({**raw, **bad})
    missing = dict(raw)
    del missing["potential"]
    with pytest.raises(ConfigError):
        config_from_dict(missing)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")


def test_critical_ratio_resolves_tau(tmp_path):
    cfg = config_from_dict(base_config(tmp_path, shape={"dims": [8, 8], "epsilon": 0.5}, ratio="1/sqrt(n)",
                                       initial={"kind": "zero"}))
    assert cfg.resolved_tau() == 0.5 / math.sqrt(2)
    assert cfg.critical_ratio == 1 / math.sqrt(2)


def test_splitmix_reference_values():
    # published splitmix64 outputs for seed 1234567
    assert [int(v) for v in splitmix64(1234567, 3)] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423,
    ]
    assert np.array_equal(splitmix64(7, 5)[2:], splitmix64(7, 3, offset=2))
    g = standard_normal(1, 200_000)
    assert abs(g.mean()) < 0.01 and abs(g.std() - 1) < 0.01


def test_plane_wave_static_mode():
    shape = LatticeShape((16,), 1.0)
    free = PolynomialPotential.from_mass(0.0, [0.0])
    assert dispersion_omega(shape, 0.5, free, [0]) == 0.0
    psi0, psi1 = generate_initial({"kind": "plane_wave", "amplitude": 0.7, "mode": [0]}, shape, 1, free, 0.5)
    assert np.array_equal(psi0, psi1) and np.all(psi0 == 0.7)


def test_dispersion_matches_root_solve():
    shape = LatticeShape((64,), 1.0)
    pot = PolynomialPotential.from_mass(1.0, [0.0])
    tau = 1.0
    S = 2 - 2 * math.cos(2 * math.pi / 64)

    # (2 - 2 cos w tau) / tau^2 = S + m^2 cos w tau, solved as a scalar root problem
    def g(w):
        return (2 - 2 * math.cos(w * tau)) / tau**2 - S - math.cos(w * tau)

    oracle = brentq(g, 0.0, math.pi / tau, xtol=1e-15, rtol=1e-15)
    assert dispersion_omega(shape, tau, pot, [1]) == pytest.approx(oracle, abs=1e-14)


def test_plane_wave_tracks_analytic_phase():
    shape = LatticeShape((64,), 1.0)
    pot = PolynomialPotential.from_mass(1.0, [0.0])
    tau, A = 1.0, 0.5
    w = dispersion_omega(shape, tau, pot, [1])
    psi0, psi1 = generate_initial({"kind": "plane_wave", "amplitude": A, "mode": [1]}, shape, 1, pot, tau)
    state = SimState(psi0, psi1, tau, shape)
    stepper = Stepper(pot, tau)
    X = np.arange(64)
    worst = 0.0
    for t in range(2, 1001):
        state = stepper.step(state)
        exact = A * np.exp(1j * (2 * np.pi * X / 64 - w * tau * t))
        worst = max(worst, float(np.max(np.abs(state.curr[:, 0] - exact))))
    assert worst <= 1e-10


def test_nonlinear_plane_wave_is_exact():
    shape = LatticeShape((20,), 1.0)
    pot = PolynomialPotential.from_mass(1.0, [0.0, 1.0])
    tau = 0.7
    psi0, psi1 = generate_initial({"kind": "plane_wave", "amplitude": 0.9, "mode": [3]}, shape, 1, pot, tau)
    state = SimState(psi0, psi1, tau, shape)
    rot = psi1[0, 0] / psi0[0, 0]
    nxt = Stepper(pot, tau).step(state)
    np.testing.assert_allclose(nxt.curr, psi1 * rot, rtol=0, atol=1e-14)


def test_unsolvable_dispersion_raises():
    shape = LatticeShape((8,), 1.0)
    pot = PolynomialPotential.from_mass(0.0, [0.0])
    # mode 4 of L = 8 gives S = 4, so cos(w tau) = (2 - 4 tau^2) / 2 < -1 for tau = 1.5
    with pytest.raises(ConfigError):
        dispersion_omega(shape, 1.5, pot, [4])


def test_random_initial_is_seeded_and_normalized():
    shape = LatticeShape((6, 5), 0.5)
    pot = PolynomialPotential.from_mass(1.0, [0.0])
    spec = {"kind": "random", "l2_norm": 2.0}
    a0, a1 = generate_initial(spec, shape, 2, pot, 0.3, seed=11)
    b0, b1 = generate_initial(spec, shape, 2, pot, 0.3, seed=11)
    c0, _ = generate_initial(spec, shape, 2, pot, 0.3, seed=12)
    assert np.array_equal(a0, b0) and np.array_equal(a1, b1)
    assert not np.array_equal(a0, c0) and not np.array_equal(a0, a1)
    assert l2_norm_sq(a0, shape) == pytest.approx(4.0, rel=1e-14)
    r0, _ = generate_initial({"kind": "random", "real": True}, shape, 1, pot, 0.3, seed=1)
    assert np.all(r0.imag == 0)


def test_run_zero_data(tmp_path):
    cfg = config_from_dict(base_config(tmp_path, initial={"kind": "zero"}))
    result = run(cfg)
    assert result.exit_code == 0
    rows = read_series(tmp_path / "out" / "series.csv")
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 22
    for row in rows[1:]:
        assert all(float(v) == 0.0 for v in row[1:7])


def test_run_csv_format(tmp_path):
    result = run(config_from_dict(base_config(tmp_path, output={"out_dir": str(tmp_path / "out"), "series_every": 5})))
    raw = (tmp_path / "out" / "series.csv").read_bytes()
    assert b"\r" not in raw
    rows = read_series(tmp_path / "out" / "series.csv")
    assert [int(r[0]) for r in rows[1:]] == [0, 5, 10, 15, 20]
    # complex data has no SV energy
    assert all(r[2] == "" for r in rows[1:])
    assert float(rows[2][1]) == pytest.approx(result.summary["E0"], rel=1e-12)
    assert result.summary["max_drift"]["energy"] <= 1e-12


def test_permissive_run_flags_indefinite_energy(tmp_path):
    raw = base_config(tmp_path, ratio=1.2, admissibility="permissive", steps=5)
    result = run(config_from_dict(raw))
    assert result.summary["energy_mode"] == "indefinite"
    assert result.summary["charge_conservation_expected"] is False
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["energy_mode"] == "indefinite"


def test_strict_run_refuses_uncertified_tau(tmp_path):
    raw = base_config(tmp_path, potential={"mass": 0.0, "coeffs": [1.0, -3.0, 1.0]}, ratio=0.65)
    with pytest.raises(AdmissibilityError):
        run(config_from_dict(raw))
    assert not (tmp_path / "out" / "series.csv").exists()
    raw["admissibility"] = "permissive"
    raw["initial"] = {"kind": "gaussian_pulse", "width": 3.0, "amplitude": 0.3}
    assert run(config_from_dict(raw)).exit_code == 0


def test_deterministic_reruns(tmp_path):
    raw = base_config(tmp_path, initial={"kind": "random", "l2_norm": 1.0}, shape={"dims": [10, 10]},
                      ratio="1/sqrt(n)")
    run(config_from_dict(raw))
    first = (tmp_path / "out" / "series.csv").read_bytes()
    raw["workers"] = 4
    run(config_from_dict(raw))
    assert (tmp_path / "out" / "series.csv").read_bytes() == first


def test_restart_from_snapshot_is_bitwise(tmp_path):
    full = base_config(tmp_path, steps=30, output={"out_dir": str(tmp_path / "full"), "snapshot_every": 10})
    run(config_from_dict(full))
    full_rows = read_series(tmp_path / "full" / "series.csv")
    # pair (psi^9, psi^10)
    sidecar = tmp_path / "full" / "snapshots" / "snap_00000010.json"
    assert sidecar.exists()
    resumed = base_config(tmp_path, steps=20, output={"out_dir": str(tmp_path / "resumed")},
                          initial={"kind": "file", "snapshot": str(sidecar)})
    run(config_from_dict(resumed))
    resumed_rows = read_series(tmp_path / "resumed" / "series.csv")
    # the resumed t = 9 record has no solve behind it, so only max_site_iters differs there
    assert resumed_rows[1][:-1] == full_rows[10][:-1]
    # t = 10 onward must match exactly, including margins relative to the original E0
    assert resumed_rows[2:] == full_rows[11:31]


def test_summary_config_round_trip(tmp_path):
    raw = base_config(tmp_path, steps=10)
    first = run(config_from_dict(raw))
    again = dict(first.summary["config"])
    again["output"] = {**again["output"], "out_dir": str(tmp_path / "again")}
    run(config_from_dict(again))
    assert (tmp_path / "out" / "series.csv").read_bytes() == (tmp_path / "again" / "series.csv").read_bytes()


def test_initial_state_step_index_from_snapshot(tmp_path):
    raw = base_config(tmp_path, steps=4, output={"out_dir": str(tmp_path / "a"), "snapshot_every": 2})
    run(config_from_dict(raw))
    sidecar = tmp_path / "a" / "snapshots" / "snap_00000005.json"
    cfg = config_from_dict(base_config(tmp_path, initial={"kind": "file", "snapshot": str(sidecar)}))
    assert initial_state(cfg).step_index == 5


# command line


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


def test_cli_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert "not found" in capsys.readouterr().err


def test_cli_unknown_flag(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["run", "--config", "x.json", "--bogus"])
    assert info.value.code == 2


def test_cli_dispersion_zero_mode(tmp_path, capsys):
    path = write_json(tmp_path / "c.json", base_config(tmp_path, potential={"mass": 0.0, "coeffs": [0.0]},
                                                       initial={"kind": "zero"}))
    assert main(["dispersion", "--config", str(path), "--mode", "0"]) == 0
    assert float(capsys.readouterr().out) == 0.0


def test_cli_check_potential(tmp_path, capsys):
    path = write_json(tmp_path / "p.json", {"mass": 0.0, "coeffs": [-1.0, 1.0]})
    assert main(["check-potential", "--config", str(path), "--grid", "200"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["k1"] == -1.0 and report["tau1"] == 1.0


def test_cli_run_overrides(tmp_path, capsys):
    path = write_json(tmp_path / "c.json", base_config(tmp_path))
    out = tmp_path / "cli_out"
    assert main(["run", "--config", str(path), "--steps", "3", "--out", str(out), "--quiet"]) == 0
    rows = read_series(out / "series.csv")
    assert len(rows) == 5
    assert json.loads((out / "summary.json").read_text())["steps"] == 3


def test_cli_step_failure_exit_code(tmp_path):
    raw = base_config(tmp_path, solver={"tol_f": 1e-300, "max_iter": 8}, initial={"kind": "random", "l2_norm": 30.0},
                      potential={"mass": 1.0, "coeffs": [0.0, 1.0, 1.0, 1.0]}, ratio=0.5)
    path = write_json(tmp_path / "c.json", raw)
    assert main(["run", "--config", str(path), "--quiet"]) == 1
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["status"] == "step_failure" and summary["step"] >= 2


def test_cli_admissibility_refusal_exit_code(tmp_path):
    raw = base_config(tmp_path, potential={"mass": 0.0, "coeffs": [-1.0, 1.0]}, ratio=1.0)
    path = write_json(tmp_path / "c.json", raw)
    assert main(["run", "--config", str(path), "--quiet"]) == 2
