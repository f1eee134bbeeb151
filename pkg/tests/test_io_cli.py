from __future__ import annotations

import json

import numpy as np
import pytest

from shotnoise import io
from shotnoise.cli import main
from shotnoise.errors import ConfigError, SchemaError
from shotnoise.model import TWO_PI
from shotnoise.photon import sample_trajectory
from shotnoise.quantum import FringeData
from shotnoise.scenario import THREADS_ENV, load_scenario, thread_count

QUBIT = {"omega_q_ghz": 6.65, "alpha_mhz": 340, "t1_us": 30, "gamma_res_per_s": 0}
MODE = {"index_n": 1, "omega_ghz": 8.01, "g_mhz": 127, "chi_mhz": 7.0, "q_couplers": [2.5e5], "n_bar": 0.25}


def write_scenario(tmp_path, doc, name="scen.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return p


def mc_doc(seed=5):
    return {
        "name": "mc",
        "seed": seed,
        "system": {"qubit": QUBIT, "modes": [MODE]},
        "simulate": {
            "sequence": "ramsey",
            "select_n": 0,
            "engine": "montecarlo",
            "n_traj": 3000,
            "detuning_mhz": 1.0,
            "delays": {"start_us": 0, "stop_us": 10, "num": 41},
        },
    }


# --- CSV layer ---------------------------------------------------------------------


def test_fringe_round_trip(tmp_path):
    t = np.linspace(0, 1e-5, 11)
    data = FringeData(t, np.sin(t * 1e5) ** 2 / 3, np.full(11, 1e-3))
    p = io.write_fringe(tmp_path / "f.csv", data, "abc123", 7)
    back = io.read_fringe(p)
    np.testing.assert_array_equal(back.delays, data.delays)
    np.testing.assert_array_equal(back.signal, data.signal)
    np.testing.assert_array_equal(back.stderr, data.stderr)
    meta, cols, _ = io.read_csv(p)
    assert meta["schema"] == "fringe" and meta["version"] == str(io.SCHEMA_VERSION)
    assert meta["scenario_hash"] == "abc123" and meta["seed"] == "7"
    assert cols == ["delay_s", "signal", "stderr"]


@pytest.mark.parametrize(
    "bad,line",
    [("1e-6,0.5,0.01,9", 6), ("1e-6,abc,0.01", 6), ("0.0,0.5,0.01", 6), ("1e-6,nan,0.01", 6), ("1e-6,0.5,-1", 6)],
)
def test_malformed_row_names_line(tmp_path, bad, line):
    p = tmp_path / "bad.csv"
    p.write_text("# schema=fringe version=1\n# scenario_hash=x\n# seed=none\ndelay_s,signal,stderr\n0.0,1.0,0.0\n" + bad + "\n")
    with pytest.raises(SchemaError, match=f"line {line}"):
        io.read_fringe(p)


def test_other_writers(tmp_path):
    tr = sample_trajectory(1, 0.5, 2e5, 1e-4, init=2)
    _, cols, rows = io.read_csv(io.write_trajectory(tmp_path / "t.csv", tr, "h", 1))
    assert cols == ["time_s", "delta"] and int(rows[0][1][1]) == 2
    _, cols, rows = io.read_csv(io.write_distribution(tmp_path / "d.csv", [0.75, 0.25]))
    assert cols == ["N", "probability"] and len(rows) == 2
    assert len(io.scenario_hash({"a": 1})) == 16
    assert io.scenario_hash({"a": 1, "b": 2}) == io.scenario_hash({"b": 2, "a": 1})


# --- commands ----------------------------------------------------------------------


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 5


def test_flat_unit_contrast_fringe(tmp_path):
    doc = {
        "name": "flat",
        "seed": 1,
        "system": {"qubit": {**QUBIT, "t1_us": None}, "modes": [{**MODE, "n_bar": 0.0}]},
        "simulate": {"sequence": "ramsey", "select_n": 0, "detuning_mhz": 0.0, "fit": "none",
                     "delays": {"start_us": 0, "stop_us": 20, "num": 21}},
    }
    out = tmp_path / "out"
    assert main(["simulate", "--scenario", str(write_scenario(tmp_path, doc)), "--out", str(out)]) == 0
    fr = io.read_fringe(out / "fringe.csv")
    np.testing.assert_allclose(fr.signal, 1.0, atol=1e-12)


def test_predict_zero_temperature_and_table(tmp_path):
    doc = {
        "name": "budget",
        "systems": {"low_q": {"qubit": {**QUBIT, "t1_us": None}, "modes": [
            {"index_n": 1, "omega_ghz": 8.01, "chi_mhz": 7.0, "tau_us": 2},
            {"index_n": 3, "omega_ghz": 12.8, "chi_mhz": 1.0, "tau_us": 0.4}]}},
        "predict": {"temperatures_mk": [100, 0, 80]},
    }
    out = tmp_path / "out"
    assert main(["predict", "--scenario", str(write_scenario(tmp_path, doc)), "--out", str(out)]) == 0
    _, cols, rows = io.read_csv(out / "predict.csv")
    temps = [float(r[1][1]) for r in rows]
    assert temps == [0.0, 80.0, 100.0]  # sorted
    g = [float(r[1][cols.index("gamma_phi_per_s")]) for r in rows]
    assert g[0] == 0.0
    assert g[2] == pytest.approx(1.63185e4, rel=1e-4)
    assert float(rows[1][1][cols.index("t_phi_us")]) > 100


def test_byte_identical_reruns_and_threads(tmp_path):
    p = write_scenario(tmp_path, mc_doc())
    outs = []
    for i, threads in enumerate(("1", "1", "3")):
        out = tmp_path / f"o{i}"
        assert main(["simulate", "--scenario", str(p), "--out", str(out), "--threads", threads]) == 0
        outs.append(out)
    for name in ("fringe.csv", "fit.csv", "summary.csv"):
        ref = (outs[0] / name).read_bytes()
        assert all((o / name).read_bytes() == ref for o in outs[1:])
    meta, _, _ = io.read_csv(outs[0] / "fringe.csv")
    assert meta["seed"] == "5"
    assert meta["scenario_hash"] == load_scenario(p).hash
    # a different seed changes both the data and the recorded hash
    out = tmp_path / "o_seed"
    assert main(["simulate", "--scenario", str(p), "--out", str(out), "--seed", "6"]) == 0
    meta2, _, _ = io.read_csv(out / "fringe.csv")
    assert meta2["seed"] == "6" and meta2["scenario_hash"] != meta["scenario_hash"]
    assert (out / "fringe.csv").read_bytes() != (outs[0] / "fringe.csv").read_bytes()


def test_exit_codes(tmp_path, capsys):
    doc = mc_doc()
    doc["expect"] = [{"quantity": "t2_us", "value": 1e6, "rel_tol": 0.01}]
    assert main(["simulate", "--scenario", str(write_scenario(tmp_path, doc)), "--out", str(tmp_path / "a")]) == 1
    assert "t2_us" in capsys.readouterr().err
    doc = mc_doc(seed=None)
    assert main(["simulate", "--scenario", str(write_scenario(tmp_path, doc)), "--out", str(tmp_path / "b")]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["simulate", "--scenario", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "name": "x",\n "seed": 1,,\n}')
    assert main(["simulate", "--scenario", str(bad)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_fit_simulator_output_and_malformed(tmp_path, capsys):
    p = write_scenario(tmp_path, mc_doc())
    assert main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "s")]) == 0
    sim_t2 = json.loads((tmp_path / "s" / "fit.json").read_text())["params"]["t2"]
    out = tmp_path / "f"
    assert main(["fit", str(tmp_path / "s" / "fringe.csv"), "--out", str(out)]) == 0
    _, cols, rows = io.read_csv(out / "fits.csv")
    assert float(rows[0][1][cols.index("t2")]) == pytest.approx(sim_t2, rel=1e-9)
    bad = tmp_path / "bad.csv"
    bad.write_text("delay_s,signal\n0.0,1.0\n1e-6,oops\n")
    assert main(["fit", str(bad), "--out", str(out)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_fit_batch_of_fifty(tmp_path, capsys):
    t = np.linspace(0, 60e-6, 121)
    rng = np.random.default_rng(0)
    t2s = rng.uniform(10e-6, 40e-6, 50)
    files = []
    for i, t2 in enumerate(t2s):
        y = 0.5 + 0.5 * np.exp(-t / t2) * np.cos(TWO_PI * 0.3e6 * t)
        files.append(str(io.write_fringe(tmp_path / f"f{i:02d}.csv", FringeData(t, y))))
    out = tmp_path / "out"
    assert main(["fit", *files, "--out", str(out)]) == 0
    _, cols, rows = io.read_csv(out / "fits.csv")
    assert len(rows) == 50
    got = np.array([float(r[1][cols.index("t2")]) for r in rows])
    np.testing.assert_allclose(got, t2s, rtol=1e-6)
    assert "50 file(s) fitted with decaying_sine, 50 converged" in capsys.readouterr().out


def test_thread_count_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert thread_count() == 1
    monkeypatch.setenv(THREADS_ENV, "6")
    assert thread_count() == 6 and thread_count(2) == 2
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        thread_count()


def test_presets_load():
    for name in ("fig1d", "fig2a", "fig2b", "fig2c", "fig2d", "fig3", "fig4"):
        s = load_scenario(preset=name)
        assert s.seed is not None
        if "fit" not in s.doc:
            assert s.systems()
    with pytest.raises(ConfigError):
        load_scenario(preset="fig9")
