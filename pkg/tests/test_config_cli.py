import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from nvtransduce import cli, config, runner
from nvtransduce.config import ConfigError, parse_config, preset_config, preset_dict, set_key

SHORT_SWAP = {
    "name": "short",
    "couplings": {"G1": 1.0, "G2": 0.5, "Gnv": 0.5},
    "channels": {"kappa_a": 0.1, "kappa_b": 0.01, "gamma_c": 0.04, "gamma_d": 0.01},
    "initial_state": {"occupations": {"a": 1}},
    "protocol": {"name": "swap"},
    "integrator": {"dt": 0.002, "sample_every": 0.05},
}


def _write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def _isolated_b(n_th):
    return {
        "name": f"thermal-{n_th}",
        "register": {"b": 10},
        "channels": {"kappa_b": 1.0, "n_th": n_th},
        "initial_state": {"occupations": {"b": 0}},
        "protocol": {"name": "idle", "duration": 20.0},
        "integrator": {"dt": 0.002, "sample_every": 1.0},
        "output": {"fidelity_modes": [], "target_mode": "b", "concurrence_modes": []},
    }


@pytest.mark.parametrize("name", config.PRESET_NAMES)
def test_preset_round_trip(name):
    cfg = preset_config(name)
    again = parse_config(yaml.safe_load(config.dump_config(cfg)))
    assert again == cfg
    assert again.scenario_hash() == cfg.scenario_hash()


def test_hash_ignores_name_and_path():
    a = parse_config(SHORT_SWAP)
    b = parse_config({**SHORT_SWAP, "name": "other", "output": {"path": "elsewhere"}})
    assert a.scenario_hash() == b.scenario_hash()
    c = parse_config(set_key(a.to_dict(), "channels.gamma_c", 0.05))
    assert c.scenario_hash() != a.scenario_hash()


@pytest.mark.parametrize("patch, key", [
    ({"channels": {"gamma_c": -1}}, "channels.gamma_c"),
    ({"integrator": {"dt": 0}}, "integrator.dt"),
    ({"protocol": {"name": "teleport"}}, "protocol.name"),
    ({"couplings": {"G1": 1.0}}, "couplings"),
    ({"bogus": 1}, "bogus"),
])
def test_validation_names_the_key(patch, key):
    data = preset_dict("fig2b")
    for section, value in patch.items():
        if isinstance(value, dict) and isinstance(data.get(section), dict):
            data[section] = {**data[section], **value}
            if section == "couplings":
                data[section] = value
        else:
            data[section] = value
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(data)


def test_semantic_validation():
    with pytest.raises(ConfigError, match="not declared"):
        parse_config({**SHORT_SWAP, "initial_state": {"occupations": {"q": 1}}})
    with pytest.raises(ConfigError, match="needs register modes"):
        parse_config({**SHORT_SWAP, "register": {"a": 2, "b": 2, "d": 2}})
    with pytest.raises(ConfigError, match="reverse"):
        parse_config({**preset_dict("fig3b"), "protocol": {"name": "adiabatic", "reverse": True,
                                                           "pulse": {"amplitude": 1, "center": 3, "width": 15}}})
    with pytest.raises(ConfigError, match="normalized"):
        runner.run_scenario(parse_config({**SHORT_SWAP, "initial_state": {"superposition": [
            {"occupations": {}, "amplitude": 1.0}, {"occupations": {"a": 1}, "amplitude": 1.0}]}}))


def test_set_key_rules():
    d = preset_dict("fig2b")
    assert set_key(d, "channels.gamma_c", 0.2)["channels"]["gamma_c"] == 0.2
    assert d["channels"]["gamma_c"] == 0.04
    for bad in ("channels", "protocol.name", "channels.nope", "nope.x"):
        with pytest.raises(ConfigError):
            set_key(d, bad, 1.0)


def test_yaml_error_reports_position(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("name: x\nregister: {a: 2\n")
    with pytest.raises(ConfigError, match="line"):
        config.load_config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        config.load_config(tmp_path / "missing.yaml")


def test_derived_couplings():
    data = {**SHORT_SWAP, "couplings": {"Gnv": 0.5, "derive": {"g_o": 1, "Omega": 10, "Delta_o": 100,
                                                                 "g_mu": 0.05, "N": 100}}}
    c = runner.build_couplings(parse_config(data))
    assert (c.G1, c.G2, c.Gnv) == pytest.approx((-1.0, 0.5, 0.5))


def test_stationary_scenario():
    data = {
        "name": "still",
        "couplings": {"G1": 0.0, "G2": 0.0},
        "initial_state": {"occupations": {"c": 1}},
        "protocol": {"name": "idle", "duration": 5.0},
        "integrator": {"dt": 0.01, "sample_every": 0.5},
    }
    res = runner.run_scenario(parse_config(data))
    pops = np.array([[r[f"pop_{m}"] for m in "abcd"] for r in res.rows])
    assert np.all(pops == pops[0]) and pops[0].tolist() == [0, 0, 1, 0]
    assert max(r["trace_err"] for r in res.rows) < 1e-10


def test_csv_layout_and_empty_columns():
    res = runner.run_scenario(parse_config(_isolated_b(0.5)))
    lines = res.csv_text().splitlines()
    assert lines[0] == "t,pop_a,pop_b,pop_c,pop_d,fidelity,concurrence_ad,trace_err"
    first = lines[1].split(",")
    assert first[1] == "" and first[3:7] == ["", "", "", ""]
    assert float(first[2]) == 0.0
    assert res.summary["efficiency"] == pytest.approx(0.5, abs=1e-3)


def test_determinism():
    a = runner.run_scenario(parse_config(SHORT_SWAP))
    b = runner.run_scenario(parse_config(SHORT_SWAP))
    assert a.csv_text() == b.csv_text()
    assert json.dumps(a.summary) == json.dumps(b.summary)


def test_dt_convergence():
    base = parse_config({**SHORT_SWAP, "integrator": {"dt": 1e-3, "sample_every": 0.5}})
    fine = runner.apply_overrides(base, dt=5e-4)
    ra, rb = runner.run_scenario(base), runner.run_scenario(fine)
    assert len(ra.rows) == len(rb.rows)
    for x, y in zip(ra.rows, rb.rows):
        for k in ("pop_a", "pop_b", "pop_c", "pop_d", "fidelity", "concurrence_ad"):
            assert abs(x[k] - y[k]) < 1e-6


def test_summary_fields():
    data = {**SHORT_SWAP, "output": {"g_physical_MHz": 2.0}}
    s = runner.run_scenario(parse_config(data)).summary
    dur = np.pi / 2 * (1 + 2 + 2)
    assert s["duration"] == pytest.approx(dur)
    assert s["duration_us"] == pytest.approx(dur / 2.0)
    assert s["peak_fidelity"] >= s["final_fidelity"]
    assert s["efficiency"] == s["final_population"]["d"]
    assert set(s) >= {"scenario_hash", "peak_fidelity", "final_concurrence", "max_trace_error", "steps"}


def test_singleton_sweep_equals_run():
    cfg = parse_config(SHORT_SWAP)
    sw = runner.sweep(cfg, "channels.gamma_c", [0.04], workers=1)
    single = runner.run_scenario(cfg)
    assert sw.results[0].csv_text() == single.csv_text()
    row = sw.rows()[0]
    assert row["peak_fidelity"] == single.summary["peak_fidelity"]


def test_thermal_sweep():
    sw = runner.sweep(parse_config(_isolated_b(0.0)), "channels.n_th", [0.0, 0.5], workers=2)
    assert [r["value"] for r in sw.rows()] == [0.0, 0.5]
    steady = [r.summary["final_population"]["b"] for r in sw.results]
    assert steady == pytest.approx([0.0, 0.5], abs=1e-3)


def test_sweep_rejects_non_scalar():
    with pytest.raises(ConfigError):
        runner.sweep(parse_config(SHORT_SWAP), "channels", [1.0])


# -- command line ------------------------------------------------------------


def test_cli_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out.split()
    for name in config.PRESET_NAMES:
        assert name in out


def test_cli_run_and_preset_equivalence(tmp_path, capsys):
    assert cli.main(["export-preset", "fig4"]) == 0
    exported = capsys.readouterr().out
    path = tmp_path / "fig4.yaml"
    path.write_text(exported)
    assert cli.main(["run", str(path), "--out", str(tmp_path / "cfg"), "--sample-every", "0.1"]) == 0
    assert cli.main(["run-preset", "fig4", "--out", str(tmp_path / "pre"), "--sample-every", "0.1"]) == 0
    for suffix in (".csv", ".summary.json"):
        a = (tmp_path / "cfg" / f"fig4{suffix}").read_bytes()
        b = (tmp_path / "pre" / f"fig4{suffix}").read_bytes()
        assert a == b


def test_cli_flags_reach_integrator(tmp_path, capsys):
    path = _write(tmp_path, SHORT_SWAP)
    assert cli.main(["run", str(path), "--out", str(tmp_path), "--dt", "0.004", "--sample-every", "1.0"]) == 0
    summary = json.loads((tmp_path / "short.summary.json").read_text())
    rows = (tmp_path / "short.csv").read_text().splitlines()
    n_samples = int(np.ceil(summary["duration"] / 1.0))
    assert len(rows) == 1 + 1 + n_samples
    assert [float(r.split(",")[0]) for r in rows[2:-1]] == [float(k) for k in range(1, n_samples)]
    # one extra partial step at most per segment boundary and sample cut
    lower = summary["duration"] / 0.004
    assert lower <= summary["steps"] <= lower + 3 + n_samples


def test_cli_sweep(tmp_path, capsys):
    path = _write(tmp_path, SHORT_SWAP)
    code = cli.main(["sweep", str(path), "--param", "channels.gamma_c", "--values", "0.2,0.01",
                     "--out", str(tmp_path), "--workers", "1"])
    assert code == 0
    table = (tmp_path / "short.sweep.csv").read_text().splitlines()
    assert table[0] == "value,peak_fidelity,efficiency,final_concurrence,runtime_s"
    assert [line.split(",")[0] for line in table[1:]] == ["0.2", "0.01"]
    assert float(table[1].split(",")[1]) < float(table[2].split(",")[1])


@pytest.mark.parametrize("argv", [
    ["run-preset", "fig9"],
    ["sweep", "CFG", "--param", "protocol.name", "--values", "1"],
    ["run", "MISSING"],
])
def test_cli_validation_exit_code(tmp_path, capsys, argv):
    cfg = _write(tmp_path, SHORT_SWAP)
    argv = [str(cfg) if a == "CFG" else str(tmp_path / "none.yaml") if a == "MISSING" else a for a in argv]
    assert cli.main(argv) == 1
    assert "invalid input" in capsys.readouterr().err


def test_cli_negative_rate_names_key(tmp_path, capsys):
    bad = preset_dict("fig2b")
    bad["channels"]["gamma_c"] = -1
    assert cli.main(["run", str(_write(tmp_path, bad))]) == 1
    assert "channels.gamma_c" in capsys.readouterr().err


def test_cli_numerical_failure_exit_code(tmp_path, capsys):
    unstable = {
        "register": {"a": 2},
        "channels": {"kappa_a": 1000.0},
        "initial_state": {"occupations": {"a": 1}},
        "protocol": {"name": "idle", "duration": 1.0},
        "integrator": {"dt": 0.01},
        "output": {"fidelity_modes": [], "target_mode": None, "concurrence_modes": []},
    }
    assert cli.main(["run", str(_write(tmp_path, unstable)), "--out", str(tmp_path)]) == 2
    assert "step" in capsys.readouterr().err


def test_console_script(tmp_path):
    out = subprocess.run([sys.executable, "-m", "nvtransduce.cli", "list-presets"],
                         capture_output=True, text=True, check=True)
    assert "fig2b" in out.stdout
