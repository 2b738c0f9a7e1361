import json

import numpy as np
import pytest

from she import cli, runner, serialization as ser
from she.array_model import ConfigError, db2lin, desk_config
from conftest import crandn

TINY = {"preset": "desk", "geometry": {"num_tx": 8, "num_rx": 2}, "num_rf": 2, "num_users": 1,
        "angle_uncertainty": 0.0, "csi_error_var": 0.0, "clutter_angles": [],
        "clutter_amplitudes": [], "radar_sinr_target_db": 10.0}


def test_complex_json_round_trip(rng):
    a = crandn(rng, 3, 4)
    obj = json.loads(json.dumps(ser.complex_to_json(a)))
    assert obj["shape"] == [3, 4] and obj["data"][0] == [a[0, 0].real, a[0, 0].imag]
    assert np.array_equal(ser.complex_from_json(obj), a)


def test_beamformer_file_round_trip(tmp_path, rng):
    from she.metrics import BeamformerSet
    bf = BeamformerSet(np.exp(1j * rng.uniform(0, 6, (8, 2))), crandn(rng, 2, 1), crandn(rng, 2))
    ser.save_beamformers(tmp_path / "bf.json", bf)
    back = ser.load_beamformers(tmp_path / "bf.json")
    assert np.array_equal(back.analog, bf.analog)
    assert np.array_equal(back.digital, bf.digital)
    with pytest.raises(ValueError):
        ser.beamformers_from_json({"analog": []})


def test_config_round_trip():
    cfg = desk_config(eue_estimate=np.arange(16) * (1 + 1j), csi_error_var=0.02)
    back = ser.config_from_dict(json.loads(json.dumps(ser.config_to_dict(cfg))))
    for name in ("num_rf", "power_budget", "radar_sinr_target", "csi_error_var"):
        assert getattr(back, name) == getattr(cfg, name)
    assert np.array_equal(back.eue_estimate, cfg.eue_estimate)
    assert np.array_equal(back.clutter_amplitudes, cfg.clutter_amplitudes)
    assert back.geometry == cfg.geometry


def test_config_db_and_errors():
    cfg = ser.config_from_dict({"radar_sinr_target_db": 20.0})
    assert np.isclose(cfg.radar_sinr_target, 100.0)
    assert ser.config_from_dict({"preset": "paper"}).num_tx == 32
    with pytest.raises(ConfigError):
        ser.config_from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ser.config_from_dict({"preset": "huge"})
    with pytest.raises(ConfigError):
        ser.config_from_dict({"noise_eue_db": 3})


def test_csv_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.1 + 0.2, "c": "Converged"}, {"a": 2, "b": -float("inf"), "d": 1e-300}]
    ser.write_rows_csv(tmp_path / "x.csv", rows)
    assert ser.read_rows_csv(tmp_path / "x.csv") == rows


def test_cli_validate_and_run(tmp_path, capsys):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(TINY))
    assert cli.main(["validate-config", "--config", str(cfg_path)]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert np.isclose(shown["radar_sinr_target"], 10.0)
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(cfg_path), "--seed", "1", "--out", str(out)]) == 0
    record = json.loads((out / "result.json").read_text())
    assert record["summary"]["status"] == "Converged" and all(record["checks"].values())
    assert ser.read_rows_csv(out / "trace.csv")[-1]["worst_case_sr"] == \
        record["summary"]["secrecy_rate_worst"]
    pat = tmp_path / "p.csv"
    assert cli.main(["pattern", "--beamformers", str(out / "beamformers.json"),
                     "--out", str(pat)]) == 0
    assert len(pat.read_text().splitlines()) == 362


def test_cli_baseline_and_sweep(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(TINY))
    assert cli.main(["baseline", "--variant", "ConvHBF", "--config", str(cfg_path),
                     "--out", str(tmp_path / "b"), "--max-outer", "2"]) == 0
    spec = {"config": "c.json", "sweep": {"param": "radar_sinr_target_db", "values": [1.0]},
            "variants": ["SHE"], "trials": 1, "seed": 3, "output_dir": str(tmp_path / "sw"),
            "options": {"max_outer": 2, "hbf": {"max_inner": 5}}}
    (tmp_path / "s.json").write_text(json.dumps(spec))
    assert cli.main(["sweep", "--spec", str(tmp_path / "s.json")]) == 0
    assert (tmp_path / "sw" / "SHE__radar_sinr_target_db__1.0__3.csv").exists()
    assert (tmp_path / "sw" / "aggregate__radar_sinr_target_db__3.json").exists()


def test_cli_exit_codes(tmp_path, monkeypatch):
    assert cli.main(["validate-config", "--config", str(tmp_path / "missing.json")]) == 1
    assert cli.main(["baseline", "--variant", "Nope"]) == 1
    real = runner.run_baseline

    def relaxed(*args, **kwargs):
        res = real(*args, **kwargs)
        res.status = runner.INFEASIBLE_RELAXED
        res.achieved_gamma = db2lin(7.0)
        return res

    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(TINY))
    monkeypatch.setattr(runner, "run_baseline", relaxed)
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "r"),
                     "--max-outer", "1"]) == 2


def test_workers_env(monkeypatch):
    monkeypatch.setenv(runner.WORKERS_ENV, "3")
    assert runner.num_workers() == 3
    monkeypatch.setenv(runner.WORKERS_ENV, "many")
    with pytest.raises(ValueError):
        runner.num_workers()
