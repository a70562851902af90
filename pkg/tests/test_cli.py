import csv
import json
from pathlib import Path

import pytest

from chanprice.cli import CLIENT_HEADER, LADDER_HEADER, SERVER_HEADER, SIM_HEADER, main
from chanprice.config import load_config, parse_config
from chanprice.errors import ConfigurationError

from .conftest import SCALAR_PBAR

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _raw(name="study2.json"):
    return json.loads((CONFIGS / name).read_text())


def test_load_study1():
    cfg = load_config(CONFIGS / "study1.json")
    assert cfg.game.N == 20 and cfg.game.WH == 100 and cfg.game.WL == 10
    assert cfg.model.n == 2 and cfg.model.m == 1


@pytest.mark.parametrize("patch, needle", [
    ({"channels": {"lambda1": 0.2, "lambda2": 0.99}}, "lambda1"),
    ({"zeta": 1.0}, "zeta"),
    ({"colour": "red"}, "colour"),
    ({"horizon": 0}, "horizon"),
    ({"sim": {"runs": 0, "seed": 1}}, "runs"),
])
def test_rejects_bad_values(patch, needle):
    raw = _raw()
    raw.update(patch)
    with pytest.raises(ConfigurationError, match=needle):
        parse_config(raw)


def test_rejects_bad_matrix_shape():
    raw = _raw()
    raw["system"]["C"] = [[1.0, 0.0, 0.0]]
    with pytest.raises(ConfigurationError, match="C"):
        parse_config(raw)


def test_flat_matrix_form():
    raw = _raw()
    raw["system"]["A"] = {"rows": 2, "cols": 2, "data": [1.2, 0.0, 0.0, 0.9]}
    assert parse_config(raw).model == parse_config(_raw()).model


def test_json_error_position(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "zeta": 0.5,\n  "horizon": ,\n}')
    with pytest.raises(ConfigurationError, match=r"line 3, column 14"):
        load_config(bad)


def test_echo_round_trip(tmp_path):
    cfg = load_config(CONFIGS / "study2.json")
    path = tmp_path / "echo.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg


def test_ladder_mode_scalar(tmp_path):
    assert main(["--config", str(CONFIGS / "scalar.json"), "--out", str(tmp_path)]) == 0
    rows = _read(tmp_path / "ladder.csv")
    assert rows[0] == LADDER_HEADER
    traces = [float(r[1]) for r in rows[1:]]
    assert traces == pytest.approx([SCALAR_PBAR + 0.3 * i for i in range(5)], abs=1e-9)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["Pbar_residual"] <= 1e-10
    assert "timings" not in summary


def test_client_mode_tables(tmp_path):
    code = main(["--config", str(CONFIGS / "study1.json"), "--out", str(tmp_path), "--mode", "client",
                 "--price-schedule", "constant-WH"])
    assert code == 0
    rows = _read(tmp_path / "client_policy.csv")
    assert rows[0] == CLIENT_HEADER
    assert len(rows) - 1 == 20 * 21
    assert {float(r[3]) for r in rows[1:]} == {100.0}
    for k in range(1, 21):
        gam = [int(r[4]) for r in rows[1:] if int(r[0]) == k]
        assert gam == sorted(gam)


def test_server_and_equilibrium_tables(tmp_path):
    cfg = str(CONFIGS / "study2.json")
    assert main(["--config", cfg, "--out", str(tmp_path / "s"), "--mode", "server"]) == 0
    rows = _read(tmp_path / "s" / "server_policy.csv")
    assert rows[0] == SERVER_HEADER and len(rows) - 1 == 5 * 6
    assert main(["--config", cfg, "--out", str(tmp_path / "e"), "--mode", "equilibrium",
                 "--runs", "2000", "--server-construction", "consistent"]) == 0
    sim = _read(tmp_path / "e" / "sim_summary.csv")
    assert sim[0] == SIM_HEADER and [r[0] for r in sim[1:]] == ["JC", "JS"]
    summary = json.loads((tmp_path / "e" / "summary.json").read_text())
    assert summary["server"]["leader_consistency_discrepancies"] == []


def test_simulate_is_byte_identical(tmp_path):
    args = ["--config", str(CONFIGS / "study2.json"), "--mode", "simulate", "--runs", "3000", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("sim_summary.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_timings_flag(tmp_path):
    assert main(["--config", str(CONFIGS / "scalar.json"), "--out", str(tmp_path), "--timings"]) == 0
    assert "ladder_s" in json.loads((tmp_path / "summary.json").read_text())["timings"]


def test_exit_codes(tmp_path, capsys):
    raw = _raw()
    raw["zeta"] = 1.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    assert main(["--config", str(bad), "--out", str(tmp_path), "--mode", "ladder"]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert main(["--config", str(CONFIGS / "study2.json"), "--out", str(tmp_path)]) == 2
    assert main(["--config", str(CONFIGS / "study2.json"), "--out", str(tmp_path), "--mode", "server",
                 "--price-schedule", "constant-WL"]) == 2
    with pytest.raises(SystemExit):
        main(["--config", str(CONFIGS / "study2.json"), "--out", str(tmp_path), "--mode", "nope"])
