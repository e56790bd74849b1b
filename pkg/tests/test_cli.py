import csv
import json

import numpy as np
import pytest
import yaml

from fiberlap.cli import main
from fiberlap.config import ConfigError, config_hash, parse_config, validate
from fiberlap.presets import PRESETS
from fiberlap.reports import SweepReport, fmt, write_csv

SMALL = {"radii": [0.1, 0.2, 0.4, 0.8], "directions": "x"}


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write_cfg(tmp_path, {"experiment": "spectrum", "grid": SMALL}))
    assert cfg["model"]["n_max"] == 2
    assert cfg["options"]["s"] == 1.0
    assert cfg["model"]["p_c"] == 1 / 40


def test_json_config_accepted(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"grid": SMALL}))
    assert parse_config(p)["effective"]["n_modes"] == 8


@pytest.mark.parametrize("bad,field", [
    ({"grid": SMALL, "model": {"alpha": -1e-3}}, "model/alpha"),
    ({"grid": SMALL, "model": {"bogus": 1}}, "model"),
    ({"grid": SMALL, "options": {"s": 0.4}}, "options/s"),
    ({"grid": {"radii": [0.0, 1.0]}}, "grid"),
])
def test_invalid_configs_name_field(bad, field):
    with pytest.raises(ConfigError, match=f"config field {field}"):
        validate(bad)


def test_sigma_on_shell_is_snapped_with_warning():
    with pytest.warns(UserWarning, match="snapped"):
        cfg = validate({"grid": SMALL, "model": {"sigma": 0.2}})
    assert cfg["effective"]["sigma"] == [pytest.approx(0.15)]
    with pytest.raises(ConfigError, match="model/sigma"):
        validate({"grid": SMALL, "model": {"sigma": 0.2}, "strict": True})


def test_config_hash_ignores_output_location():
    a = validate({"grid": SMALL, "out": "x"})
    b = validate({"grid": SMALL, "out": "y", "jobs": 3})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(validate({"grid": SMALL, "seed": 1}))


def test_presets_validate():
    for name, p in PRESETS.items():
        validate({**p, "experiment": name})


def test_fmt_and_header_only_csv(tmp_path):
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "1" and fmt("a,b") == '"a,b"'
    write_csv(tmp_path / "e.csv", SweepReport(["a", "b"]))
    assert (tmp_path / "e.csv").read_bytes() == b"a,b\n"


def test_spectrum_point(tmp_path, capsys):
    cfg = {"experiment": "spectrum", "grid": SMALL, "model": {"P": [0.5, 0, 0]}}
    out = tmp_path / "run"
    assert main(["spectrum", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "spectrum.csv")))
    assert float(rows[0]["E"]) == 0.125
    man = json.loads((out / "manifest.json").read_text())
    assert man["passed"] and man["seed"] == 0 and "spectrum.csv" in man["files"]


def test_J_below_ground_exits_2(tmp_path, capsys):
    cfg = {"experiment": "lap-sweep", "grid": SMALL, "model": {"n_max": 1},
           "options": {"J": [-0.1, 0.5]}}
    rc = main(["lap-sweep", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "interval not ⊂ (E, ∞)" in capsys.readouterr().err
    # the partial manifest records the failure
    assert "interval" in json.loads((tmp_path / "o" / "manifest.json").read_text())["error"]


def test_config_error_exits_2(tmp_path, capsys):
    cfg = {"experiment": "spectrum", "grid": SMALL, "model": {"alpha": -1}}
    assert main(["spectrum", "--config", str(write_cfg(tmp_path, cfg))]) == 2
    assert "model/alpha" in capsys.readouterr().err


def test_subcommand_mismatch_exits_2(tmp_path):
    cfg = {"experiment": "nelson", "grid": SMALL}
    assert main(["spectrum", "--config", str(write_cfg(tmp_path, cfg))]) == 2


def test_failed_check_exits_1(tmp_path):
    # an impossible tolerance turns the brute-force comparison into a failure
    cfg = {"experiment": "spectrum", "grid": SMALL, "model": {"alpha": 0.0},
           "options": {"P_list": [[0.3, 0, 0]]}, "thresholds": {"dispersion_tol": -1.0}}
    assert main(["spectrum", "--config", str(write_cfg(tmp_path, cfg)),
                 "--out", str(tmp_path / "o")]) == 1


def test_snapped_sigma_echoed(tmp_path, capsys):
    cfg = {"experiment": "transfer-check", "grid": {"radii": [0.03, 0.06, 0.12, 0.24, 0.48, 0.96],
                                                   "directions": "tetrahedron"},
           "model": {"P": [0.02, 0, 0], "alpha": 1e-4, "sigma": 0.24, "n_high": 1, "n_low": 1}}
    with pytest.warns(UserWarning):
        rc = main(["transfer-check", "--config", str(write_cfg(tmp_path, cfg)),
                   "--out", str(tmp_path / "o")])
    assert rc == 0
    assert "sigma 0.24 ->" in capsys.readouterr().err


@pytest.mark.parametrize("jobs", [1, 2])
def test_rerun_is_byte_identical(tmp_path, jobs):
    cfg = {"experiment": "spectrum", "grid": SMALL,
           "options": {"P_scan": {"values": np.linspace(0, 1.5, 7).tolist()}}}
    p = write_cfg(tmp_path, cfg)
    main(["spectrum", "--config", str(p), "--out", str(tmp_path / "a")])
    main(["spectrum", "--config", str(p), "--out", str(tmp_path / "b"), "--jobs", str(jobs)])
    for name in ("spectrum.csv", "E_of_P.dat", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert b"\r" not in (tmp_path / "a" / "spectrum.csv").read_bytes()
