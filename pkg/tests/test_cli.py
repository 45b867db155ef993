import json
from pathlib import Path

import pytest

from qha.cli import main
from qha.config import ExperimentConfig, lebesgue_measure, load_config, parse_region
from qha.errors import ConfigError
from qha.runner import format_number, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = {
    "kind": "accumulate",
    "region": "disk(1)",
    "scales": [1, 2],
    "state_n": 128,
    "state_T": 12.0,
    "quad_resolution": [16, 16],
    "scale_quadrature": True,
    "compute_bound": False,
}


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_config_roundtrip(path):
    cfg = load_config(str(path))
    again = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg and again.digest() == cfg.digest()


def test_digest_ignores_out_dir():
    a = ExperimentConfig.from_dict(dict(SMALL, out_dir="x"))
    b = ExperimentConfig.from_dict(dict(SMALL, out_dir="y"))
    assert a.digest() == b.digest()
    assert a.digest() != a.replace(scales=[1, 4]).digest()


@pytest.mark.parametrize("bad", [
    {"deltas": [1.5]},
    {"state_n": 100},
    {"quad_resolution": [30, 30]},
    {"unknown_key": 1},
    {"group": "affine"},
    {"window": "log-gaussian(1, 0.3)"},
    {"region": "triangle(1)"},
    {"scales": [3], "scale_quadrature": True},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(dict(SMALL, **bad))


def test_region_parsing():
    assert parse_region("box(0, 1, 1, 2)", 2).indicator([[0.5, 1.5]])[0]
    assert parse_region("disk(2, 1, 1)", 2).indicator([[2.5, 1.0]])[0]
    assert lebesgue_measure("annulus(1, 2)") == pytest.approx(3 * 3.141592653589793)
    with pytest.raises(ConfigError):
        parse_region("box(1, 0, 0, 1)", 2)


def test_csv_number_format():
    assert format_number(0.1) == "0.10000000000000001"
    assert format_number(3) == "3" and format_number(None) == ""


def test_cli_success_and_report(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["accumulate", "--config", _write(tmp_path, SMALL), "--out", str(out), "--quiet"])
    assert code == 0 and capsys.readouterr().out == ""
    files = {p.name for p in out.iterdir()}
    assert {"spectrum.csv", "accumulation.csv", "manifest.json", "report.md", "timings.tsv"} <= files
    assert sum(f.startswith("ratio_delta_") for f in files) == 3
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["files"]) == files - {"manifest.json", "timings.tsv"}
    assert man["calibration"]["residual"] < 1e-2
    assert (out / "accumulation.csv").read_bytes().startswith(b"k,mu_Ek,delta,count,ratio,bound_rhs\r\n")


def test_report_without_deltas(tmp_path):
    cfg = ExperimentConfig.from_dict(dict(SMALL, deltas=[], out_dir=str(tmp_path / "r")))
    run(cfg)
    files = {p.name for p in (tmp_path / "r").iterdir()}
    assert "plunge.svg" in files and not any(f.startswith("ratio_delta_") for f in files)
    assert "spectra only" in (tmp_path / "r" / "report.md").read_text()


def test_svg_reproducible(tmp_path):
    a = run(ExperimentConfig.from_dict(dict(SMALL, out_dir=str(tmp_path / "a"))))
    b = run(ExperimentConfig.from_dict(dict(SMALL, out_dir=str(tmp_path / "b"))))
    for name in a.files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_traceid_report_table(tmp_path):
    cfg = {"kind": "traceid", "region": "disk(1)", "sequence": "none", "state_n": 128, "state_T": 12.0,
           "quad_resolution": [32, 32], "hs_resolution": [32, 32], "overlap_resolution": [64, 64]}
    assert main(["traceid", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "t"), "--quiet"]) == 0
    recs = json.loads((tmp_path / "t" / "traceid.json").read_text())["records"]
    assert [r["identity"] for r in recs] == ["trace", "trace", "trace-of-square"]
    assert "| trace-of-square |" in (tmp_path / "t" / "report.md").read_text()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["accumulate", "--config", _write(tmp_path, dict(SMALL, deltas=[2.0]))]) == 2
    assert main(["folner", "--config", _write(tmp_path, SMALL)]) == 2
    assert main(["accumulate", "--config", str(tmp_path / "missing.json")]) == 4
    (tmp_path / "blocker").write_text("")
    assert main(["accumulate", "--config", _write(tmp_path, SMALL), "--out", str(tmp_path / "blocker" / "x")]) == 4
    capsys.readouterr()
    tiny = {"kind": "traceid", "region": "disk(1)", "sequence": "none", "state_n": 128, "state_T": 12.0,
            "quad_resolution": [32, 32], "hs_window": [[-0.3, 0.3], [-0.3, 0.3]], "hs_resolution": [8, 8],
            "overlap_resolution": [32, 32]}
    assert main(["traceid", "--config", _write(tmp_path, tiny), "--out", str(tmp_path / "g")]) == 3
    assert "truncation" in capsys.readouterr().err


def test_resolution_override(tmp_path):
    out = tmp_path / "o"
    assert main(["accumulate", "--config", _write(tmp_path, SMALL), "--out", str(out), "--resolution", "8",
                 "--quiet"]) == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["quad_resolution"] == [8, 8]
