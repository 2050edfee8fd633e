import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from iosac import config as cf
from iosac.cli import main
from iosac.errors import ConfigError


def write_cfg(tmp_path, body, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(body))
    return p


def test_include_merges_and_overrides(tmp_path):
    p = write_cfg(tmp_path, {"include": ["default.yaml"], "ring": {"radius_um": 50.0}})
    cfg = cf.load_config(p)
    assert cfg["ring"]["radius_um"] == 50.0
    assert cfg["ring"]["rho"] == 0.75
    assert cfg["materials"]["SiN"]["index"] == 2.0


def test_include_cycle(tmp_path):
    write_cfg(tmp_path, {"include": ["b.yaml"]}, "a.yaml")
    write_cfg(tmp_path, {"include": ["a.yaml"]}, "b.yaml")
    with pytest.raises(ConfigError, match="cycle"):
        cf.load_config(tmp_path / "a.yaml")


def test_errors_name_the_key(cfg):
    with pytest.raises(ConfigError, match="ring.radius_um"):
        cf.get({"ring": {"radius_um": "wide"}}, "ring.radius_um", kind=float)
    with pytest.raises(ConfigError, match="sensing.kappa"):
        cf.get({}, "sensing.kappa")
    bad = {**cfg, "cross_sections": {"x": {"layers": [{"material": "gold"}]}}}
    with pytest.raises(ConfigError, match=r"cross_sections.x.layers\[0\].material"):
        cf.cross_section(bad, "x")


def test_malformed_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("ring: [unclosed\n")
    with pytest.raises(ConfigError):
        cf.load_config(p)


def run_cli(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out), "--quiet"])
    return code, out


def test_exit_config_error_writes_manifest(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("ring: [unclosed\n")
    code, out = run_cli(tmp_path, "ring", "--config", str(p))
    assert code == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "ring"
    assert sorted(x.name for x in out.iterdir()) == ["manifest.json"]


def test_exit_no_guided_mode(tmp_path):
    water = {"material": "water"}
    p = write_cfg(
        tmp_path,
        {
            "include": ["default.yaml"],
            "cross_sections": {"empty": {"layers": [water, {"material": "water", "thickness_nm": 500.0}, water]}},
        },
    )
    code, _ = run_cli(tmp_path, "modesolve", "--section", "empty", "--config", str(p))
    assert code == 3


def test_exit_sweep_too_large(tmp_path):
    p = write_cfg(tmp_path, {"include": ["default.yaml"], "sweep": {"grid": {"rho": [k / 99999 for k in range(100000)]}}})
    code, out = run_cli(tmp_path, "sweep", "--config", str(p))
    assert code == 4
    assert not (out / "sweep.csv").exists()


def test_empty_sweep_writes_header(tmp_path):
    p = write_cfg(tmp_path, {"include": ["default.yaml"], "sweep": {"grid": {"rho": []}}})
    code, out = run_cli(tmp_path, "sweep", "--config", str(p))
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("rho,radius_um")


def test_unknown_figure_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["figures", "--figure", "fig9", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["sweep", "--out", str(blocker / "sub"), "--quiet"]) == 2


def test_sweep_rows_and_repeatability(tmp_path):
    code, out = run_cli(tmp_path, "sweep")
    assert code == 0
    first = (out / "sweep.csv").read_bytes()
    header, *rows = first.decode().splitlines()
    cols = header.split(",")
    s_eq = [float(r.split(",")[cols.index("S_eq_nm_riu")]) for r in rows]
    assert np.allclose(s_eq, [97, 147, 197], atol=1e-4)
    assert main(["sweep", "--out", str(out), "--quiet"]) == 0
    assert (out / "sweep.csv").read_bytes() == first


def test_fig5b_slope_matches_report(tmp_path):
    code, out = run_cli(tmp_path, "figures", "--figure", "fig5b", "--format", "csv")
    assert code == 0
    data = np.loadtxt(out / "fig5b.csv", delimiter=",", skiprows=1)
    report = json.loads((out / "fig5b_report.json").read_text())
    slope = np.polyfit(data[:, 0], data[:, 1], 1)[0]
    assert slope == pytest.approx(report["S"], rel=1e-9)
    assert report["S"] == pytest.approx(172, abs=1)


def test_figure_svg_from_csv(tmp_path):
    code, out = run_cli(tmp_path, "figures", "--figure", "fig5c")
    assert code == 0
    assert (out / "fig5c.svg").read_text().lstrip().startswith("<?xml")


def test_output_dir_from_environment(tmp_path):
    target = tmp_path / "envout"
    res = subprocess.run(
        [sys.executable, "-m", "iosac.cli", "modesolve", "--quiet", "--format", "json"],
        env={"IOSAC_OUT": str(target), "PATH": ""},
        cwd=tmp_path,
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    mode = json.loads((target / "mode_strip.json").read_text())
    assert mode["S_wg"] > 0
    assert (target / "manifest.json").exists()
