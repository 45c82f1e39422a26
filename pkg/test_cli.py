#!/usr/bin/env python3
"""
tenslet - Command Line, Configuration and Monitor Tests
"""

import os
import re
import sys

import numpy as np
import pandas as pd
import pytest
import yaml
from loguru import logger

# Add src to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, RunConfig, build_parser
from src.config import DEFAULTS, Config
from src.errors import ConfigurationError, ResourceError
from src.fields import field_A, wind_grid_from_coeffs
from src.io_formats import read_manifest, read_sequence, write_coefficients
from src.main import main
from src.monitor import ResourceMonitor, timed
from src.sphere_geom import gauss_legendre_rule


@pytest.fixture(autouse=True)
def restore_logging():
    yield
    logger.remove()
    logger.add(sys.stderr, level="WARNING")


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({"logging": {"level": "WARNING"}, "transform": {"J0": 2, "J": 4}}))
    return str(path)


def run(config_file, *argv):
    return main(["--config", config_file, *argv])


def test_config_defaults_when_missing(tmp_path):
    """Test a missing file falls back to the built-in defaults."""
    config = Config(str(tmp_path / "absent.yaml"))
    assert config.get("transform.J0") == DEFAULTS["transform"]["J0"]
    assert config.get("transform.bank") == "tenslet-r2"
    assert config.get("no.such.key", 42) == 42


def test_config_merges_and_validates(config_file):
    """Test partial files merge over defaults and updates are validated."""
    config = Config(config_file)
    assert config.get("transform.J") == 4
    assert config.get("transform.convention") == "degree"
    config.set("transform.convention", "eigenvalue")
    assert config.get("transform.convention") == "eigenvalue"
    with pytest.raises(ConfigurationError):
        config.update("transform.J", 1)
    with pytest.raises(ConfigurationError):
        config.update("runtime.threads", 0)


def test_config_save_and_reload(tmp_path, config_file):
    """Test saved configuration reloads unchanged."""
    config = Config(config_file)
    config.update("fields.distance", "chord")
    target = tmp_path / "saved.yaml"
    config.save(str(target))
    assert Config(str(target)).get("fields.distance") == "chord"


def test_config_rejects_bad_values(tmp_path):
    """Test invalid convention and unparsable YAML."""
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"transform": {"convention": "wavelength"}}))
    with pytest.raises(ConfigurationError):
        Config(str(bad))
    broken = tmp_path / "broken.yaml"
    broken.write_text("transform: [unclosed\n")
    with pytest.raises(ConfigurationError):
        Config(str(broken))


def test_config_data_dir_from_environment(monkeypatch, config_file, tmp_path):
    """Test TENSLET_DATA sets the design directory."""
    monkeypatch.setenv("TENSLET_DATA", str(tmp_path))
    assert Config(config_file).get("quadrature.data_dir") == str(tmp_path)


def test_run_config_resolves_data_dir(monkeypatch, config_file, tmp_path):
    """Test relative paths fall back to the data directory."""
    (tmp_path / "design.txt").write_text("# degree 1\n0 0 1\n0 0 -1\n")
    monkeypatch.setenv("TENSLET_DATA", str(tmp_path))
    config = Config(config_file)
    args = build_parser().parse_args(["transform", "decompose", "--rule", "sd:design.txt"])
    rc = RunConfig.from_args(args, config)
    assert rc.J0 == 2 and rc.J == 4
    assert rc.resolve_path("design.txt") == tmp_path / "design.txt"
    with pytest.raises(ConfigurationError):
        rc.resolve_path("missing.txt")


def test_run_config_validation(config_file):
    """Test invalid field and rule selections."""
    config = Config(config_file)
    parser = build_parser()
    with pytest.raises(ConfigurationError):
        RunConfig.from_args(parser.parse_args(["transform", "decompose", "--field", "d"]), config)
    with pytest.raises(ConfigurationError):
        RunConfig.from_args(parser.parse_args(["transform", "decompose", "--rule", "healpix"]), config)
    with pytest.raises(ConfigurationError):
        RunConfig.from_args(parser.parse_args(["transform", "decompose", "-J", "1"]), config)


def test_monitor_guard(config_file):
    """Test the level guard and the memory estimate."""
    monitor = ResourceMonitor(Config(config_file))
    assert monitor.estimate_level_bytes(8) > monitor.estimate_level_bytes(7) > 0
    monitor.check_level(3)
    with pytest.raises(ResourceError):
        monitor.check_level(10)
    metrics = monitor.update_system_metrics()
    assert metrics["rss_bytes"] > 0
    assert metrics["cpu_count"] >= 1


def test_timed_median():
    """Test repeat and warmup counting."""
    calls = []
    median, samples, result = timed(lambda: calls.append(1) or len(calls), repeats=3, warmup=2)
    assert len(samples) == 3
    assert len(calls) == 5
    assert result == 5
    assert median >= 0.0


def test_verify_filters_pass(config_file, capsys):
    """Test the filter suite on the shipped bank."""
    assert run(config_file, "verify", "filters") == EXIT_OK
    out = capsys.readouterr().out
    assert "5/5 checks passed" in out
    assert "✗" not in out


def test_verify_reports_injected_defect(config_file, capsys):
    """Test a perturbed bank fails the filter suite with exit code 1."""
    assert run(config_file, "verify", "filters", "--defect", "b1:0.9") == EXIT_FAILED
    out = capsys.readouterr().out
    assert "✗ filters.partition" in out


def test_verify_frame_suite(config_file):
    """Test Parseval and reconstruction on random real coefficients."""
    assert run(config_file, "verify", "frame", "--seed", "3") == EXIT_OK


@pytest.mark.slow
def test_verify_vsh_suite(config_file, capsys):
    """Test Gram, cross-family and cross-route checks of the harmonic suite."""
    assert run(config_file, "verify", "vsh") == EXIT_OK
    out = capsys.readouterr().out
    for name in ("vsh.orthonormality", "vsh.cross_family", "vsh.cross_route"):
        assert f"✓ {name}" in out
    assert "(tol 1e-11)" in out
    assert "3/3 checks passed" in out


@pytest.mark.slow
def test_verify_all_suites(config_file, capsys):
    """Test every suite passes on the shipped bank."""
    assert run(config_file, "verify", "all") == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("✓") == 10
    assert "✗" not in out
    assert "10/10 checks passed" in out


def test_usage_errors(config_file):
    """Test bad arguments and bad values map to exit code 2."""
    assert run(config_file, "verify", "everything") == EXIT_USAGE
    assert run(config_file, "verify", "filters", "--defect", "b1") == EXIT_USAGE
    assert run(config_file, "quad", "gl", "--level", "0") == EXIT_USAGE
    assert run(config_file, "quad", "gl") == EXIT_USAGE
    assert run(config_file, "quad", "sd", "--file", "no_such_design.txt") == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_quad_writes_rule(config_file, tmp_path, capsys):
    """Test quad gl output line and rule file."""
    out = tmp_path / "out"
    assert run(config_file, "quad", "gl", "--level", "3", "--out", str(out)) == EXIT_OK
    line = capsys.readouterr().out
    assert "kind=gl N=162 exactness=16" in line
    assert (out / "gl_3.txt").is_file()


def test_transform_decompose_and_reconstruct(config_file, tmp_path, capsys):
    """Test Field A through decompose, the bundle and reconstruct."""
    out = tmp_path / "bundle"
    assert run(config_file, "transform", "decompose", "--field", "a", "--out", str(out)) == EXIT_OK
    text = capsys.readouterr().out
    assert re.search(r"level=4 n=578 t_dec=\S+s t_rec=\S+s", text)
    error = float(re.search(r"relative_error=(\S+)", text).group(1))
    assert error < 1e-12
    assert float(re.search(r"parseval_deviation=(\S+)", text).group(1)) < 1e-12

    manifest = read_manifest(out)
    assert manifest["field"] == "a"
    assert manifest["scheme"] == {"J0": 2, "J": 4, "convention": "degree"}
    errors = pd.read_csv(out / "error_map.csv")
    assert len(errors) == 578

    assert run(config_file, "transform", "reconstruct", "--bundle", str(out)) == EXIT_OK
    assert "level=4 n=578" in capsys.readouterr().out
    rec = read_sequence(out / "reconstructed.seq", gauss_legendre_rule(4))
    assert rec.rule.N == 578

    assert run(config_file, "transform", "reconstruct", "--bundle", str(out), "-J0", "3") == EXIT_USAGE


def test_transform_from_coefficient_file(config_file, tmp_path, capsys):
    """Test --field file: with a stored coefficient pair."""
    path = tmp_path / "field.coef"
    write_coefficients(path, field_A())
    out = tmp_path / "out"
    args = ["transform", "decompose", "--field", f"file:{path}", "-J", "3", "-J0", "1", "--out", str(out)]
    assert run(config_file, *args) == EXIT_OK
    assert "level=3 n=162" in capsys.readouterr().out


def test_transform_from_wind_grid(config_file, tmp_path, capsys):
    """Test --field wind: with a lat-lon CSV."""
    grid = wind_grid_from_coeffs(field_A(), np.arange(-88.0, 89.0, 2.0), np.arange(0.0, 360.0, 2.0))
    path = tmp_path / "wind.csv"
    grid.to_csv(path)
    out = tmp_path / "out"
    assert run(config_file, "transform", "decompose", "--field", f"wind:{path}", "--out", str(out)) == EXIT_OK
    text = capsys.readouterr().out
    relative = float(re.search(r"relative_error=(\S+)", text).group(1))
    corrected = float(re.search(r"corrected_error=(\S+)", text).group(1))
    residual = float(re.search(r"projection_residual=(\S+)", text).group(1))
    assert corrected < 1e-12
    assert residual > 0.0
    assert relative == pytest.approx(residual + corrected, rel=1e-3)

    errors = pd.read_csv(out / "error_map.csv", float_precision="round_trip")
    x = errors[["x", "y", "z"]].to_numpy()
    T = errors[["Tx", "Ty", "Tz"]].to_numpy()
    rec = T - errors[["Ex", "Ey", "Ez"]].to_numpy()
    assert np.max(np.abs(np.einsum("ij,ij->i", x, T))) < 1e-10
    assert np.max(np.abs(np.einsum("ij,ij->i", x, rec))) < 1e-10


def test_bench_table(config_file, tmp_path, capsys):
    """Test the timing table over a small level range."""
    out = tmp_path / "out"
    assert run(config_file, "bench", "--jmin", "2", "--jmax", "3", "-J0", "1", "--out", str(out)) == EXIT_OK
    table = pd.read_csv(out / "bench.csv")
    assert list(table["J"]) == [2, 3]
    assert list(table["N"]) == [50, 162]
    assert list(table["M"]) == [24, 80]
    assert np.isnan(table["ratio_dec"][0])
    assert table["ratio_dec"][1] > 0


@pytest.mark.slow
def test_bench_scaling(config_file, tmp_path):
    """Test counts and time ratios from J=5 to J=6."""
    out = tmp_path / "out"
    assert run(config_file, "bench", "--jmin", "5", "--jmax", "6", "--out", str(out)) == EXIT_OK
    table = pd.read_csv(out / "bench.csv")
    assert list(table["N"]) == [2178, 8450]
    assert list(table["M"]) == [1088, 4224]
    assert table["ratio_dec"][1] <= 8.0
    assert table["ratio_rec"][1] <= 8.0


def test_bench_guard(config_file):
    """Test levels above the guarded maximum need --force."""
    assert run(config_file, "bench", "--jmin", "12", "--jmax", "12") == EXIT_USAGE
