#!/usr/bin/env python3
"""
tenslet - File Format Tests
Binary coefficient/sequence files, rule text files and bundles.
"""

import os
import sys

import numpy as np
import pytest
import yaml
from numpy.testing import assert_array_equal

# Add src to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.errors import ConfigurationError, FormatError, ShapeError, VersionError
from src.filter_bank import tight_bank
from src.io_formats import (
    HEADER_DTYPE,
    MANIFEST,
    check_bundle_scheme,
    read_bundle,
    read_coefficients,
    read_error_map,
    read_manifest,
    read_rule,
    read_sequence,
    write_bundle,
    write_coefficients,
    write_error_map,
    write_rule,
    write_sequence,
)
from src.needlet_transform import LevelScheme, decompose, reconstruct
from src.vsh import VectorCoeffPair, vsh_synthesis


@pytest.fixture(scope="module")
def decomposition():
    rng = np.random.default_rng(7)
    scheme = LevelScheme.gauss_legendre(2, 4)
    coeffs = VectorCoeffPair.random(scheme.bandlimit(4), rng, real_field=True)
    return decompose(coeffs, scheme, tight_bank())


def test_coefficients_round_trip(tmp_path, rng):
    """Test coefficient files are bit-exact."""
    coeffs = VectorCoeffPair.random(7, rng)
    coeffs.certified = False
    path = tmp_path / "c.coef"
    write_coefficients(path, coeffs)
    back = read_coefficients(path)
    assert back.L == 7
    assert back.certified is False
    assert_array_equal(back.divc, coeffs.divc)
    assert_array_equal(back.curlc, coeffs.curlc)
    assert path.stat().st_size == HEADER_DTYPE.itemsize + 63 * 4 * 8


def test_sequence_round_trip(tmp_path, gl3, rng):
    """Test sequence files are bit-exact and bound to a rule."""
    seq = vsh_synthesis(VectorCoeffPair.random(8, rng), gl3)
    path = tmp_path / "s.seq"
    write_sequence(path, seq)
    back = read_sequence(path, gl3)
    assert back.L == 8 and back.certified
    assert_array_equal(back.values, seq.values)


def test_sequence_node_count_mismatch(tmp_path, gl3, gl4, rng):
    """Test reading a sequence against the wrong rule."""
    path = tmp_path / "s.seq"
    write_sequence(path, vsh_synthesis(VectorCoeffPair.random(4, rng), gl3))
    with pytest.raises(ShapeError):
        read_sequence(path, gl4)


def test_truncated_file(tmp_path, rng):
    """Test a payload shorter than the header promises."""
    path = tmp_path / "c.coef"
    write_coefficients(path, VectorCoeffPair.random(3, rng))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError, match="truncated"):
        read_coefficients(path)
    path.write_bytes(b"TNL")
    with pytest.raises(FormatError):
        read_coefficients(path)


def test_bad_magic_version_and_kind(tmp_path, gl3, rng):
    """Test header validation."""
    path = tmp_path / "c.coef"
    write_coefficients(path, VectorCoeffPair.random(2, rng))
    data = bytearray(path.read_bytes())

    bad_version = bytearray(data)
    bad_version[4] = 99
    path.write_bytes(bytes(bad_version))
    with pytest.raises(VersionError):
        read_coefficients(path)

    bad_magic = bytearray(data)
    bad_magic[0:4] = b"NOPE"
    path.write_bytes(bytes(bad_magic))
    with pytest.raises(FormatError):
        read_coefficients(path)

    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        read_sequence(path, gl3)


def test_rule_round_trip(tmp_path, gl3):
    """Test rule text files keep nodes, weights, kind and level."""
    path = tmp_path / "gl_3.txt"
    write_rule(path, gl3)
    back = read_rule(path)
    assert back.kind == "gl"
    assert back.level == 3
    assert back.exactness_degree == 16
    np.testing.assert_allclose(back.points, gl3.points, rtol=0, atol=1e-15)
    assert_array_equal(back.weights, gl3.weights)


def test_rule_without_weights_is_a_design(tmp_path):
    """Test a weightless file loads with equal weights."""
    path = tmp_path / "oct.txt"
    path.write_text("# degree 3\n1 0 0\n-1 0 0\n0 1 0\n0 -1 0\n0 0 1\n0 0 -1\n")
    rule = read_rule(path)
    assert rule.kind == "sd"
    assert rule.N == 6


def test_error_map(tmp_path, gl3):
    """Test the per-node error CSV layout."""
    T = np.ones((gl3.N, 3))
    E = np.full((gl3.N, 3), 1e-15)
    path = tmp_path / "error_map.csv"
    write_error_map(path, gl3, T, E)
    df = read_error_map(path)
    assert list(df.columns) == ["x", "y", "z", "Tx", "Ty", "Tz", "Ex", "Ey", "Ez"]
    assert len(df) == gl3.N
    assert_array_equal(df[["x", "y", "z"]].to_numpy(), gl3.points)
    with pytest.raises(ShapeError):
        write_error_map(path, gl3, T[:-1], E)


def test_bundle_round_trip_is_bit_exact(tmp_path, decomposition):
    """Test reconstruction from a bundle matches in-memory reconstruction to 0 ulp."""
    write_bundle(tmp_path, decomposition, extra={"field": "a"})
    manifest = read_manifest(tmp_path)
    assert manifest["bank"] == "tenslet-r2"
    assert manifest["field"] == "a"
    assert manifest["rules"][4] == {"kind": "gl", "level": 4}
    assert sorted(manifest["files"]) == ["approx", "detail_2_1", "detail_2_2", "detail_3_1", "detail_3_2"]

    d = read_bundle(tmp_path)
    for (_, seq), (_, orig) in zip(d.sequences(), decomposition.sequences()):
        assert_array_equal(seq.values, orig.values)
    assert_array_equal(reconstruct(d).values, reconstruct(decomposition).values)


def test_bundle_without_mirrors(tmp_path, decomposition):
    """Test bundles written without coefficient mirrors still reconstruct."""
    d = read_bundle(write_bundle(tmp_path / "full", decomposition))
    d.clear_mirrors()
    d2 = read_bundle(write_bundle(tmp_path / "bare", d))
    assert d2.approx_coeffs is None and d2.detail_coeffs == {}
    np.testing.assert_allclose(reconstruct(d2).values, reconstruct(decomposition).values, atol=1e-12)


def test_bundle_with_rule_file(tmp_path, gl3, rng):
    """Test rules read from files are stored next to the sequences."""
    write_rule(tmp_path / "gl_3.txt", gl3)
    rule = read_rule(tmp_path / "gl_3.txt")
    scheme = LevelScheme.from_rules(3, 3, {3: rule})
    d = decompose(VectorCoeffPair.random(4, rng), scheme, tight_bank())
    bundle = tmp_path / "bundle"
    write_bundle(bundle, d)
    assert read_manifest(bundle)["rules"][3] == {"kind": "gl", "file": "rule_3.txt"}
    back = read_bundle(bundle)
    np.testing.assert_allclose(back.scheme.rules[3].points, gl3.points, rtol=0, atol=1e-15)
    assert_array_equal(reconstruct(back).values, reconstruct(d).values)


def _edit_manifest(directory, **changes):
    path = directory / MANIFEST
    manifest = yaml.safe_load(path.read_text())
    manifest.update(changes)
    path.write_text(yaml.safe_dump(manifest))


def test_bundle_unknown_bank(tmp_path, decomposition):
    """Test a manifest naming an unregistered bank."""
    write_bundle(tmp_path, decomposition)
    _edit_manifest(tmp_path, bank="meyer-r3")
    with pytest.raises(ConfigurationError, match="Unknown filter bank id"):
        read_bundle(tmp_path)


def test_bundle_version_and_missing_manifest(tmp_path, decomposition):
    """Test manifest version checks."""
    with pytest.raises(FormatError):
        read_manifest(tmp_path)
    write_bundle(tmp_path, decomposition)
    _edit_manifest(tmp_path, format_version=2)
    with pytest.raises(VersionError):
        read_bundle(tmp_path)


def test_check_bundle_scheme(tmp_path, decomposition):
    """Test requested levels must agree with the bundle."""
    write_bundle(tmp_path, decomposition)
    manifest = read_manifest(tmp_path)
    check_bundle_scheme(manifest, 2, 4, "degree")
    check_bundle_scheme(manifest, None, None, None)
    with pytest.raises(ConfigurationError):
        check_bundle_scheme(manifest, 3, None, None)
    with pytest.raises(ConfigurationError):
        check_bundle_scheme(manifest, None, None, "eigenvalue")
