#!/usr/bin/env python3
"""
tenslet - Needlet Transform Tests
Decomposition, reconstruction, Parseval and needlet evaluation.
"""

import os
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

# Add src to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from conftest import random_unit_points
from src.errors import CertificateError, ConfigurationError, ContractError, DomainError, FormatError
from src.filter_bank import FilterKind, tight_bank
from src.needlet_transform import (
    Convention,
    LevelScheme,
    NeedletKind,
    decompose,
    downsample,
    eval_needlet,
    filter_argument,
    level_bandlimit,
    lowpass_multiplier,
    needlet_kernel,
    parseval_report,
    reconstruct,
    reconstruct_coefficients,
    spectral_convolve,
    upsample,
)
from src.sphere_geom import gauss_legendre_rule
from src.vsh import TangentSampleSeq, VectorCoeffPair, sample_points, vsh_analysis, vsh_synthesis


@pytest.fixture(scope="module")
def scheme35():
    return LevelScheme.gauss_legendre(3, 5)


@pytest.fixture(scope="module")
def bank():
    return tight_bank()


def test_bandlimits():
    """Test L_j for both conventions."""
    assert [level_bandlimit(j) for j in range(1, 6)] == [1, 2, 4, 8, 16]
    assert [level_bandlimit(j, Convention.EIGENVALUE) for j in range(2, 8)] == [1, 1, 2, 3, 5, 7]
    assert_allclose(filter_argument(3, [1, 2, 4]), [0.125, 0.25, 0.5])
    assert_allclose(filter_argument(4, [1, 3], "eigenvalue"), [0.125, 0.75])


@pytest.mark.parametrize(
    "J, N, M, kept", [(5, 2178, 1088, 288), (6, 8450, 4224, 1088), (7, 33282, 16640, 4224), (8, 132098, 66048, 16640)]
)
def test_level_counts(J, N, M, kept):
    """Test node count, rule capacity and retained coefficients at the finest level."""
    scheme = LevelScheme.from_rules(J, J, {J: gauss_legendre_rule(J)})
    assert scheme.node_count(J) == N
    assert scheme.coefficient_capacity() == M
    assert scheme.retained_count(J) == kept
    assert scheme.retained_count(J) < scheme.coefficient_capacity()


def test_scheme_validation(gl3):
    """Test level ranges and rule exactness checks."""
    with pytest.raises(ConfigurationError):
        LevelScheme.gauss_legendre(4, 3)
    with pytest.raises(ConfigurationError):
        LevelScheme.gauss_legendre(0, 3)
    with pytest.raises(ConfigurationError):
        LevelScheme.from_rules(3, 4, {3: gl3, 4: gl3})
    with pytest.raises(ConfigurationError):
        LevelScheme.from_rules(3, 4, {3: gl3})


def test_scheme_from_empty_design_directory(tmp_path):
    """Test that missing designs are reported."""
    with pytest.raises(FormatError):
        LevelScheme.from_design_directory(2, 3, tmp_path)


def test_scheme_describe(scheme35):
    """Test the level summary."""
    desc = scheme35.describe()
    assert desc["J0"] == 3 and desc["J"] == 5
    assert [lv["L"] for lv in desc["levels"]] == [4, 8, 16]
    assert [lv["N"] for lv in desc["levels"]] == [162, 578, 2178]
    assert scheme35.matches(LevelScheme.gauss_legendre(3, 5))
    assert not scheme35.matches(LevelScheme.gauss_legendre(3, 5, Convention.EIGENVALUE))


def test_decomposition_layout(scheme35, bank, rng):
    """Test which rule carries each stored sequence."""
    d = decompose(VectorCoeffPair.random(16, rng), scheme35, bank)
    assert d.approx.rule is scheme35.rules[3]
    assert sorted(d.details) == [3, 4]
    assert d.details[4][0].rule is scheme35.rules[5]
    assert d.details[3][1].rule is scheme35.rules[4]
    assert [key for key, _ in d.sequences()] == [
        ("approx", 3, 0),
        ("detail", 3, 1),
        ("detail", 3, 2),
        ("detail", 4, 1),
        ("detail", 4, 2),
    ]
    assert d.coefficient_counts() == {"per_family": 1088, "total": 2176, "retained": 288}


@pytest.mark.parametrize("convention", [Convention.DEGREE, Convention.EIGENVALUE])
def test_parseval_and_reconstruction(convention, bank, rng):
    """Test energy conservation and perfect reconstruction of a real field."""
    scheme = LevelScheme.gauss_legendre(3, 5, convention)
    L = scheme.bandlimit(5)
    coeffs = VectorCoeffPair.random(L, rng, real_field=True)
    seq = vsh_synthesis(coeffs, scheme.rules[5])
    d = decompose(seq, scheme, bank)
    assert d.norm2() == pytest.approx(coeffs.norm2(), rel=1e-12)

    report = parseval_report(d, seq.norm2())
    assert report.deviation < 1e-12
    assert list(report.table.columns) == ["part", "level", "filter", "energy"]
    assert len(report.table) == 5

    rebuilt = reconstruct(d)
    assert np.max(np.abs(rebuilt.values - seq.values)) < 1e-12 * np.max(np.abs(seq.values))
    assert rebuilt.rule is scheme.rules[5]


def test_reconstruction_without_mirrors(scheme35, bank, rng):
    """Test that re-analysing stored sequences matches the mirrored path."""
    coeffs = VectorCoeffPair.random(16, rng)
    d = decompose(coeffs, scheme35, bank)
    via_mirrors = reconstruct_coefficients(d)
    d.clear_mirrors()
    via_sequences = reconstruct_coefficients(d, use_mirrors=False)
    assert_allclose(via_sequences.divc, via_mirrors.divc, atol=1e-12)
    assert_allclose(via_sequences.curlc, coeffs.curlc, atol=1e-12)


def test_drop_details_is_lowpass(scheme35, bank, rng):
    """Test approximation-only reconstruction equals the product of low-pass masks."""
    coeffs = VectorCoeffPair.random(16, rng)
    d = decompose(coeffs, scheme35, bank)
    low = reconstruct_coefficients(d, drop_details=True)
    expected = coeffs.multiplied(lowpass_multiplier(scheme35, bank))
    assert_allclose(low.divc, expected.divc, atol=1e-13)
    assert_allclose(low.curlc, expected.curlc, atol=1e-13)


def test_parseval_defect_is_reported(bank):
    """Test a scaled high-pass filter shows up as an energy deficit at degree 8."""
    scheme = LevelScheme.gauss_legendre(4, 5)
    coeffs = VectorCoeffPair.zeros(16)
    coeffs.set(8, 3, divc=1.0, curlc=0.5j)
    perturbed = bank.scaled(FilterKind.B1, 0.9)
    d = decompose(coeffs, scheme, perturbed)
    report = parseval_report(d, coeffs.norm2())
    assert report.deviation == pytest.approx(0.19, abs=1e-12)


def test_reconstruct_rejects_other_bank_or_scheme(scheme35, bank, rng):
    """Test that decomposition and reconstruction must agree."""
    d = decompose(VectorCoeffPair.random(16, rng), scheme35, bank)
    with pytest.raises(ConfigurationError):
        reconstruct(d, bank=bank.scaled("B2", 0.5))
    with pytest.raises(ConfigurationError):
        reconstruct(d, scheme=LevelScheme.gauss_legendre(2, 5))


def test_uncertified_input_rejected(scheme35, bank, gl5, gl4, rng):
    """Test CertificateError and ConfigurationError on bad inputs."""
    raw = TangentSampleSeq(rule=gl5, values=np.zeros((gl5.N, 3)), L=16, certified=False)
    with pytest.raises(CertificateError):
        decompose(raw, scheme35, bank)
    wrong_rule = vsh_synthesis(VectorCoeffPair.random(8, rng), gl4)
    with pytest.raises(ConfigurationError):
        decompose(wrong_rule, scheme35, bank)
    coeffs = VectorCoeffPair.random(16, rng)
    coeffs.certified = False
    with pytest.raises(CertificateError):
        decompose(coeffs, scheme35, bank)
    with pytest.raises(CertificateError):
        decompose(VectorCoeffPair.random(20, rng), scheme35, bank)


def test_coarsest_equals_finest_is_identity(bank, rng):
    """Test J == J0: no details and the approximation is the input."""
    scheme = LevelScheme.gauss_legendre(3, 3)
    coeffs = VectorCoeffPair.random(4, rng)
    d = decompose(coeffs, scheme, bank)
    assert d.details == {}
    assert_allclose(vsh_analysis(d.approx).divc, coeffs.divc, atol=1e-12)
    assert_allclose(reconstruct_coefficients(d).curlc, coeffs.curlc, atol=1e-14)


def test_downsample_contract(scheme35, rng):
    """Test truncation refuses content above the coarser bandlimit."""
    with pytest.raises(ContractError):
        downsample(VectorCoeffPair.random(8, rng), scheme35, 4)


def test_downsample_upsample_round_trip(scheme35, rng):
    """Test the rate-changing steps on already low-passed content."""
    coeffs = VectorCoeffPair.random(4, rng).embed(8)
    seq = downsample(coeffs, scheme35, 4)
    assert seq.rule is scheme35.rules[3]
    back = upsample(seq, scheme35, 4)
    assert back.L == 8
    assert_allclose(back.divc, coeffs.divc, atol=1e-12)
    with pytest.raises(ConfigurationError):
        downsample(coeffs, scheme35, 3)


def test_spectral_convolve_uses_conjugate(bank, rng):
    """Test per-degree multiplication by a profile."""
    coeffs = VectorCoeffPair.random(8, rng)
    out = spectral_convolve(coeffs, bank.low, 4, conjugate=True)
    a = bank.low(np.arange(1, 9) / 16.0)
    assert_allclose(out.divc, coeffs.multiplied(a).divc)


def test_needlet_kernel_hermitian(rng):
    """Test K_h(x, y) = K_h(y, x)^H for real per-degree weights."""
    x, y = random_unit_points(rng, 2)
    h = rng.uniform(0.0, 1.0, 6)
    assert_allclose(needlet_kernel(h, x, y), needlet_kernel(h, y, x).conj().T, atol=1e-13)


def test_needlets_reproduce_stored_sequences(bank, rng):
    """Test stored values are inner products of the field with the needlets."""
    scheme = LevelScheme.gauss_legendre(2, 3)
    fine = scheme.rules[3]
    f = VectorCoeffPair.random(4, rng, real_field=True)
    d = decompose(f.multiplied(bank.gen_low(scheme.argument(3))), scheme, bank)
    f_nodes = sample_points(f, fine)

    def inner(j, k, kind):
        total = np.zeros(3, dtype=complex)
        for q in range(fine.N):
            K = eval_needlet(scheme, bank, j, k, kind, fine.points[q])
            total += fine.weights[q] * (K.conj().T @ f_nodes[q])
        return total

    for k in (0, 17, 80):
        assert_allclose(inner(2, k, NeedletKind.HIGH1), d.details[2][0].values[k], atol=1e-12)
    for k in (0, 11):
        assert_allclose(inner(2, k, NeedletKind.LOW), d.approx.values[k], atol=1e-12)


def test_eval_needlet_level_checks(scheme35, bank):
    """Test level and filter ranges of eval_needlet."""
    x = [1.0, 0.0, 0.0]
    with pytest.raises(DomainError):
        eval_needlet(scheme35, bank, 5, 0, "HIGH1", x)
    with pytest.raises(DomainError):
        eval_needlet(scheme35, bank, 6, 0, "LOW", x)
    with pytest.raises(DomainError):
        eval_needlet(scheme35, bank, 3, scheme35.node_count(3), "LOW", x)
