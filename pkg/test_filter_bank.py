#!/usr/bin/env python3
"""
tenslet - Filter Bank Tests
"""

import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.errors import ConfigurationError, DomainError
from src.filter_bank import (
    SHIPPED_BANK_ID,
    FilterKind,
    bank_from_id,
    eval_filter,
    nu,
    tight_bank,
    validate_bank,
    validate_continuity,
    validate_partition,
    validate_refinement,
    validate_supports,
    validate_telescoping,
)


@pytest.fixture
def bank():
    return tight_bank()


def test_nu_values():
    """Test the smooth step at its endpoints and midpoint."""
    assert nu(0.0) == 0.0
    assert nu(1.0) == pytest.approx(1.0, abs=1e-15)
    assert nu(0.5) == pytest.approx(0.5, abs=1e-15)
    t = np.linspace(0.0, 1.0, 101)
    assert np.all(np.diff(nu(t)) >= 0)


def test_branch_values(bank):
    """Test printed branch values of masks and generators."""
    assert eval_filter(bank, "A", 0.1) == 1.0
    assert eval_filter(bank, FilterKind.A, 0.25) == pytest.approx(0.0, abs=1e-15)
    assert eval_filter(bank, "B1", 0.25) == pytest.approx(1.0, abs=1e-15)
    assert eval_filter(bank, "B2", 0.25) == pytest.approx(0.0, abs=1e-15)
    assert eval_filter(bank, "GEN_B1", 0.5) == pytest.approx(1.0, abs=1e-15)
    assert eval_filter(bank, "GEN_B2", 0.5) == pytest.approx(0.0, abs=1e-15)
    assert eval_filter(bank, "GEN_A", 0.2) == 1.0


def test_profiles_are_even(bank):
    """Test that profiles depend on |xi| only."""
    xi = np.linspace(0.0, 1.2, 37)
    for profile in bank.profiles().values():
        np.testing.assert_array_equal(profile(-xi), profile(xi))


def test_eval_filter_rejects_negative(bank):
    """Test the xi >= 0 domain of eval_filter."""
    with pytest.raises(DomainError):
        eval_filter(bank, "A", -0.1)


def test_unknown_filter_name(bank):
    """Test lookup of a filter the bank does not have."""
    with pytest.raises(ConfigurationError):
        bank.profile("B3")


def test_shipped_bank_is_tight(bank):
    """Test partition, refinement, telescoping, supports and continuity."""
    assert validate_partition(bank, 10_000) < 1e-12
    assert validate_refinement(bank, 10_000) < 1e-12
    assert validate_telescoping(bank, 10_000) < 1e-12
    assert validate_supports(bank, 10_000) < 1e-15
    assert validate_continuity(bank) < 1e-12


def test_partition_exact_at_quarter(bank):
    """Test |a|^2 + |b1|^2 + |b2|^2 = 1 at xi = 1/4."""
    total = sum(eval_filter(bank, k, 0.25) ** 2 for k in ("A", "B1", "B2"))
    assert total == pytest.approx(1.0, abs=1e-15)


def test_refinement_at_endpoints(bank):
    """Test the flat region and the support edge."""
    alpha = bank.gen_low
    assert alpha(2 * 0.05) == alpha(0.05) * bank.low(0.05) == 1.0
    assert alpha(1.0) == pytest.approx(alpha(0.5) * bank.low(0.5), abs=1e-15)


def test_perturbed_bank_reports_defect(bank):
    """Test that a scaled high-pass filter is reported, not raised."""
    perturbed = bank.scaled(FilterKind.B1, 0.9)
    assert perturbed.bank_id == f"{SHIPPED_BANK_ID}+B1*0.9"
    assert validate_partition(perturbed) == pytest.approx(0.19, abs=1e-6)
    report = validate_bank(perturbed)
    assert "partition" in report.failures(1e-12)
    assert "refinement" in report.failures(1e-12)
    assert "supports" not in report.failures(1e-12)


def test_validate_bank_passes(bank):
    """Test the combined report for the shipped bank."""
    report = validate_bank(bank)
    assert report.bank_id == SHIPPED_BANK_ID
    assert report.failures(1e-6) == []
    assert set(report.deviations) == {"partition", "refinement", "telescoping", "supports", "continuity"}


def test_grid_size_domain(bank):
    """Test grid_size >= 2."""
    with pytest.raises(DomainError):
        validate_partition(bank, 1)


def test_bank_registry():
    """Test resolving shipped and derived ids."""
    assert bank_from_id(SHIPPED_BANK_ID).r == 2
    derived = bank_from_id(f"{SHIPPED_BANK_ID}+B1*0.9")
    assert derived.high[0](0.25) == pytest.approx(0.9)
    with pytest.raises(ConfigurationError, match="Unknown filter bank id"):
        bank_from_id("meyer-r3")
    with pytest.raises(ConfigurationError):
        bank_from_id(f"{SHIPPED_BANK_ID}+oops")
