"""
Spectral filter bank {a; b1, b2} and generators {alpha; beta1, beta2}.

All profiles are functions of |xi| and vanish outside their declared
support. Validators return the measured deviation and never raise.
"""

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Tuple, Union

import numpy as np
from loguru import logger

from src.errors import ConfigurationError, DomainError

SHIPPED_BANK_ID = "tenslet-r2"
CONTINUITY_STEP = 1e-9


class FilterKind(str, Enum):
    A = "A"
    B1 = "B1"
    B2 = "B2"
    GEN_A = "GEN_A"
    GEN_B1 = "GEN_B1"
    GEN_B2 = "GEN_B2"


def nu(t):
    """Smooth step t^4 (35 - 84 t + 70 t^2 - 20 t^3), nu(0) = 0 and nu(1) = 1."""
    t = np.asarray(t, dtype=float)
    out = t ** 4 * (35.0 - 84.0 * t + 70.0 * t ** 2 - 20.0 * t ** 3)
    return float(out) if out.ndim == 0 else out


def _rise(t):
    return np.sin(0.5 * np.pi * nu(t))


def _fall(t):
    return np.cos(0.5 * np.pi * nu(t))


@dataclass(frozen=True)
class SpectralProfile:
    """Real profile on xi >= 0 with a declared support interval."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    support: Tuple[float, float]
    breakpoints: Tuple[float, ...] = ()
    factor: float = 1.0
    # masks are only used on [0, 1/2]
    domain_end: float = np.inf

    def __call__(self, xi):
        t = np.abs(np.asarray(xi, dtype=float))
        lo, hi = self.support
        inside = (t >= lo) & (t <= hi)
        out = np.where(inside, self.fn(t), 0.0) * self.factor
        return float(out) if out.ndim == 0 else out

    def conj(self, xi):
        """Conjugate profile used by the analysis filters."""
        return np.conj(self(xi))

    def scaled(self, factor: float) -> "SpectralProfile":
        return replace(self, factor=self.factor * factor)


def _a_hat(t):
    return np.where(t < 0.125, 1.0, _fall(8.0 * t - 1.0))


def _b1_hat(t):
    return np.where(t <= 0.25, _rise(8.0 * t - 1.0), _fall(4.0 * t - 1.0))


def _b2_hat(t):
    return _rise(4.0 * t - 1.0)


def _alpha_hat(t):
    return np.where(t < 0.25, 1.0, _fall(4.0 * t - 1.0))


def _beta1_hat(t):
    return np.where(t < 0.5, _rise(4.0 * t - 1.0), _fall(2.0 * t - 1.0) ** 2)


def _beta2_hat(t):
    return _fall(2.0 * t - 1.0) * _rise(2.0 * t - 1.0)


@dataclass(frozen=True)
class FilterBank:
    """Low-pass and high-pass masks with their generating functions."""

    bank_id: str
    low: SpectralProfile
    high: Tuple[SpectralProfile, ...]
    gen_low: SpectralProfile
    gen_high: Tuple[SpectralProfile, ...]

    def __post_init__(self):
        if len(self.high) < 1 or len(self.high) != len(self.gen_high):
            raise ConfigurationError(
                f"Bank {self.bank_id} needs r >= 1 high-pass filters and as many generators"
            )

    @property
    def r(self) -> int:
        return len(self.high)

    def profiles(self) -> Dict[str, SpectralProfile]:
        out = {"A": self.low, "GEN_A": self.gen_low}
        for n, (h, g) in enumerate(zip(self.high, self.gen_high), start=1):
            out[f"B{n}"] = h
            out[f"GEN_B{n}"] = g
        return out

    def profile(self, which: Union[FilterKind, str]) -> SpectralProfile:
        key = which.value if isinstance(which, FilterKind) else str(which).upper()
        profiles = self.profiles()
        if key not in profiles:
            raise ConfigurationError(f"Bank {self.bank_id} has no filter {key}")
        return profiles[key]

    def scaled(self, which: Union[FilterKind, str], factor: float) -> "FilterBank":
        """Copy with one profile multiplied by factor (defect injection)."""
        key = which.value if isinstance(which, FilterKind) else str(which).upper()
        target = self.profile(key)
        scaled = target.scaled(factor)
        high = tuple(scaled if p is target else p for p in self.high)
        gen_high = tuple(scaled if p is target else p for p in self.gen_high)
        return FilterBank(
            bank_id=f"{self.bank_id}+{key}*{factor:g}",
            low=scaled if self.low is target else self.low,
            high=high,
            gen_low=scaled if self.gen_low is target else self.gen_low,
            gen_high=gen_high,
        )


def tight_bank() -> FilterBank:
    """The shipped bank with two high-pass filters."""
    return FilterBank(
        bank_id=SHIPPED_BANK_ID,
        low=SpectralProfile("A", _a_hat, (0.0, 0.25), (0.125, 0.25), domain_end=0.5),
        high=(
            SpectralProfile("B1", _b1_hat, (0.125, 0.5), (0.125, 0.25, 0.5), domain_end=0.5),
            SpectralProfile("B2", _b2_hat, (0.25, 0.5), (0.25, 0.5), domain_end=0.5),
        ),
        gen_low=SpectralProfile("GEN_A", _alpha_hat, (0.0, 0.5), (0.25, 0.5)),
        gen_high=(
            SpectralProfile("GEN_B1", _beta1_hat, (0.25, 1.0), (0.25, 0.5, 1.0)),
            SpectralProfile("GEN_B2", _beta2_hat, (0.25, 1.0), (0.5, 1.0)),
        ),
    )


BANKS: Dict[str, Callable[[], FilterBank]] = {SHIPPED_BANK_ID: tight_bank}

_SCALING = re.compile(r"^(?P<kind>[A-Z_0-9]+)\*(?P<factor>[-+0-9.eE]+)$")


def bank_from_id(bank_id: str) -> FilterBank:
    """Resolve a registered id, including derived ids such as 'tenslet-r2+B1*0.9'."""
    base, *mods = str(bank_id).split("+")
    if base not in BANKS:
        logger.error(f"Unknown filter bank id: {bank_id}")
        raise ConfigurationError(f"Unknown filter bank id '{bank_id}'")
    bank = BANKS[base]()
    for mod in mods:
        match = _SCALING.match(mod)
        if match is None:
            raise ConfigurationError(f"Unknown filter bank id '{bank_id}'")
        bank = bank.scaled(match.group("kind"), float(match.group("factor")))
    return bank


def eval_filter(bank: FilterBank, which: Union[FilterKind, str], xi):
    if np.any(np.asarray(xi) < 0):
        raise DomainError("Filters are evaluated at xi >= 0")
    return bank.profile(which)(xi)


def _grid(lo: float, hi: float, grid_size: int) -> np.ndarray:
    if grid_size < 2:
        raise DomainError(f"grid_size must be at least 2, got {grid_size}")
    return np.linspace(lo, hi, int(grid_size))


def validate_partition(bank: FilterBank, grid_size: int = 10_000) -> float:
    """max over [0, 1/2] of | |a|^2 + sum |b^n|^2 - 1 |"""
    xi = _grid(0.0, 0.5, grid_size)
    total = np.abs(bank.low(xi)) ** 2 + sum(np.abs(h(xi)) ** 2 for h in bank.high)
    return float(np.max(np.abs(total - 1.0)))


def validate_refinement(bank: FilterBank, grid_size: int = 10_000) -> float:
    """max over [0, 1/2] of |alpha(2 xi) - alpha(xi) a(xi)| and |beta^n(2 xi) - alpha(xi) b^n(xi)|"""
    xi = _grid(0.0, 0.5, grid_size)
    alpha = bank.gen_low(xi)
    dev = np.abs(bank.gen_low(2.0 * xi) - alpha * bank.low(xi))
    for h, g in zip(bank.high, bank.gen_high):
        dev = np.maximum(dev, np.abs(g(2.0 * xi) - alpha * h(xi)))
    return float(np.max(dev))


def validate_telescoping(bank: FilterBank, grid_size: int = 10_000) -> float:
    """max over [0, 1] of | |alpha(xi/2)|^2 - |alpha(xi)|^2 - sum |beta^n(xi)|^2 |"""
    xi = _grid(0.0, 1.0, grid_size)
    rhs = np.abs(bank.gen_low(xi)) ** 2 + sum(np.abs(g(xi)) ** 2 for g in bank.gen_high)
    return float(np.max(np.abs(np.abs(bank.gen_low(0.5 * xi)) ** 2 - rhs)))


def validate_supports(bank: FilterBank, grid_size: int = 10_000) -> float:
    """Largest magnitude of any profile outside its declared support, probed on [0, 2]."""
    xi = _grid(0.0, 2.0, grid_size)
    worst = 0.0
    for profile in bank.profiles().values():
        lo, hi = profile.support
        outside = (xi < lo) | (xi > hi)
        if np.any(outside):
            worst = max(worst, float(np.max(np.abs(profile(xi[outside])))))
    return worst


def validate_continuity(bank: FilterBank, step: float = CONTINUITY_STEP) -> float:
    worst = 0.0
    for profile in bank.profiles().values():
        for b in set(profile.breakpoints) | set(profile.support):
            if b - step < 0 or b + step > profile.domain_end:
                continue
            worst = max(worst, abs(profile(b + step) - profile(b - step)))
    return worst


@dataclass
class BankReport:
    bank_id: str
    deviations: Dict[str, float] = field(default_factory=dict)

    def failures(self, tol: float) -> List[str]:
        return [name for name, dev in self.deviations.items() if not dev < tol]


def validate_bank(bank: FilterBank, grid_size: int = 10_000) -> BankReport:
    """Run every tight-frame check on a bank."""
    report = BankReport(
        bank_id=bank.bank_id,
        deviations={
            "partition": validate_partition(bank, grid_size),
            "refinement": validate_refinement(bank, grid_size),
            "telescoping": validate_telescoping(bank, grid_size),
            "supports": validate_supports(bank, grid_size),
            "continuity": validate_continuity(bank),
        },
    )
    logger.debug(f"Bank {bank.bank_id} deviations: {report.deviations}")
    return report
