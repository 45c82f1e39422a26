"""
Multi-level tensor needlet decomposition and reconstruction.

Level j carries a quadrature rule exact for 2^(j+1) and a bandlimit L_j.
Decomposition performs one adjoint transform at the finest level, filters
in the spectral domain level by level and synthesizes every stored
sequence once; reconstruction runs the same steps backwards.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.errors import CertificateError, ConfigurationError, ContractError, DomainError
from src.filter_bank import FilterBank, SpectralProfile, bank_from_id
from src.sphere_geom import PointLike, QuadratureRule, as_points, gauss_legendre_rule, select_design
from src.vsh import (
    TangentSampleSeq,
    VectorCoeffPair,
    vector_count,
    vsh_analysis,
    vsh_matrices,
    vsh_synthesis,
)

TRUNCATION_TOLERANCE = 1e-10


class Convention(str, Enum):
    DEGREE = "degree"
    EIGENVALUE = "eigenvalue"


class NeedletKind(str, Enum):
    LOW = "LOW"
    HIGH1 = "HIGH1"
    HIGH2 = "HIGH2"


def filter_argument(j: int, ells: np.ndarray, convention: Union[Convention, str] = Convention.DEGREE) -> np.ndarray:
    ells = np.asarray(ells, dtype=float)
    if Convention(convention) is Convention.DEGREE:
        return ells / 2.0 ** j
    return ells * (ells + 1.0) / 2.0 ** j


def level_bandlimit(j: int, convention: Union[Convention, str] = Convention.DEGREE) -> int:
    cap = 2 ** (j - 1)
    if Convention(convention) is Convention.DEGREE:
        return cap
    l = 0
    while (l + 1) * (l + 2) <= cap:
        l += 1
    return l


@dataclass(frozen=True, eq=False)
class LevelScheme:
    """
    Levels J0..J with one rule per level.

    Attributes
    ----------
    J0, J: coarsest and finest level
    convention: filter argument l/2^j (DEGREE) or l(l+1)/2^j (EIGENVALUE)
    rules: level -> QuadratureRule, exact for 2^(j+1)
    """

    J0: int
    J: int
    convention: Convention
    rules: Dict[int, QuadratureRule]

    def __post_init__(self):
        object.__setattr__(self, "convention", Convention(self.convention))
        if self.J0 < 1:
            raise ConfigurationError(f"Coarsest level must be >= 1, got J0={self.J0}")
        if self.J < self.J0:
            raise ConfigurationError(f"Finest level J={self.J} is below coarsest level J0={self.J0}")
        for j in self.levels:
            rule = self.rules.get(j)
            if rule is None:
                raise ConfigurationError(f"No quadrature rule for level {j}")
            if rule.exactness_degree < 2 ** (j + 1):
                raise ConfigurationError(
                    f"Rule at level {j} is exact to {rule.exactness_degree}, needs {2 ** (j + 1)}"
                )

    @classmethod
    def gauss_legendre(cls, J0: int, J: int, convention: Union[Convention, str] = Convention.DEGREE) -> "LevelScheme":
        return cls(J0, J, Convention(convention), {j: gauss_legendre_rule(j) for j in range(J0, J + 1)})

    @classmethod
    def from_rules(
        cls, J0: int, J: int, rules: Dict[int, QuadratureRule], convention: Union[Convention, str] = Convention.DEGREE
    ) -> "LevelScheme":
        return cls(J0, J, Convention(convention), dict(rules))

    @classmethod
    def from_design_directory(
        cls, J0: int, J: int, path: Union[str, Path], convention: Union[Convention, str] = Convention.DEGREE
    ) -> "LevelScheme":
        """Smallest design of each level's required exactness found in a directory."""
        rules = {j: select_design(path, 2 ** (j + 1)) for j in range(J0, J + 1)}
        return cls(J0, J, Convention(convention), rules)

    @property
    def levels(self) -> range:
        return range(self.J0, self.J + 1)

    def bandlimit(self, j: int) -> int:
        return level_bandlimit(j, self.convention)

    def argument(self, j: int, L: Optional[int] = None) -> np.ndarray:
        """Filter argument for l = 1..L (default L_j) at level j."""
        L = self.bandlimit(j) if L is None else L
        return filter_argument(j, np.arange(1, L + 1), self.convention)

    def node_count(self, j: int) -> int:
        return self.rules[j].N

    def coefficient_capacity(self) -> int:
        """
        Per-family coefficient capacity of the finest rule, (t/2 + 1)^2 - 1
        for exactness t. This is the M column of the benchmark table, not
        the number of coefficients a decomposition keeps (see retained_count).
        """
        degree = self.rules[self.J].exactness_degree // 2
        return (degree + 1) ** 2 - 1

    def retained_count(self, j: int) -> int:
        """Per-family coefficients kept at level j, (L_j + 1)^2 - 1."""
        return vector_count(self.bandlimit(j))

    def matches(self, other: "LevelScheme") -> bool:
        if (self.J0, self.J, self.convention) != (other.J0, other.J, other.convention):
            return False
        for j in self.levels:
            a, b = self.rules[j], other.rules[j]
            if a is b:
                continue
            if a.N != b.N or a.kind != b.kind or not np.array_equal(a.points, b.points):
                return False
        return True

    def describe(self) -> Dict:
        return {
            "J0": self.J0,
            "J": self.J,
            "convention": self.convention.value,
            "levels": [
                {"level": j, "L": self.bandlimit(j), "N": self.node_count(j), "kind": self.rules[j].kind}
                for j in self.levels
            ],
            "M": self.coefficient_capacity(),
        }


@dataclass
class NeedletDecomposition:
    """Approximation at J0 plus detail sequences keyed by level j = J0..J-1."""

    scheme: LevelScheme
    bank_id: str
    approx: TangentSampleSeq
    details: Dict[int, List[TangentSampleSeq]] = field(default_factory=dict)
    approx_coeffs: Optional[VectorCoeffPair] = None
    detail_coeffs: Dict[int, List[VectorCoeffPair]] = field(default_factory=dict)

    def sequences(self):
        yield ("approx", self.scheme.J0, 0), self.approx
        for j in sorted(self.details):
            for n, seq in enumerate(self.details[j], start=1):
                yield ("detail", j, n), seq

    def norm2(self) -> float:
        return sum(seq.norm2() for _, seq in self.sequences())

    def coefficient_counts(self) -> Dict[str, int]:
        """Finest-rule capacity per family and in total, and the per-family count kept at J."""
        per_family = self.scheme.coefficient_capacity()
        return {"per_family": per_family, "total": 2 * per_family, "retained": self.scheme.retained_count(self.scheme.J)}

    def clear_mirrors(self) -> None:
        self.approx_coeffs = None
        self.detail_coeffs = {}


def spectral_convolve(
    c: VectorCoeffPair,
    profile: SpectralProfile,
    j: int,
    convention: Union[Convention, str] = Convention.DEGREE,
    conjugate: bool = False,
) -> VectorCoeffPair:
    """Multiply each degree by profile(arg_j(l)), or by its conjugate."""
    arg = filter_argument(j, np.arange(1, c.L + 1), convention)
    h = profile.conj(arg) if conjugate else profile(arg)
    return c.multiplied(h)


def _lowpass_truncate(c: VectorCoeffPair, L: int) -> VectorCoeffPair:
    if c.L > L:
        total = c.norm2()
        above = c.mass_above(L)
        if total > 0 and np.sqrt(above / total) > TRUNCATION_TOLERANCE:
            logger.error(f"Truncation to L={L} discards relative mass {np.sqrt(above / total):.3e}")
            raise ContractError(
                f"Coefficients carry relative mass {np.sqrt(above / total):.3e} above L={L}; apply the low-pass filter first"
            )
    return c.resized(L)


def downsample(c: VectorCoeffPair, scheme: LevelScheme, j: int) -> TangentSampleSeq:
    """Level-j coefficients to the level-(j-1) sequence."""
    if j - 1 not in scheme.rules:
        raise ConfigurationError(f"Level {j - 1} is outside the scheme {scheme.J0}..{scheme.J}")
    return vsh_synthesis(_lowpass_truncate(c, scheme.bandlimit(j - 1)), scheme.rules[j - 1])


def upsample(seq: TangentSampleSeq, scheme: LevelScheme, j: int) -> VectorCoeffPair:
    """Level-(j-1) sequence to coefficients in the level-j index range."""
    if not seq.certified:
        logger.warning(f"Upsampling an uncertified sequence to level {j}")
    coeffs = vsh_analysis(seq, seq.L)
    coeffs.certified = coeffs.certified and seq.certified
    return coeffs.embed(scheme.bandlimit(j))


def _input_coefficients(v: Union[TangentSampleSeq, VectorCoeffPair], scheme: LevelScheme) -> VectorCoeffPair:
    L_J = scheme.bandlimit(scheme.J)
    if isinstance(v, VectorCoeffPair):
        if not v.certified:
            raise CertificateError("Decomposition input coefficients are not certified")
        total = v.norm2()
        if v.L > L_J and total > 0 and np.sqrt(v.mass_above(L_J) / total) > TRUNCATION_TOLERANCE:
            raise CertificateError(f"Input has content above the level-{scheme.J} bandlimit {L_J}")
        return v.resized(L_J)
    rule = scheme.rules[scheme.J]
    if v.rule is not rule and (v.rule.N != rule.N or not np.array_equal(v.rule.points, rule.points)):
        raise ConfigurationError(f"Input sequence lives on a rule with N={v.rule.N}, level {scheme.J} has N={rule.N}")
    if not v.certified or v.L > L_J:
        raise CertificateError(
            f"Input sequence (L={v.L}, certified={v.certified}) is not certified at level {scheme.J}; "
            "project it with project_bandlimited first"
        )
    return vsh_analysis(v, L_J)


def decompose(
    v: Union[TangentSampleSeq, VectorCoeffPair], scheme: LevelScheme, bank: FilterBank
) -> NeedletDecomposition:
    coeffs = _input_coefficients(v, scheme)
    details: Dict[int, List[TangentSampleSeq]] = {}
    detail_coeffs: Dict[int, List[VectorCoeffPair]] = {}

    for j in range(scheme.J, scheme.J0, -1):
        arg = scheme.argument(j, coeffs.L)
        highs = [coeffs.multiplied(h.conj(arg)) for h in bank.high]
        detail_coeffs[j - 1] = highs
        details[j - 1] = [vsh_synthesis(w, scheme.rules[j]) for w in highs]
        coeffs = _lowpass_truncate(coeffs.multiplied(bank.low.conj(arg)), scheme.bandlimit(j - 1))
        logger.debug(f"Level {j} -> {j - 1}: L={scheme.bandlimit(j - 1)}, details on N={scheme.node_count(j)}")

    approx = vsh_synthesis(coeffs, scheme.rules[scheme.J0])
    return NeedletDecomposition(
        scheme=scheme,
        bank_id=bank.bank_id,
        approx=approx,
        details=details,
        approx_coeffs=coeffs,
        detail_coeffs=detail_coeffs,
    )


def _check_compatible(d: NeedletDecomposition, scheme: LevelScheme, bank: FilterBank) -> None:
    if not scheme.matches(d.scheme):
        raise ConfigurationError(
            f"Decomposition scheme (J0={d.scheme.J0}, J={d.scheme.J}, {d.scheme.convention.value}) "
            f"does not match (J0={scheme.J0}, J={scheme.J}, {scheme.convention.value})"
        )
    if bank.bank_id != d.bank_id:
        raise ConfigurationError(f"Decomposition was produced with bank '{d.bank_id}', not '{bank.bank_id}'")


def reconstruct_coefficients(
    d: NeedletDecomposition,
    scheme: Optional[LevelScheme] = None,
    bank: Optional[FilterBank] = None,
    drop_details: bool = False,
    use_mirrors: bool = True,
) -> VectorCoeffPair:
    scheme = d.scheme if scheme is None else scheme
    bank = bank_from_id(d.bank_id) if bank is None else bank
    _check_compatible(d, scheme, bank)

    if use_mirrors and d.approx_coeffs is not None:
        coeffs = d.approx_coeffs
    else:
        coeffs = vsh_analysis(d.approx, scheme.bandlimit(scheme.J0))
    for j in range(scheme.J0 + 1, scheme.J + 1):
        L = scheme.bandlimit(j)
        arg = scheme.argument(j, L)
        coeffs = coeffs.embed(L).multiplied(bank.low(arg))
        if drop_details:
            continue
        mirrors = d.detail_coeffs.get(j - 1) if use_mirrors else None
        if mirrors is None:
            mirrors = [vsh_analysis(seq, L) for seq in d.details[j - 1]]
        for w, h in zip(mirrors, bank.high):
            coeffs = coeffs + w.resized(L).multiplied(h(arg))
    return coeffs


def reconstruct(
    d: NeedletDecomposition,
    scheme: Optional[LevelScheme] = None,
    bank: Optional[FilterBank] = None,
    drop_details: bool = False,
    use_mirrors: bool = True,
) -> TangentSampleSeq:
    """
    Inverse of decompose. With drop_details the output is the input's
    low-pass approximation, i.e. multiplied by prod_j |a(arg_j)|^2.
    """
    coeffs = reconstruct_coefficients(d, scheme, bank, drop_details, use_mirrors)
    scheme = d.scheme if scheme is None else scheme
    return vsh_synthesis(coeffs, scheme.rules[scheme.J])


def needlet_kernel(per_degree: np.ndarray, x: PointLike, y: PointLike) -> np.ndarray:
    """sum_l h_l sum_m (y1(x) y1(y)^H + y2(x) y2(y)^H), a 3x3 complex matrix."""
    per_degree = np.asarray(per_degree)
    L = per_degree.size
    pts = np.vstack([as_points(x), as_points(y)])
    y1, y2 = vsh_matrices(L, pts)
    degrees = np.repeat(np.arange(1, L + 1), 2 * np.arange(1, L + 1) + 1)
    h = per_degree[degrees - 1]
    return np.einsum("k,ka,kb->ab", h, y1[0], np.conj(y1[1])) + np.einsum("k,ka,kb->ab", h, y2[0], np.conj(y2[1]))


def eval_needlet(
    scheme: LevelScheme, bank: FilterBank, j: int, k: int, kind: Union[NeedletKind, str], x: PointLike
) -> np.ndarray:
    """
    Needlet at level j and node k as a 3x3 matrix at x.

    LOW lives on the level-j rule with the generator alpha; HIGHn lives on
    the level-(j+1) rule with beta^n, both at argument arg_j(l).
    """
    kind = NeedletKind(kind)
    if kind is NeedletKind.LOW:
        if j not in scheme.rules:
            raise DomainError(f"Level {j} outside {scheme.J0}..{scheme.J}")
        rule, profile, L = scheme.rules[j], bank.gen_low, scheme.bandlimit(j)
    else:
        n = int(kind.value[-1])
        if j + 1 not in scheme.rules or j < scheme.J0:
            raise DomainError(f"Detail level {j} outside {scheme.J0}..{scheme.J - 1}")
        if n > bank.r:
            raise DomainError(f"Bank {bank.bank_id} has only {bank.r} high-pass filters")
        rule, profile, L = scheme.rules[j + 1], bank.gen_high[n - 1], scheme.bandlimit(j + 1)
    node = rule.point(k)
    h = profile(scheme.argument(j, L))
    return rule.sqrt_weights[k] * needlet_kernel(h, x, node)


@dataclass
class ParsevalReport:
    table: pd.DataFrame
    total: float
    reference: float
    deviation: float


def parseval_report(d: NeedletDecomposition, reference_norm2: Optional[float] = None) -> ParsevalReport:
    """Energy per stored sequence against a reference; defects are reported, not raised."""
    rows = [
        {"part": part, "level": level, "filter": n, "energy": seq.norm2()}
        for (part, level, n), seq in d.sequences()
    ]
    table = pd.DataFrame(rows, columns=["part", "level", "filter", "energy"])
    total = float(table["energy"].sum())
    reference = total if reference_norm2 is None else float(reference_norm2)
    deviation = abs(total - reference) / reference if reference > 0 else abs(total - reference)
    logger.debug(f"Parseval: total={total:.6e} reference={reference:.6e} deviation={deviation:.3e}")
    return ParsevalReport(table=table, total=total, reference=reference, deviation=deviation)


def lowpass_multiplier(scheme: LevelScheme, bank: FilterBank) -> np.ndarray:
    """prod_j |a(arg_j(l))|^2 over j = J0+1..J for l = 1..L_J."""
    L = scheme.bandlimit(scheme.J)
    out = np.ones(L)
    for j in range(scheme.J0 + 1, scheme.J + 1):
        out *= np.abs(bank.low(scheme.argument(j, L))) ** 2
    return out
