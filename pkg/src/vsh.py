"""
Vector spherical harmonics for tangent fields.

Canonical basis (used by every transform):

    y2_lm = grad* Y_lm / sqrt(l(l+1))        curl-free
    y1_lm = x cross y2_lm                    divergence-free

In the local frame (e_theta, e_phi) and for m >= 0, with D = dPbar/dtheta
and S = Pbar/sin(theta):

    y2 = (D e_theta + i m S e_phi) e^{i m phi} / sqrt(lambda)
    y1 = (-i m S e_theta + D e_phi) e^{i m phi} / sqrt(lambda)

and y_l,-m = (-1)^m conj(y_lm) for both families.

A second construction through Clebsch-Gordan coefficients and the
covariant spherical basis is provided as an independent check.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger

from src.errors import CertificateError, DomainError, PoleError, ShapeError
from src.scalar_harmonics import (
    AzimuthalLayout,
    complete_real_field,
    eval_ylm,
    eval_ylm_grad,
    layout_of,
    map_orders,
    real_field_defect,
)
from src.sphere_geom import (
    POLE_TOLERANCE,
    PointLike,
    QuadratureRule,
    angles,
    as_points,
    tangent_frames,
)

CERTIFICATE_TOLERANCE = 1e-10


class Route(str, Enum):
    GRAD_CURL = "grad_curl"
    CLEBSCH_GORDAN = "clebsch_gordan"


def vector_index(l, m):
    return l * l + l + m - 1


def vector_count(L: int) -> int:
    return (L + 1) ** 2 - 1


@dataclass
class VectorCoeffPair:
    """
    Divergence-free (divc, against y1) and curl-free (curlc, against y2)
    coefficients for l = 1..L, stored at index l^2 + l + m - 1.

    certified is False when the coefficients came from an adjoint transform
    on a rule that is not exact for 2L.
    """

    L: int
    divc: np.ndarray
    curlc: np.ndarray
    certified: bool = True

    def __post_init__(self):
        self.divc = np.asarray(self.divc, dtype=complex)
        self.curlc = np.asarray(self.curlc, dtype=complex)
        n = vector_count(self.L)
        if self.divc.shape != (n,) or self.curlc.shape != (n,):
            raise ShapeError(f"VectorCoeffPair(L={self.L}) needs {n} entries per family")

    @classmethod
    def zeros(cls, L: int) -> "VectorCoeffPair":
        n = vector_count(L)
        return cls(L, np.zeros(n, dtype=complex), np.zeros(n, dtype=complex))

    @classmethod
    def random(cls, L: int, rng: np.random.Generator, real_field: bool = False) -> "VectorCoeffPair":
        n = vector_count(L)
        out = cls(
            L,
            rng.standard_normal(n) + 1j * rng.standard_normal(n),
            rng.standard_normal(n) + 1j * rng.standard_normal(n),
        )
        return out.real_completion() if real_field else out

    def _check(self, l: int, m: int) -> None:
        if l < 1 or l > self.L or abs(m) > l:
            raise DomainError(f"Index (l={l}, m={m}) outside the vector coefficient range L={self.L}")

    def get(self, l: int, m: int) -> Tuple[complex, complex]:
        self._check(l, m)
        k = vector_index(l, m)
        return complex(self.divc[k]), complex(self.curlc[k])

    def set(self, l: int, m: int, divc: complex = 0.0, curlc: complex = 0.0) -> None:
        self._check(l, m)
        k = vector_index(l, m)
        self.divc[k] = divc
        self.curlc[k] = curlc

    def copy(self) -> "VectorCoeffPair":
        return VectorCoeffPair(self.L, self.divc.copy(), self.curlc.copy(), self.certified)

    def degrees(self) -> np.ndarray:
        """Degree l of every stored entry."""
        return np.repeat(np.arange(1, self.L + 1), 2 * np.arange(1, self.L + 1) + 1)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.divc) ** 2) + np.sum(np.abs(self.curlc) ** 2))

    def truncate(self, L: int) -> "VectorCoeffPair":
        n = vector_count(L)
        return VectorCoeffPair(L, self.divc[:n].copy(), self.curlc[:n].copy(), self.certified)

    def embed(self, L: int) -> "VectorCoeffPair":
        if L <= self.L:
            return self.truncate(L)
        out = VectorCoeffPair.zeros(L)
        n = vector_count(self.L)
        out.divc[:n] = self.divc
        out.curlc[:n] = self.curlc
        out.certified = self.certified
        return out

    def resized(self, L: int) -> "VectorCoeffPair":
        return self.embed(L) if L >= self.L else self.truncate(L)

    def mass_above(self, L: int) -> float:
        n = vector_count(L)
        return float(np.sum(np.abs(self.divc[n:]) ** 2) + np.sum(np.abs(self.curlc[n:]) ** 2))

    def multiplied(self, per_degree: np.ndarray) -> "VectorCoeffPair":
        """Multiply every (l, m) entry by per_degree[l - 1]."""
        h = np.asarray(per_degree)[self.degrees() - 1]
        return VectorCoeffPair(self.L, self.divc * h, self.curlc * h, self.certified)

    def __add__(self, other: "VectorCoeffPair") -> "VectorCoeffPair":
        L = max(self.L, other.L)
        a, b = self.embed(L), other.embed(L)
        return VectorCoeffPair(L, a.divc + b.divc, a.curlc + b.curlc, self.certified and other.certified)

    def scaled(self, factor: complex) -> "VectorCoeffPair":
        return VectorCoeffPair(self.L, self.divc * factor, self.curlc * factor, self.certified)

    def is_real_field(self, tol: float = 1e-12) -> bool:
        return max(
            real_field_defect(self.divc, self.L, first_degree=1),
            real_field_defect(self.curlc, self.L, first_degree=1),
        ) <= tol

    def real_completion(self) -> "VectorCoeffPair":
        return VectorCoeffPair(
            self.L,
            complete_real_field(self.divc, self.L, first_degree=1),
            complete_real_field(self.curlc, self.L, first_degree=1),
            self.certified,
        )


@dataclass
class TangentSampleSeq:
    """
    Weighted samples sqrt(w_k) T(x_k) at the nodes of a rule.

    L is the declared bandlimit; certified means the sequence is the
    weighted synthesis of a degree-L coefficient set on a rule exact for 2L.
    """

    rule: QuadratureRule
    values: np.ndarray
    L: int
    certified: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.rule.N, 3):
            raise ShapeError(f"Sequence needs shape ({self.rule.N}, 3), got {self.values.shape}")

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))

    def unweighted(self) -> np.ndarray:
        return self.values / self.rule.sqrt_weights[:, None]

    def tangency_defect(self) -> float:
        """max_k |value_k . x_k| / max(|value_k|)"""
        radial = np.abs(np.einsum("ij,ij->i", self.values, self.rule.points))
        scale = np.max(np.linalg.norm(self.values, axis=1), initial=0.0)
        return float(radial.max() / scale) if scale > 0 else 0.0

    def scaled(self, factor: complex) -> "TangentSampleSeq":
        return replace(self, values=self.values * factor)


@dataclass
class VshValue:
    y1: np.ndarray
    y2: np.ndarray


# ---------------------------------------------------------------------------
# grad/curl route


def _check_degree(l: int, m: int) -> None:
    if l < 1 or abs(m) > l:
        raise DomainError(f"Vector harmonics need l >= 1 and |m| <= l, got (l={l}, m={m})")


def _eval_grad_curl(l: int, m: int, p: PointLike) -> VshValue:
    pts = as_points(p)
    _, u, _ = angles(pts)
    if u[0] < POLE_TOLERANCE:
        raise PoleError(f"grad/curl evaluation is singular at pole {pts[0].tolist()}")
    y, dy_theta, dy_phi = eval_ylm_grad(l, m, pts)
    e_theta, e_phi = tangent_frames(pts)
    y2 = (dy_theta * e_theta[0] + (dy_phi / u[0]) * e_phi[0]) / math.sqrt(l * (l + 1))
    y1 = np.cross(pts[0], y2)
    return VshValue(y1=y1, y2=y2)


def vsh_matrices(L: int, points: PointLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    y1 and y2 for all l = 1..L at every point, shape (N, (L+1)^2 - 1, 3).

    Pole-safe: at exact poles the limit of Pbar/sin(theta) is used.
    """
    pts = as_points(points)
    layout = layout_of(pts)
    table = layout.tables(L)
    e_theta, e_phi = tangent_frames(pts)
    n = pts.shape[0]
    y1 = np.zeros((n, vector_count(L), 3), dtype=complex)
    y2 = np.zeros_like(y1)
    for m in range(L + 1):
        start = 1 if m == 0 else 0
        ells = np.arange(max(m, 1), L + 1)
        inv = 1.0 / np.sqrt(ells * (ells + 1.0))
        D = table.dtheta[m][:, start:] * inv
        S = table.over_sin[m][:, start:] * inv
        e = np.exp(1j * m * layout.phi)[:, None]
        v2 = (D * e)[:, :, None] * e_theta[:, None, :] + (1j * m * S * e)[:, :, None] * e_phi[:, None, :]
        v1 = (-1j * m * S * e)[:, :, None] * e_theta[:, None, :] + (D * e)[:, :, None] * e_phi[:, None, :]
        y1[:, vector_index(ells, m)] = v1
        y2[:, vector_index(ells, m)] = v2
        if m > 0:
            sign = (-1.0) ** m
            y1[:, vector_index(ells, -m)] = sign * np.conj(v1)
            y2[:, vector_index(ells, -m)] = sign * np.conj(v2)
    return y1, y2


# ---------------------------------------------------------------------------
# Clebsch-Gordan route


@lru_cache(maxsize=None)
def _racah_cg(j1: int, m1: int, j2: int, m2: int, J: int, M: int) -> float:
    """<j1 m1 j2 m2 | J M> by the Racah sum in exact rational arithmetic."""
    if m1 + m2 != M:
        return 0.0
    if J < abs(j1 - j2) or J > j1 + j2:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(M) > J:
        return 0.0
    f = math.factorial
    prefactor = Fraction(
        (2 * J + 1) * f(J + j1 - j2) * f(J - j1 + j2) * f(j1 + j2 - J),
        f(j1 + j2 + J + 1),
    ) * (f(J + M) * f(J - M) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2))
    total = Fraction(0)
    kmin = max(0, j2 - J - m1, j1 - J + m2)
    kmax = min(j1 + j2 - J, j1 - m1, j2 + m2)
    for k in range(kmin, kmax + 1):
        denom = (
            f(k)
            * f(j1 + j2 - J - k)
            * f(j1 - m1 - k)
            * f(j2 + m2 - k)
            * f(J - j2 + m1 + k)
            * f(J - j1 - m2 + k)
        )
        total += Fraction((-1) ** k, denom)
    if total == 0:
        return 0.0
    return math.copysign(math.sqrt(float(prefactor * total * total)), float(total))


def cg_coefficient(l: int, m: int, j1: int, m1: int, m2: int) -> float:
    """
    C^{l,m}_{j1,m1,1,m2} = <j1 m1 1 m2 | l m>, equivalently
    (-1)^(m + j1 - 1) sqrt(2l+1) (j1 1 l; m1 m2 -m).
    """
    if j1 not in (l - 1, l, l + 1):
        raise DomainError(f"j1 must be one of l-1, l, l+1 (l={l}, j1={j1})")
    if m2 not in (-1, 0, 1):
        raise DomainError(f"m2 must be -1, 0 or 1, got {m2}")
    if m1 + m2 != m:
        return 0.0
    if j1 < 0:
        return 0.0
    return _racah_cg(j1, m1, 1, m2, l, m)


@lru_cache(maxsize=8)
def cg_table(L: int) -> Dict[Tuple[int, int, int, int], float]:
    """All coefficients needed up to degree L, keyed by (l, m, j1 - l, m2)."""
    table = {}
    for l in range(1, L + 1):
        for m in range(-l, l + 1):
            for dj in (-1, 0, 1):
                for m2 in (-1, 0, 1):
                    table[(l, m, dj, m2)] = cg_coefficient(l, m, l + dj, m - m2, m2)
    logger.debug(f"Clebsch-Gordan table for L={L}: {len(table)} entries")
    return table


def _safe_ylm(l: int, m: int, p: np.ndarray) -> complex:
    if l < 0 or abs(m) > l:
        return 0.0
    return eval_ylm(l, m, p)


def _from_spherical_basis(plus: complex, zero: complex, minus: complex) -> np.ndarray:
    # e_{+1} = -(1, i, 0)/sqrt2, e_0 = (0, 0, 1), e_{-1} = (1, -i, 0)/sqrt2
    s = 1.0 / math.sqrt(2.0)
    return np.array([-s * (plus - minus), -1j * s * (plus + minus), zero], dtype=complex)


def _eval_clebsch_gordan(l: int, m: int, p: PointLike) -> VshValue:
    pts = as_points(p)
    table = cg_table(l)
    c_l = math.sqrt((l + 1.0) / (2.0 * l + 1.0))
    d_l = math.sqrt(l / (2.0 * l + 1.0))
    B = {}
    D = {}
    for q in (1, 0, -1):
        mm = m - q
        B[q] = c_l * table[(l, m, -1, q)] * _safe_ylm(l - 1, mm, pts) + d_l * table[(l, m, 1, q)] * _safe_ylm(
            l + 1, mm, pts
        )
        D[q] = 1j * table[(l, m, 0, q)] * _safe_ylm(l, mm, pts)
    # the degree l +- 1 combination is the gradient family, the degree-l one the curl family
    y2 = _from_spherical_basis(B[1], B[0], B[-1])
    y1 = _from_spherical_basis(D[1], D[0], D[-1])
    return VshValue(y1=y1, y2=y2)


def eval_vsh(l: int, m: int, p: PointLike, route: Union[Route, str] = Route.GRAD_CURL) -> VshValue:
    _check_degree(l, m)
    route = Route(route)
    if route is Route.GRAD_CURL:
        return _eval_grad_curl(l, m, p)
    return _eval_clebsch_gordan(l, m, p)


@dataclass
class RoutePhaseFit:
    phase_div: complex
    phase_curl: complex
    residual: float


def fit_route_phase(L: int, points: PointLike) -> RoutePhaseFit:
    """
    Fit one unimodular factor per family mapping the Clebsch-Gordan values
    onto the grad/curl values, and report the max residual after alignment.
    """
    pts = as_points(points)
    gc1, gc2, cg1, cg2 = [], [], [], []
    for l in range(1, L + 1):
        for m in range(-l, l + 1):
            for x in pts:
                a = eval_vsh(l, m, x, Route.GRAD_CURL)
                b = eval_vsh(l, m, x, Route.CLEBSCH_GORDAN)
                gc1.append(a.y1)
                gc2.append(a.y2)
                cg1.append(b.y1)
                cg2.append(b.y2)
    gc1, gc2, cg1, cg2 = map(np.array, (gc1, gc2, cg1, cg2))

    def phase(target, source):
        z = np.vdot(source, target) / np.vdot(source, source)
        return z / abs(z)

    p1, p2 = phase(gc1, cg1), phase(gc2, cg2)
    residual = max(float(np.max(np.abs(gc1 - p1 * cg1))), float(np.max(np.abs(gc2 - p2 * cg2))))
    return RoutePhaseFit(phase_div=complex(p1), phase_curl=complex(p2), residual=residual)


# ---------------------------------------------------------------------------
# transforms


def _order_slices(table, m: int, L: int):
    start = 1 if m == 0 else 0
    ells = np.arange(max(m, 1), L + 1)
    inv = 1.0 / np.sqrt(ells * (ells + 1.0))
    return ells, table.dtheta[m][:, start:] * inv, table.over_sin[m][:, start:] * inv


def _tangential_synthesis(coeffs: VectorCoeffPair, layout: AzimuthalLayout) -> Tuple[np.ndarray, np.ndarray]:
    """(F_theta, F_phi) of sum divc y1 + curlc y2 at the layout's points."""
    L = coeffs.L
    table = layout.tables(L)
    Gt = np.zeros((2 * L + 1, layout.n_lat), dtype=complex)
    Gp = np.zeros_like(Gt)

    def order(m: int) -> None:
        ells, D, S = _order_slices(table, m, L)
        for mu in ((m, -m) if m > 0 else (0,)):
            sign = (-1.0) ** m if mu < 0 else 1.0
            k = vector_index(ells, mu)
            a, b = coeffs.divc[k], coeffs.curlc[k]
            Gt[L + mu] = sign * (D @ b - 1j * mu * (S @ a))
            Gp[L + mu] = sign * (D @ a + 1j * mu * (S @ b))

    map_orders(order, L)
    return layout.synthesize(Gt), layout.synthesize(Gp)


def _tangential_analysis(vt: np.ndarray, vp: np.ndarray, layout: AzimuthalLayout, L: int) -> VectorCoeffPair:
    table = layout.tables(L)
    Ht = layout.analyze(vt, L)
    Hp = layout.analyze(vp, L)
    out = VectorCoeffPair.zeros(L)

    def order(m: int) -> None:
        ells, D, S = _order_slices(table, m, L)
        for mu in ((m, -m) if m > 0 else (0,)):
            sign = (-1.0) ** m if mu < 0 else 1.0
            k = vector_index(ells, mu)
            ht, hp = Ht[L + mu], Hp[L + mu]
            out.divc[k] = sign * (1j * mu * (S.T @ ht) + D.T @ hp)
            out.curlc[k] = sign * (D.T @ ht - 1j * mu * (S.T @ hp))

    map_orders(order, L)
    return out


def sample_points(coeffs: VectorCoeffPair, points: Union[QuadratureRule, PointLike]) -> np.ndarray:
    """Unweighted field values sum divc y1 + curlc y2, shape (N, 3)."""
    pts = as_points(points)
    e_theta, e_phi = points.frames if isinstance(points, QuadratureRule) else tangent_frames(pts)
    ft, fp = _tangential_synthesis(coeffs, layout_of(points))
    return ft[:, None] * e_theta + fp[:, None] * e_phi


def vsh_synthesis(coeffs: VectorCoeffPair, rule: QuadratureRule) -> TangentSampleSeq:
    """value_k = sqrt(w_k) sum_lm (divc_lm y1_lm(x_k) + curlc_lm y2_lm(x_k))."""
    values = rule.sqrt_weights[:, None] * sample_points(coeffs, rule)
    certified = coeffs.certified and 2 * coeffs.L <= rule.exactness_degree
    return TangentSampleSeq(rule=rule, values=values, L=coeffs.L, certified=certified)


def vsh_analysis(seq: TangentSampleSeq, L: Optional[int] = None) -> VectorCoeffPair:
    """
    Adjoint transform: divc_lm = sum_k sqrt(w_k) value_k . conj(y1_lm(x_k)), same for curlc.

    When the rule is not exact for 2L the result is returned with
    certified=False instead of raising.
    """
    rule = seq.rule
    L = seq.L if L is None else int(L)
    e_theta, e_phi = rule.frames
    weighted = rule.sqrt_weights[:, None] * seq.values
    vt = np.einsum("ij,ij->i", weighted, e_theta)
    vp = np.einsum("ij,ij->i", weighted, e_phi)
    out = _tangential_analysis(vt, vp, layout_of(rule), L)
    out.certified = 2 * L <= rule.exactness_degree
    if not out.certified:
        logger.warning(f"Analysis at L={L} exceeds rule exactness {rule.exactness_degree}; result uncertified")
    return out


def project_bandlimited(
    raw: np.ndarray, rule: QuadratureRule, L: int
) -> Tuple[TangentSampleSeq, np.ndarray]:
    """
    Orthogonal projection of unweighted node values onto degree-L tangent fields.

    Returns the certified projected sequence and the residual sequence
    sqrt(w) raw - projected.
    """
    raw = np.asarray(raw)
    if raw.shape != (rule.N, 3):
        raise ShapeError(f"Raw values need shape ({rule.N}, 3), got {raw.shape}")
    if 2 * L > rule.exactness_degree:
        raise CertificateError(f"Rule exact to {rule.exactness_degree} cannot certify degree {L}")
    weighted = rule.sqrt_weights[:, None] * raw
    seq = TangentSampleSeq(rule=rule, values=weighted, L=L, certified=False)
    projected = vsh_synthesis(vsh_analysis(seq, L), rule)
    residual = weighted - projected.values
    return projected, residual
