"""
Normalized associated Legendre functions and complex scalar spherical
harmonics with the Condon-Shortley phase:

    Y_lm(theta, phi) = Pbar_lm(cos theta) e^{i m phi},   m >= 0
    Y_l,-m = (-1)^m conj(Y_lm)

Pbar_lm is normalized so that the Y_lm are orthonormal on the sphere of
area 4*pi. Values are generated by the standard normalized three-term
recurrence, so no factorials are formed and degrees of several hundred
are safe.

Synthesis and analysis separate into a longitude stage and a Legendre
stage. The longitude stage is an FFT per latitude ring for tensor product
rules and a direct sum over orders for scattered points. The Legendre stage
is a dense contraction per order m, optionally spread over a thread pool.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy import fft as sp_fft

from src.errors import DomainError, ShapeError
from src.sphere_geom import PointLike, QuadratureRule, angles, as_points

_WORKERS = 1


def set_workers(n: Optional[int]) -> int:
    """Set the worker count for per-order loops and FFTs; None means all CPUs."""
    global _WORKERS
    if n is None:
        n = os.cpu_count() or 1
    if int(n) < 1:
        raise DomainError(f"Thread count must be >= 1, got {n}")
    _WORKERS = int(n)
    logger.debug(f"Harmonic transforms use {_WORKERS} worker(s)")
    return _WORKERS


def get_workers() -> int:
    return _WORKERS


def map_orders(fn: Callable[[int], None], L: int) -> None:
    """Run fn(m) for m = 0..L. Each call must write only its own output slots."""
    if _WORKERS <= 1 or L < 8:
        for m in range(L + 1):
            fn(m)
        return
    with ThreadPoolExecutor(max_workers=_WORKERS) as pool:
        # list() re-raises worker exceptions
        list(pool.map(fn, range(L + 1)))


def scalar_index(l, m):
    return l * l + l + m


@dataclass
class LegendreTable:
    """
    Per-order tables over a set of latitude nodes.

    values[m], dtheta[m] and over_sin[m] have shape (n, L - m + 1); column k
    holds degree l = m + k. over_sin is Pbar_lm / sin(theta), with its pole
    limit where sin(theta) == 0.
    """

    L: int
    values: List[np.ndarray]
    dtheta: List[np.ndarray]
    over_sin: List[np.ndarray]

    def truncated(self, L: int) -> "LegendreTable":
        if L == self.L:
            return self
        cut = lambda tabs: [tabs[m][:, : L - m + 1] for m in range(L + 1)]
        return LegendreTable(L=L, values=cut(self.values), dtheta=cut(self.dtheta), over_sin=cut(self.over_sin))


def legendre_table(L: int, x: np.ndarray, u: np.ndarray) -> LegendreTable:
    """Pbar_lm, dPbar_lm/dtheta and Pbar_lm/sin(theta) for l <= L at x = cos(theta), u = sin(theta)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n = x.size
    L = int(L)

    values: List[np.ndarray] = []
    pmm = np.full(n, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(L + 1):
        if m > 0:
            pmm = -np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * u * pmm
        col = np.empty((n, L - m + 1))
        col[:, 0] = pmm
        if m < L:
            col[:, 1] = np.sqrt(2.0 * m + 3.0) * x * pmm
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            col[:, l - m] = a * (x * col[:, l - m - 1] - b * col[:, l - m - 2])
        values.append(col)

    # 2 dP_lm/dtheta = sqrt((l-m)(l+m+1)) P_l,m+1 - sqrt((l+m)(l-m+1)) P_l,m-1
    dtheta: List[np.ndarray] = []
    for m in range(L + 1):
        ells = np.arange(m, L + 1, dtype=float)
        up = np.zeros((n, L - m + 1))
        if m < L:
            up[:, 1:] = values[m + 1]
        down = np.zeros((n, L - m + 1))
        if m == 0:
            if L >= 1:
                down[:, 1:] = -values[1]
        else:
            down[:] = values[m - 1][:, 1:]
        a_up = np.sqrt((ells - m) * (ells + m + 1.0))
        a_down = np.sqrt((ells + m) * (ells - m + 1.0))
        dtheta.append(0.5 * (a_up * up - a_down * down))

    poles = u == 0.0
    over_sin: List[np.ndarray] = []
    for m in range(L + 1):
        if m == 0:
            over_sin.append(np.zeros((n, L + 1)))
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            s = values[m] / u[:, None]
        if np.any(poles):
            if m == 1:
                # Pbar_l1 / sin -> +dPbar/dtheta at theta = 0 and -dPbar/dtheta at theta = pi
                sign = np.where(x[poles] > 0, 1.0, -1.0)
                s[poles] = sign[:, None] * dtheta[1][poles]
            else:
                s[poles] = 0.0
        over_sin.append(s)

    return LegendreTable(L=L, values=values, dtheta=dtheta, over_sin=over_sin)


@dataclass(eq=False)
class AzimuthalLayout:
    """
    Longitude stage of a transform.

    Ring layouts hold one entry per latitude ring and use an FFT of length
    n_lon per ring; scattered layouts hold one entry per point and sum the
    orders directly. The per-order coefficient arrays exchanged with the
    Legendre stage have shape (2L + 1, n_lat), row L + mu for order mu.
    """

    cos_theta: np.ndarray
    sin_theta: np.ndarray
    n_lon: Optional[int] = None
    phi: Optional[np.ndarray] = None
    _tables: Dict[int, LegendreTable] = field(default_factory=dict, repr=False)

    @property
    def is_ring(self) -> bool:
        return self.n_lon is not None

    @property
    def n_lat(self) -> int:
        return int(self.cos_theta.size)

    @property
    def n_points(self) -> int:
        return self.n_lat * self.n_lon if self.is_ring else self.n_lat

    def tables(self, L: int) -> LegendreTable:
        for cached_L, table in self._tables.items():
            if cached_L >= L:
                return table.truncated(L)
        table = legendre_table(L, self.cos_theta, self.sin_theta)
        self._tables = {L: table}
        return table

    def synthesize(self, G: np.ndarray) -> np.ndarray:
        L = (G.shape[0] - 1) // 2
        orders = np.arange(-L, L + 1)
        if self.is_ring:
            bins = np.zeros((self.n_lon, self.n_lat), dtype=complex)
            np.add.at(bins, orders % self.n_lon, G)
            f = sp_fft.ifft(bins, axis=0, norm="forward", workers=_WORKERS)
            return f.T.reshape(-1)
        out = np.zeros(self.n_lat, dtype=complex)
        for row, mu in enumerate(orders):
            if np.any(G[row]):
                out += G[row] * np.exp(1j * mu * self.phi)
        return out

    def analyze(self, f: np.ndarray, L: int) -> np.ndarray:
        orders = np.arange(-L, L + 1)
        if self.is_ring:
            F = sp_fft.fft(np.asarray(f).reshape(self.n_lat, self.n_lon), axis=1, workers=_WORKERS)
            return F[:, orders % self.n_lon].T
        H = np.empty((2 * L + 1, self.n_lat), dtype=complex)
        for row, mu in enumerate(orders):
            H[row] = f * np.exp(-1j * mu * self.phi)
        return H


def ring_layout(rule: QuadratureRule) -> AzimuthalLayout:
    rings = rule.rings
    x = rings.cos_theta
    return AzimuthalLayout(cos_theta=x, sin_theta=np.sqrt((1.0 - x) * (1.0 + x)), n_lon=rings.n_lon)


def point_layout(points: np.ndarray) -> AzimuthalLayout:
    x, u, phi = angles(points)
    return AzimuthalLayout(cos_theta=x, sin_theta=u, phi=phi)


def layout_of(target: Union[QuadratureRule, PointLike]) -> AzimuthalLayout:
    """Layout for a rule (cached on the rule) or for an ad hoc point set."""
    if isinstance(target, QuadratureRule):
        layout = target.cache.get("layout")
        if layout is None:
            layout = ring_layout(target) if target.rings is not None else point_layout(target.points)
            target.cache["layout"] = layout
        return layout
    return point_layout(as_points(target))


@dataclass
class ScalarCoeffs:
    """Complex coefficients c_lm for l = 0..L, stored densely at index l^2 + l + m."""

    L: int
    c: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=complex)
        if self.c.shape != ((self.L + 1) ** 2,):
            raise ShapeError(f"ScalarCoeffs(L={self.L}) needs {(self.L + 1) ** 2} entries, got {self.c.shape}")

    @classmethod
    def zeros(cls, L: int) -> "ScalarCoeffs":
        return cls(L, np.zeros((L + 1) ** 2, dtype=complex))

    @classmethod
    def from_dict(cls, L: int, entries: Dict[Tuple[int, int], complex]) -> "ScalarCoeffs":
        out = cls.zeros(L)
        for (l, m), value in entries.items():
            out.set(l, m, value)
        return out

    @classmethod
    def random(cls, L: int, rng: np.random.Generator, real_field: bool = False) -> "ScalarCoeffs":
        n = (L + 1) ** 2
        out = cls(L, rng.standard_normal(n) + 1j * rng.standard_normal(n))
        return out.real_completion() if real_field else out

    def _check(self, l: int, m: int) -> None:
        if l < 0 or l > self.L or abs(m) > l:
            raise DomainError(f"Index (l={l}, m={m}) outside the coefficient range L={self.L}")

    def get(self, l: int, m: int) -> complex:
        self._check(l, m)
        return complex(self.c[scalar_index(l, m)])

    def set(self, l: int, m: int, value: complex) -> None:
        self._check(l, m)
        self.c[scalar_index(l, m)] = value

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.c) ** 2))

    def is_real_field(self, tol: float = 1e-12) -> bool:
        return real_field_defect(self.c, self.L, first_degree=0) <= tol

    def real_completion(self) -> "ScalarCoeffs":
        """Copy where each c_l,-m is replaced by (-1)^m conj(c_lm) unless c_lm is zero."""
        return ScalarCoeffs(self.L, complete_real_field(self.c, self.L, first_degree=0))


def _degree_order_arrays(L: int, first_degree: int) -> Tuple[np.ndarray, np.ndarray]:
    ls, ms = [], []
    for l in range(first_degree, L + 1):
        for m in range(-l, l + 1):
            ls.append(l)
            ms.append(m)
    return np.array(ls, dtype=int), np.array(ms, dtype=int)


def real_field_defect(c: np.ndarray, L: int, first_degree: int) -> float:
    ls, ms = _degree_order_arrays(L, first_degree)
    offset = first_degree * first_degree
    partner = ls * ls + ls - ms - offset
    sign = np.where(ms % 2 == 0, 1.0, -1.0)
    return float(np.max(np.abs(c[partner] - sign * np.conj(c)), initial=0.0))


def complete_real_field(c: np.ndarray, L: int, first_degree: int) -> np.ndarray:
    """
    Fill conjugate partners so that c_l,-m = (-1)^m conj(c_lm).

    Where both partners are given, the entry with m > 0 wins; where only one
    is nonzero, it is mirrored. m = 0 entries keep their real part.
    """
    out = np.array(c, dtype=complex, copy=True)
    offset = first_degree * first_degree
    for l in range(max(first_degree, 0), L + 1):
        base = l * l + l - offset
        out[base] = out[base].real
        for m in range(1, l + 1):
            pos, neg = base + m, base - m
            sign = (-1.0) ** m
            if out[pos] != 0:
                out[neg] = sign * np.conj(out[pos])
            elif out[neg] != 0:
                out[pos] = sign * np.conj(out[neg])
    return out


def eval_ylm(l: int, m: int, p: PointLike) -> complex:
    return eval_ylm_grad(l, m, p)[0]


def eval_ylm_grad(l: int, m: int, p: PointLike) -> Tuple[complex, complex, complex]:
    """(Y, dY/dtheta, dY/dphi) at a single point."""
    if l < 0 or abs(m) > l:
        raise DomainError(f"Invalid degree/order (l={l}, m={m})")
    x, u, phi = angles(p)
    if x.size != 1:
        raise DomainError("eval_ylm_grad expects a single point")
    table = legendre_table(l, x, u)
    am = abs(m)
    pv = table.values[am][0, l - am]
    dv = table.dtheta[am][0, l - am]
    e = np.exp(1j * am * phi[0])
    y, dy = pv * e, dv * e
    if m < 0:
        sign = (-1.0) ** am
        y, dy = sign * np.conj(y), sign * np.conj(dy)
    return complex(y), complex(dy), complex(1j * m * y)


def scalar_basis_matrix(L: int, points: PointLike) -> np.ndarray:
    """Matrix of Y_lm(x_k), shape (N, (L+1)^2), column l^2 + l + m."""
    layout = point_layout(as_points(points))
    table = legendre_table(L, layout.cos_theta, layout.sin_theta)
    out = np.empty((layout.n_lat, (L + 1) ** 2), dtype=complex)
    for m in range(L + 1):
        ells = np.arange(m, L + 1)
        e = np.exp(1j * m * layout.phi)[:, None]
        pos = table.values[m] * e
        out[:, scalar_index(ells, m)] = pos
        if m > 0:
            out[:, scalar_index(ells, -m)] = (-1.0) ** m * np.conj(pos)
    return out


def _synthesize(coeffs: ScalarCoeffs, layout: AzimuthalLayout) -> np.ndarray:
    L = coeffs.L
    table = layout.tables(L)
    G = np.zeros((2 * L + 1, layout.n_lat), dtype=complex)

    def order(m: int) -> None:
        P = table.values[m]
        ells = np.arange(m, L + 1)
        G[L + m] = P @ coeffs.c[scalar_index(ells, m)]
        if m > 0:
            G[L - m] = (-1.0) ** m * (P @ coeffs.c[scalar_index(ells, -m)])

    map_orders(order, L)
    return layout.synthesize(G)


def scalar_synthesis(coeffs: ScalarCoeffs, points: Union[QuadratureRule, PointLike]) -> np.ndarray:
    """f(x) = sum_{l <= L} sum_m c_lm Y_lm(x) at each point (or each node of a rule)."""
    return _synthesize(coeffs, layout_of(points))


def scalar_analysis(samples: np.ndarray, rule: QuadratureRule, L: int) -> ScalarCoeffs:
    """c_lm = sum_k w_k f(x_k) conj(Y_lm(x_k))."""
    f = np.asarray(samples)
    if f.shape != (rule.N,):
        raise ShapeError(f"Expected {rule.N} samples, got shape {f.shape}")
    if 2 * L > rule.exactness_degree:
        logger.warning(f"Scalar analysis at L={L} exceeds the exactness of the rule ({rule.exactness_degree})")
    layout = layout_of(rule)
    table = layout.tables(L)
    H = layout.analyze(rule.weights * f.astype(complex), L)
    out = ScalarCoeffs.zeros(L)

    def order(m: int) -> None:
        P = table.values[m]
        ells = np.arange(m, L + 1)
        out.c[scalar_index(ells, m)] = P.T @ H[L + m]
        if m > 0:
            out.c[scalar_index(ells, -m)] = (-1.0) ** m * (P.T @ H[L - m])

    map_orders(order, L)
    return out
