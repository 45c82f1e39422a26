"""
Synthetic tangent fields, wind grids and the reconstruction error study.

Fields are built as T = L s + grad* v from a stream function s and a
velocity potential v. In coefficient form this is

    divc_lm = sqrt(l(l+1)) s_lm,    curlc_lm = sqrt(l(l+1)) v_lm.
"""

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from src.errors import ConfigurationError, DomainError, FormatError
from src.filter_bank import FilterBank
from src.needlet_transform import LevelScheme, NeedletDecomposition, decompose, reconstruct
from src.scalar_harmonics import ScalarCoeffs, scalar_analysis, scalar_synthesis
from src.sphere_geom import (
    MAX_GL_LEVEL,
    POLE_TOLERANCE,
    PointLike,
    QuadratureRule,
    angles,
    as_points,
    from_lat_lon,
    gauss_legendre_rule,
    local_frame,
    local_frames,
    tangent_frames,
)
from src.vsh import TangentSampleSeq, VectorCoeffPair, project_bandlimited, sample_points, vsh_synthesis

GEODESIC = "geodesic"
CHORD = "chord"
REFERENCE_DEGREE = 128

ScalarSource = Union[Callable[[np.ndarray], np.ndarray], ScalarCoeffs, None]

# Rossby-Haurwitz wave, shared by Fields A and B
ROSSBY_HAURWITZ = {(1, 0): -1.0 / math.sqrt(3.0), (5, 4): 8.0 * math.sqrt(2.0) / (3.0 * math.sqrt(385.0))}
FIELD_A_POTENTIAL = {(4, 0): 1.0 / 25.0, (6, -3): 1.0 / 25.0}

# (amplitude, sigma, latitude, longitude)
FIELD_B_BUMPS = (
    (1.0 / 8.0, 5.0, math.pi / 6.0, 0.0),
    (-1.0 / 7.0, 3.0, math.pi / 5.0, math.pi / 7.0),
    (1.0 / 9.0, 5.0, -math.pi / 6.0, math.pi / 2.0),
    (-1.0 / 8.0, 3.0, -math.pi / 5.0, math.pi / 3.0),
)

FIELD_C_STREAM_CENTER = (math.pi / 4.0, -math.pi / 12.0)
# (amplitude, latitude, longitude)
FIELD_C_POTENTIAL_TERMS = (
    (5.0 / 2.0, math.pi / 4.0, 0.0),
    (-7.0 / 4.0, math.pi / 6.0, math.pi / 9.0),
    (-3.0 / 2.0, 5.0 * math.pi / 16.0, math.pi / 10.0),
)


@dataclass
class PotentialSpec:
    """Stream function and velocity potential, each a callable on (N, 3) points or coefficients."""

    stream: ScalarSource = None
    potential: ScalarSource = None
    name: str = ""

    def __post_init__(self):
        for part in (self.stream, self.potential):
            if isinstance(part, ScalarCoeffs) and not part.is_real_field(1e-12):
                raise DomainError(f"Potential coefficients of {self.name or 'field'} are not real-field symmetric")

    @staticmethod
    def _evaluate(part: ScalarSource, points: np.ndarray) -> np.ndarray:
        if part is None:
            return np.zeros(points.shape[0])
        if isinstance(part, ScalarCoeffs):
            return scalar_synthesis(part, points).real
        return np.asarray(part(points), dtype=float)

    def evaluate(self, points: PointLike) -> Tuple[np.ndarray, np.ndarray]:
        pts = as_points(points)
        return self._evaluate(self.stream, pts), self._evaluate(self.potential, pts)


def field_from_potentials(s_hat: Optional[ScalarCoeffs], p_hat: Optional[ScalarCoeffs]) -> VectorCoeffPair:
    """Degree-0 terms are dropped; the result has bandlimit max(L_s, L_p)."""
    parts = [c for c in (s_hat, p_hat) if c is not None]
    L = max((c.L for c in parts), default=1)
    out = VectorCoeffPair.zeros(L)
    for target, source in ((out.divc, s_hat), (out.curlc, p_hat)):
        if source is None:
            continue
        n = (source.L + 1) ** 2 - 1
        target[:n] = source.c[1:]
    ells = np.arange(1, L + 1)
    return out.multiplied(np.sqrt(ells * (ells + 1.0)))


def rossby_haurwitz_coeffs() -> ScalarCoeffs:
    return ScalarCoeffs.from_dict(5, ROSSBY_HAURWITZ).real_completion()


def field_a_potential_coeffs() -> ScalarCoeffs:
    return ScalarCoeffs.from_dict(6, FIELD_A_POTENTIAL).real_completion()


def field_A() -> VectorCoeffPair:
    """Rossby-Haurwitz stream with a degree 4 and 6 potential, bandlimit 6."""
    return field_from_potentials(rossby_haurwitz_coeffs(), field_a_potential_coeffs())


def field_A_spec() -> PotentialSpec:
    return PotentialSpec(stream=rossby_haurwitz_coeffs(), potential=field_a_potential_coeffs(), name="A")


def _distance(points: np.ndarray, center: np.ndarray, mode: str) -> np.ndarray:
    t = np.clip(points @ center, -1.0, 1.0)
    if mode == GEODESIC:
        return np.arccos(t)
    if mode == CHORD:
        return np.sqrt(2.0 * (1.0 - t))
    raise ConfigurationError(f"Unknown distance mode '{mode}', use '{GEODESIC}' or '{CHORD}'")


def bump(points: PointLike, sigma: float, lat_c: float, lon_c: float, distance: str = GEODESIC) -> np.ndarray:
    """Cubic B-spline sum (sigma^3/12) sum_j (-1)^j C(4,j) |r - (j-2)/sigma|^3, zero for r >= 2/sigma."""
    pts = as_points(points)
    r = _distance(pts, from_lat_lon(lat_c, lon_c), distance)
    total = np.zeros_like(r)
    for j in range(5):
        total += (-1) ** j * math.comb(4, j) * np.abs(r - (j - 2) / sigma) ** 3
    out = sigma ** 3 / 12.0 * total
    out[sigma * r >= 2.0] = 0.0
    return out


def field_B_potential(points: PointLike, distance: str = GEODESIC) -> np.ndarray:
    pts = as_points(points)
    return sum(amp * bump(pts, sigma, lat, lon, distance) for amp, sigma, lat, lon in FIELD_B_BUMPS)


def field_B_spec(distance: str = GEODESIC) -> PotentialSpec:
    return PotentialSpec(
        stream=rossby_haurwitz_coeffs(), potential=lambda p: field_B_potential(p, distance), name="B"
    )


def g_kernel(points: PointLike, lat_c: float, lon_c: float) -> np.ndarray:
    """
    -1/2 (3t + 3 sqrt2 a^{3/2} - 4 + (3t - 1) a log(1 + sqrt(2/a))) with t = x.x_c, a = 1 - t.

    The log terms are combined so that a = 0 evaluates to the limit 1/2.
    """
    pts = as_points(points)
    t = np.clip(pts @ from_lat_lon(lat_c, lon_c), -1.0, 1.0)
    a = 1.0 - t
    log_term = np.zeros_like(a)
    pos = a > 0
    log_term[pos] = (3.0 * t[pos] - 1.0) * a[pos] * np.log1p(np.sqrt(2.0 / a[pos]))
    return -0.5 * (3.0 * t + 3.0 * math.sqrt(2.0) * a ** 1.5 - 4.0 + log_term)


@lru_cache(maxsize=65536)
def latitude_integral(lat: float) -> float:
    """int_{-pi/2}^{lat} sin^14(2 xi) dxi"""
    value, _ = integrate.quad(lambda xi: math.sin(2.0 * xi) ** 14, -0.5 * math.pi, lat, epsabs=1e-13, epsrel=1e-13)
    return value


def _latitudes(points: np.ndarray) -> np.ndarray:
    x, _, _ = angles(points)
    return np.arcsin(x)


def field_C_stream(points: PointLike) -> np.ndarray:
    pts = as_points(points)
    lats = _latitudes(pts)
    unique, inverse = np.unique(lats, return_inverse=True)
    integral = np.array([latitude_integral(float(lat)) for lat in unique])[inverse]
    return integral - 3.0 * g_kernel(pts, *FIELD_C_STREAM_CENTER)


def field_C_potential(points: PointLike) -> np.ndarray:
    pts = as_points(points)
    return sum(amp * g_kernel(pts, lat, lon) for amp, lat, lon in FIELD_C_POTENTIAL_TERMS)


def field_C_spec() -> PotentialSpec:
    return PotentialSpec(stream=field_C_stream, potential=field_C_potential, name="C")


def reference_rule(L_prime: int) -> QuadratureRule:
    """Smallest Gauss-Legendre rule exact for 2 L'."""
    J = max(1, math.ceil(math.log2(max(L_prime, 1))))
    if J > MAX_GL_LEVEL:
        raise ConfigurationError(f"Reference degree {L_prime} needs a Gauss-Legendre level above {MAX_GL_LEVEL}")
    return gauss_legendre_rule(J)


def spectral_field(spec: PotentialSpec, L_prime: int, rule: Optional[QuadratureRule] = None) -> VectorCoeffPair:
    """Coefficients of T = L s + grad* v up to degree L' by scalar analysis of both potentials."""
    rule = reference_rule(L_prime) if rule is None else rule
    if 2 * L_prime > rule.exactness_degree:
        raise ConfigurationError(f"Rule exact to {rule.exactness_degree} cannot resolve degree {L_prime}")
    s, v = spec.evaluate(rule)
    s_hat = scalar_analysis(s, rule, L_prime).real_completion()
    p_hat = scalar_analysis(v, rule, L_prime).real_completion()
    logger.debug(f"Spectral field {spec.name or '?'} at L'={L_prime} from N={rule.N} nodes")
    return field_from_potentials(s_hat, p_hat)


def sample_field(coeffs: VectorCoeffPair, rule: QuadratureRule) -> Tuple[np.ndarray, TangentSampleSeq]:
    """(unweighted values, weighted sequence) at the nodes of a rule."""
    seq = vsh_synthesis(coeffs, rule)
    return seq.unweighted(), seq


def wind_to_tangent(u: float, v: float, p: PointLike) -> np.ndarray:
    """T = u east + v north. Raises PoleError at the poles."""
    frame = local_frame(p)
    return u * frame.east + v * frame.north


def winds_to_tangent(u: np.ndarray, v: np.ndarray, points: PointLike) -> np.ndarray:
    east, north = local_frames(points)
    return np.asarray(u)[:, None] * east + np.asarray(v)[:, None] * north


@dataclass
class WindGrid:
    """Zonal (u) and meridional (v) wind on a lat-lon grid, degrees and m/s, arrays shaped (n_lat, n_lon)."""

    lat: np.ndarray
    lon: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.lat = np.asarray(self.lat, dtype=float)
        self.lon = np.asarray(self.lon, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        for name, axis in (("lat", self.lat), ("lon", self.lon)):
            if axis.ndim != 1 or axis.size < 2 or not np.all(np.diff(axis) > 0):
                raise FormatError(f"Wind grid axis '{name}' must be strictly increasing with at least two values")
        shape = (self.lat.size, self.lon.size)
        if self.u.shape != shape or self.v.shape != shape:
            raise FormatError(f"Wind components need shape {shape}, got u{self.u.shape} v{self.v.shape}")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise FormatError("Wind components contain non-finite values")
        if self.lat[0] < -90.0 or self.lat[-1] > 90.0 or self.lon[-1] - self.lon[0] >= 360.0:
            raise FormatError("Wind grid axes outside the sphere's coordinate ranges")

    def to_frame(self) -> pd.DataFrame:
        lat, lon = np.meshgrid(self.lat, self.lon, indexing="ij")
        return pd.DataFrame({"lat": lat.ravel(), "lon": lon.ravel(), "u": self.u.ravel(), "v": self.v.ravel()})

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "WindGrid":
        missing = {"lat", "lon", "u", "v"} - set(df.columns)
        if missing:
            raise FormatError(f"Wind CSV lacks columns {sorted(missing)}")
        u = df.pivot(index="lat", columns="lon", values="u").sort_index().sort_index(axis=1)
        v = df.pivot(index="lat", columns="lon", values="v").sort_index().sort_index(axis=1)
        if u.isna().any().any() or len(df) != u.size:
            raise FormatError("Wind CSV is not a complete lat-lon grid")
        return cls(lat=u.index.to_numpy(), lon=u.columns.to_numpy(), u=u.to_numpy(), v=v.to_numpy())

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "WindGrid":
        try:
            df = pd.read_csv(path, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise FormatError(f"Unreadable wind CSV {path}: {e}") from e
        return cls.from_frame(df)


def ingest_wind(grid: WindGrid, rule: QuadratureRule) -> np.ndarray:
    """
    Bilinear resampling of u, v to the nodes of a rule, then conversion to
    3D tangent vectors. Longitude wraps around; latitude is clamped to the
    grid's range.

    Pole nodes (spherical designs may contain them) take the phi = 0 limit
    frame, east = e_phi and north = -e_theta, the same one the harmonic
    evaluators use there.
    """
    lon = np.append(grid.lon, grid.lon[0] + 360.0)
    u = np.hstack([grid.u, grid.u[:, :1]])
    v = np.hstack([grid.v, grid.v[:, :1]])
    x, _, phi = angles(rule.points)
    node_lat = np.clip(np.degrees(np.arcsin(x)), grid.lat[0], grid.lat[-1])
    node_lon = np.mod(np.degrees(phi) - grid.lon[0], 360.0) + grid.lon[0]
    query = np.column_stack([node_lat, node_lon])
    ui = RegularGridInterpolator((grid.lat, lon), u)(query)
    vi = RegularGridInterpolator((grid.lat, lon), v)(query)
    logger.info(f"Resampled {grid.u.size} wind cells onto {rule.N} nodes")
    _, u_nodes, _ = angles(rule.points)
    poles = int(np.count_nonzero(u_nodes < POLE_TOLERANCE))
    if poles:
        logger.warning(f"{poles} node(s) at a pole, using the phi = 0 limit frame")
    e_theta, e_phi = tangent_frames(rule.points)
    return ui[:, None] * e_phi - vi[:, None] * e_theta


def wind_grid_from_coeffs(coeffs: VectorCoeffPair, lat: np.ndarray, lon: np.ndarray) -> WindGrid:
    """Sample a real tangent field on a lat-lon grid (degrees) as u, v components."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    la, lo = np.meshgrid(np.radians(lat), np.radians(lon), indexing="ij")
    pts = from_lat_lon(la.ravel(), lo.ravel())
    T = sample_points(coeffs, pts).real
    east, north = local_frames(pts)
    shape = (lat.size, lon.size)
    u = np.einsum("ij,ij->i", T, east).reshape(shape)
    v = np.einsum("ij,ij->i", T, north).reshape(shape)
    return WindGrid(lat=lat, lon=lon, u=u, v=v)


@dataclass
class ErrorStudy:
    relative_error: float
    corrected_error: float
    residual_norm: float
    decomposition: NeedletDecomposition
    reconstructed: np.ndarray
    t_dec: float = 0.0
    t_rec: float = 0.0
    input_norm2: float = 0.0
    residual_error: float = 0.0


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    ref = np.linalg.norm(a)
    return float(np.linalg.norm(a - b) / ref) if ref > 0 else float(np.linalg.norm(a - b))


def error_study(raw: np.ndarray, scheme: LevelScheme, bank: FilterBank, drop_details: bool = False) -> ErrorStudy:
    """
    Project node values onto the level-J bandlimit, decompose, reconstruct
    and compare with the input in the unweighted nodal 2-norm.

    relative_error leaves out the projection residual; corrected_error adds
    it back and is at transform precision. residual_error is the
    projection residual alone.
    """
    rule = scheme.rules[scheme.J]
    projected, residual = project_bandlimited(raw, rule, scheme.bandlimit(scheme.J))
    start = time.perf_counter()
    d = decompose(projected, scheme, bank)
    t_dec = time.perf_counter() - start
    start = time.perf_counter()
    rec = reconstruct(d, scheme, bank, drop_details=drop_details)
    t_rec = time.perf_counter() - start
    sw = rule.sqrt_weights[:, None]
    T_rec = rec.values / sw
    corrected = (rec.values + residual) / sw
    study = ErrorStudy(
        relative_error=_relative(raw, T_rec),
        corrected_error=_relative(raw, corrected),
        residual_norm=float(np.linalg.norm(residual)),
        decomposition=d,
        reconstructed=T_rec,
        t_dec=t_dec,
        t_rec=t_rec,
        input_norm2=projected.norm2(),
        residual_error=_relative(raw, raw - residual / sw),
    )
    logger.info(
        f"Error study J0={scheme.J0} J={scheme.J}: relative={study.relative_error:.4e} "
        f"corrected={study.corrected_error:.3e}"
    )
    return study
