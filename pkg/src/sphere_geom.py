"""
Points on the unit sphere, local tangent frames and polynomial-exact
quadrature rules.

Two rule families are supported: the Gauss-Legendre tensor product rule,
generated for any level J, and symmetric spherical designs, loaded from
"# degree t" text files. Both are stored as immutable QuadratureRule values
with their node arrays in ring-major (GL) or file (SD) order.
"""

import io
import os
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import roots_legendre

from src.errors import DomainError, FormatError, PoleError, ResourceError

FOUR_PI = 4.0 * np.pi
POLE_TOLERANCE = 1e-12
UNIT_TOLERANCE = 1e-10
WEIGHT_SUM_TOLERANCE = 1e-10
# level 14 needs more than 8 GB for the nodes alone
MAX_GL_LEVEL = 13

GL = "gl"
SD = "sd"


@dataclass(frozen=True)
class SpherePoint:
    """A unit 3-vector on S^2."""

    x1: float
    x2: float
    x3: float

    @property
    def theta(self) -> float:
        """Colatitude in [0, pi]."""
        return float(np.arctan2(np.hypot(self.x1, self.x2), self.x3))

    @property
    def phi(self) -> float:
        """Longitude in [0, 2pi); 0 at the poles."""
        return float(np.mod(np.arctan2(self.x2, self.x1), 2.0 * np.pi))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3], dtype=float)

    @classmethod
    def from_vector(cls, v: Iterable[float]) -> "SpherePoint":
        arr = np.asarray(list(v), dtype=float)
        if arr.shape != (3,):
            raise DomainError(f"Expected a 3-vector, got shape {arr.shape}")
        norm = np.linalg.norm(arr)
        if abs(norm - 1.0) > UNIT_TOLERANCE:
            raise DomainError(f"Point {arr.tolist()} is not on the unit sphere (norm {norm:.3e})")
        arr = arr / norm
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class TangentBasis:
    east: np.ndarray
    north: np.ndarray


@dataclass(frozen=True)
class RingLayout:
    """Latitude rings of a tensor product rule: m_theta rings of n_lon longitudes starting at 0."""

    cos_theta: np.ndarray
    ring_weights: np.ndarray
    n_lon: int

    @property
    def n_rings(self) -> int:
        return int(self.cos_theta.size)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Weighted point set on the sphere with a certified exactness degree.

    Attributes
    ----------
    kind: "gl" or "sd"
    points: (N, 3) unit vectors
    weights: (N,) positive weights summing to 4*pi
    exactness_degree: polynomial degree integrated exactly
    level: GL level J, None for designs
    rings: ring structure for GL rules, used by the FFT path
    source: file the rule was read from, if any
    """

    kind: str
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    level: Optional[int] = None
    rings: Optional[RingLayout] = None
    source: Optional[str] = None
    cache: Dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def N(self) -> int:
        return int(self.weights.size)

    @cached_property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    @cached_property
    def frames(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-node (e_theta, e_phi) arrays."""
        return tangent_frames(self.points)

    def point(self, k: int) -> SpherePoint:
        if not 0 <= k < self.N:
            raise DomainError(f"Node index {k} outside 0..{self.N - 1}")
        x = self.points[k]
        return SpherePoint(float(x[0]), float(x[1]), float(x[2]))

    def describe(self) -> Dict:
        desc = {"kind": self.kind, "N": self.N, "exactness_degree": int(self.exactness_degree)}
        if self.level is not None:
            desc["level"] = int(self.level)
        if self.source is not None:
            desc["source"] = self.source
        return desc


PointLike = Union[SpherePoint, np.ndarray, Iterable[float]]


def as_points(p: Union[PointLike, QuadratureRule]) -> np.ndarray:
    """Coerce a point, a list of points or a rule into an (N, 3) array."""
    if isinstance(p, QuadratureRule):
        return p.points
    if isinstance(p, SpherePoint):
        return p.as_array()[None, :]
    if isinstance(p, (list, tuple)) and p and isinstance(p[0], SpherePoint):
        return np.array([q.as_array() for q in p])
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DomainError(f"Expected points of shape (N, 3), got {arr.shape}")
    return arr


def from_angles(theta: float, phi: float) -> SpherePoint:
    if not (0.0 <= theta <= np.pi):
        raise DomainError(f"Colatitude {theta} outside [0, pi]")
    if not (0.0 <= phi < 2.0 * np.pi):
        raise DomainError(f"Longitude {phi} outside [0, 2pi)")
    st = np.sin(theta)
    return SpherePoint(float(st * np.cos(phi)), float(st * np.sin(phi)), float(np.cos(theta)))


def from_lat_lon(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """Latitude/longitude in radians to (N, 3) unit vectors."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def angles(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(cos theta, sin theta, phi) per point; phi is 0 at the poles."""
    pts = as_points(points)
    u = np.hypot(pts[:, 0], pts[:, 1])
    x = np.clip(pts[:, 2], -1.0, 1.0)
    phi = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * np.pi)
    return x, u, phi


def tangent_frames(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit vectors of increasing colatitude (e_theta) and longitude (e_phi).

    Defined at the poles through phi = 0, which matches the longitude used
    by the harmonic evaluators there.
    """
    x, u, phi = angles(points)
    cp, sp = np.cos(phi), np.sin(phi)
    e_theta = np.stack([x * cp, x * sp, -u], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(cp)], axis=-1)
    return e_theta, e_phi


def local_frame(p: PointLike) -> TangentBasis:
    pts = as_points(p)
    if pts.shape[0] != 1:
        raise DomainError("local_frame expects a single point")
    x, u, phi = angles(pts)
    if u[0] < POLE_TOLERANCE:
        raise PoleError(f"No tangent frame at pole {pts[0].tolist()}; choose a convention explicitly")
    cp, sp = np.cos(phi[0]), np.sin(phi[0])
    east = np.array([-sp, cp, 0.0])
    north = np.array([-x[0] * cp, -x[0] * sp, u[0]])
    return TangentBasis(east=east, north=north)


def local_frames(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized (east, north) frames; raises at any pole."""
    pts = as_points(points)
    _, u, _ = angles(pts)
    if np.any(u < POLE_TOLERANCE):
        bad = int(np.argmin(u))
        raise PoleError(f"No tangent frame at pole {pts[bad].tolist()}")
    e_theta, e_phi = tangent_frames(pts)
    return e_phi, -e_theta


def check_rule_weights(points: np.ndarray, weights: np.ndarray, what: str) -> None:
    if np.any(weights <= 0):
        raise FormatError(f"{what}: non-positive weight")
    total = float(weights.sum())
    if abs(total - FOUR_PI) > WEIGHT_SUM_TOLERANCE:
        raise FormatError(f"{what}: weights sum to {total!r}, expected 4*pi")


@lru_cache(maxsize=16)
def gauss_legendre_rule(J: int) -> QuadratureRule:
    """
    Tensor product Gauss-Legendre rule of level J.

    m_theta = 2^J + 1 Gauss nodes in cos(theta), m_phi = 2(2^J + 1)
    equispaced longitudes from 0, N = 2(2^J + 1)^2 and exactness 2^(J+1).
    Nodes are ordered ring by ring from the north pole.
    """
    if int(J) != J or J < 1:
        raise DomainError(f"Gauss-Legendre level must be an integer >= 1, got {J}")
    J = int(J)
    if J > MAX_GL_LEVEL:
        raise ResourceError(f"Gauss-Legendre level {J} exceeds the supported maximum {MAX_GL_LEVEL}")

    m_theta = 2 ** J + 1
    m_phi = 2 * m_theta
    x, w = roots_legendre(m_theta)
    if not (np.all(np.isfinite(x)) and abs(w.sum() - 2.0) < 1e-12):
        raise ResourceError(f"Gauss-Legendre node solver did not converge for {m_theta} nodes")
    # north pole first
    x = x[::-1].copy()
    w = w[::-1].copy()

    ring_weights = w * (2.0 * np.pi / m_phi)
    phi = 2.0 * np.pi * np.arange(m_phi) / m_phi
    u = np.sqrt((1.0 - x) * (1.0 + x))
    points = np.empty((m_theta, m_phi, 3))
    points[:, :, 0] = u[:, None] * np.cos(phi)[None, :]
    points[:, :, 1] = u[:, None] * np.sin(phi)[None, :]
    points[:, :, 2] = x[:, None]
    points = points.reshape(-1, 3)
    weights = np.repeat(ring_weights, m_phi)
    check_rule_weights(points, weights, f"GL rule J={J}")

    rule = QuadratureRule(
        kind=GL,
        points=points,
        weights=weights,
        exactness_degree=2 ** (J + 1),
        level=J,
        rings=RingLayout(cos_theta=x, ring_weights=ring_weights, n_lon=m_phi),
    )
    logger.debug(f"Generated GL rule J={J}: N={rule.N}, exactness={rule.exactness_degree}")
    return rule


def read_text_source(stream) -> Tuple[str, Optional[str]]:
    """Content and source name; a string without a newline is a path."""
    if isinstance(stream, os.PathLike) or (isinstance(stream, str) and "\n" not in stream):
        path = Path(stream)
        if not path.is_file():
            raise FormatError(f"File '{path}' not found")
        return path.read_text(encoding="utf-8"), str(stream)
    if isinstance(stream, bytes):
        return stream.decode("utf-8"), None
    if isinstance(stream, str):
        return stream, None
    data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data, getattr(stream, "name", None)


def parse_design_text(text: str, what: str = "design") -> Tuple[int, np.ndarray, Optional[np.ndarray]]:
    """Parse "# degree t" plus rows of "x y z" (optionally a weight column)."""
    degree = None
    rows: List[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) >= 2 and parts[0].lower() == "degree":
                try:
                    degree = int(parts[1])
                except ValueError:
                    raise FormatError(f"{what}: bad degree header '{line}'")
            continue
        rows.append(line)
    if not rows:
        raise FormatError(f"{what}: no points")
    if degree is None:
        raise FormatError(f"{what}: missing '# degree <t>' header")
    try:
        data = np.loadtxt(io.StringIO("\n".join(rows)), ndmin=2)
    except ValueError as e:
        raise FormatError(f"{what}: unreadable point rows ({e})")
    if data.shape[1] not in (3, 4):
        raise FormatError(f"{what}: expected 3 or 4 columns, got {data.shape[1]}")
    points = data[:, :3]
    norms = np.linalg.norm(points, axis=1)
    bad = np.abs(norms - 1.0) > UNIT_TOLERANCE
    if np.any(bad):
        k = int(np.argmax(bad))
        raise FormatError(f"{what}: point {k} has norm {norms[k]:.12g}, not a unit vector")
    weights = data[:, 3].copy() if data.shape[1] == 4 else None
    return degree, points / norms[:, None], weights


def load_spherical_design(stream) -> QuadratureRule:
    """
    Load a symmetric spherical design with equal weights 4*pi/N.

    Accepts a path, a text or binary stream, or the file content itself.
    """
    text, source = read_text_source(stream)
    degree, points, _ = parse_design_text(text, what=source or "design")
    n = points.shape[0]
    weights = np.full(n, FOUR_PI / n)
    check_rule_weights(points, weights, source or "design")
    logger.info(f"Loaded spherical design: N={n}, degree={degree}" + (f" from {source}" if source else ""))
    return QuadratureRule(kind=SD, points=points, weights=weights, exactness_degree=degree, source=source)


def read_design_degree(path: Union[str, Path]) -> Optional[int]:
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 2 and parts[0].lower() == "degree":
                    try:
                        return int(parts[1])
                    except ValueError:
                        return None
                continue
            return None
    return None


def scan_design_directory(path: Union[str, Path]) -> List[Tuple[int, int, Path]]:
    """(degree, N, path) for every design file in a directory, smallest first."""
    found = []
    for f in sorted(Path(path).glob("*.txt")):
        degree = read_design_degree(f)
        if degree is None:
            logger.debug(f"Skipping {f}: no degree header")
            continue
        with open(f, "r", encoding="utf-8") as fh:
            n = sum(1 for line in fh if line.strip() and not line.lstrip().startswith("#"))
        found.append((degree, n, f))
    found.sort(key=lambda item: (item[1], item[0]))
    return found


def select_design(path: Union[str, Path], min_degree: int) -> QuadratureRule:
    """Smallest design in a directory whose exactness is at least min_degree."""
    for degree, n, f in scan_design_directory(path):
        if degree >= min_degree:
            return load_spherical_design(f)
    raise FormatError(f"No spherical design with degree >= {min_degree} in {path}")


@dataclass
class ExactnessReport:
    L: int
    max_deviation: float
    weight_sum_error: float
    method: str

    @property
    def probe_degree(self) -> int:
        return self.L // 2


def verify_quadrature_exactness(rule: QuadratureRule, L: int) -> ExactnessReport:
    """
    Max deviation of the discrete Gram matrix of Y_lm, l <= L/2, from identity.

    Ring rules are checked exactly per residue class of the order modulo the
    number of longitudes (orders in different classes are orthogonal under
    the equispaced longitude sum); other rules build the Gram matrix in
    row blocks.
    """
    from src.scalar_harmonics import legendre_table, scalar_basis_matrix

    lh = int(L) // 2
    weight_sum_error = abs(float(rule.weights.sum()) - FOUR_PI)

    if rule.rings is not None:
        rings = rule.rings
        table = legendre_table(lh, rings.cos_theta, np.sqrt((1.0 - rings.cos_theta) * (1.0 + rings.cos_theta)))
        # columns (l, mu) with signed Legendre values, grouped by mu mod n_lon
        groups: Dict[int, List[np.ndarray]] = {}
        for mu in range(-lh, lh + 1):
            m = abs(mu)
            sign = (-1.0) ** m if mu < 0 else 1.0
            cols = sign * table.values[m]
            groups.setdefault(mu % rings.n_lon, []).append(cols)
        dev = 0.0
        scale = rings.ring_weights * rings.n_lon
        for blocks in groups.values():
            A = np.concatenate(blocks, axis=1)
            G = A.T @ (scale[:, None] * A)
            dev = max(dev, float(np.max(np.abs(G - np.eye(G.shape[0])))))
        method = "ring-blocks"
    else:
        ncols = (lh + 1) ** 2
        G = np.zeros((ncols, ncols), dtype=complex)
        chunk = max(1, int(4_000_000 // max(ncols, 1)))
        for start in range(0, rule.N, chunk):
            sl = slice(start, start + chunk)
            Y = scalar_basis_matrix(lh, rule.points[sl])
            G += Y.conj().T @ (rule.weights[sl, None] * Y)
        dev = float(np.max(np.abs(G - np.eye(ncols))))
        method = "dense"

    logger.debug(f"Exactness probe L={L} on {rule.kind} N={rule.N}: max deviation {dev:.3e}")
    return ExactnessReport(L=int(L), max_deviation=dev, weight_sum_error=weight_sum_error, method=method)
