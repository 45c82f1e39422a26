"""
File formats.

Binary files (coefficients, sample sequences) start with a fixed
little-endian header followed by a float64 payload:

    magic     4 bytes  b"TNLT"
    version   u1
    kind      u1       1 = coefficient pair, 2 = sample sequence
    flags     u1       bit 0 = certified
    pad       u1
    bandlimit <u4
    count     <u8      coefficient entries per family, or node count

Coefficient payload: per (l, m) row divc.re, divc.im, curlc.re, curlc.im.
Sequence payload: per node x.re, x.im, y.re, y.im, z.re, z.im.

A decomposition bundle is a directory with manifest.yaml plus one
sequence file and one coefficient mirror per stored sequence.
"""

import shutil
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd
import yaml
from loguru import logger

from src.errors import ConfigurationError, FormatError, ShapeError, VersionError
from src.filter_bank import bank_from_id
from src.needlet_transform import Convention, LevelScheme, NeedletDecomposition
from src.sphere_geom import (
    GL,
    SD,
    QuadratureRule,
    check_rule_weights,
    gauss_legendre_rule,
    load_spherical_design,
    parse_design_text,
    read_text_source,
)
from src.vsh import TangentSampleSeq, VectorCoeffPair, vector_count

MAGIC = b"TNLT"
FORMAT_VERSION = 1
KIND_COEFFS = 1
KIND_SEQUENCE = 2
FLAG_CERTIFIED = 0x01
MANIFEST = "manifest.yaml"

HEADER_DTYPE = np.dtype(
    [
        ("magic", "S4"),
        ("version", "u1"),
        ("kind", "u1"),
        ("flags", "u1"),
        ("pad", "u1"),
        ("bandlimit", "<u4"),
        ("count", "<u8"),
    ]
)

PathLike = Union[str, Path]


def _write_binary(path: PathLike, kind: int, bandlimit: int, count: int, certified: bool, payload: np.ndarray) -> None:
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = FORMAT_VERSION
    header["kind"] = kind
    header["flags"] = FLAG_CERTIFIED if certified else 0
    header["bandlimit"] = bandlimit
    header["count"] = count
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def _read_binary(path: PathLike, kind: int, width: int):
    data = Path(path).read_bytes()
    if len(data) < HEADER_DTYPE.itemsize:
        raise FormatError(f"{path}: file too short for a header ({len(data)} bytes)")
    header = np.frombuffer(data[: HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if bytes(header["magic"]) != MAGIC:
        raise FormatError(f"{path}: not a tenslet file (magic {bytes(header['magic'])!r})")
    if int(header["version"]) != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {int(header['version'])}, supported {FORMAT_VERSION}")
    if int(header["kind"]) != kind:
        raise FormatError(f"{path}: file kind {int(header['kind'])}, expected {kind}")
    count = int(header["count"])
    expected = count * width * 8
    payload = data[HEADER_DTYPE.itemsize:]
    if len(payload) != expected:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, header promises {expected} (truncated file?)")
    values = np.frombuffer(payload, dtype="<f8").reshape(count, width).astype(float)
    return int(header["bandlimit"]), count, bool(int(header["flags"]) & FLAG_CERTIFIED), values


def write_coefficients(path: PathLike, coeffs: VectorCoeffPair) -> None:
    payload = np.column_stack([coeffs.divc.real, coeffs.divc.imag, coeffs.curlc.real, coeffs.curlc.imag])
    _write_binary(path, KIND_COEFFS, coeffs.L, vector_count(coeffs.L), coeffs.certified, payload)


def read_coefficients(path: PathLike) -> VectorCoeffPair:
    L, count, certified, values = _read_binary(path, KIND_COEFFS, 4)
    if count != vector_count(L):
        raise FormatError(f"{path}: {count} entries inconsistent with bandlimit {L}")
    return VectorCoeffPair(
        L=L,
        divc=values[:, 0] + 1j * values[:, 1],
        curlc=values[:, 2] + 1j * values[:, 3],
        certified=certified,
    )


def write_sequence(path: PathLike, seq: TangentSampleSeq) -> None:
    v = seq.values
    payload = np.column_stack([v[:, 0].real, v[:, 0].imag, v[:, 1].real, v[:, 1].imag, v[:, 2].real, v[:, 2].imag])
    _write_binary(path, KIND_SEQUENCE, seq.L, seq.rule.N, seq.certified, payload)


def read_sequence(path: PathLike, rule: QuadratureRule) -> TangentSampleSeq:
    L, count, certified, values = _read_binary(path, KIND_SEQUENCE, 6)
    if count != rule.N:
        raise ShapeError(f"{path}: {count} nodes, rule has {rule.N}")
    v = values[:, 0::2] + 1j * values[:, 1::2]
    return TangentSampleSeq(rule=rule, values=v, L=L, certified=certified)


# ---------------------------------------------------------------------------
# rules


def write_rule(path: PathLike, rule: QuadratureRule) -> None:
    """Design text format with a weight column."""
    lines = [f"# degree {rule.exactness_degree}", f"# kind {rule.kind}"]
    if rule.level is not None:
        lines.append(f"# level {rule.level}")
    table = np.column_stack([rule.points, rule.weights])
    lines.extend(" ".join(f"{x:.17g}" for x in row) for row in table)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote rule N={rule.N} to {path}")


def read_rule(path: PathLike) -> QuadratureRule:
    """Read a rule file; without a weight column the weights are 4*pi/N."""
    text, source = read_text_source(Path(path))
    degree, points, weights = parse_design_text(text, what=str(path))
    if weights is None:
        return load_spherical_design(Path(path))
    kind, level = SD, None
    for line in text.splitlines():
        parts = line.lstrip("# ").split()
        if line.startswith("#") and len(parts) >= 2:
            if parts[0] == "kind":
                kind = parts[1]
            elif parts[0] == "level":
                level = int(parts[1])
    check_rule_weights(points, weights, str(path))
    return QuadratureRule(kind=kind, points=points, weights=weights, exactness_degree=degree, level=level, source=source)


def write_error_map(path: PathLike, rule: QuadratureRule, T: np.ndarray, E: np.ndarray) -> None:
    """x,y,z,Tx,Ty,Tz,Ex,Ey,Ez per node."""
    T = np.asarray(T).real
    E = np.asarray(E).real
    if T.shape != (rule.N, 3) or E.shape != (rule.N, 3):
        raise ShapeError(f"Error map arrays need shape ({rule.N}, 3)")
    df = pd.DataFrame(np.hstack([rule.points, T, E]), columns=["x", "y", "z", "Tx", "Ty", "Tz", "Ex", "Ey", "Ez"])
    df.to_csv(path, index=False, float_format="%.17g")


def read_error_map(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


# ---------------------------------------------------------------------------
# bundles


def _rule_entry(rule: QuadratureRule, directory: Path, j: int) -> Dict:
    if rule.kind == GL and rule.level is not None and rule.source is None:
        return {"kind": GL, "level": int(rule.level)}
    name = f"rule_{j}.txt"
    if rule.source is not None and Path(rule.source).is_file():
        if Path(rule.source).resolve() != (directory / name).resolve():
            shutil.copyfile(rule.source, directory / name)
    else:
        write_rule(directory / name, rule)
    return {"kind": rule.kind, "file": name}


def _load_rule_entry(entry: Dict, directory: Path) -> QuadratureRule:
    if "level" in entry and entry.get("kind") == GL:
        return gauss_legendre_rule(int(entry["level"]))
    if "file" in entry:
        return read_rule(directory / entry["file"])
    raise FormatError(f"Manifest rule entry {entry} names neither a level nor a file")


def write_bundle(directory: PathLike, d: NeedletDecomposition, extra: Optional[Dict] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scheme = d.scheme
    files = {}
    for (part, level, n), seq in d.sequences():
        stem = "approx" if part == "approx" else f"detail_{level}_{n}"
        write_sequence(directory / f"{stem}.seq", seq)
        mirror = d.approx_coeffs if part == "approx" else (d.detail_coeffs.get(level) or [None] * n)[n - 1]
        entry = {"sequence": f"{stem}.seq"}
        if mirror is not None:
            write_coefficients(directory / f"{stem}.coef", mirror)
            entry["coefficients"] = f"{stem}.coef"
        files[stem] = entry
    manifest = {
        "format_version": FORMAT_VERSION,
        "scheme": {"J0": scheme.J0, "J": scheme.J, "convention": scheme.convention.value},
        "rules": {j: _rule_entry(scheme.rules[j], directory, j) for j in scheme.levels},
        "bank": d.bank_id,
        "files": files,
    }
    if extra:
        manifest.update(extra)
    with open(directory / MANIFEST, "w", encoding="utf-8") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    logger.info(f"Wrote decomposition bundle ({len(files)} sequences) to {directory}")
    return directory


def read_manifest(directory: PathLike) -> Dict:
    path = Path(directory) / MANIFEST
    if not path.is_file():
        raise FormatError(f"No {MANIFEST} in {directory}")
    with open(path, "r", encoding="utf-8") as fh:
        manifest = yaml.safe_load(fh)
    if not isinstance(manifest, dict):
        raise FormatError(f"{path}: manifest is not a mapping")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: bundle format version {version}, supported {FORMAT_VERSION}")
    for key in ("scheme", "rules", "bank", "files"):
        if key not in manifest:
            raise FormatError(f"{path}: manifest lacks '{key}'")
    return manifest


def read_bundle(directory: PathLike) -> NeedletDecomposition:
    directory = Path(directory)
    manifest = read_manifest(directory)
    bank = bank_from_id(manifest["bank"])
    s = manifest["scheme"]
    try:
        J0, J, convention = int(s["J0"]), int(s["J"]), Convention(s["convention"])
    except (KeyError, ValueError) as e:
        raise FormatError(f"{directory}: bad scheme entry {s}: {e}") from e
    rules = {int(j): _load_rule_entry(entry, directory) for j, entry in manifest["rules"].items()}
    scheme = LevelScheme.from_rules(J0, J, rules, convention)

    files = manifest["files"]

    def load(stem: str, rule: QuadratureRule):
        if stem not in files:
            raise FormatError(f"{directory}: manifest lists no file for {stem}")
        entry = files[stem]
        seq = read_sequence(directory / entry["sequence"], rule)
        coeffs = read_coefficients(directory / entry["coefficients"]) if "coefficients" in entry else None
        return seq, coeffs

    approx, approx_coeffs = load("approx", rules[J0])
    details, detail_coeffs = {}, {}
    for j in range(J0, J):
        pairs = [load(f"detail_{j}_{n}", rules[j + 1]) for n in range(1, bank.r + 1)]
        details[j] = [seq for seq, _ in pairs]
        if all(c is not None for _, c in pairs):
            detail_coeffs[j] = [c for _, c in pairs]
    logger.info(f"Read decomposition bundle J0={J0} J={J} bank={bank.bank_id} from {directory}")
    return NeedletDecomposition(
        scheme=scheme,
        bank_id=bank.bank_id,
        approx=approx,
        details=details,
        approx_coeffs=approx_coeffs,
        detail_coeffs=detail_coeffs,
    )


def check_bundle_scheme(manifest: Dict, J0: Optional[int], J: Optional[int], convention: Optional[str]) -> None:
    """Explicit settings must agree with what the bundle was written with."""
    s = manifest["scheme"]
    for name, wanted, stored in (("J0", J0, s.get("J0")), ("J", J, s.get("J")), ("convention", convention, s.get("convention"))):
        if wanted is not None and str(wanted) != str(stored):
            raise ConfigurationError(f"Bundle was written with {name}={stored}, requested {name}={wanted}")
