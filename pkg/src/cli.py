"""
Command-line surface: quad, transform, bench and verify.

Exit codes: 0 success, 1 failed checks, 2 usage or configuration errors.
"""

import argparse
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.config import Config
from src.errors import ConfigurationError
from src.fields import (
    WindGrid,
    error_study,
    field_A,
    field_B_spec,
    field_C_spec,
    ingest_wind,
    spectral_field,
)
from src.filter_bank import FilterBank, bank_from_id, validate_bank
from src.io_formats import (
    check_bundle_scheme,
    read_bundle,
    read_coefficients,
    read_manifest,
    write_bundle,
    write_error_map,
    write_rule,
    write_sequence,
)
from src.monitor import ResourceMonitor, timed
from src.needlet_transform import Convention, LevelScheme, decompose, parseval_report, reconstruct
from src.scalar_harmonics import set_workers
from src.sphere_geom import GL, QuadratureRule, gauss_legendre_rule, load_spherical_design, verify_quadrature_exactness
from src.vsh import VectorCoeffPair, fit_route_phase, sample_points, vsh_matrices, vsh_synthesis

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

SUITES = ("filters", "vsh", "frame", "all")
FIELDS = ("a", "b", "c")


@dataclass
class RunConfig:
    """Validated settings of one command."""

    subcommand: str
    J0: int
    J: int
    rule: str
    convention: Convention
    field: str
    out: Path
    threads: Optional[int]
    seed: int
    drop_details: bool = False
    force: bool = False
    defect: Optional[str] = None
    data_dir: Optional[str] = None

    @classmethod
    def from_args(cls, args: argparse.Namespace, config: Config) -> "RunConfig":
        J0 = args.coarse if getattr(args, "coarse", None) is not None else config.get("transform.J0")
        J = args.level if getattr(args, "level", None) is not None else config.get("transform.J")
        convention = getattr(args, "convention", None) or config.get("transform.convention")
        run = cls(
            subcommand=args.command,
            J0=int(J0),
            J=int(J),
            rule=getattr(args, "rule", None) or config.get("quadrature.kind", GL),
            convention=Convention(convention),
            field=(getattr(args, "field", None) or "a"),
            out=Path(getattr(args, "out", None) or "out"),
            threads=args.threads if args.threads is not None else config.get("runtime.threads"),
            seed=args.seed if args.seed is not None else config.get("runtime.seed", 0),
            drop_details=bool(getattr(args, "drop_details", False)),
            force=bool(getattr(args, "force", False)),
            defect=getattr(args, "defect", None),
            data_dir=config.get("quadrature.data_dir"),
        )
        run.validate()
        return run

    def validate(self):
        if self.J0 < 1:
            raise ConfigurationError(f"--coarse must be >= 1, got {self.J0}")
        if self.J < self.J0:
            raise ConfigurationError(f"--level {self.J} must not be below --coarse {self.J0}")
        if self.rule != GL and not self.rule.startswith("sd:"):
            raise ConfigurationError(f"--rule must be 'gl' or 'sd:PATH', got '{self.rule}'")
        kind = self.field.split(":", 1)[0]
        if self.field not in FIELDS and kind not in ("file", "wind"):
            raise ConfigurationError(f"--field must be a, b, c, file:PATH or wind:PATH, got '{self.field}'")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {self.threads}")

    def resolve_path(self, raw: str) -> Path:
        path = Path(raw)
        if not path.exists() and self.data_dir:
            candidate = Path(self.data_dir) / raw
            if candidate.exists():
                return candidate
        if not path.exists():
            raise ConfigurationError(f"Path '{raw}' not found (also looked in data_dir={self.data_dir})")
        return path


def build_scheme(run: RunConfig, J0: Optional[int] = None, J: Optional[int] = None) -> LevelScheme:
    J0 = run.J0 if J0 is None else J0
    J = run.J if J is None else J
    if run.rule == GL:
        return LevelScheme.gauss_legendre(J0, J, run.convention)
    path = run.resolve_path(run.rule[3:])
    if path.is_dir():
        return LevelScheme.from_design_directory(J0, J, path, run.convention)
    design = load_spherical_design(path)
    return LevelScheme.from_rules(J0, J, {j: design for j in range(J0, J + 1)}, run.convention)


def build_bank(config: Config, defect: Optional[str]) -> FilterBank:
    bank = bank_from_id(config.get("transform.bank", "tenslet-r2"))
    if defect:
        try:
            kind, factor = defect.split(":")
            bank = bank.scaled(kind.upper(), float(factor))
        except ValueError as e:
            raise ConfigurationError(f"--defect expects FILTER:FACTOR such as b1:0.9, got '{defect}'") from e
    return bank


def field_values(run: RunConfig, config: Config, rule: QuadratureRule) -> np.ndarray:
    """Unweighted real field values at the nodes of a rule."""
    kind, _, path = run.field.partition(":")
    if run.field == "a":
        coeffs = field_A()
    elif run.field in ("b", "c"):
        spec = field_B_spec(config.get("fields.distance")) if run.field == "b" else field_C_spec()
        coeffs = spectral_field(spec, config.get("fields.reference_degree", 128))
    elif kind == "file":
        coeffs = read_coefficients(run.resolve_path(path))
    else:
        return ingest_wind(WindGrid.from_csv(run.resolve_path(path)), rule)
    return sample_points(coeffs, rule).real


# ---------------------------------------------------------------------------
# quad


def cmd_quad(args: argparse.Namespace, config: Config) -> int:
    if args.kind == GL:
        if args.level is None:
            raise ConfigurationError("quad gl needs --level")
        rule = gauss_legendre_rule(args.level)
        name = f"gl_{args.level}.txt"
    else:
        if args.file is None:
            raise ConfigurationError("quad sd needs --file")
        rule = load_spherical_design(Path(args.file))
        name = f"sd_{rule.N}.txt"
    report = verify_quadrature_exactness(rule, rule.exactness_degree)
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    write_rule(out / name, rule)
    print(
        f"kind={rule.kind} N={rule.N} exactness={rule.exactness_degree} "
        f"max_deviation={report.max_deviation:.3e} weight_sum_error={report.weight_sum_error:.3e}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# transform


def cmd_transform(args: argparse.Namespace, config: Config) -> int:
    if args.action == "decompose":
        return _transform_decompose(args, config)
    return _transform_reconstruct(args, config)


def _transform_decompose(args: argparse.Namespace, config: Config) -> int:
    run = RunConfig.from_args(args, config)
    scheme = build_scheme(run)
    bank = build_bank(config, run.defect)
    rule = scheme.rules[scheme.J]
    raw = field_values(run, config, rule)

    study = error_study(raw, scheme, bank, drop_details=run.drop_details)
    report = parseval_report(study.decomposition, study.input_norm2)
    write_bundle(run.out, study.decomposition, extra={"field": run.field, "t_dec": study.t_dec})
    write_error_map(run.out / "error_map.csv", rule, raw, raw - study.reconstructed)

    print(f"level={scheme.J} n={rule.N} t_dec={study.t_dec:.4f}s t_rec={study.t_rec:.4f}s")
    print(
        f"relative_error={study.relative_error:.4e} corrected_error={study.corrected_error:.4e} "
        f"projection_residual={study.residual_error:.4e}"
    )
    print(f"parseval_deviation={report.deviation:.3e}")
    return EXIT_OK


def _transform_reconstruct(args: argparse.Namespace, config: Config) -> int:
    bundle = Path(args.bundle or args.out or "out")
    manifest = read_manifest(bundle)
    check_bundle_scheme(manifest, args.coarse, args.level, args.convention)
    d = read_bundle(bundle)
    bank = bank_from_id(d.bank_id)
    t_rec, _, rec = timed(lambda: reconstruct(d, bank=bank, drop_details=args.drop_details), repeats=1, warmup=0)
    out = Path(args.out or bundle)
    out.mkdir(parents=True, exist_ok=True)
    write_sequence(out / "reconstructed.seq", rec)
    print(f"level={d.scheme.J} n={rec.rule.N} t_rec={t_rec:.4f}s")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args: argparse.Namespace, config: Config) -> int:
    monitor = ResourceMonitor(config)
    J0 = args.coarse if args.coarse is not None else config.get("bench.J0", 1)
    repeats = config.get("bench.repeats", 3)
    warmup = config.get("bench.warmup", 1)
    bank = build_bank(config, None)
    coeffs = field_A()
    rows = []
    for J in range(args.jmin, args.jmax + 1):
        monitor.check_level(J, force=args.force)
        scheme = LevelScheme.gauss_legendre(J0, J, Convention.DEGREE)
        seq = vsh_synthesis(coeffs.resized(scheme.bandlimit(J)), scheme.rules[J])
        t_dec, _, d = timed(lambda: decompose(seq, scheme, bank), repeats, warmup)
        t_rec, _, _ = timed(lambda: reconstruct(d, scheme, bank), repeats, warmup)
        rows.append({"J": J, "N": scheme.node_count(J), "M": scheme.coefficient_capacity(), "t_dec": t_dec, "t_rec": t_rec})
        monitor.log_performance(f"bench J={J}")

    table = pd.DataFrame(rows, columns=["J", "N", "M", "t_dec", "t_rec"])
    table["ratio_dec"] = table["t_dec"] / table["t_dec"].shift(1)
    table["ratio_rec"] = table["t_rec"] / table["t_rec"].shift(1)
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "bench.csv", index=False, float_format="%.6g")
    print(table.to_string(index=False, na_rep=""))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _suite_filters(bank: FilterBank, config: Config, results) -> None:
    tol = config.get("verify.filters_tol", 1e-12)
    report = validate_bank(bank, config.get("verify.grid_size", 10000))
    for name, dev in report.deviations.items():
        results.append((f"filters.{name}", dev, tol))


def _suite_vsh(config: Config, rng: np.random.Generator, results) -> None:
    tol = config.get("verify.vsh_tol", 1e-10)
    rule = gauss_legendre_rule(5)
    y1, y2 = vsh_matrices(16, rule.points)
    sw = rule.sqrt_weights[:, None, None]
    A = np.concatenate([sw * y1, sw * y2], axis=1)
    A = A.transpose(0, 2, 1).reshape(-1, A.shape[1])
    gram = A.conj().T @ A
    n = y1.shape[1]
    results.append(("vsh.orthonormality", float(np.max(np.abs(gram - np.eye(gram.shape[0])))), tol))
    cross_tol = config.get("verify.cross_family_tol", 1e-11)
    results.append(("vsh.cross_family", float(np.max(np.abs(gram[:n, n:]))), cross_tol))

    points = rng.standard_normal((config.get("verify.route_points", 100), 3))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    fit = fit_route_phase(8, points)
    results.append(("vsh.cross_route", fit.residual, config.get("verify.cross_route_tol", 1e-10)))


def _suite_frame(bank: FilterBank, config: Config, rng: np.random.Generator, results) -> None:
    tol = config.get("verify.frame_tol", 1e-10)
    scheme = LevelScheme.gauss_legendre(3, 5)
    coeffs = VectorCoeffPair.random(scheme.bandlimit(5), rng, real_field=True)
    seq = vsh_synthesis(coeffs, scheme.rules[5])
    d = decompose(seq, scheme, bank)
    report = parseval_report(d, seq.norm2())
    results.append(("frame.parseval", report.deviation, tol))
    rec = reconstruct(d, scheme, bank)
    error = float(np.linalg.norm(rec.values - seq.values) / np.linalg.norm(seq.values))
    results.append(("frame.reconstruction", error, tol))


def cmd_verify(args: argparse.Namespace, config: Config) -> int:
    seed = args.seed if args.seed is not None else config.get("runtime.seed", 0)
    rng = np.random.default_rng(seed)
    bank = build_bank(config, args.defect)
    suites = ("filters", "vsh", "frame") if args.suite == "all" else (args.suite,)
    results: List[Tuple[str, float, float]] = []
    for suite in suites:
        logger.info(f"Running verify suite '{suite}'")
        if suite == "filters":
            _suite_filters(bank, config, results)
        elif suite == "vsh":
            _suite_vsh(config, rng, results)
        else:
            _suite_frame(bank, config, rng, results)

    passed = 0
    for name, dev, tol in results:
        ok = dev < tol
        passed += ok
        print(f"{'✓' if ok else '✗'} {name}: deviation={dev:.3e} (tol {tol:.0e})")
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_FAILED


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    p.add_argument("--seed", type=int, default=None)


def _add_scheme(p: argparse.ArgumentParser) -> None:
    p.add_argument("-J", "--level", type=int, default=None, help="finest level J")
    p.add_argument("-J0", "--coarse", type=int, default=None, help="coarsest level J0")
    p.add_argument("--rule", default=None, help="gl or sd:PATH (design file or directory)")
    p.add_argument("--convention", choices=[c.value for c in Convention], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tenslet", description="Tensor needlet transforms for tangent fields")
    parser.add_argument("--config", default="config.yaml", help="configuration file")
    sub = parser.add_subparsers(dest="command", required=True)

    quad = sub.add_parser("quad", help="generate or load a quadrature rule and report its exactness")
    quad.add_argument("kind", choices=["gl", "sd"])
    quad.add_argument("-J", "--level", type=int, default=None)
    quad.add_argument("--file", default=None)
    _add_common(quad)

    transform = sub.add_parser("transform", help="decompose a field or reconstruct a bundle")
    transform.add_argument("action", choices=["decompose", "reconstruct"])
    _add_scheme(transform)
    transform.add_argument("--field", default=None, help="a, b, c, file:PATH or wind:PATH")
    transform.add_argument("--bundle", default=None, help="bundle directory to reconstruct")
    transform.add_argument("--drop-details", action="store_true")
    transform.add_argument("--defect", default=None, help="scale one filter, e.g. b1:0.9")
    _add_common(transform)

    bench = sub.add_parser("bench", help="timing table over levels")
    bench.add_argument("--jmin", type=int, default=5)
    bench.add_argument("--jmax", type=int, default=8)
    bench.add_argument("-J0", "--coarse", type=int, default=None)
    bench.add_argument("--force", action="store_true")
    _add_common(bench)

    verify = sub.add_parser("verify", help="run the verification suites")
    verify.add_argument("suite", choices=SUITES)
    verify.add_argument("--defect", default=None, help="scale one filter, e.g. b1:0.9")
    _add_common(verify)
    return parser


COMMANDS = {"quad": cmd_quad, "transform": cmd_transform, "bench": cmd_bench, "verify": cmd_verify}


def dispatch(args: argparse.Namespace, config: Config) -> int:
    threads = args.threads if args.threads is not None else config.get("runtime.threads")
    set_workers(threads)
    return COMMANDS[args.command](args, config)
