"""Command-line surface: benchmarks, verification suites, complexity tables.

Configuration is a flat key-value text file (``key = value`` per line,
``#`` comments); command-line flags override file values.  Unknown keys are
errors.  Outputs are deterministic: identical configuration and seed give
byte-identical CSV files.

Exit codes: 0 success, 1 configuration error, 2 check failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .bench import BenchCase, case_fields_csv, run_case, summary_csv
from .lattice import (
    GridSpec,
    VelocityField,
    check_low_mach,
    d1q3,
    d2q5,
    diffusion_coefficient,
    load_velocity_table,
    relaxation_regime,
)
from .marching import default_omega
from .encodings import scaled_marching_alpha
from .dilation import marching_query_complexity
from .linsys import qlsa_query_complexity
from .reporting import check_rows_csv, format_value
from .suites import ALL_SUITES, run_suites


class ConfigError(ValueError):
    pass


_KNOWN_KEYS = {
    "model", "nx", "ny", "dx", "dt", "tau_star", "omega", "ux", "uy",
    "velocity_table", "phi0", "sigma0", "x0", "y0", "steps", "path",
    "seed", "tol", "out",
}


@dataclass
class RunConfig:
    model: str = "d1q3"
    nx: int = 128
    ny: int = 1
    dx: float = 1.0
    dt: float = 1.0
    tau_stars: tuple[float, ...] = (0.8, 1.0, 1.3)
    omega: float | None = None
    ux: float = 0.2
    uy: float = 0.2
    velocity_table: str | None = None
    phi0: float = 0.3
    sigma0: float = 15.0
    x0: float = 64.0
    y0: float = 32.0
    steps: tuple[int, ...] = (20, 40)
    path: str = "marching"
    seed: int = 0
    tol: float = 1e-10
    out: str = "out"
    raw: dict = field(default_factory=dict)


def parse_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _parse_typed(key: str, value: str):
    try:
        if key in ("nx", "ny", "seed"):
            return int(value)
        if key in ("dx", "dt", "omega", "ux", "uy", "phi0", "sigma0", "x0", "y0", "tol"):
            return float(value)
        if key == "tau_star":
            return tuple(float(v) for v in value.split(","))
        if key == "steps":
            return tuple(int(v) for v in value.split(","))
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key!r}: {value!r} ({exc})") from None
    return value


def validate_config(values: dict[str, str], overrides: dict | None = None) -> RunConfig:
    unknown = set(values) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    cfg = RunConfig(raw=dict(values))
    typed = {key: _parse_typed(key, value) for key, value in values.items()}
    if "model" in typed:
        cfg.model = typed["model"]
    if cfg.model not in ("d1q3", "d2q5"):
        raise ConfigError(f"model must be d1q3 or d2q5, got {cfg.model!r}")
    if "nx" not in typed:
        raise ConfigError("missing grid size: nx")
    cfg.nx = typed["nx"]
    if cfg.model == "d2q5":
        if "ny" not in typed:
            raise ConfigError("missing grid size: ny")
        cfg.ny = typed["ny"]
    else:
        cfg.ny = 1
    for key in ("dx", "dt", "ux", "uy", "phi0", "sigma0", "x0", "y0", "seed", "tol"):
        if key in typed:
            setattr(cfg, key, typed[key])
    if "tau_star" in typed:
        cfg.tau_stars = typed["tau_star"]
    if "omega" in typed:
        cfg.omega = typed["omega"]
        if not 0.0 < cfg.omega < 1.0:
            raise ConfigError(f"omega must lie in (0, 1), got {cfg.omega}")
    if "steps" in typed:
        cfg.steps = typed["steps"]
    if "path" in typed:
        cfg.path = typed["path"]
    if "velocity_table" in typed:
        cfg.velocity_table = typed["velocity_table"]
    if "out" in typed:
        cfg.out = typed["out"]
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    if cfg.path not in ("classical", "marching", "dilated", "qlsa"):
        raise ConfigError(f"unknown path {cfg.path!r}")
    n = cfg.nx * cfg.ny
    if n & (n - 1) or cfg.nx & (cfg.nx - 1) or cfg.ny & (cfg.ny - 1):
        raise ConfigError(f"grid sizes must be powers of two, got {cfg.nx}x{cfg.ny}")
    return cfg


def _load_config(args, overrides: dict | None = None) -> RunConfig:
    values = parse_config_file(args.config) if args.config else {}
    merged = dict(overrides or {})
    for key in ("seed", "tol", "out", "path"):
        if getattr(args, key, None) is not None:
            merged[key] = getattr(args, key)
    return validate_config(values, merged)


def _bench_cases(cfg: RunConfig) -> list[BenchCase]:
    if cfg.model == "d1q3":
        vs, grid = d1q3(), GridSpec(cfg.nx, 1, cfg.dx, cfg.dt)
        center = (cfg.x0,)
        u = (cfg.ux,)
    else:
        vs, grid = d2q5(), GridSpec(cfg.nx, cfg.ny, cfg.dx, cfg.dt)
        center = (cfg.x0, cfg.y0)
        u = (cfg.ux, cfg.uy)
    return [
        BenchCase(
            name=f"{cfg.model}-tau{tau}", vs=vs, grid=grid, phi0=cfg.phi0,
            sigma0=cfg.sigma0, center=center, u=u, tau_star=tau,
            steps=cfg.steps, path=cfg.path, omega=cfg.omega,
        )
        for tau in cfg.tau_stars
    ]


def _write_manifest(cfg: RunConfig, out_dir: Path) -> None:
    if cfg.model == "d1q3":
        grid = GridSpec(cfg.nx, 1, cfg.dx, cfg.dt)
        ufield = VelocityField.uniform((cfg.ux,), grid, 1)
    else:
        grid = GridSpec(cfg.nx, cfg.ny, cfg.dx, cfg.dt)
        ufield = VelocityField.uniform((cfg.ux, cfg.uy), grid, 2)
    low_mach = check_low_mach(ufield, grid)
    per_tau = {}
    for tau in cfg.tau_stars:
        omega = cfg.omega if cfg.omega is not None else default_omega(tau)
        per_tau[str(tau)] = {
            "diffusion_coefficient": diffusion_coefficient(tau, grid),
            "omega": omega,
            "alpha_step": scaled_marching_alpha(omega),
            "regime": relaxation_regime(tau),
            "coupled": abs(tau * (1 - omega) - 1.0) <= 1e-12,
        }
    manifest = {
        "version": __version__,
        "config": {k: format_value(getattr(cfg, k)) if isinstance(getattr(cfg, k), float)
                   else getattr(cfg, k)
                   for k in ("model", "nx", "ny", "dx", "dt", "omega", "ux", "uy",
                             "phi0", "sigma0", "x0", "y0", "path", "seed", "tol")},
        "tau_stars": list(cfg.tau_stars),
        "steps": list(cfg.steps),
        "derived": per_tau,
        "low_mach": {
            "ok": low_mach.ok,
            "max_components": list(low_mach.max_components),
            "bound": low_mach.bound,
            "one_dimensional_bound_assumed": cfg.model == "d1q3",
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    import warnings

    reports = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for case in _bench_cases(cfg):
            report = run_case(case)
            reports.append(report)
            case_fields_csv(report, out_dir / f"{case.name}-{cfg.path}.csv")
    summary_csv(reports, out_dir / "summary.csv")
    _write_manifest(cfg, out_dir)
    print(f"wrote {len(reports)} case files and summary.csv to {out_dir}")
    return 0


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    suite_names = list(ALL_SUITES) if args.suite in (None, "all") else [args.suite]
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name in suite_names:
            rows = run_suites([name], seed=cfg.seed, tol=cfg.tol)
            check_rows_csv(rows, out_dir / f"verify-{name}.csv")
            failed = [row for row in rows if not row.passed]
            failures += len(failed)
            status = "ok" if not failed else f"{len(failed)} FAILED"
            print(f"suite {name}: {len(rows)} checks, {status}")
            for row in failed:
                print(f"  FAIL {row.name}: {row.values}")
    return 0 if failures == 0 else 2


def cmd_complexity(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    omega = cfg.omega if cfg.omega is not None else 0.5
    rows = []
    for num_steps in (10, 100, 1000):
        for eps in (1e-2, 1e-3, 1e-4):
            tm = marching_query_complexity(num_steps, eps, 1.0, omega)
            ql = qlsa_query_complexity(num_steps, eps, 1.0, 1.0, omega)
            rows.append([
                num_steps, eps,
                tm.parameters["oracle_queries"], ql.parameters["oracle_queries"],
                tm.parameters["oracle_queries"] / ql.parameters["oracle_queries"],
            ])
    path = out_dir / "complexity.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["num_steps", "eps", "timemarch_queries", "qlsa_queries",
                         "ratio"])
        for row in rows:
            writer.writerow([row[0], format_value(row[1]), format_value(row[2]),
                             format_value(row[3]), format_value(row[4])])
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qlbm",
        description="Emulate and verify quantum lattice-Boltzmann time marching.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--tol", type=float, help="verification tolerance")

    p_bench = sub.add_parser("bench", parents=[common],
                             help="run Gaussian-hill benchmark cases")
    p_bench.add_argument("--path", choices=("classical", "marching", "dilated", "qlsa"))
    p_bench.set_defaults(handler=cmd_bench)

    p_verify = sub.add_parser("verify", parents=[common],
                              help="run verification suites")
    p_verify.add_argument("--suite", choices=tuple(ALL_SUITES) + ("all",),
                          default="all")
    p_verify.set_defaults(handler=cmd_verify, path=None)

    p_cx = sub.add_parser("complexity", parents=[common],
                          help="tabulate analytic query counts")
    p_cx.set_defaults(handler=cmd_complexity, path=None)

    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())