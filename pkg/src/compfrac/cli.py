"""Command-line pipeline: derivative tables, resummed curves, transport runs.

Subcommands mirror the pipeline stages: ``derivs`` builds the exact
derivative table, ``cf`` turns it into continued-fraction data and
sampled curves, ``solve`` runs the transport solve driven by a chosen
temperature, ``verify`` closes the loop, and ``reproduce`` chains all
four from a shipped scenario config.

Every output file is schema-versioned and byte-deterministic for a
fixed config; the run manifest carries the only timestamp.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from datetime import datetime, timezone
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .contfrac import (
    ContinuedFraction,
    PoleHit,
    cf_coefficients,
    cf_eval,
    find_defects,
    select_approximant,
    taylor_eval,
    to_rational,
)
from .moments import DerivativeTable, theta_derivatives_comptonization
from .spectra import (
    COMPTONIZATION,
    Bremsstrahlung,
    Monoenergetic,
    NonConvergedQuadrature,
    UnsupportedParams,
    equilibrium_spectrum,
    equilibrium_temperature,
)
from .transport import (
    Grid,
    NonPositiveTemperature,
    PositivityViolation,
    SnapshotMissing,
    StepSizeUnderflow,
    TemperatureFn,
    solve_transport,
    write_run_manifest,
    write_snapshot_csv,
)
from .verify import self_consistency

__all__ = ["ConfigError", "RunConfig", "load_config_file", "build_config", "main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3

_NUMERICAL_ERRORS = (
    PoleHit,
    NonPositiveTemperature,
    PositivityViolation,
    StepSizeUnderflow,
    SnapshotMissing,
    NonConvergedQuadrature,
    UnsupportedParams,
)


class ConfigError(ValueError):
    """Invalid configuration; names the offending field."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; file keys and flag names match field names."""

    spectrum: str = "monoenergetic"
    M: int = 24
    y_max: float = 2.0
    theta: str = "cf"
    grid_cells: int = 400
    grid_x_min: float = 1e-3
    grid_x_max: float = 50.0
    snapshots: int = 21
    rtol: float = 1e-6
    tolerance: float = 0.02
    taylor_n: str = ""
    cf_n: str = ""
    samples: int = 81
    out_dir: str = "out"
    jobs: int = 1
    label: str = ""

    @property
    def tag(self) -> str:
        if self.label:
            return self.label
        return self.spectrum.split(":", 1)[0]


_FIELDS = {f.name: f.type for f in fields(RunConfig)}
_CANONICAL = {name.lower(): name for name in _FIELDS}
_INT_FIELDS = {"M", "grid_cells", "snapshots", "samples", "jobs"}
_FLOAT_FIELDS = {"y_max", "grid_x_min", "grid_x_max", "rtol", "tolerance"}


def _parse_number(text: str) -> float:
    """Accept both decimal and p/q forms so configs can state exact values."""
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}")


def load_config_file(path) -> dict:
    """Flat key=value lines; blank lines and # comment lines skipped."""
    values = {}
    for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("config", f"{path}:{ln}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        key = _CANONICAL.get(key.lower(), key)
        if key not in _FIELDS:
            raise ConfigError(key, f"unknown config key ({path}:{ln})")
        values[key] = value.strip()
    return values


def _coerce(name: str, raw) -> object:
    if not isinstance(raw, str):
        return raw
    try:
        if name in _INT_FIELDS:
            return int(raw)
        if name in _FLOAT_FIELDS:
            return _parse_number(raw)
    except ValueError as exc:
        raise ConfigError(name, str(exc))
    return raw


def build_config(file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Defaults, then config file, then flags; flags win."""
    merged = {}
    for source in (file_values or {}), (flag_values or {}):
        for key, value in source.items():
            if value is None:
                continue
            merged[key] = _coerce(key, value)
    config = RunConfig(**merged)
    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    _parse_spectrum(config.spectrum)
    if not 0 <= config.M <= 64:
        raise ConfigError("M", f"order must be within 0..64, got {config.M}")
    if not config.y_max > 0:
        raise ConfigError("y_max", f"must be positive, got {config.y_max}")
    if config.grid_cells < 8:
        raise ConfigError("grid_cells", f"need at least 8 cells, got {config.grid_cells}")
    if not 0 < config.grid_x_min < config.grid_x_max:
        raise ConfigError(
            "grid_x_min",
            f"need 0 < x_min < x_max, got [{config.grid_x_min}, {config.grid_x_max}]",
        )
    if config.snapshots < 2:
        raise ConfigError("snapshots", f"need at least 2, got {config.snapshots}")
    if not 0 < config.rtol <= 0.1:
        raise ConfigError("rtol", f"must lie in (0, 0.1], got {config.rtol}")
    if not config.tolerance > 0:
        raise ConfigError("tolerance", f"must be positive, got {config.tolerance}")
    if config.samples < 2:
        raise ConfigError("samples", f"need at least 2, got {config.samples}")
    if config.jobs < 1:
        raise ConfigError("jobs", f"must be at least 1, got {config.jobs}")
    _parse_theta_spec(config.theta, config.M)
    _parse_levels(config.taylor_n, config.M, "taylor_n")
    _parse_levels(config.cf_n, config.M, "cf_n")


def _parse_spectrum(spec: str):
    name, _, arg = spec.partition(":")
    if name == "monoenergetic" and not arg:
        return Monoenergetic()
    if name == "bremsstrahlung" and not arg:
        return Bremsstrahlung()
    if name == "wien":
        try:
            theta_eq = _parse_number(arg or "1")
        except ValueError as exc:
            raise ConfigError("spectrum", str(exc))
        if theta_eq <= 0:
            raise ConfigError("spectrum", f"wien temperature must be positive, got {arg}")
        return equilibrium_spectrum(COMPTONIZATION, n_r=1, theta_eq=theta_eq)
    raise ConfigError(
        "spectrum",
        f"unknown spectrum {spec!r}; expected monoenergetic, bremsstrahlung, or wien:THETA",
    )


def _table_spectrum(config: RunConfig):
    """The derivative pipeline needs exact initial moments."""
    spectrum = _parse_spectrum(config.spectrum)
    if not isinstance(spectrum, (Monoenergetic, Bremsstrahlung)):
        raise ConfigError(
            "spectrum",
            f"{config.spectrum!r} has no exact derivative table; "
            "use monoenergetic or bremsstrahlung",
        )
    return spectrum


def _parse_theta_spec(spec: str, order: int) -> tuple:
    kind, _, arg = spec.partition(":")
    if kind == "cf":
        if not arg:
            return ("cf", None)
        if arg.isdigit() and 0 <= int(arg) <= order:
            return ("cf", int(arg))
        raise ConfigError("theta", f"cf level must lie in 0..{order}, got {arg!r}")
    if kind == "taylor":
        if arg.isdigit() and 0 <= int(arg) <= order:
            return ("taylor", int(arg))
        raise ConfigError("theta", f"taylor level must lie in 0..{order}, got {arg!r}")
    if kind == "constant":
        try:
            value = _parse_number(arg)
        except ValueError as exc:
            raise ConfigError("theta", str(exc))
        if value <= 0:
            raise ConfigError("theta", f"constant temperature must be positive, got {arg}")
        return ("constant", value)
    raise ConfigError(
        "theta",
        f"unknown temperature spec {spec!r}; expected cf, cf:N, taylor:N, or constant:V",
    )


def _parse_levels(text: str, order: int, field_name: str) -> tuple:
    if not text:
        return ()
    levels = []
    for part in text.split(","):
        part = part.strip()
        if not part.isdigit() or not 0 <= int(part) <= order:
            raise ConfigError(field_name, f"levels must be integers in 0..{order}, got {part!r}")
        levels.append(int(part))
    return tuple(dict.fromkeys(levels))


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(data: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _derivative_table(config: RunConfig) -> DerivativeTable:
    return theta_derivatives_comptonization(_table_spectrum(config), config.M)


def _theta_eq(config: RunConfig):
    report = equilibrium_temperature(_table_spectrum(config))
    return report.value if report.meaningful else Fraction(0)


def _resolve_theta(config: RunConfig):
    """Temperature function per the theta spec, plus the pieces it used."""
    kind, arg = _parse_theta_spec(config.theta, config.M)
    if kind == "constant":
        return TemperatureFn.constant(arg), None, None
    table = _derivative_table(config)
    if kind == "taylor":
        return TemperatureFn.from_table(table, arg), table, None
    cf = cf_coefficients(table)
    if arg is None:
        selection = select_approximant(cf, config.y_max, theta_eq=_theta_eq(config))
        level = selection.level
    else:
        level = min(arg, cf.truncation)
    return TemperatureFn.from_continued_fraction(cf, level), table, cf


def _grid(config: RunConfig) -> Grid:
    return Grid.log_spaced(
        cells=config.grid_cells,
        x_min=config.grid_x_min,
        x_max=config.grid_x_max,
        y_end=config.y_max,
        snapshots=config.snapshots,
    )


def _run_solve(config: RunConfig):
    theta_fn, _, _ = _resolve_theta(config)
    spectrum = _parse_spectrum(config.spectrum)
    return solve_transport(spectrum, theta_fn, _grid(config), rtol=config.rtol), theta_fn


# ---------------------------------------------------------------------------
# subcommands


def cmd_derivs(config: RunConfig) -> int:
    table = _derivative_table(config)
    out = _out_dir(config)
    table.dump_json(out / f"derivs_{config.tag}.json")
    with open(out / f"derivs_{config.tag}.csv", "w", encoding="utf-8") as fh:
        fh.write("n,theta_deriv\n")
        for n, value in enumerate(table.values):
            fh.write(f"{n},{float(value):.6g}\n")
    print(f"wrote derivative table (order {table.order}) to {out}")
    return EXIT_OK


def _cf_level_artifacts(args):
    """Defect report and sampled curve for one truncation level."""
    cf, level, ys, y_max, panels = args
    report = find_defects(to_rational(cf, level), y_max, panels=panels)
    values = []
    for y in ys:
        try:
            values.append(cf_eval(cf, level, y))
        except PoleHit:
            values.append(float("nan"))
    return level, report, values


def cmd_cf(config: RunConfig) -> int:
    table = _derivative_table(config)
    cf = cf_coefficients(table)
    selection = select_approximant(cf, config.y_max, theta_eq=_theta_eq(config))
    out = _out_dir(config)

    _dump_json(cf.to_json_dict(), out / f"cf_{config.tag}.json")
    with open(out / f"cf_{config.tag}.csv", "w", encoding="utf-8") as fh:
        fh.write("n,c\n")
        for n, c in enumerate(cf.coefficients):
            fh.write(f"{n},{float(c):.6g}\n")
    _dump_json(selection.to_json_dict(), out / f"selection_{config.tag}.json")

    ys = [float(v) for v in np.linspace(0.0, config.y_max, config.samples)]
    cf_levels = _parse_levels(config.cf_n, cf.truncation, "cf_n") or (selection.level,)
    tasks = [(cf, level, ys, config.y_max, 4096) for level in sorted(cf_levels)]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_cf_level_artifacts, tasks))
    else:
        results = [_cf_level_artifacts(t) for t in tasks]
    results.sort(key=lambda item: item[0])

    _dump_json(
        {
            "schema": "compfrac.defect-sweep/1",
            "levels": {str(lv): report.to_json_dict() for lv, report, _ in results},
        },
        out / f"defects_{config.tag}.json",
    )
    with open(out / f"cf_curves_{config.tag}.csv", "w", encoding="utf-8") as fh:
        fh.write("y,value,N\n")
        for level, _, values in results:
            for y, v in zip(ys, values):
                fh.write(f"{y:.6g},{v:.6g},{level}\n")

    taylor_levels = _parse_levels(config.taylor_n, table.order, "taylor_n")
    if taylor_levels:
        with open(out / f"taylor_curves_{config.tag}.csv", "w", encoding="utf-8") as fh:
            fh.write("y,value,N\n")
            for level in sorted(taylor_levels):
                for y in ys:
                    fh.write(f"{y:.6g},{taylor_eval(table, level, y):.6g},{level}\n")

    defect_total = sum(len(report.poles) for _, report, _ in results)
    print(
        f"wrote continued-fraction data to {out}: selected level {selection.level}"
        f" ({selection.note}); {defect_total} defect(s) across emitted levels"
    )
    return EXIT_OK


def cmd_solve(config: RunConfig) -> int:
    sol, _ = _run_solve(config)
    out = _out_dir(config)
    snapshot_files = {}
    for k, (y, _) in enumerate(sol.snapshots):
        name = f"snapshot_{config.tag}_{k:02d}.csv"
        write_snapshot_csv(sol, y, out / name)
        snapshot_files[f"{y:.6g}"] = name
    write_run_manifest(
        sol,
        out / f"run_{config.tag}.json",
        snapshot_files=snapshot_files,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )
    print(
        f"solved to y = {config.y_max:g} in {sol.stats['steps_accepted']} steps"
        f" ({sol.stats['steps_rejected']} rejected); outputs in {out}"
    )
    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    sol, theta_fn = _run_solve(config)
    report = self_consistency(sol, theta_fn, tolerance=config.tolerance)
    out = _out_dir(config)
    report.dump_json(out / f"verify_{config.tag}.json")
    report.write_csv(out / f"verify_{config.tag}.csv")
    verdict = "pass" if report.passed else "FAIL"
    print(
        f"self-consistency {verdict}: max |theta_out - theta_in| / theta_in"
        f" = {report.max_rel_dev:.3%} at y = {report.argmax_y:g}"
        f" (tolerance {report.tolerance:.3%}); drifts: number {report.number_drift:.3e},"
        f" energy {report.energy_drift:.3e}"
    )
    return EXIT_OK if report.passed else EXIT_VERIFICATION


_SCENARIOS = ("monoenergetic", "bremsstrahlung")


def _shipped_config(name: str) -> dict:
    ref = resources.files("compfrac") / "configs" / f"{name}.cfg"
    with resources.as_file(ref) as path:
        return load_config_file(path)


def cmd_reproduce(config: RunConfig) -> int:
    for stage in (cmd_derivs, cmd_cf, cmd_solve):
        code = stage(config)
        if code != EXIT_OK:
            return code
    return cmd_verify(config)


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("args", message)


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--spectrum", help="monoenergetic | bremsstrahlung | wien:THETA")
    sub.add_argument("--M", dest="M", help="derivative order (default 24)")
    sub.add_argument("--y-max", dest="y_max", help="evolution horizon (default 2)")
    sub.add_argument("--theta", help="cf | cf:N | taylor:N | constant:V")
    sub.add_argument("--grid-cells", dest="grid_cells")
    sub.add_argument("--grid-x-min", dest="grid_x_min")
    sub.add_argument("--grid-x-max", dest="grid_x_max")
    sub.add_argument("--snapshots", help="snapshot count, uniform in [0, y_max]")
    sub.add_argument("--rtol", help="step-doubling relative tolerance")
    sub.add_argument("--tolerance", help="self-consistency pass threshold")
    sub.add_argument("--taylor-N", dest="taylor_n", help="comma list of series levels")
    sub.add_argument("--cf-N", dest="cf_n", help="comma list of fraction levels")
    sub.add_argument("--samples", help="curve sampling density in y")
    sub.add_argument("--out-dir", dest="out_dir")
    sub.add_argument("--jobs", help="parallel workers for level sweeps")
    sub.add_argument("--label", help="output filename tag (default: spectrum name)")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="compfrac",
        description="temperature resummation and self-consistent photon transport",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "derivs": "exact initial derivative table",
        "cf": "continued-fraction coefficients, curves, defect reports",
        "solve": "transport solve with snapshot output",
        "verify": "solve and compare recovered against driving temperature",
        "reproduce": "full pipeline from a shipped scenario config",
    }
    for name, help_text in commands.items():
        cmd = sub.add_parser(name, help=help_text)
        if name == "reproduce":
            cmd.add_argument("scenario", choices=_SCENARIOS)
        _add_config_flags(cmd)
    return parser


def main(argv=None) -> int:
    try:
        args = vars(_build_parser().parse_args(argv))
        command = args.pop("command")
        scenario = args.pop("scenario", None)
        config_path = args.pop("config", None)
        file_values = {}
        if scenario is not None:
            file_values.update(_shipped_config(scenario))
        if config_path is not None:
            file_values.update(load_config_file(config_path))
        config = build_config(file_values, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    handler = {
        "derivs": cmd_derivs,
        "cf": cmd_cf,
        "solve": cmd_solve,
        "verify": cmd_verify,
        "reproduce": cmd_reproduce,
    }[command]
    try:
        return handler(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
