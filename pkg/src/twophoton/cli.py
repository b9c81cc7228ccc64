"""Command-line front end: config-driven runs that emit CSV/JSON for plotting.

Three subcommands cover the three result families: ``spectrum`` (levels on a
coupling grid), ``collapse`` (collapse-point diagnostics), ``fluorescence``
(driven emission spectra with peak tables).  Configuration is a flat
``key = value`` file with dotted section prefixes; every default that was
applied is recorded in ``meta.json`` so a run is reproducible from its
outputs alone.  All frequencies and energies are in units of the cavity
frequency, which the command line fixes at 1.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 warning
escalated by --strict.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .model import ModelParams, build_drive_operator, collapse_coupling
from .dynamics import (
    DissipationSpec,
    DriveSpec,
    SteadyStateError,
    TruncationError,
    build_generator,
    fluorescence,
    resonant_drive_frequency,
)
from .spectrum import (
    CollapseFitError,
    NonConvergentError,
    converge_spectrum,
    estimate_collapse,
    state_labels,
    sweep_coupling,
)

__all__ = ["main", "ConfigError", "parse_config_text"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_STRICT_WARNING = 4


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``section.key = value`` lines; '#' starts a comment line."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        pairs[key] = value
    return pairs


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_bool(text: str) -> bool:
    token = text.strip().lower()
    if token in ("true", "yes", "on", "1"):
        return True
    if token in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_float_list(text: str) -> list[float]:
    return [_parse_float(part) for part in text.split(",") if part.strip()]


def _parse_frequency(text: str):
    token = text.strip().lower()
    if token == "auto":
        return "auto"
    return _parse_float(text)


_MODEL_KEYS = {
    "model.omega_q": (_parse_float, 2.0),
    "model.g2": (_parse_float_list, [0.005]),
    "model.n_qubits": (_parse_int, 1),
    "model.coupling_form": (str, "full_quadratic"),
    "model.j_interspin": (_parse_float, 0.0),
}

_SCHEMAS = {
    "spectrum": {
        **_MODEL_KEYS,
        "sweep.start": (_parse_float, 0.0),
        "sweep.stop": (_parse_float, None),
        "sweep.step": (_parse_float, None),
        "sweep.k_levels": (_parse_int, 12),
        "spectrum.rel_tol": (_parse_float, 1e-8),
        "output.format": (str, "csv"),
    },
    "collapse": {
        **_MODEL_KEYS,
        "collapse.fractions": (_parse_float_list, [0.90, 0.92, 0.94, 0.96, 0.98]),
        "collapse.rel_tol": (_parse_float, 1e-8),
        "collapse.probe_above": (_parse_bool, True),
        "output.format": (str, "csv"),
    },
    "fluorescence": {
        **_MODEL_KEYS,
        "dissipation.kappa_cavity": (_parse_float, 1e-3),
        "dissipation.kappa_qubit": (_parse_float, 1e-3),
        "dissipation.spectral_exponent": (_parse_int, 1),
        "dissipation.n_dressed": (_parse_int, 40),
        "drive.amplitude": (_parse_float, 5e-3),
        "drive.frequency": (_parse_frequency, "auto"),
        "drive.target": (str, "qubit(1)"),
        "fluorescence.output": (str, "cavity"),
        "fluorescence.tau_max": (_parse_float, 15000.0),
        "fluorescence.omega_min": (_parse_float, 0.5),
        "fluorescence.omega_max": (_parse_float, 1.5),
        "fluorescence.omega_points": (_parse_int, 10001),
        "fluorescence.rel_threshold": (_parse_float, 0.05),
        "fluorescence.rel_tol": (_parse_float, 1e-8),
        "output.format": (str, "csv"),
    },
}


def _resolve(pairs: dict[str, str], command: str):
    schema = _SCHEMAS[command]
    unknown = sorted(set(pairs) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    values: dict = {}
    defaults: dict = {}
    for key, (parse, default) in schema.items():
        if key in pairs:
            values[key] = parse(pairs[key])
        else:
            values[key] = default
            defaults[key] = default
    return values, defaults


def _model_from(values) -> ModelParams:
    g2 = values["model.g2"]
    first = g2[0] if isinstance(g2, list) else g2
    try:
        return ModelParams(
            omega_c=1.0,
            omega_q=values["model.omega_q"],
            g2=first,
            n_qubits=values["model.n_qubits"],
            coupling_form=values["model.coupling_form"],
            j_interspin=values["model.j_interspin"],
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _fmt(x) -> str:
    return "%.12g" % float(x)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _write_table(path_base: Path, fmt: str, header: list[str], rows: list[list]) -> Path:
    if fmt == "json":
        path = path_base.with_suffix(".json")
        records = [dict(zip(header, row)) for row in rows]
        _write_json(path, records)
        return path
    path = path_base.with_suffix(".csv")
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, bool):
                cells.append("true" if cell else "false")
            elif isinstance(cell, (int, np.integer)):
                cells.append(str(int(cell)))
            elif isinstance(cell, float):
                cells.append(_fmt(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _meta_payload(command: str, values, defaults, extra) -> dict:
    return {
        "command": command,
        "config": _jsonable(values),
        "defaults_applied": _jsonable(defaults),
        "units": {"energy": "omega_c", "omega_c": 1.0},
        "version": __version__,
        **extra,
    }


def cmd_spectrum(pairs: dict[str, str], out_dir: Path, strict: bool) -> int:
    values, defaults = _resolve(pairs, "spectrum")
    params = _model_from(values)
    g_col = collapse_coupling(params)
    stop = values["sweep.stop"]
    step = values["sweep.step"]
    if stop is None:
        stop = 0.95 * g_col
        defaults["sweep.stop"] = stop
        values["sweep.stop"] = stop
    if step is None:
        step = g_col / 25.0
        defaults["sweep.step"] = step
        values["sweep.step"] = step
    start = values["sweep.start"]
    k_levels = values["sweep.k_levels"]
    if step <= 0:
        raise ConfigError(f"sweep.step must be > 0, got {step}")
    if start < 0 or stop <= start:
        raise ConfigError(f"need 0 <= start < stop, got {start}..{stop}")
    if stop >= g_col:
        raise ConfigError(
            f"sweep.stop {stop} must stay below the collapse coupling {g_col:.6g}"
        )
    if k_levels < 1:
        raise ConfigError(f"sweep.k_levels must be >= 1, got {k_levels}")
    grid = np.arange(start, stop + 0.5 * step, step)

    print(f"spectrum: {len(grid)} coupling points, {k_levels} levels", file=sys.stderr)
    result = sweep_coupling(params, grid, k_levels, values["spectrum.rel_tol"])

    rows = []
    for i, g in enumerate(result.g_values):
        for lvl in range(k_levels):
            rows.append(
                [
                    float(g),
                    lvl,
                    float(result.energies[i, lvl]),
                    int(result.parities[i, lvl]),
                    bool(result.converged[i, lvl]),
                ]
            )
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_table(
        out_dir / "spectrum",
        values["output.format"],
        ["g", "level_index", "energy", "parity", "converged"],
        rows,
    )
    _write_json(
        out_dir / "meta.json",
        _meta_payload(
            "spectrum",
            values,
            defaults,
            {
                "g_col_analytic": g_col,
                "g_grid": result.g_values,
                "n_max_used": result.n_max_used,
                "continuity_map": [list(map(int, p)) for p in result.continuity_map],
            },
        ),
    )
    return EXIT_OK


def cmd_collapse(pairs: dict[str, str], out_dir: Path, strict: bool) -> int:
    values, defaults = _resolve(pairs, "collapse")
    params = _model_from(values)
    fractions = values["collapse.fractions"]
    if len(fractions) < 4:
        raise ConfigError("collapse.fractions needs at least 4 grid points")
    if any(f <= 0 or f >= 1 for f in fractions):
        raise ConfigError("collapse.fractions must lie strictly between 0 and 1")

    print(f"collapse: probing {len(fractions)} grid points", file=sys.stderr)
    diag = estimate_collapse(
        params,
        grid_fractions=tuple(fractions),
        rel_tol=values["collapse.rel_tol"],
        probe_above=values["collapse.probe_above"],
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        out_dir / "collapse.json",
        {
            "g_col_analytic": diag.g_col_analytic,
            "g_col_estimated": diag.g_col_estimated,
            "method": diag.method,
            "spacing_curve": diag.spacing_curve,
            "first_failing_g": diag.first_failing_g,
        },
    )
    _write_json(
        out_dir / "meta.json",
        _meta_payload("collapse", values, defaults, {}),
    )
    return EXIT_OK


def _run_one_fluorescence(params, values, out_dir: Path, defaults) -> bool:
    diss = DissipationSpec(
        kappa_cavity=values["dissipation.kappa_cavity"],
        kappa_qubit=values["dissipation.kappa_qubit"],
        spectral_exponent=values["dissipation.spectral_exponent"],
        n_dressed=values["dissipation.n_dressed"],
    )
    print(
        f"fluorescence: g2={params.g2:g}, converging {diss.n_dressed} levels",
        file=sys.stderr,
    )
    eigs = converge_spectrum(params, diss.n_dressed, values["fluorescence.rel_tol"])
    freq = values["drive.frequency"]
    if freq == "auto":
        freq = resonant_drive_frequency(eigs)
    drive = DriveSpec(
        amplitude=values["drive.amplitude"],
        frequency=float(freq),
        target=values["drive.target"],
    )
    gen = build_generator(eigs, diss, drive, omega_c=1.0)
    x_out = build_drive_operator(eigs.space, values["fluorescence.output"])
    omega_grid = np.linspace(
        values["fluorescence.omega_min"],
        values["fluorescence.omega_max"],
        values["fluorescence.omega_points"],
    )
    print(
        f"fluorescence: g2={params.g2:g}, drive at {drive.frequency:.6g}, "
        "integrating correlations",
        file=sys.stderr,
    )
    spec = fluorescence(
        eigs,
        gen,
        x_out,
        omega_grid,
        tau_max=values["fluorescence.tau_max"],
        rel_threshold=values["fluorescence.rel_threshold"],
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    fmt = values["output.format"]
    _write_table(
        out_dir / "fluorescence",
        fmt,
        ["omega", "s_value"],
        [[float(w), float(s)] for w, s in zip(spec.omega_grid, spec.s_values)],
    )
    _write_table(
        out_dir / "peaks",
        fmt,
        ["frequency", "height", "assignment"],
        [
            [p.frequency, p.height, p.assignment or "unassigned"]
            for p in spec.peaks.peaks
        ],
    )
    _write_json(
        out_dir / "meta.json",
        _meta_payload(
            "fluorescence",
            {**values, "model.g2": params.g2, "drive.frequency": drive.frequency},
            defaults,
            {
                "n_max_used": eigs.n_max_used,
                "state_labels": state_labels(eigs),
                "eta": spec.eta,
                "tau_max_effective": spec.tau_max_effective,
                "tau_warning": spec.tau_warning,
                "peak_count": spec.peaks.count,
                "peak_centroid": spec.peaks.centroid,
                "peak_spread": spec.peaks.spread,
            },
        ),
    )
    if spec.tau_warning:
        print(
            f"warning: g2={params.g2:g}: correlation not decayed at tau_max; "
            "increase fluorescence.tau_max",
            file=sys.stderr,
        )
    return spec.tau_warning


def cmd_fluorescence(pairs: dict[str, str], out_dir: Path, strict: bool) -> int:
    values, defaults = _resolve(pairs, "fluorescence")
    g_list = values["model.g2"]
    if not g_list:
        raise ConfigError("model.g2 must list at least one coupling")
    base = _model_from(values)
    if values["fluorescence.omega_points"] < 2:
        raise ConfigError("fluorescence.omega_points must be >= 2")
    if values["fluorescence.omega_min"] >= values["fluorescence.omega_max"]:
        raise ConfigError("need fluorescence.omega_min < fluorescence.omega_max")
    if values["fluorescence.tau_max"] <= 0:
        raise ConfigError("fluorescence.tau_max must be > 0")

    warned = False
    if len(g_list) == 1:
        warned = _run_one_fluorescence(
            replace(base, g2=g_list[0]), values, out_dir, defaults
        )
    else:
        out_dir.mkdir(parents=True, exist_ok=True)
        for g in g_list:
            sub = out_dir / f"g_{_fmt(g)}"
            warned |= _run_one_fluorescence(replace(base, g2=g), values, sub, defaults)
        _write_json(
            out_dir / "meta.json",
            _meta_payload(
                "fluorescence",
                values,
                defaults,
                {"subdirectories": [f"g_{_fmt(g)}" for g in g_list]},
            ),
        )
    if warned and strict:
        print("strict mode: escalating tau_max warning", file=sys.stderr)
        return EXIT_STRICT_WARNING
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twophoton",
        description="Two-photon qubit-cavity model: spectra, collapse, fluorescence.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in (
        ("spectrum", cmd_spectrum),
        ("collapse", cmd_collapse),
        ("fluorescence", cmd_fluorescence),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="key = value file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument(
            "--strict", action="store_true", help="escalate warnings to exit code 4"
        )
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            if not args.config.is_file():
                raise ConfigError(f"config file not found: {args.config}")
            pairs = parse_config_text(args.config.read_text(encoding="utf-8"))
        else:
            pairs = {}
        return args.func(pairs, args.out, args.strict)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergentError as err:
        if err.failing_g is not None:
            print(f"numerical failure at g2={err.failing_g:.12g}", file=sys.stderr)
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CollapseFitError, TruncationError, SteadyStateError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
