"""Command line interface: ``blochmass {presets,bands,run,compare}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 output could not be written.  The default output directory is taken from
``$BLOCHMASS_OUT`` (falling back to the current directory).
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import csvio
from .bands import LatticeSpec, band_structure
from .errors import ConfigError, NumericalError
from .firstorder import DriveSpec, FirstOrderModel, WavepacketSpec, timescales
from .scenario import (
    MAX_DURATION,
    PRESET_FIGURES,
    PRESET_NAMES,
    PhysicalParams,
    SolverSettings,
    describe,
    format_config,
    load_config,
    preset,
    scale,
)
from .splitstep import SimGrid, run as run_splitstep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

ENGINES = ("firstorder", "splitstep", "baseline")
OUT_ENV = "BLOCHMASS_OUT"


class OutputError(Exception):
    """An output file could not be written."""


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


# --------------------------------------------------------------------------
# engine drivers (importable for scripts)


def solve_horizon(sp, settings: SolverSettings, stride: int) -> float:
    """Run length rounded to a whole number of split-step sample intervals."""
    unit = stride * settings.dt
    return max(1, round(sp.horizon / unit)) * unit


def firstorder_model(sp, settings: SolverSettings, horizon: float) -> FirstOrderModel:
    return FirstOrderModel(
        sp.s,
        WavepacketSpec(sp.band, sp.sigma),
        DriveSpec(sp.force, horizon),
        cutoff=settings.cutoff,
        top=settings.top_band,
        q_points=settings.q_points,
        samples=settings.samples,
    )


def run_engines(sp, settings: SolverSettings, engines: Sequence[str], populations: bool = False, gate: bool = True):
    """Run the requested engines; returns ``{engine: TimeSeries}``."""
    stride = max(1, int(round(0.01 / settings.dt)))
    horizon = solve_horizon(sp, settings, stride)
    model = firstorder_model(sp, settings, horizon)
    out = {}
    if "firstorder" in engines:
        out["firstorder"] = model.series(populations=populations)
    if "baseline" in engines:
        out["baseline"] = model.baseline_series()
    if "splitstep" in engines:
        grid = SimGrid.for_packet(sp.sigma, settings.grid_cells, settings.pts_per_cell, settings.dt)
        res = run_splitstep(
            sp.s,
            WavepacketSpec(sp.band, sp.sigma),
            sp.force,
            horizon,
            grid=grid,
            sample_every=stride,
            populations=populations,
            n_bands=settings.n_bands,
            gate=gate,
            baseline=model.baseline_at,
        )
        out["splitstep"] = res.series
    return out


def summarize(sp, series: dict) -> dict:
    """Summary quantities; pure function of the series and the scenario."""
    ts = timescales(sp.s, sp.band, sp.sigma, sp.force)
    summary = {
        "label": sp.label,
        "F_scaled": sp.force,
        "v_R_m_per_s": sp.recoil_velocity,
        "tau_B_s": sp.tau_B,
        "tau_B_scaled": sp.tau_B_scaled,
        "nbar": ts.nbar,
        "tau_osc_s": ts.tau_osc * sp.time_unit,
        "tau_osc_over_tau_B": ts.ratio_osc,
        "tau_decay_s": math.nan if ts.tau_decay is None else ts.tau_decay * sp.time_unit,
        "tau_decay_over_tau_B": math.nan if ts.ratio_decay is None else ts.ratio_decay,
    }
    for name, s in series.items():
        dev = np.abs(s.v - s.v_baseline)
        summary[f"{name}.max_abs_v_minus_baseline"] = float(np.nanmax(dev)) if np.any(np.isfinite(dev)) else math.nan
        if s.populations is not None:
            row = list(s.bands).index(sp.band)
            summary[f"{name}.max_leakage"] = float(np.max(1.0 - s.populations[row]))
    return summary


# --------------------------------------------------------------------------
# subcommands


def _resolve_scenario(args) -> tuple[PhysicalParams, SolverSettings]:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        params, settings = load_config(text, label=Path(args.config).stem)
    elif args.scenario:
        params, settings = preset(args.scenario), SolverSettings()
    else:
        raise ConfigError("give a preset name or --config FILE")
    overrides = {}
    if args.grid_cells is not None:
        overrides["grid_cells"] = args.grid_cells
    if args.pts_per_cell is not None:
        overrides["pts_per_cell"] = args.pts_per_cell
    if args.dt is not None:
        overrides["dt"] = args.dt
    if overrides:
        fields = {f: getattr(settings, f) for f in settings.__dataclass_fields__}
        fields.update(overrides)
        settings = SolverSettings(**fields)
    if args.duration is not None:
        if not 0 < args.duration <= MAX_DURATION:
            raise ConfigError(f"--duration must lie in (0, {MAX_DURATION}] Bloch periods")
        values = {f: getattr(params, f) for f in params.__dataclass_fields__}
        values["duration"] = args.duration
        params = PhysicalParams(**values)
    return params, settings


def _write(path: Path, writer) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        writer(path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None


def _gnuplot_script(files: dict, label: str) -> str:
    lines = [
        "# gnuplot script; run with: gnuplot -p <this file>",
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        "set xlabel 't (scaled)'",
        "set ylabel 'v / v_R'",
        f"set title '{label}'",
    ]
    plots = []
    for engine, path in files.items():
        plots.append(f"'{path.name}' using 't_scaled':'v_scaled' with lines title '{engine}'")
    if "firstorder" in files:
        plots.append(
            f"'{files['firstorder'].name}' using 't_scaled':'v_baseline' with lines dt 2 title 'effective mass'"
        )
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def cmd_presets(args) -> int:
    for name in PRESET_NAMES:
        sp = scale(preset(name))
        print(
            f"{name:16s} s={sp.s:<5g} N={sp.band} sigma={sp.sigma:<6g} "
            f"F~={sp.force:.4g} tau_B={sp.tau_B:.4g} s  {PRESET_FIGURES[name]}"
        )
    return EXIT_OK


def cmd_bands(args) -> int:
    if args.s < 0:
        raise ConfigError("s must be >= 0")
    if args.bands < 1 or args.points < 2:
        raise ConfigError("--bands must be >= 1 and --points >= 2")
    spec = LatticeSpec(args.s, args.cutoff, args.bands)
    ks = np.linspace(args.kmin, args.kmax, args.points)
    energies = band_structure(spec, ks)
    cols = {"k_scaled": ks}
    for n in range(args.bands):
        cols[f"E_{n}"] = energies[:, n]
    meta = {"s": float(args.s), "cutoff": args.cutoff, "n_bands": args.bands}
    if args.out == "-":
        csvio.write_table(sys.stdout, cols, meta)
    else:
        path = Path(args.out) if args.out else default_out_dir() / f"bands_s{args.s:g}.csv"
        _write(path, lambda p: csvio.write_table(p, cols, meta))
        print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    engines = [e.strip() for e in args.engines.split(",") if e.strip()]
    bad = [e for e in engines if e not in ENGINES]
    if not engines or bad:
        raise ConfigError(f"--engines must be a non-empty subset of {','.join(ENGINES)}")
    params, settings = _resolve_scenario(args)
    sp = scale(params)
    if sp.force == 0:
        raise ConfigError("runs need a nonzero force (accel > 0)")
    out_dir = Path(args.out) if args.out else default_out_dir()
    label = params.label or "run"
    series = run_engines(sp, settings, engines, populations=args.populations, gate=not args.no_gate)
    echo = {"config": format_config(params, settings).strip().replace("\n", "; ")}
    echo.update(describe(sp))
    files = {}
    for name, ts in series.items():
        path = out_dir / f"{label}_{name}.csv"
        _write(path, lambda p, ts=ts: csvio.write_series(p, ts, sp.time_unit, echo))
        files[name] = path
    summary = summarize(sp, series)
    summary_path = out_dir / f"{label}_summary.txt"
    text = "".join(f"{k} = {csvio._meta_value(v)}\n" for k, v in summary.items())
    _write(summary_path, lambda p: p.write_text(text))
    if args.emit_bands:
        spec = LatticeSpec(sp.s, settings.cutoff, max(4, sp.band + 3))
        ks = np.linspace(-1.0, 1.0, 201)
        energies = band_structure(spec, ks)
        cols = {"k_scaled": ks, **{f"E_{n}": energies[:, n] for n in range(spec.n_bands)}}
        _write(out_dir / f"{label}_bands.csv", lambda p: csvio.write_table(p, cols, {"s": sp.s}))
    if args.gnuplot:
        _write(out_dir / f"{label}.gp", lambda p: p.write_text(_gnuplot_script(files, label)))
    sys.stdout.write(text)
    return EXIT_OK


def dominant_frequency(t, y) -> float:
    """Angular frequency of the largest non-DC DFT bin of ``y`` (uniform ``t``)."""
    y = np.asarray(y, dtype=float) - np.mean(y)
    spec = np.abs(np.fft.rfft(y))
    freqs = np.fft.rfftfreq(y.size, d=t[1] - t[0]) * 2.0 * math.pi
    if spec.size < 2:
        return math.nan
    return float(freqs[1 + int(np.argmax(spec[1:]))])


def compare_series(a_path, b_path, resample: bool = False) -> dict:
    meta_a, ca = csvio.read_table(a_path)
    meta_b, cb = csvio.read_table(b_path)
    ta, tb = ca["t_scaled"], cb["t_scaled"]
    same = ta.size == tb.size and np.allclose(ta, tb, rtol=1e-9, atol=1e-12)
    if not same:
        if not resample:
            raise ConfigError("time grids differ; pass --resample to interpolate the second file")
        lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
        keep = (ta >= lo - 1e-12) & (ta <= hi + 1e-12)
        ta = ta[keep]
        va, aa = ca["v_scaled"][keep], ca["a_scaled"][keep]
        vb = np.interp(ta, tb, cb["v_scaled"])
        ab = np.interp(ta, tb, cb["a_scaled"])
    else:
        va, aa, vb, ab = ca["v_scaled"], ca["a_scaled"], cb["v_scaled"], cb["a_scaled"]
    force = float(meta_a.get("F_scaled", "nan"))
    dv = va - vb
    da = aa - ab
    return {
        "samples": int(ta.size),
        "resampled": not same,
        "max_abs_dv_over_vR": float(np.max(np.abs(dv))),
        "rms_dv_over_vR": float(np.sqrt(np.mean(dv**2))),
        "max_abs_da_over_F": float(np.max(np.abs(da)) / force),
        "rms_da_over_F": float(np.sqrt(np.mean(da**2)) / force),
        "dv_dominant_omega_scaled": dominant_frequency(ta, dv),
    }


def cmd_compare(args) -> int:
    for p in (args.first, args.second):
        if not Path(p).is_file():
            raise ConfigError(f"no such file: {p}")
    report = compare_series(args.first, args.second, args.resample)
    text = "".join(f"{k} = {csvio._meta_value(v)}\n" for k, v in report.items())
    if args.out:
        _write(Path(args.out), lambda p: p.write_text(text))
    sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blochmass",
        description="Transient effective mass of a Bloch wavepacket after a sudden force.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("presets", help="list the figure presets")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("bands", help="band-structure CSV")
    p.add_argument("--s", type=float, required=True, help="potential depth in recoil energies")
    p.add_argument("--bands", type=int, default=4, help="number of bands (default 4)")
    p.add_argument("--points", type=int, default=201, help="k samples (default 201)")
    p.add_argument("--kmin", type=float, default=-1.0)
    p.add_argument("--kmax", type=float, default=1.0)
    p.add_argument("--cutoff", type=int, default=32, help="plane-wave cutoff J")
    p.add_argument("--out", help="output file, '-' for stdout")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("run", help="simulate a preset or config file")
    p.add_argument("scenario", nargs="?", help=f"preset name ({', '.join(PRESET_NAMES)})")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--engines", default="firstorder,baseline", help="comma list of firstorder,splitstep,baseline")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("--populations", action="store_true", help="also emit band populations")
    p.add_argument("--emit-bands", action="store_true", help="also write the band structure")
    p.add_argument("--grid-cells", type=int, help="split-step box size in lattice cells")
    p.add_argument("--pts-per-cell", type=int, help="split-step points per cell")
    p.add_argument("--dt", type=float, help="split-step time step (scaled)")
    p.add_argument("--duration", type=float, help="run length in Bloch periods")
    p.add_argument("--no-gate", action="store_true", help="skip the step-doubling convergence gate")
    p.add_argument("--gnuplot", action="store_true", help="write a gnuplot script next to the CSVs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="deviation report between two series files")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--resample", action="store_true", help="interpolate the second file onto the first grid")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"blochmass: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"blochmass: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OutputError as exc:
        print(f"blochmass: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
