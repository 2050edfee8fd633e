"""
Command-line front end.

Every run writes ``manifest.json`` into the output directory before any
result file; plots are drawn from CSV files already on disk.

Exit codes: 0 success, 1 other simulator error, 2 configuration or usage
error, 3 no guided mode, 4 sweep grid over the cap.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as cf
from . import pipeline as pl
from .errors import ConfigError, IosacError, NoGuidedMode
from .link import write_curves_csv, write_curves_json, write_eye_csv
from .modesolver import solve_slab, write_field_csv
from .ring import metrics
from .sensing import fit_sensitivity, fit_thermal, track_resonance

OUT_ENV = "IOSAC_OUT"
FIGURES = ("fig3c", "fig5a", "fig5b", "fig5c", "fig5d")
FORMATS = ("csv", "json", "svg", "all")


class SweepTooLarge(IosacError):
    pass


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config: str
    out: str
    seed: int | None
    format: str
    timestamp: str
    version: str
    figure: str | None = None

    def write(self, out: Path) -> Path:
        path = out / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _wants(args, kind: str) -> bool:
    return args.format in (kind, "all")


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _svg(fig, path: Path) -> None:
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "iosac"
    fig.savefig(path, format="svg", metadata={"Date": None})


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


# subcommands -------------------------------------------------------------


def cmd_modesolve(args, cfg, out: Path) -> list[Path]:
    cs = cf.cross_section(cfg, args.section)
    mode = solve_slab(cs)
    written = []
    if _wants(args, "csv"):
        p = out / f"field_{args.section}.csv"
        write_field_csv(mode, p)
        written.append(p)
    if _wants(args, "json"):
        record = {
            "section": args.section,
            "n_eff": mode.n_eff,
            "n_g": mode.n_g,
            "S_wg": mode.S_wg,
            "confinement": mode.confinement_analyte,
            "dneff_dT": mode.dneff_dT,
            "residual": mode.residual,
            "n_eff_bracket": list(cs.index_bracket),
        }
        p = out / f"mode_{args.section}.json"
        p.write_text(json.dumps(record, indent=2) + "\n")
        written.append(p)
    _say(args, f"{args.section}: n_eff={mode.n_eff:.6f} n_g={mode.n_g:.4f} S_wg={mode.S_wg:.4f}")
    return written


def cmd_ring(args, cfg, out: Path) -> list[Path]:
    dev = cf.build_devices(cfg)
    written = []
    summary = {}
    for name, spec in pl.device_spectra(cfg, dev).items():
        m = metrics(spec)
        summary[name] = {"Q": m.Q, "fwhm_nm": m.fwhm * 1e9, "er_db": m.er_db, "fsr_nm": (m.fsr or 0.0) * 1e9}
        if _wants(args, "csv"):
            p = out / f"spectrum_{name}.csv"
            spec.to_csv(p)
            written.append(p)
        _say(args, f"{name}: Q={m.Q:.0f} ER={m.er_db:.1f} dB")
    if _wants(args, "json"):
        p = out / "ring_metrics.json"
        p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        written.append(p)
    return written


def cmd_sense(args, cfg, out: Path) -> list[Path]:
    dev = cf.build_devices(cfg)
    series = pl.ri_series(cfg, dev)
    report = fit_sensitivity(series, cf.get(cfg, "sensing.kappa", 100.0, kind=float))
    drift = fit_thermal(pl.thermal_series(cfg, dev))
    written = []
    if _wants(args, "csv"):
        written.append(series.to_directory(out / "ri_series"))
    if _wants(args, "json"):
        p = out / "sensing_report.json"
        report.to_json(p)
        q = out / "thermal.json"
        q.write_text(json.dumps({"drift_pm_per_c": drift}, indent=2) + "\n")
        written += [p, q]
    _say(args, f"S={report.S:.2f} nm/RIU FOM={report.fom:.0f} DL={report.dl:.2e} RIU drift={drift:.2f} pm/C")
    return written


def cmd_link(args, cfg, out: Path) -> list[Path]:
    dev = cf.build_devices(cfg)
    run = pl.run_link_experiment(cfg, dev, args.seed, eye_at=0)
    written = []
    if _wants(args, "csv"):
        p = out / "ber.csv"
        write_curves_csv(run.curves, p)
        written.append(p)
        for label, (hist, edges) in sorted(run.eye.items()):
            q = out / f"eye_{label.replace(' ', '_').replace('%', 'pct')}.csv"
            write_eye_csv(hist, edges, q)
            written.append(q)
    if _wants(args, "json"):
        p = out / "ber.json"
        write_curves_json(run.curves, p)
        written.append(p)
    for c in run.curves:
        _say(args, f"{c.label}: " + " ".join(f"{p.received_power_dbm:.1f}dBm:{p.ber_counted:.1e}" for p in c.points))
    return written


def cmd_sweep(args, cfg, out: Path) -> list[Path]:
    grid = cf.get(cfg, "sweep.grid", {}) or {}
    if not isinstance(grid, dict):
        raise ConfigError("key 'sweep.grid': expected a mapping")
    cap = cf.get(cfg, "sweep.cap", 10_000, kind=int)
    size = pl.grid_size(cfg, grid) if grid else 0
    if size > cap:
        raise SweepTooLarge(f"sweep grid has {size} points, cap is {cap}")
    rows = pl.sweep_rows(cfg, cf.build_devices(cfg), grid) if size else []
    p = out / "sweep.csv"
    _write_rows(p, pl.SWEEP_COLUMNS, [[r[k] for k in pl.SWEEP_COLUMNS] for r in rows])
    _say(args, f"{len(rows)} grid points")
    return [p]


# figures -----------------------------------------------------------------


def _fig3c(cfg, out):
    dev = cf.build_devices(cfg)
    spectra = pl.device_spectra(cfg, dev)
    names = sorted(spectra)
    lam = next(iter(spectra.values())).wavelengths * 1e9
    cols = [10 * np.log10(spectra[n].power) for n in names]
    path = out / "fig3c.csv"
    _write_rows(path, ["wavelength_nm"] + [f"{n}_dB" for n in names], zip(lam, *cols))

    def plot(plt, header, data):
        fig, ax = plt.subplots(figsize=(6, 4))
        for k, name in enumerate(header[1:], start=1):
            ax.plot(data[:, 0], data[:, k], lw=0.8, label=name.replace("_dB", ""))
        ax.set_xlabel("Wavelength (nm)")
        ax.set_ylabel("Transmission (dB)")
        ax.legend()
        return fig

    return path, plot


def _fig5a(cfg, out):
    dev = cf.build_devices(cfg)
    series = pl.ri_series(cfg, dev)
    lam = series.spectra[0].wavelengths * 1e9
    names = [f"n_{x:.5f}" for x in series.stimuli]
    cols = [s.power for s in series.spectra]
    path = out / "fig5a.csv"
    _write_rows(path, ["wavelength_nm"] + names, zip(lam, *cols))

    def plot(plt, header, data):
        fig, ax = plt.subplots(figsize=(6, 4))
        for k, name in enumerate(header[1:], start=1):
            ax.plot(data[:, 0], data[:, k], lw=0.8, label=name.replace("n_", "n = "))
        ax.set_xlabel("Wavelength (nm)")
        ax.set_ylabel("Normalized transmission")
        ax.legend()
        return fig

    return path, plot


def _fig5b(cfg, out):
    dev = cf.build_devices(cfg)
    series = pl.ri_series(cfg, dev)
    report = fit_sensitivity(series, cf.get(cfg, "sensing.kappa", 100.0, kind=float))
    x = np.array(report.stimuli)
    y = np.array(report.tracked)
    shift = y - y[0]
    path = out / "fig5b.csv"
    _write_rows(path, ["index_riu", "resonance_nm", "shift_nm", "fit_shift_nm"], zip(x, y, shift, report.S * (x - x[0])))
    report.to_json(out / "fig5b_report.json")

    def plot(plt, header, data):
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(data[:, 0], data[:, 2], "o", label="tracked resonance")
        ax.plot(data[:, 0], data[:, 3], "-", label=f"S = {report.S:.1f} nm/RIU")
        ax.set_xlabel("Refractive index (RIU)")
        ax.set_ylabel("Resonance shift (nm)")
        ax.legend()
        return fig

    return path, plot


def _fig5c(cfg, out):
    dev = cf.build_devices(cfg)
    series = pl.thermal_series(cfg, dev)
    lam = track_resonance(series) * 1e12
    slope = fit_thermal(series)
    t = series.stimuli
    path = out / "fig5c.csv"
    _write_rows(path, ["temperature_c", "resonance_pm", "shift_pm"], zip(t, lam, lam - lam[0]))

    def plot(plt, header, data):
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(data[:, 0], data[:, 2], "o-", label=f"{slope:.1f} pm/°C")
        ax.set_xlabel("Temperature (°C)")
        ax.set_ylabel("Resonance shift (pm)")
        ax.legend()
        return fig

    return path, plot


def _fig5d(cfg, out, seed=None):
    dev = cf.build_devices(cfg)
    run = pl.run_link_experiment(cfg, dev, seed)
    path = out / "fig5d.csv"
    write_curves_csv(run.curves, path)

    def plot(plt, header, data):
        import csv as _csv

        with open(path) as fh:
            rows = list(_csv.DictReader(fh))
        fig, ax = plt.subplots(figsize=(6, 4))
        labels = list(dict.fromkeys(r["case"] for r in rows))
        for label in labels:
            sel = [r for r in rows if r["case"] == label]
            p = [float(r["received_power_dbm"]) for r in sel]
            ax.semilogy(p, [float(r["ber_analytic"]) for r in sel], "-", label=f"{label} (q model)")
            counted = [(pp, float(r["ber_counted"])) for pp, r in zip(p, sel) if float(r["ber_counted"]) > 0]
            if counted:
                ax.semilogy(*zip(*counted), "o", ms=3)
        ax.set_xlabel("Received power (dBm)")
        ax.set_ylabel("BER")
        ax.set_title("markers: counted; lines: Gaussian q model", fontsize=8)
        ax.legend(fontsize=7)
        return fig

    return path, plot


def cmd_figures(args, cfg, out: Path) -> list[Path]:
    builders = {"fig3c": _fig3c, "fig5a": _fig5a, "fig5b": _fig5b, "fig5c": _fig5c, "fig5d": _fig5d}
    written = []
    try:
        if args.figure == "fig5d":
            csv_path, plot = _fig5d(cfg, out, args.seed)
        else:
            csv_path, plot = builders[args.figure](cfg, out)
        written.append(csv_path)
        extra = out / f"{args.figure}_report.json"
        if extra.exists():
            written.append(extra)
        if _wants(args, "svg"):
            plt = _figure()
            header, data = _read_csv(csv_path) if args.figure != "fig5d" else (None, None)
            fig = plot(plt, header, data)
            svg = out / f"{args.figure}.svg"
            _svg(fig, svg)
            plt.close(fig)
            written.append(svg)
    except BaseException:
        for name in (f"{args.figure}.csv", f"{args.figure}.svg", f"{args.figure}_report.json"):
            (out / name).unlink(missing_ok=True)
        raise
    _say(args, "wrote " + ", ".join(p.name for p in written))
    return written


COMMANDS = {
    "modesolve": cmd_modesolve,
    "ring": cmd_ring,
    "sense": cmd_sense,
    "link": cmd_link,
    "sweep": cmd_sweep,
    "figures": cmd_figures,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="experiment YAML (packaged default if omitted)")
    common.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or ./iosac_out)")
    common.add_argument("--seed", type=int, default=None, help="override the link RNG seed")
    common.add_argument("--format", choices=FORMATS, default="all")
    common.add_argument("--quiet", action="store_true")
    parser = argparse.ArgumentParser(prog="iosac", description="Microring sensing-and-communication link simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("modesolve", parents=[common], help="solve a slab cross-section")
    p.add_argument("--section", default="strip", help="cross_sections entry to solve")
    sub.add_parser("ring", parents=[common], help="ring spectra and resonator metrics")
    sub.add_parser("sense", parents=[common], help="RI and thermal sensing series")
    sub.add_parser("link", parents=[common], help="BER sweep over all analyte cases")
    sub.add_parser("sweep", parents=[common], help="design sweep over the configured grid")
    p = sub.add_parser("figures", parents=[common], help="regenerate a figure as CSV + SVG")
    p.add_argument("--figure", required=True, choices=FIGURES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or Path(os.environ.get(OUT_ENV, "iosac_out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"iosac: cannot create output directory {out}: {exc}", file=sys.stderr)
        return 2
    manifest = RunManifest(
        subcommand=args.command,
        config=str(args.config.resolve() if args.config else cf.DEFAULT_CONFIG),
        out=str(out.resolve()),
        seed=args.seed,
        format=args.format,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        version=_version(),
        figure=getattr(args, "figure", None),
    )
    manifest.write(out)
    try:
        cfg = cf.load_config(args.config)
        if args.seed is not None:
            cfg.setdefault("link", {})["rng_seed"] = args.seed
        COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"iosac: configuration error: {exc}", file=sys.stderr)
        return 2
    except NoGuidedMode as exc:
        print(f"iosac: no guided mode: {exc}", file=sys.stderr)
        return 3
    except SweepTooLarge as exc:
        print(f"iosac: {exc}", file=sys.stderr)
        return 4
    except IosacError as exc:
        print(f"iosac: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
