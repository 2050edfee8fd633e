"""Experiment-level recipes shared by the command line, demos, and tests."""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass

import numpy as np

from . import config as cf
from .errors import Unachievable
from .link import LinkRun, run_link
from .modesolver import equivalent_sensitivity, ring_sensitivity
from .ring import Spectrum, loaded_q, spectrum
from .sensing import SensingSeries, simulate_series

__all__ = [
    "wavelength_grid",
    "ri_series",
    "thermal_series",
    "device_spectra",
    "run_link_experiment",
    "SWEEP_COLUMNS",
    "grid_size",
    "sweep_rows",
]


def wavelength_grid(cfg: dict) -> np.ndarray:
    lo, hi = cf.get(cfg, "sensing.span_nm", [1544.0, 1549.5], kind=list)
    step = cf.get(cfg, "sensing.step_pm", 1.0, kind=float) * 1e-3
    n = int(round((float(hi) - float(lo)) / step)) + 1
    return np.linspace(float(lo), float(lo) + (n - 1) * step, n) * 1e-9


def ri_series(cfg: dict, devices: cf.Devices) -> SensingSeries:
    """Ring spectra at the configured concentrations; stimuli are indices."""
    conc = [float(c) for c in cf.get(cfg, "sensing.concentrations_wt", kind=list)]
    return simulate_series(devices.ring, wavelength_grid(cfg), conc, "RI", devices.analyte)


def thermal_series(cfg: dict, devices: cf.Devices) -> SensingSeries:
    temps = [float(t) for t in cf.get(cfg, "sensing.temperatures_c", kind=list)]
    return simulate_series(devices.ring, wavelength_grid(cfg), temps, "temperature")


def device_spectra(cfg: dict, devices: cf.Devices, span_nm=(1540.0, 1552.0), step_pm: float = 1.0) -> dict[str, Spectrum]:
    """Through-port spectra of every configured coupling-gap device."""
    n = int(round((span_nm[1] - span_nm[0]) / (step_pm * 1e-3))) + 1
    lam = np.linspace(span_nm[0], span_nm[1], n) * 1e-9
    out = {}
    for name in sorted(cf.get(cfg, "ring.devices")):
        ring = cf.build_ring(cfg, devices.strip_mode, devices.slot_mode, devices.analyte, name)
        out[name] = spectrum(ring, lam)
    return out


def run_link_experiment(
    cfg: dict,
    devices: cf.Devices,
    seed: int | None = None,
    collect_psd: bool = False,
    eye_at: int | None = None,
) -> LinkRun:
    lc = cf.link_config(cfg, devices.ring, seed)
    cases = cf.link_cases(cfg, devices.analyte)
    targets = cf.get(cfg, "link.received_dbm", None)
    if targets is not None:
        return run_link(lc, cases, received_dbm=[float(t) for t in targets], collect_psd=collect_psd, eye_at=eye_at)
    return run_link(lc, cases, collect_psd=collect_psd, eye_at=eye_at)


SWEEP_COLUMNS = (
    "rho",
    "radius_um",
    "device",
    "S_eq_nm_riu",
    "S_ring_nm_riu",
    "n_g",
    "t",
    "a",
    "regime",
    "Q",
    "fwhm_nm",
    "fom_per_riu",
    "dl_riu",
    "drift_pm_per_c",
)


@dataclass(frozen=True)
class _Axes:
    rho: list
    radius_um: list
    device: list


def _axes(cfg: dict, grid: dict) -> _Axes:
    allowed = {"rho", "radius_um", "device"}
    for key in grid:
        if key not in allowed:
            raise cf.ConfigError(f"key 'sweep.grid.{key}': not a sweep parameter (use {sorted(allowed)})")
    for key, values in grid.items():
        if not isinstance(values, list):
            raise cf.ConfigError(f"key 'sweep.grid.{key}': expected a list")
    return _Axes(
        rho=grid.get("rho", [cf.get(cfg, "ring.rho", kind=float)]),
        radius_um=grid.get("radius_um", [cf.get(cfg, "ring.radius_um", kind=float)]),
        device=grid.get("device", [cf.get(cfg, "ring.device", kind=str)]),
    )


def grid_size(cfg: dict, grid: dict) -> int:
    ax = _axes(cfg, grid)
    return len(ax.rho) * len(ax.radius_um) * len(ax.device)


def sweep_rows(cfg: dict, devices: cf.Devices, grid: dict) -> list[dict]:
    """Analytic ring and sensing figures at every grid point, in grid order."""
    ax = _axes(cfg, grid)
    kappa = cf.get(cfg, "sensing.kappa", 100.0, kind=float)
    s_strip, s_slot = ring_sensitivity(devices.strip_mode), ring_sensitivity(devices.slot_mode)
    rows = []
    for rho, radius, device in itertools.product(ax.rho, ax.radius_um, ax.device):
        local = copy.deepcopy(cfg)
        local["ring"]["radius_um"] = float(radius)
        row = {"rho": float(rho), "radius_um": float(radius), "device": str(device)}
        row["S_eq_nm_riu"] = equivalent_sensitivity(float(rho), s_strip, s_slot)
        try:
            ring = cf.build_ring(local, devices.strip_mode, devices.slot_mode, devices.analyte, str(device), float(rho))
        except Unachievable:
            row.update({k: float("nan") for k in SWEEP_COLUMNS if k not in row})
            row["regime"] = "unachievable"
            rows.append(row)
            continue
        lam = ring.reference_wavelength
        fwhm = ring.fwhm() * 1e9
        S = ring.ring_sensitivity()
        row.update(
            S_ring_nm_riu=S,
            n_g=ring.n_g,
            t=ring.t,
            a=ring.a,
            regime="under" if ring.t > ring.a else "over",
            Q=loaded_q(ring.t * ring.a, ring.n_g, ring.length, lam),
            fwhm_nm=fwhm,
            fom_per_riu=S / fwhm,
            dl_riu=fwhm / (kappa * S),
            drift_pm_per_c=ring.thermal_drift(),
        )
        rows.append(row)
    return rows
