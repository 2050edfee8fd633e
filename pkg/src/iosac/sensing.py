"""
Sensing readout: follow one resonance through a series of spectra and turn
its motion into sensitivity, figure of merit, detection limit and thermal
drift. Also holds the analyte (concentration -> index, absorption) model.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IllConditioned, OrderJump, OutOfRange
from .modesolver import CrossSection, solve_slab, thermo_optic_coefficient
from .ring import RingParams, Spectrum, metrics, spectrum

__all__ = [
    "SensingSeries",
    "SensingReport",
    "AnalyteModel",
    "track_resonance",
    "fit_sensitivity",
    "fit_thermal",
    "concentration_to_index",
    "shift_to_concentration",
    "simulate_series",
    "calibrate_thermo_optic",
    "hybrid_thermal_drift",
]

KINDS = ("RI", "temperature")
MIN_SPAN = 1e-5
DEFAULT_KAPPA = 100.0


@dataclass(frozen=True)
class SensingSeries:
    """Spectra recorded at a monotone sequence of stimuli (RIU or degC)."""

    stimuli: np.ndarray
    spectra: tuple[Spectrum, ...]
    kind: str = "RI"

    def __post_init__(self) -> None:
        x = np.asarray(self.stimuli, dtype=float)
        object.__setattr__(self, "stimuli", x)
        object.__setattr__(self, "spectra", tuple(self.spectra))
        if self.kind not in KINDS:
            raise ValueError(f"stimulus kind must be one of {KINDS}")
        if x.ndim != 1 or x.size < 2 or x.size != len(self.spectra):
            raise ValueError("a series needs >= 2 points, one spectrum per stimulus")
        d = np.diff(x)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("stimuli must be strictly monotone")
        grid = self.spectra[0].wavelengths
        for s in self.spectra[1:]:
            if not np.array_equal(s.wavelengths, grid):
                raise ValueError("all spectra must share one wavelength grid")

    def to_directory(self, path) -> Path:
        out = Path(path)
        out.mkdir(parents=True, exist_ok=True)
        names = {}
        for k, (x, s) in enumerate(zip(self.stimuli, self.spectra)):
            name = f"point_{k:03d}.csv"
            s.to_csv(out / name)
            names[name] = float(x)
        manifest = {"stimulus_kind": self.kind, "stimuli": names}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return out

    @classmethod
    def from_directory(cls, path) -> SensingSeries:
        """Read spectrum CSVs listed in ``manifest.json`` (filename -> stimulus)."""
        root = Path(path)
        manifest = json.loads((root / "manifest.json").read_text())
        items = sorted(manifest["stimuli"].items(), key=lambda kv: kv[1])
        spectra = [Spectrum.from_csv(root / name) for name, _ in items]
        return cls(np.array([v for _, v in items]), spectra, manifest.get("stimulus_kind", "RI"))


@dataclass(frozen=True)
class SensingReport:
    """Slope of the tracked resonance and the figures derived from it.

    ``S`` is nm/RIU for RI series and pm/degC for temperature series. ``fwhm``
    is in nm, taken from the middle spectrum of the series.
    """

    S: float
    fit_residual: float
    fwhm: float
    fom: float
    dl: float
    tracked: tuple[float, ...]
    stimuli: tuple[float, ...]
    kind: str
    kappa: float
    resonance: float
    Q: float
    intercept: float = 0.0
    units: str = field(default="nm/RIU")

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text: str) -> SensingReport:
        data = json.loads(text)
        data["tracked"] = tuple(data["tracked"])
        data["stimuli"] = tuple(data["stimuli"])
        return cls(**data)


def track_resonance(series: SensingSeries, fsr: float | None = None, start: float | None = None) -> np.ndarray:
    """Follow one dip through the series by nearest-dip association.

    Parameters
    ----------
    fsr : float, optional
        Free spectral range (m) for the jump check. Defaults to the spacing
        measured on the first spectrum, or the grid span if it holds one dip.
    start : float, optional
        Wavelength (m) near which the tracked dip sits at the first point;
        the dip closest to the grid centre is used otherwise.

    Raises
    ------
    OrderJump
        The nearest dip moved by more than half a free spectral range.
    """
    found = [metrics(s) for s in series.spectra]
    grid = series.spectra[0].wavelengths
    if fsr is None:
        fsr = next((m.fsr for m in found if m.fsr is not None), grid[-1] - grid[0])
    anchor = 0.5 * (grid[0] + grid[-1]) if start is None else start
    first = np.asarray(found[0].resonances)
    current = float(first[np.argmin(np.abs(first - anchor))])
    out = [current]
    for m in found[1:]:
        res = np.asarray(m.resonances)
        nxt = float(res[np.argmin(np.abs(res - current))])
        if abs(nxt - current) > fsr / 2:
            raise OrderJump(
                f"resonance moved {abs(nxt - current) * 1e9:.3f} nm, more than FSR/2 = {fsr / 2 * 1e9:.3f} nm"
            )
        out.append(nxt)
        current = nxt
    return np.array(out)


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if np.ptp(x) < MIN_SPAN:
        raise IllConditioned(f"stimulus span {np.ptp(x):.2e} below {MIN_SPAN:.0e}")
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), rms


def fit_sensitivity(
    series: SensingSeries,
    kappa: float = DEFAULT_KAPPA,
    tracked: np.ndarray | None = None,
    **track_kw,
) -> SensingReport:
    """Least-squares sensitivity with FOM = S/FWHM and DL = FWHM/(kappa*S)."""
    if series.kind != "RI":
        raise ValueError("fit_sensitivity needs an RI series")
    lam = track_resonance(series, **track_kw) if tracked is None else np.asarray(tracked)
    lam_nm = lam * 1e9
    S, b, rms = _line_fit(series.stimuli, lam_nm)
    mid = metrics(series.spectra[len(series.spectra) // 2])
    fwhm = mid.fwhm * 1e9
    return SensingReport(
        S=S,
        fit_residual=rms,
        fwhm=fwhm,
        fom=S / fwhm,
        dl=fwhm / (kappa * S),
        tracked=tuple(float(v) for v in lam_nm),
        stimuli=tuple(float(v) for v in series.stimuli),
        kind="RI",
        kappa=kappa,
        resonance=mid.resonance * 1e9,
        Q=mid.Q,
        intercept=b,
    )


def fit_thermal(series: SensingSeries, **track_kw) -> float:
    """Resonance drift in pm/degC from a temperature series."""
    if series.kind != "temperature":
        raise ValueError("fit_thermal needs a temperature series")
    lam = track_resonance(series, **track_kw)
    slope, _, _ = _line_fit(series.stimuli, lam * 1e12)
    return slope


@dataclass(frozen=True)
class AnalyteModel:
    """Concentration (wt%) to (index, absorption dB/cm), linear between nodes."""

    concentrations: np.ndarray
    indices: np.ndarray
    absorption: np.ndarray
    name: str = "analyte"

    def __post_init__(self) -> None:
        c, n, a = (np.asarray(v, dtype=float) for v in (self.concentrations, self.indices, self.absorption))
        object.__setattr__(self, "concentrations", c)
        object.__setattr__(self, "indices", n)
        object.__setattr__(self, "absorption", a)
        if not (c.ndim == 1 and c.size >= 2 and c.shape == n.shape == a.shape):
            raise ValueError("analyte table needs >= 2 matching nodes")
        if c[0] != 0:
            raise ValueError("first node must be the reference solvent at 0 wt%")
        if np.any(np.diff(c) <= 0) or np.any(np.diff(n) <= 0):
            raise ValueError("concentration and index must be strictly increasing")
        if np.any(np.diff(a) < 0):
            raise ValueError("absorption must be non-decreasing in concentration")

    @classmethod
    def affine(
        cls,
        n0: float,
        dn_dc: float,
        alpha0: float,
        dalpha_dc: float,
        c_max: float,
        name: str = "analyte",
    ) -> AnalyteModel:
        c = np.array([0.0, c_max])
        return cls(c, n0 + dn_dc * c, alpha0 + dalpha_dc * c, name)

    @property
    def solvent(self) -> tuple[float, float]:
        return float(self.indices[0]), float(self.absorption[0])

    def index_to_concentration(self, n: float) -> float:
        if not self.indices[0] <= n <= self.indices[-1]:
            raise OutOfRange(f"index {n} outside the table")
        return float(np.interp(n, self.indices, self.concentrations))


def concentration_to_index(model: AnalyteModel, c: float) -> tuple[float, float]:
    c_tab = model.concentrations
    if not c_tab[0] <= c <= c_tab[-1]:
        raise OutOfRange(f"concentration {c} wt% outside [{c_tab[0]}, {c_tab[-1]}]")
    return float(np.interp(c, c_tab, model.indices)), float(np.interp(c, c_tab, model.absorption))


def shift_to_concentration(model: AnalyteModel, shift_nm: float, S: float) -> float:
    """Concentration implied by a resonance shift (nm) at sensitivity S (nm/RIU)."""
    return model.index_to_concentration(model.solvent[0] + shift_nm / S)


def simulate_series(
    ring: RingParams,
    wavelengths,
    stimuli: Sequence[float],
    kind: str = "RI",
    analyte: AnalyteModel | None = None,
) -> SensingSeries:
    """Ring spectra over a stimulus sweep.

    For RI series the stimuli are analyte indices; when ``analyte`` is given
    they are concentrations in wt% and the absorption follows the model too.
    """
    spectra = []
    for x in stimuli:
        if kind == "temperature":
            spectra.append(spectrum(ring, wavelengths, temperature=x))
        elif analyte is not None:
            n, alpha = concentration_to_index(analyte, x)
            spectra.append(spectrum(ring.with_analyte(alpha), wavelengths, n_analyte=n))
        else:
            spectra.append(spectrum(ring, wavelengths, n_analyte=x))
    if kind == "RI" and analyte is not None:
        stimuli = [concentration_to_index(analyte, x)[0] for x in stimuli]
    return SensingSeries(np.asarray(stimuli, dtype=float), spectra, kind)


def _with_material_to(cs: CrossSection, material: str, value: float) -> CrossSection:
    layers = tuple(replace(layer, thermo_optic=value) if layer.name == material else layer for layer in cs.layers)
    return replace(cs, layers=layers)


def hybrid_thermal_drift(sections: Sequence[tuple[float, CrossSection]], n_g: Sequence[float] | None = None) -> float:
    """Ring thermal drift (pm/degC) of a length-weighted mix of cross-sections."""
    if n_g is None:
        n_g = [solve_slab(cs).n_g for _, cs in sections]
    lam = sections[0][1].wavelength
    num = sum(w * thermo_optic_coefficient(cs) for w, cs in sections)
    den = sum(w * g for (w, _), g in zip(sections, n_g))
    return lam * num / den * 1e12


def calibrate_thermo_optic(
    sections: Sequence[tuple[float, CrossSection]],
    material: str,
    target_pm_per_c: float,
) -> float:
    """Thermo-optic coefficient of one material that gives a target ring drift.

    The drift is linear in any single layer coefficient, so two evaluations
    fix it. Layers are matched by ``Layer.name``.
    """
    if not any(layer.name == material for _, cs in sections for layer in cs.layers):
        raise ValueError(f"no layer named {material!r}")
    n_g = [solve_slab(cs).n_g for _, cs in sections]
    probe = 1e-4
    d0 = hybrid_thermal_drift([(w, _with_material_to(cs, material, 0.0)) for w, cs in sections], n_g)
    d1 = hybrid_thermal_drift([(w, _with_material_to(cs, material, probe)) for w, cs in sections], n_g)
    if d1 == d0:
        raise IllConditioned(f"drift does not depend on {material}")
    return probe * (target_pm_per_c - d0) / (d1 - d0)
