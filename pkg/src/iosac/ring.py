"""
All-pass microring resonator: complex transmission, sampled spectra and the
resonator figures (Q, FWHM, extinction, FSR) extracted from a spectrum.

The ring may be a hybrid of two waveguide types. Each type is described by a
:class:`WaveguideSection` linearised around a reference wavelength, analyte
index and temperature; the ring's effective index is the length-weighted mix
of the sections.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import OptimizeWarning, bisect, curve_fit
from scipy.signal import find_peaks

from .errors import GridTooCoarse, NoDipFound, OutOfRange, Unachievable
from .modesolver import ModeSolution

__all__ = [
    "WaveguideSection",
    "RingParams",
    "Spectrum",
    "ResonatorMetrics",
    "CouplingSolution",
    "transmission",
    "spectrum",
    "metrics",
    "calibrate_coupling",
    "loaded_q",
    "lorentzian_dip",
]

BAND = (1500e-9, 1600e-9)
ER_CAP_DB = 60.0
MIN_CONTRAST_DB = 0.1


@dataclass(frozen=True)
class WaveguideSection:
    """Linearised optical properties of one waveguide type.

    ``loss_db_cm`` is the propagation loss of the bare waveguide; analyte
    absorption is added on top through ``confinement_analyte``.
    """

    n_eff: float
    n_g: float
    S_wg: float = 0.0
    dneff_dT: float = 0.0
    confinement_analyte: float = 0.0
    loss_db_cm: float = 1.0
    wavelength: float = 1550e-9
    n_analyte: float = 1.318
    temperature: float = 25.0

    @classmethod
    def from_mode(
        cls,
        mode: ModeSolution,
        n_analyte: float,
        loss_db_cm: float = 1.0,
        temperature: float = 25.0,
    ) -> WaveguideSection:
        return cls(
            n_eff=mode.n_eff,
            n_g=mode.n_g,
            S_wg=mode.S_wg,
            dneff_dT=mode.dneff_dT,
            confinement_analyte=mode.confinement_analyte,
            loss_db_cm=loss_db_cm,
            wavelength=mode.wavelength,
            n_analyte=n_analyte,
            temperature=temperature,
        )

    def index(self, wavelength, n_analyte: float, temperature: float):
        dn_dlam = (self.n_eff - self.n_g) / self.wavelength
        return (
            self.n_eff
            + dn_dlam * (np.asarray(wavelength) - self.wavelength)
            + self.S_wg * (n_analyte - self.n_analyte)
            + self.dneff_dT * (temperature - self.temperature)
        )


@dataclass(frozen=True)
class RingParams:
    """All-pass ring; ``rho`` is the fraction of the circumference that is slot."""

    radius: float
    t: float
    strip: WaveguideSection
    slot: WaveguideSection | None = None
    rho: float = 0.0
    analyte_loss_db_cm: float = 0.0
    converter_loss_db: float = 0.02

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not 0 < self.t < 1:
            raise ValueError(f"self-coupling t={self.t} outside (0, 1)")
        if not 0 <= self.rho <= 1:
            raise OutOfRange(f"rho {self.rho} outside [0, 1]")
        if self.rho > 0 and self.slot is None:
            raise ValueError("rho > 0 needs a slot section")
        if self.analyte_loss_db_cm < 0 or self.converter_loss_db < 0:
            raise ValueError("losses must be non-negative")
        for sec in self.sections:
            if sec[1].loss_db_cm < 0:
                raise ValueError("losses must be non-negative")

    @property
    def length(self) -> float:
        return 2 * np.pi * self.radius

    @property
    def sections(self) -> list[tuple[float, WaveguideSection]]:
        out = [(1.0 - self.rho, self.strip)]
        if self.slot is not None:
            out.append((self.rho, self.slot))
        return [(w, s) for w, s in out if w > 0]

    def _mix(self, attr: str) -> float:
        return float(sum(w * getattr(s, attr) for w, s in self.sections))

    @property
    def n_g(self) -> float:
        return self._mix("n_g")

    @property
    def S_wg(self) -> float:
        return self._mix("S_wg")

    @property
    def dneff_dT(self) -> float:
        return self._mix("dneff_dT")

    @property
    def confinement_analyte(self) -> float:
        return self._mix("confinement_analyte")

    @property
    def reference_wavelength(self) -> float:
        return self.strip.wavelength

    @property
    def transitions(self) -> int:
        return 2 if 0 < self.rho < 1 else 0

    def n_eff(self, wavelength, n_analyte: float | None = None, temperature: float | None = None):
        n_a = self.strip.n_analyte if n_analyte is None else n_analyte
        temp = self.strip.temperature if temperature is None else temperature
        return sum(w * s.index(wavelength, n_a, temp) for w, s in self.sections)

    @property
    def loss_db_cm(self) -> float:
        return self._mix("loss_db_cm") + self.analyte_loss_db_cm * self.confinement_analyte

    @property
    def round_trip_loss_db(self) -> float:
        return self.loss_db_cm * self.length * 100 + self.transitions * self.converter_loss_db

    @property
    def a(self) -> float:
        return 10 ** (-self.round_trip_loss_db / 20)

    def ring_sensitivity(self, wavelength: float | None = None) -> float:
        """Resonance shift per RIU in nm (group-index weighted)."""
        lam = self.reference_wavelength if wavelength is None else wavelength
        return lam * self.S_wg / self.n_g * 1e9

    def thermal_drift(self, wavelength: float | None = None) -> float:
        """Resonance shift per degC in pm."""
        lam = self.reference_wavelength if wavelength is None else wavelength
        return lam * self.dneff_dT / self.n_g * 1e12

    def fwhm(self, wavelength: float | None = None) -> float:
        lam = self.reference_wavelength if wavelength is None else wavelength
        ta = self.t * self.a
        return lam**2 * (1 - ta) / (np.pi * self.n_g * self.length * np.sqrt(ta))

    def fsr(self, wavelength: float | None = None) -> float:
        lam = self.reference_wavelength if wavelength is None else wavelength
        return lam**2 / (self.n_g * self.length)

    def with_analyte(self, absorption_db_cm: float) -> RingParams:
        return replace(self, analyte_loss_db_cm=absorption_db_cm)

    def with_round_trip_amplitude(self, a: float) -> RingParams:
        """Same ring with all loss lumped into the sections' propagation loss."""
        if not 0 < a <= 1:
            raise ValueError("a must lie in (0, 1]")
        loss = -20 * np.log10(a) / (self.length * 100)
        strip = replace(self.strip, loss_db_cm=loss)
        slot = None if self.slot is None else replace(self.slot, loss_db_cm=loss)
        return replace(self, strip=strip, slot=slot, analyte_loss_db_cm=0.0, converter_loss_db=0.0)

    def aligned_to(self, wavelength: float) -> RingParams:
        """Shift the reference index by less than half an order so a resonance sits at ``wavelength``."""
        phase_index = float(self.n_eff(wavelength)) * self.length / wavelength
        dn = (np.round(phase_index) - phase_index) * wavelength / self.length
        sections = {"strip": replace(self.strip, n_eff=self.strip.n_eff + dn)}
        if self.slot is not None:
            sections["slot"] = replace(self.slot, n_eff=self.slot.n_eff + dn)
        return replace(self, **sections)


def transmission(
    ring: RingParams,
    wavelength,
    n_analyte: float | None = None,
    temperature: float | None = None,
):
    """Complex through-port amplitude (t - a e^{i phi}) / (1 - t a e^{i phi})."""
    lam = np.asarray(wavelength, dtype=float)
    if np.any(lam < BAND[0]) or np.any(lam > BAND[1]):
        raise OutOfRange("wavelength outside the 1500-1600 nm band")
    a, t = ring.a, ring.t
    phi = 2 * np.pi * ring.n_eff(lam, n_analyte, temperature) * ring.length / lam
    e = a * np.exp(1j * phi)
    return (t - e) / (1 - t * e)


@dataclass(frozen=True)
class Spectrum:
    """Linear power transmission on a uniform, increasing wavelength grid (m)."""

    wavelengths: np.ndarray
    power: np.ndarray

    def __post_init__(self) -> None:
        lam = np.asarray(self.wavelengths, dtype=float)
        p = np.asarray(self.power, dtype=float)
        object.__setattr__(self, "wavelengths", lam)
        object.__setattr__(self, "power", p)
        if lam.ndim != 1 or lam.shape != p.shape or lam.size < 3:
            raise ValueError("wavelengths and power must be matching 1-D arrays of >= 3 points")
        step = np.diff(lam)
        if np.any(step <= 0):
            raise ValueError("wavelength grid must be strictly increasing")
        if np.ptp(step) > 1e-3 * step.mean():
            raise ValueError("wavelength grid must be uniform")
        if np.any(p < 0):
            raise ValueError("power must be non-negative")

    @property
    def step(self) -> float:
        return float((self.wavelengths[-1] - self.wavelengths[0]) / (self.wavelengths.size - 1))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["wavelength_nm", "transmission_dB"])
            db = 10 * np.log10(np.maximum(self.power, 1e-30))
            for lam, v in zip(self.wavelengths, db):
                w.writerow([f"{lam * 1e9:.6f}", f"{v:.6f}"])

    @classmethod
    def from_csv(cls, path) -> Spectrum:
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0] * 1e-9, 10 ** (data[:, 1] / 10))


def spectrum(
    ring: RingParams,
    wavelengths,
    n_analyte: float | None = None,
    temperature: float | None = None,
) -> Spectrum:
    lam = np.asarray(wavelengths, dtype=float)
    if lam.size > 1:
        step = (lam[-1] - lam[0]) / (lam.size - 1)
        limit = ring.fwhm(float(np.median(lam))) / 20
        if step > limit:
            raise GridTooCoarse(
                f"grid step {step * 1e12:.2f} pm exceeds FWHM/20 = {limit * 1e12:.2f} pm"
            )
    power = np.abs(transmission(ring, lam, n_analyte, temperature)) ** 2
    return Spectrum(lam, power)


def lorentzian_dip(x, baseline, depth, center, fwhm):
    return baseline - depth / (1 + ((x - center) / (0.5 * fwhm)) ** 2)


@dataclass(frozen=True)
class ResonatorMetrics:
    """Figures of the deepest dip plus all resolved resonance positions (m)."""

    Q: float
    fwhm: float
    er_db: float
    fsr: float | None
    resonances: tuple[float, ...]
    resonance: float
    baseline: float


def _half_width(p: np.ndarray, i: int, level: float) -> tuple[int, int] | None:
    left = i
    while left > 0 and p[left] < level:
        left -= 1
    right = i
    while right < p.size - 1 and p[right] < level:
        right += 1
    if p[left] < level or p[right] < level:
        return None
    return left, right


def _fit_dip(lam: np.ndarray, p: np.ndarray, i: int, baseline: float):
    bounds = _half_width(p, i, 0.5 * (baseline + p[i]))
    if bounds is None:
        return None
    left, right = bounds
    w0 = max(lam[right] - lam[left], 2 * (lam[1] - lam[0]))
    window = np.abs(lam - lam[i]) <= 1.5 * w0
    if window.sum() < 5:
        return None
    # work in nm relative to the discrete minimum for conditioning
    x = (lam[window] - lam[i]) * 1e9
    y = p[window]
    guess = (baseline, baseline - p[i], 0.0, w0 * 1e9)
    try:
        with warnings.catch_warnings():
            # exact synthetic dips leave no residual to estimate a covariance
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(lorentzian_dip, x, y, p0=guess, maxfev=5000)
    except RuntimeError:
        return None
    base, depth, center, fwhm = popt
    fwhm = abs(fwhm)
    if not (abs(center) < 1.5 * w0 * 1e9 and fwhm > 0):
        return None
    return lam[i] + center * 1e-9, fwhm * 1e-9, base - depth


def metrics(spec: Spectrum) -> ResonatorMetrics:
    """Locate and characterise the resonance dips of a transmission spectrum.

    Each dip is refined by a Lorentzian least-squares fit over +-1.5 FWHM
    around its discrete minimum. The baseline for the extinction ratio is the
    median of the top decile of the spectrum.

    Raises
    ------
    NoDipFound
        The spectrum's max/min contrast is below 0.1 dB or no dip is fully
        contained in the grid.
    """
    lam, p = spec.wavelengths, spec.power
    pmax, pmin = float(p.max()), float(p.min())
    if pmax <= 0 or (pmin > 0 and 10 * np.log10(pmax / pmin) < MIN_CONTRAST_DB):
        raise NoDipFound("spectrum contrast below 0.1 dB")
    top = np.sort(p)[-max(1, p.size // 10):]
    baseline = float(np.median(top))
    peaks, _ = find_peaks(-p, prominence=0.25 * (baseline - pmin))
    if peaks.size == 0 and 0 < np.argmin(p) < p.size - 1:
        peaks = np.array([np.argmin(p)])
    fits = []
    for i in peaks:
        fit = _fit_dip(lam, p, int(i), baseline)
        if fit is not None:
            fits.append((fit, int(i)))
    if not fits:
        raise NoDipFound("no dip is fully contained in the wavelength grid")
    centers = np.array([f[0][0] for f in fits])
    order = np.argsort(centers)
    centers = centers[order]
    fits = [fits[k] for k in order]
    deepest = min(range(len(fits)), key=lambda k: min(fits[k][0][2], p[fits[k][1]]))
    (center, fwhm, fitted_min), i = fits[deepest]
    floor = baseline * 10 ** (-ER_CAP_DB / 10)
    p_min = max(min(fitted_min, p[i]), floor)
    er = min(-10 * np.log10(p_min / baseline), ER_CAP_DB)
    fsr = float(np.mean(np.diff(centers))) if centers.size >= 2 else None
    return ResonatorMetrics(
        Q=center / fwhm,
        fwhm=fwhm,
        er_db=float(er),
        fsr=fsr,
        resonances=tuple(float(c) for c in centers),
        resonance=float(center),
        baseline=baseline,
    )


def loaded_q(product: float, n_g: float, length: float, wavelength: float) -> float:
    """Loaded Q of an all-pass ring with round-trip product t*a."""
    return np.pi * n_g * length * np.sqrt(product) / (wavelength * (1 - product))


@dataclass(frozen=True)
class CouplingSolution:
    """Self-coupling reproducing a target Q.

    ``t`` pairs with the ring's own round-trip amplitude ``a``. The swapped
    pair (``t_alt``, ``a_alt``) gives the same Q and extinction in the opposite
    coupling regime; it is physical only if the loss is really ``a_alt``.
    """

    t: float
    a: float
    product: float
    regime: str
    t_alt: float
    a_alt: float

    @property
    def t_under(self) -> float:
        return self.t if self.regime != "over" else self.t_alt

    @property
    def t_over(self) -> float:
        return self.t if self.regime == "over" else self.t_alt


def calibrate_coupling(target_Q: float, ring: RingParams, wavelength: float | None = None) -> CouplingSolution:
    """Solve the loaded-Q relation for the self-coupling t by bisection.

    Raises
    ------
    Unachievable
        ``target_Q`` exceeds the loss-limited Q reached as t -> 1.
    """
    lam = ring.reference_wavelength if wavelength is None else wavelength
    a, n_g, length = ring.a, ring.n_g, ring.length
    if not target_Q > 0:
        raise ValueError("target_Q must be positive")
    q_max = np.inf if a >= 1 else loaded_q(a, n_g, length, lam)
    if target_Q >= q_max:
        raise Unachievable(f"Q {target_Q:.0f} exceeds the loss-limited maximum {q_max:.0f}")
    hi = min(a, 1 - 1e-15)
    x = bisect(lambda x: loaded_q(x, n_g, length, lam) - target_Q, 1e-12, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    t = x / a
    if np.isclose(t, a, rtol=0, atol=1e-12):
        regime = "critical"
    else:
        regime = "under" if t > a else "over"
    return CouplingSolution(t=t, a=a, product=x, regime=regime, t_alt=a, a_alt=t)
