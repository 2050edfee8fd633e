"""
Guided modes of 1-D multilayer slab waveguides.

A waveguide cross-section is reduced to a stack of homogeneous layers along one
transverse axis, bounded by two semi-infinite claddings. Modes are located with
a transfer-matrix dispersion function: the field is launched as a decaying
exponential in the left cladding, carried through every finite layer, and the
mismatch with a decaying exponential in the right cladding is the residual.

TE here means the field is polarised parallel to the layers (E_y); TM means the
magnetic field is parallel to the layers (H_y) and the electric field crosses
the interfaces, which is the polarisation that concentrates light in slots.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateMode, NoGuidedMode, NotConverged, OutOfRange

__all__ = [
    "Layer",
    "CrossSection",
    "ModeSolution",
    "dispersion_residual",
    "guided_indices",
    "solve_slab",
    "mode_field",
    "waveguide_sensitivity",
    "thermo_optic_coefficient",
    "equivalent_sensitivity",
    "ring_sensitivity",
    "ring_thermal_drift",
    "calibrate_thickness",
    "write_field_csv",
]

SCAN_POINTS = 1000
GROUP_INDEX_STEP = 0.1e-9  # m
RESIDUAL_TOL = 1e-12
DECAY_LENGTHS = 3.0


@dataclass(frozen=True)
class Layer:
    """One homogeneous layer; ``thickness`` is None for the two outer claddings."""

    index: float
    thickness: float | None = None
    thermo_optic: float = 0.0
    is_analyte: bool = False
    name: str = ""


@dataclass(frozen=True)
class CrossSection:
    layers: tuple[Layer, ...]
    wavelength: float
    polarization: str = "TE"

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        pol = str(self.polarization).upper()
        if pol not in ("TE", "TM"):
            raise ValueError(f"polarization must be TE or TM, got {self.polarization!r}")
        object.__setattr__(self, "polarization", pol)
        if len(layers) < 3:
            raise ValueError("a slab needs two outer claddings and at least one finite layer")
        if layers[0].thickness is not None or layers[-1].thickness is not None:
            raise ValueError("outer layers must be semi-infinite (thickness None)")
        for layer in layers[1:-1]:
            if layer.thickness is None or not layer.thickness > 0:
                raise ValueError(f"finite layer {layer.name or layer} needs thickness > 0")
        for layer in layers:
            if not layer.index >= 1.0:
                raise ValueError(f"refractive index {layer.index} below 1")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    @property
    def indices(self) -> np.ndarray:
        return np.array([layer.index for layer in self.layers], dtype=float)

    @property
    def thicknesses(self) -> np.ndarray:
        return np.array([layer.thickness for layer in self.layers[1:-1]], dtype=float)

    @property
    def analyte_mask(self) -> np.ndarray:
        return np.array([layer.is_analyte for layer in self.layers], dtype=bool)

    @property
    def has_analyte(self) -> bool:
        return bool(self.analyte_mask.any())

    @property
    def analyte_index(self) -> float | None:
        for layer in self.layers:
            if layer.is_analyte:
                return layer.index
        return None

    @property
    def index_bracket(self) -> tuple[float, float]:
        """(highest cladding index, highest layer index)."""
        n = self.indices
        return max(n[0], n[-1]), float(n.max())

    @property
    def guiding(self) -> bool:
        lo, hi = self.index_bracket
        return hi > lo

    @property
    def width(self) -> float:
        return float(self.thicknesses.sum())

    def with_indices(self, indices) -> CrossSection:
        layers = tuple(replace(layer, index=float(n)) for layer, n in zip(self.layers, indices))
        return replace(self, layers=layers)

    def with_analyte_index(self, n_analyte: float) -> CrossSection:
        n = np.where(self.analyte_mask, n_analyte, self.indices)
        return self.with_indices(n)

    def at_wavelength(self, wavelength: float) -> CrossSection:
        return replace(self, wavelength=wavelength)

    def with_thickness(self, position: int, thickness: float) -> CrossSection:
        layers = list(self.layers)
        layers[position] = replace(layers[position], thickness=thickness)
        return replace(self, layers=tuple(layers))


@dataclass(frozen=True)
class ModeSolution:
    """A solved guided mode.

    ``field`` is the transverse electric field sampled on ``x`` and scaled to a
    peak of +1. ``S_wg`` is dn_eff/dn_analyte and ``dneff_dT`` is per degC.
    """

    n_eff: float
    n_g: float
    x: np.ndarray
    field: np.ndarray
    S_wg: float
    dneff_dT: float
    confinement_analyte: float
    residual: float
    mode_order: int
    wavelength: float
    polarization: str


def _weights(n: np.ndarray, pol: str) -> np.ndarray:
    # TE continuity is on dE/dx, TM on (1/n^2) dH/dx
    return np.ones_like(n) if pol == "TE" else 1.0 / n**2


def _layer_step(F, G, q, d, p):
    """Carry (F, G = p dF/dx) across a layer of thickness d with k^2 = q."""
    kap = np.sqrt(np.abs(q))
    arg = kap * d
    osc = q > 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        c = np.where(osc, np.cos(arg), np.cosh(arg))
        s_over = np.where(kap > 0, np.where(osc, np.sin(arg), np.sinh(arg)) / kap, d)
        s_times = np.where(osc, -kap * np.sin(arg), kap * np.sinh(arg))
    return F * c + G * s_over / p, p * s_times * F + G * c


def dispersion_residual(cs: CrossSection, n_eff) -> np.ndarray:
    """Normalised transfer-matrix residual; zero exactly on guided modes.

    Valid for ``max(cladding) <= n_eff``. The value lies in [-sqrt(2), sqrt(2)].
    """
    neff = np.atleast_1d(np.asarray(n_eff, dtype=float))
    n = cs.indices
    p = _weights(n, cs.polarization)
    k0 = 2 * np.pi / cs.wavelength
    gam_l = k0 * np.sqrt(np.maximum(neff**2 - n[0] ** 2, 0.0))
    gam_r = k0 * np.sqrt(np.maximum(neff**2 - n[-1] ** 2, 0.0))
    F = np.ones_like(neff)
    G = p[0] * gam_l
    for j, d in enumerate(cs.thicknesses, start=1):
        q = k0**2 * (n[j] ** 2 - neff**2)
        F, G = _layer_step(F, G, q, d, p[j])
        scale = np.hypot(F, G / (k0 * p[j]))
        F, G = F / scale, G / scale
    right = p[-1] * gam_r * F
    return (G + right) / np.hypot(G, right)


def _scan_grid(cs: CrossSection) -> np.ndarray:
    # uniform in the transverse wavenumber of the strongest layer, so roots of
    # thick multimode slabs stay separated by several grid points
    lo, hi = cs.index_bracket
    u = np.linspace(0.0, np.sqrt(hi**2 - lo**2), SCAN_POINTS + 2)[1:-1]
    return np.sqrt(hi**2 - u**2)[::-1]


def guided_indices(cs: CrossSection) -> np.ndarray:
    """All guided-mode effective indices, highest first."""
    if not cs.guiding:
        return np.empty(0)
    grid = _scan_grid(cs)
    r = dispersion_residual(cs, grid)
    idx = np.nonzero(np.sign(r[:-1]) * np.sign(r[1:]) < 0)[0]
    exact = grid[r == 0.0]
    if idx.size == 0:
        return np.sort(exact)[::-1]
    a, b = grid[idx].copy(), grid[idx + 1].copy()
    fa = r[idx].copy()
    for _ in range(80):
        mid = 0.5 * (a + b)
        fm = dispersion_residual(cs, mid)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, mid, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, mid)
        if np.all(b - a <= 2 * np.spacing(b)):
            break
    else:
        raise NotConverged("bisection did not shrink the bracket to machine precision")
    ra = np.abs(dispersion_residual(cs, a))
    rb = np.abs(dispersion_residual(cs, b))
    roots = np.where(ra <= rb, a, b)
    return np.sort(np.concatenate([roots, exact]))[::-1]


def _neff(cs: CrossSection, mode_order: int) -> float:
    roots = guided_indices(cs)
    if roots.size <= mode_order:
        raise NoGuidedMode(
            f"{roots.size} guided {cs.polarization} mode(s); order {mode_order} requested"
        )
    return float(roots[mode_order])


def _profile(cs: CrossSection, n_eff: float, x: np.ndarray) -> np.ndarray:
    """Transfer variable (E_y for TE, H_y for TM) at positions x; left interface at 0."""
    n = cs.indices
    p = _weights(n, cs.polarization)
    k0 = 2 * np.pi / cs.wavelength
    gam_l = k0 * np.sqrt(n_eff**2 - n[0] ** 2)
    gam_r = k0 * np.sqrt(n_eff**2 - n[-1] ** 2)
    out = np.empty_like(x, dtype=float)
    mask = x < 0
    out[mask] = np.exp(gam_l * x[mask])
    F, G = 1.0, p[0] * gam_l
    start = 0.0
    for j, d in enumerate(cs.thicknesses, start=1):
        q = k0**2 * (n[j] ** 2 - n_eff**2)
        mask = (x >= start) & (x < start + d)
        if mask.any():
            f, _ = _layer_step(F, G, q, x[mask] - start, p[j])
            out[mask] = f
        F, G = _layer_step(F, G, q, d, p[j])
        start += d
    mask = x >= start
    out[mask] = F * np.exp(-gam_r * (x[mask] - start))
    return out


def _layer_of(cs: CrossSection, x: np.ndarray) -> np.ndarray:
    edges = np.concatenate([[0.0], np.cumsum(cs.thicknesses)])
    return np.searchsorted(edges, x, side="right")


def mode_field(cs: CrossSection, n_eff: float, x) -> np.ndarray:
    """Transverse electric field of the mode at ``x`` (unnormalised)."""
    x = np.asarray(x, dtype=float)
    f = _profile(cs, n_eff, x)
    if cs.polarization == "TM":
        f = f / cs.indices[_layer_of(cs, x)] ** 2
    return f


def _power_by_layer(cs: CrossSection, n_eff: float) -> np.ndarray:
    """Guided power carried in each layer (arbitrary common scale)."""
    n = cs.indices
    p = _weights(n, cs.polarization)
    k0 = 2 * np.pi / cs.wavelength
    gam_l = k0 * np.sqrt(n_eff**2 - n[0] ** 2)
    gam_r = k0 * np.sqrt(n_eff**2 - n[-1] ** 2)
    power = np.empty(n.size)
    power[0] = p[0] / (2 * gam_l)
    nodes, wts = np.polynomial.legendre.leggauss(16)
    F, G = 1.0, p[0] * gam_l
    for j, d in enumerate(cs.thicknesses, start=1):
        q = k0**2 * (n[j] ** 2 - n_eff**2)
        panels = int(np.ceil(np.sqrt(abs(q)) * d / np.pi)) + 1
        h = d / panels
        xs = (np.arange(panels)[:, None] + 0.5 * (nodes[None, :] + 1)) * h
        f, _ = _layer_step(F, G, q, xs.ravel(), p[j])
        power[j] = p[j] * np.sum(f.reshape(xs.shape) ** 2 * wts[None, :]) * h / 2
        F, G = _layer_step(F, G, q, d, p[j])
    power[-1] = p[-1] * F**2 / (2 * gam_r)
    return power


def _sample_field(cs: CrossSection, n_eff: float, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    n = cs.indices
    k0 = 2 * np.pi / cs.wavelength
    left = DECAY_LENGTHS / (k0 * np.sqrt(n_eff**2 - n[0] ** 2))
    right = DECAY_LENGTHS / (k0 * np.sqrt(n_eff**2 - n[-1] ** 2))
    x = np.linspace(-left, cs.width + right, n_points)
    f = mode_field(cs, n_eff, x)
    return x, f / f[np.argmax(np.abs(f))]


def _check_order(mode_order: int) -> None:
    if int(mode_order) != mode_order or mode_order < 0:
        raise ValueError("mode_order must be a non-negative integer")


def solve_slab(
    cs: CrossSection,
    mode_order: int = 0,
    *,
    n_points: int = 2001,
    analyte_delta: float = 1e-4,
    thermal_delta: float = 1.0,
) -> ModeSolution:
    """Solve the ``mode_order``-th guided mode of a multilayer slab.

    Parameters
    ----------
    cs : CrossSection
        Layer stack, wavelength and polarisation.
    mode_order : int
        0 for the fundamental (highest n_eff) mode.
    n_points : int
        Samples of the field profile, spanning all finite layers plus three
        decay lengths into each cladding.
    analyte_delta, thermal_delta : float
        Steps for the finite-difference sensitivities.

    Raises
    ------
    NoGuidedMode
        Fewer than ``mode_order + 1`` guided modes exist.
    """
    _check_order(mode_order)
    n_eff = _neff(cs, mode_order)
    residual = float(np.abs(dispersion_residual(cs, n_eff))[0])
    # thick multimode slabs: one ulp of n_eff can move the residual past 1e-12
    ulp_step = np.abs(dispersion_residual(cs, [np.nextafter(n_eff, 0), np.nextafter(n_eff, 9)]))
    if residual > max(RESIDUAL_TOL, float(ulp_step.max())):
        raise NotConverged(f"dispersion residual {residual:.3e} after bisection")
    lam, dl = cs.wavelength, GROUP_INDEX_STEP
    n_plus = _neff(cs.at_wavelength(lam + dl), mode_order)
    n_minus = _neff(cs.at_wavelength(lam - dl), mode_order)
    n_g = n_eff - lam * (n_plus - n_minus) / (2 * dl)

    power = _power_by_layer(cs, n_eff)
    conf = float(power[cs.analyte_mask].sum() / power.sum())
    x, field = _sample_field(cs, n_eff, n_points)
    return ModeSolution(
        n_eff=n_eff,
        n_g=float(n_g),
        x=x,
        field=field,
        S_wg=waveguide_sensitivity(cs, mode_order, analyte_delta),
        dneff_dT=thermo_optic_coefficient(cs, mode_order, thermal_delta),
        confinement_analyte=min(max(conf, 0.0), 1.0),
        residual=residual,
        mode_order=int(mode_order),
        wavelength=lam,
        polarization=cs.polarization,
    )


def _central(cs: CrossSection, mode_order: int, offsets: np.ndarray) -> tuple[float, float]:
    """n_eff of the tracked mode with layer indices shifted by +offsets / -offsets."""
    base = guided_indices(cs)
    if base.size <= mode_order:
        raise NoGuidedMode(f"{base.size} guided mode(s); order {mode_order} requested")
    plus = _neff(cs.with_indices(cs.indices + offsets), mode_order)
    minus = _neff(cs.with_indices(cs.indices - offsets), mode_order)
    # the perturbed pair must stay inside the gap to the neighbouring modes
    gaps = np.abs(np.diff(base))
    gap = np.inf
    if mode_order > 0:
        gap = min(gap, gaps[mode_order - 1])
    if mode_order < base.size - 1:
        gap = min(gap, gaps[mode_order])
    if abs(plus - minus) >= 0.5 * gap:
        raise DegenerateMode(f"mode {mode_order} crosses a neighbour under the perturbation")
    return plus, minus


def waveguide_sensitivity(cs: CrossSection, mode_order: int = 0, delta: float = 1e-4) -> float:
    """dn_eff/dn_analyte by a central difference of step ``delta``."""
    _check_order(mode_order)
    if not 1e-6 <= delta <= 1e-2:
        raise OutOfRange(f"delta {delta} outside [1e-6, 1e-2]")
    if not cs.has_analyte:
        return 0.0
    plus, minus = _central(cs, mode_order, np.where(cs.analyte_mask, delta, 0.0))
    return (plus - minus) / (2 * delta)


def thermo_optic_coefficient(cs: CrossSection, mode_order: int = 0, deltaT: float = 1.0) -> float:
    """dn_eff/dT from every layer's thermo-optic coefficient, per degC."""
    _check_order(mode_order)
    if not 0.01 <= deltaT <= 10:
        raise OutOfRange(f"deltaT {deltaT} outside [0.01, 10] degC")
    to = np.array([layer.thermo_optic for layer in cs.layers], dtype=float)
    if not np.any(to):
        _neff(cs, mode_order)
        return 0.0
    plus, minus = _central(cs, mode_order, to * deltaT)
    return (plus - minus) / (2 * deltaT)


def equivalent_sensitivity(rho: float, S_strip: float, S_slot: float) -> float:
    """Length-weighted sensitivity of a ring whose slot fraction is ``rho``."""
    if not 0.0 <= rho <= 1.0:
        raise OutOfRange(f"rho {rho} outside [0, 1]")
    if rho == 0.0:
        return S_strip
    if rho == 1.0:
        return S_slot
    return (1.0 - rho) * S_strip + rho * S_slot


def ring_sensitivity(mode: ModeSolution) -> float:
    """Resonance shift per unit analyte index, nm/RIU."""
    return mode.wavelength * mode.S_wg / mode.n_g * 1e9


def ring_thermal_drift(mode: ModeSolution) -> float:
    """Resonance shift per degC, pm/degC."""
    return mode.wavelength * mode.dneff_dT / mode.n_g * 1e12


def calibrate_thickness(
    cs: CrossSection,
    positions,
    target_ring_S: float,
    bracket: tuple[float, float],
    mode_order: int = 0,
) -> CrossSection:
    """Set the thickness of the layers at ``positions`` so ring-level S hits a target.

    All listed layers share one thickness, found by Brent's method inside
    ``bracket`` (metres). ``target_ring_S`` is in nm/RIU.
    """

    def build(d: float) -> CrossSection:
        out = cs
        for pos in positions:
            out = out.with_thickness(pos, d)
        return out

    def excess(d: float) -> float:
        trial = build(d)
        mode = _neff(trial, mode_order)
        n_g = mode - trial.wavelength * (
            _neff(trial.at_wavelength(trial.wavelength + GROUP_INDEX_STEP), mode_order)
            - _neff(trial.at_wavelength(trial.wavelength - GROUP_INDEX_STEP), mode_order)
        ) / (2 * GROUP_INDEX_STEP)
        S = waveguide_sensitivity(trial, mode_order)
        return trial.wavelength * S / n_g * 1e9 - target_ring_S

    d = brentq(excess, *bracket, xtol=1e-13)
    return build(d)


def write_field_csv(mode: ModeSolution, path) -> None:
    """Two-column CSV of position (m) and unit-peak field amplitude."""
    np.savetxt(
        path,
        np.column_stack([mode.x, mode.field]),
        delimiter=",",
        header="position_m,normalized_amplitude",
        comments="",
        fmt="%.9e",
    )
