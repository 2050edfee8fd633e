"""
Sampled-field simulation of an OOK link carried on filtered broadband light.

The optical field is complex baseband around the filter centre, sampled at
``samples_per_bit * bitrate``. Every optical element acts in the frequency
domain on an FFT of one block of bits; blocks are periodic so the FFT is the
exact channel response. Amplifier noise is white Gaussian field noise shaped
by the filter band.

Chain: source -> filter -> modulator -> EDFA1 -> chip (couplers + ring) ->
fiber -> EDFA2 -> attenuator -> splitter -> photodiode.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import constants, fft
from scipy.special import erfc
from scipy.stats import binomtest

from .errors import GridMismatch, InvalidSeed, NoSignal
from .ring import RingParams, transmission

__all__ = [
    "PRBS_TAPS",
    "prbs",
    "SourceConfig",
    "FilterConfig",
    "ModulatorConfig",
    "AmplifierConfig",
    "FiberConfig",
    "ChipConfig",
    "ReceiverConfig",
    "SamplingConfig",
    "LinkConfig",
    "Waveform",
    "AnalyteCase",
    "BerPoint",
    "BerCurve",
    "LinkRun",
    "synthesize_source",
    "modulate",
    "amplify",
    "propagate",
    "photocurrent",
    "count_errors",
    "detect_and_count",
    "analytic_ber",
    "run_link",
    "run_ber_sweep",
    "write_curves_csv",
    "write_curves_json",
    "write_eye_csv",
]

C = constants.c
H_PLANCK = constants.h
Q_E = constants.e

# x^n + x^m + 1
PRBS_TAPS = {7: 6, 15: 14, 23: 18, 31: 28}


def prbs(order: int, length: int, seed: int = 1) -> np.ndarray:
    """Maximal-length LFSR bits for x^order + x^m + 1.

    ``seed`` is the initial register; bit j holds the output j+1 steps back.
    """
    if order not in PRBS_TAPS:
        raise ValueError(f"PRBS order must be one of {sorted(PRBS_TAPS)}")
    n, m = order, PRBS_TAPS[order]
    seed = int(seed)
    if seed & ((1 << n) - 1) == 0:
        raise InvalidSeed("LFSR seed state must be nonzero")
    if seed >> n:
        raise InvalidSeed(f"seed does not fit in {n} bits")
    hist = np.array([(seed >> j) & 1 for j in range(n - 1, -1, -1)], dtype=np.uint8)
    out = np.empty(n + length, dtype=np.uint8)
    out[:n] = hist
    # b[k] = b[k-n] ^ b[k-m]; chunks of m never read unwritten samples
    k = n
    while k < n + length:
        stop = min(k + m, n + length)
        out[k:stop] = out[k - n : stop - n] ^ out[k - m : stop - m]
        k = stop
    return out[n:].copy()


@dataclass(frozen=True)
class SourceConfig:
    """Broadband source: flat PSD over ``band_nm`` represented by ``n_lines`` lines."""

    psd_dbm_per_nm: float = -3.0
    band_nm: tuple[float, float] = (1528.0, 1568.0)
    n_lines: int = 512


@dataclass(frozen=True)
class FilterConfig:
    """Super-Gaussian power passband; ``bandwidth_nm`` is the FWHM."""

    center_nm: float = 1546.0
    bandwidth_nm: float = 5.0
    order: int = 4

    def power(self, wavelength_nm):
        x = 2 * (np.asarray(wavelength_nm) - self.center_nm) / self.bandwidth_nm
        return np.exp(-np.log(2) * np.abs(x) ** (2 * self.order))

    @property
    def span_nm(self) -> tuple[float, float]:
        # beyond 1.5 half-widths the order-4 passband is below 1e-7
        half = 0.75 * self.bandwidth_nm
        return self.center_nm - half, self.center_nm + half


@dataclass(frozen=True)
class ModulatorConfig:
    bitrate: float = 1.25e9
    prbs_order: int = 7
    extinction_db: float = 10.0
    launch_dbm: float = -1.2
    edge_fraction: float = 0.1
    enabled: bool = True

    @property
    def levels(self) -> tuple[float, float]:
        """(on, off) power in W with their plain mean at the launch power."""
        p = 1e-3 * 10 ** (self.launch_dbm / 10)
        inv_er = 0.0 if np.isinf(self.extinction_db) else 10 ** (-self.extinction_db / 10)
        on = 2 * p / (1 + inv_er)
        return on, on * inv_er


@dataclass(frozen=True)
class AmplifierConfig:
    gain_db: float = 0.0
    nf_db: float = 5.0

    @property
    def gain(self) -> float:
        return 10 ** (self.gain_db / 10)

    def ase_psd(self, frequency: float) -> float:
        """ASE field PSD (W/Hz) in the signal polarisation, n_sp = NF/2."""
        n_sp = 10 ** (self.nf_db / 10) / 2
        return n_sp * (self.gain - 1) * H_PLANCK * frequency


@dataclass(frozen=True)
class FiberConfig:
    length_km: float = 10.0
    attenuation_db_km: float = 0.2
    dispersion_ps2_km: float | None = None


@dataclass(frozen=True)
class ChipConfig:
    ring: RingParams | None = None
    coupler_loss_db: float = 7.0


@dataclass(frozen=True)
class ReceiverConfig:
    responsivity: float = 0.9
    thermal_noise: float = 20e-12  # A/sqrt(Hz)
    shot_noise: bool = True
    samples_per_bit: int = 32


@dataclass(frozen=True)
class SamplingConfig:
    samples_per_bit: int = 1024
    n_bits: int = 102400
    block_bits: int = 256


@dataclass(frozen=True)
class LinkConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    modulator: ModulatorConfig = field(default_factory=ModulatorConfig)
    edfa1: AmplifierConfig = field(default_factory=lambda: AmplifierConfig(24.2))
    edfa2: AmplifierConfig = field(default_factory=lambda: AmplifierConfig(10.0))
    fiber: FiberConfig = field(default_factory=FiberConfig)
    chip: ChipConfig = field(default_factory=ChipConfig)
    attenuations_db: tuple[float, ...] = tuple(np.arange(36.0, 47.0, 1.0))
    splitter_ratio: float = 0.5
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    rng_seed: int = 1
    temperature: float = 25.0

    def __post_init__(self) -> None:
        spb = self.sampling.samples_per_bit
        if spb < 8 or spb & (spb - 1):
            raise ValueError("optical samples per bit must be a power of two >= 8")
        spe = self.receiver.samples_per_bit
        if spe < 1 or spb % spe:
            raise ValueError("receiver samples per bit must divide the optical samples per bit")
        s = self.sampling
        if s.n_bits < 1 or s.block_bits < 1 or s.n_bits % s.block_bits:
            raise ValueError("n_bits must be a positive multiple of block_bits")
        lo, hi = self.filter.span_nm
        if not (self.source.band_nm[0] <= lo and hi <= self.source.band_nm[1]):
            raise ValueError("source band must cover the filter passband")
        if not 0 < self.splitter_ratio <= 1:
            raise ValueError("splitter ratio must lie in (0, 1]")
        if not 0 <= self.modulator.edge_fraction <= 1:
            raise ValueError("edge fraction must lie in [0, 1]")
        for v in (self.source.psd_dbm_per_nm, self.modulator.launch_dbm, self.edfa1.gain_db, self.edfa2.gain_db):
            if not np.isfinite(v):
                raise ValueError("powers and gains must be finite")

    @property
    def sample_rate(self) -> float:
        return self.modulator.bitrate * self.sampling.samples_per_bit

    @property
    def center_wavelength(self) -> float:
        return self.filter.center_nm * 1e-9


@dataclass(frozen=True)
class Waveform:
    """Complex field (sqrt(W)) sampled uniformly around ``center_wavelength``."""

    field: np.ndarray
    sample_rate: float
    center_wavelength: float

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.field) ** 2))

    @property
    def frequencies(self) -> np.ndarray:
        """Baseband frequency of each FFT bin (Hz)."""
        return fft.fftfreq(self.field.size, 1 / self.sample_rate)

    @property
    def wavelengths(self) -> np.ndarray:
        nu0 = C / self.center_wavelength
        return C / (nu0 + self.frequencies)

    def with_field(self, values: np.ndarray) -> Waveform:
        return replace(self, field=values)


def _bin_wavelengths(n: int, sample_rate: float, center: float) -> tuple[np.ndarray, np.ndarray]:
    f = fft.fftfreq(n, 1 / sample_rate)
    return f, C / (C / center + f)


def synthesize_source(
    config: LinkConfig,
    n_samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> Waveform:
    """Filtered broadband light as random-phase spectral lines.

    Lines sit on FFT bins of the block, evenly spread over the filter span and
    weighted by the filter passband times the flat source PSD.
    """
    if n_samples is None:
        n_samples = config.sampling.block_bits * config.sampling.samples_per_bit
    rng = np.random.default_rng(config.rng_seed) if rng is None else rng
    fs, lam0 = config.sample_rate, config.center_wavelength
    flt = config.filter
    n_lines = config.source.n_lines
    lo, hi = flt.span_nm
    edges = np.linspace(lo, hi, n_lines + 1)
    lam_nm = 0.5 * (edges[1:] + edges[:-1])
    psd_w_nm = 1e-3 * 10 ** (config.source.psd_dbm_per_nm / 10)
    line_power = psd_w_nm * flt.power(lam_nm) * np.diff(edges)
    freq = C / (lam_nm * 1e-9) - C / lam0
    df = fs / n_samples
    bins = np.round(freq / df).astype(np.int64) % n_samples
    power = np.bincount(bins, weights=line_power, minlength=n_samples)
    occupied = np.flatnonzero(power)
    phase = rng.uniform(0, 2 * np.pi, occupied.size)
    spec = np.zeros(n_samples, dtype=complex)
    spec[occupied] = n_samples * np.sqrt(power[occupied]) * np.exp(1j * phase)
    return Waveform(fft.ifft(spec), fs, lam0)


def _envelope(bits: np.ndarray, prev_bit: int, next_bit: int, spb: int, edge: float) -> np.ndarray:
    """Unit-on NRZ intensity with raised-cosine transitions centred on bit edges."""
    b = bits.astype(float)
    prev = np.concatenate([[prev_bit], b[:-1]])
    nxt = np.concatenate([b[1:], [next_bit]])
    tau = (np.arange(spb) + 0.5) / spb
    env = np.repeat(b[:, None], spb, axis=1)
    if edge > 0:
        half = edge / 2
        rc = lambda u: 0.5 * (1 - np.cos(np.pi * u / edge))  # noqa: E731
        lead = tau < half
        env[:, lead] = prev[:, None] + (b - prev)[:, None] * rc(tau[lead] + half)[None, :]
        trail = tau > 1 - half
        env[:, trail] = b[:, None] + (nxt - b)[:, None] * rc(tau[trail] - (1 - half))[None, :]
    return env.ravel()


def modulate(
    wave: Waveform,
    bits: np.ndarray,
    config: LinkConfig,
    prev_bit: int | None = None,
    next_bit: int | None = None,
) -> Waveform:
    """Impose an NRZ-OOK intensity pattern on ``wave``.

    On and off levels average to the launch power; the off level is the on
    level over the extinction ratio. Neighbouring bits default to a circular
    wrap of ``bits``.
    """
    mod = config.modulator
    bits = np.asarray(bits, dtype=np.uint8)
    spb = wave.field.size // bits.size
    if spb * bits.size != wave.field.size:
        raise ValueError("waveform length must be a whole number of samples per bit")
    p_in = wave.power
    on, off = mod.levels
    if not mod.enabled:
        return wave.with_field(wave.field * np.sqrt(0.5 * (on + off) / p_in))
    prev_bit = int(bits[-1]) if prev_bit is None else prev_bit
    next_bit = int(bits[0]) if next_bit is None else next_bit
    env = _envelope(bits, prev_bit, next_bit, spb, mod.edge_fraction)
    intensity = off + (on - off) * env
    return wave.with_field(wave.field * np.sqrt(intensity / p_in).astype(wave.field.real.dtype))


def _ase_noise(
    amp: AmplifierConfig,
    config: LinkConfig,
    n: int,
    rng: np.random.Generator,
    dtype=complex,
    band: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Spectrum-domain ASE for one block, shaped by the filter band."""
    out = np.zeros(n, dtype=dtype)
    if amp.gain <= 1:
        return out
    if band is None:
        band = _noise_band(config, n)
    idx, shape = band
    var = n * amp.ase_psd(C / config.center_wavelength) * config.sample_rate * shape
    z = rng.standard_normal((2, idx.size), dtype=np.float32 if dtype == np.complex64 else np.float64)
    out[idx] = np.sqrt(var / 2) * (z[0] + 1j * z[1])
    return out


def _noise_band(config: LinkConfig, n: int) -> tuple[np.ndarray, np.ndarray]:
    _, lam = _bin_wavelengths(n, config.sample_rate, config.center_wavelength)
    shape = config.filter.power(lam * 1e9)
    idx = np.flatnonzero(shape > 1e-12)
    return idx, shape[idx]


def amplify(wave: Waveform, amp: AmplifierConfig, config: LinkConfig, rng: np.random.Generator | None) -> Waveform:
    spec = fft.fft(wave.field) * np.sqrt(amp.gain)
    if rng is not None:
        spec = spec + _ase_noise(amp, config, spec.size, rng, spec.dtype)
    return wave.with_field(fft.ifft(spec))


def _chip_response(
    config: LinkConfig,
    n: int,
    analyte: tuple[float, float] | None,
    temperature: float | None,
    bypass: bool,
) -> np.ndarray:
    """Couplers, ring, and fiber as one field transfer function on the FFT grid."""
    f, lam = _bin_wavelengths(n, config.sample_rate, config.center_wavelength)
    fib = config.fiber
    h = np.full(n, 10 ** (-fib.attenuation_db_km * fib.length_km / 20), dtype=complex)
    if fib.dispersion_ps2_km:
        beta2 = fib.dispersion_ps2_km * 1e-24 / 1e3
        h = h * np.exp(0.5j * beta2 * (2 * np.pi * f) ** 2 * fib.length_km * 1e3)
    if bypass or config.chip.ring is None:
        return h
    ring = config.chip.ring
    n_a, alpha = (None, None) if analyte is None else analyte
    if alpha is not None:
        ring = ring.with_analyte(alpha)
    df = config.sample_rate / n
    fwhm_hz = C * ring.fwhm(config.center_wavelength) / config.center_wavelength**2
    if fwhm_hz < 3 * df:
        raise GridMismatch(f"ring FWHM {fwhm_hz / 1e9:.3f} GHz spans fewer than 3 bins of {df / 1e6:.1f} MHz")
    temp = config.temperature if temperature is None else temperature
    coupler = 10 ** (-2 * config.chip.coupler_loss_db / 20)
    return h * coupler * transmission(ring, lam, n_a, temp)


def propagate(
    wave: Waveform,
    config: LinkConfig,
    analyte: tuple[float, float] | None = None,
    temperature: float | None = None,
    rng: np.random.Generator | None = None,
    bypass: bool = False,
    attenuation_db: float = 0.0,
) -> Waveform:
    """Carry a modulated waveform from the modulator output to the photodiode.

    Parameters
    ----------
    analyte : (index, absorption dB/cm), optional
        Analyte state on the ring; the ring's reference state when omitted.
    rng : numpy Generator, optional
        Source of amplifier noise; the link is noiseless without one.
    bypass : bool
        Skip the chip (couplers and ring), as in a back-to-back measurement.

    Raises
    ------
    GridMismatch
        The ring linewidth spans fewer than three frequency bins.
    """
    spec = fft.fft(wave.field)
    n = spec.size
    band = _noise_band(config, n)
    spec = spec * np.sqrt(config.edfa1.gain)
    if rng is not None:
        spec = spec + _ase_noise(config.edfa1, config, n, rng, spec.dtype, band)
    spec = spec * _chip_response(config, n, analyte, temperature, bypass).astype(spec.dtype)
    spec = spec * np.sqrt(config.edfa2.gain)
    if rng is not None:
        spec = spec + _ase_noise(config.edfa2, config, n, rng, spec.dtype, band)
    spec = spec * np.sqrt(10 ** (-attenuation_db / 10) * config.splitter_ratio)
    return wave.with_field(fft.ifft(spec))


def photocurrent(wave: Waveform, config: LinkConfig) -> np.ndarray:
    """Noiseless photocurrent (A) decimated to the receiver's samples per bit."""
    spe = config.receiver.samples_per_bit
    step = config.sampling.samples_per_bit // spe
    p = np.abs(wave.field) ** 2
    return config.receiver.responsivity * p.reshape(-1, step).mean(axis=1, dtype=np.float64)


def analytic_ber(q):
    """Gaussian-noise bit error ratio 0.5*erfc(q/sqrt(2))."""
    return 0.5 * erfc(np.asarray(q) / np.sqrt(2))


@dataclass(frozen=True)
class BerPoint:
    received_power_dbm: float
    ber_counted: float
    ber_analytic: float
    q: float
    errors: int
    bits: int
    attenuation_db: float = 0.0

    def __post_init__(self) -> None:
        if self.bits <= 0:
            raise ValueError("bits must be positive")

    @property
    def ci(self) -> tuple[float, float]:
        """95% Wilson interval on the counted error ratio."""
        iv = binomtest(self.errors, self.bits).proportion_ci(0.95, method="wilson")
        return float(iv.low), float(iv.high)


@dataclass(frozen=True)
class BerCurve:
    label: str
    points: tuple[BerPoint, ...]

    @property
    def received_power(self) -> np.ndarray:
        return np.array([p.received_power_dbm for p in self.points])

    def ber_at(self, power_dbm, which: str = "analytic"):
        """log10-linear interpolation of BER at given received powers."""
        order = np.argsort(self.received_power)
        x = self.received_power[order]
        y = np.array([getattr(self.points[i], f"ber_{which}") for i in order])
        return 10 ** np.interp(power_dbm, x, np.log10(np.maximum(y, 1e-300)))


@dataclass
class LinkRun:
    """Sweep output: one curve per case plus optional averaged spectra (W/bin)."""

    curves: list[BerCurve]
    wavelengths: np.ndarray | None = None
    psd_in: np.ndarray | None = None
    psd_out: dict[str, np.ndarray] = field(default_factory=dict)
    eye: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def transmission_spectrum(self, label: str, rbw_hz: float = 0.5e9, span_nm: tuple[float, float] | None = None):
        """Chip transmission (linear) read from the averaged output/input spectra.

        Both spectra are integrated over a resolution bandwidth before the
        ratio, then resampled onto a uniform wavelength grid of 1 pm.
        """
        from .ring import Spectrum

        lam = self.wavelengths
        order = np.argsort(lam)
        lam_s, pin, pout = lam[order], self.psd_in[order], self.psd_out[label][order]
        df = abs(C / lam_s[0] - C / lam_s[1])
        k = max(1, int(round(rbw_hz / df)))
        kern = np.ones(k)
        ratio = np.convolve(pout, kern, "same") / np.maximum(np.convolve(pin, kern, "same"), 1e-300)
        if span_nm is None:
            span_nm = (lam_s[0] * 1e9 + 0.5, lam_s[-1] * 1e9 - 0.5)
        grid = np.arange(span_nm[0], span_nm[1], 1e-3) * 1e-9
        ref = np.median(ratio[(lam_s >= grid[0]) & (lam_s <= grid[-1])])
        return Spectrum(grid, np.interp(grid, lam_s, ratio) / ref)


def _kmeans_threshold(v: np.ndarray, iterations: int = 50) -> float:
    lo, hi = np.percentile(v, [5, 95])
    thr = 0.5 * (lo + hi)
    for _ in range(iterations):
        ones = v > thr
        if ones.all() or not ones.any():
            break
        new = 0.5 * (v[ones].mean() + v[~ones].mean())
        if new == thr:
            break
        thr = new
    return float(thr)


def count_errors(
    current: np.ndarray,
    bits: np.ndarray,
    config: LinkConfig,
    rng: np.random.Generator | None,
    attenuation_db: float = 0.0,
    eye: bool = False,
):
    """Add receiver noise, integrate and dump, decide, and count errors.

    Returns a :class:`BerPoint`, or ``(BerPoint, (histogram, amplitude_edges))``
    when ``eye`` is set.
    """
    rx = config.receiver
    bits = np.asarray(bits)
    fs_e = config.modulator.bitrate * rx.samples_per_bit
    noisy = current
    if rng is not None:
        var = rx.thermal_noise**2 * fs_e / 2 + (Q_E * np.abs(current) * fs_e if rx.shot_noise else 0.0)
        noisy = current + np.sqrt(var) * rng.standard_normal(current.size)
    per_bit = noisy.reshape(bits.size, rx.samples_per_bit).mean(axis=1)
    thr = _kmeans_threshold(per_bit)
    errors = int(np.count_nonzero((per_bit > thr) != bits.astype(bool)))
    v1, v0 = per_bit[bits == 1], per_bit[bits == 0]
    spread = v1.std() + v0.std()
    q = np.inf if spread == 0 else (v1.mean() - v0.mean()) / spread
    power = float(current.mean()) / rx.responsivity
    point = BerPoint(
        received_power_dbm=10 * np.log10(power / 1e-3),
        ber_counted=errors / bits.size,
        ber_analytic=float(analytic_ber(max(q, 0.0))),
        q=float(q),
        errors=errors,
        bits=int(bits.size),
        attenuation_db=attenuation_db,
    )
    if not eye:
        return point
    return point, eye_histogram(noisy, rx.samples_per_bit)


def eye_histogram(samples: np.ndarray, samples_per_bit: int, bins: int = 64):
    """Two-bit eye as a (time x amplitude) count grid and the amplitude edges."""
    width = 2 * samples_per_bit
    frames = samples[: samples.size // width * width].reshape(-1, width)
    t = np.broadcast_to(np.arange(width), frames.shape)
    hist, _, edges = np.histogram2d(
        t.ravel(),
        frames.ravel(),
        bins=[bins, bins],
        range=[[0, width], [frames.min(), frames.max()]],
    )
    return hist.astype(np.int64), edges


def detect_and_count(
    wave: Waveform,
    bits: np.ndarray,
    config: LinkConfig,
    rng: np.random.Generator | None = None,
    eye: bool = False,
):
    """Square-law detection and error counting for one received waveform.

    Raises
    ------
    NoSignal
        Received power below -40 dBm.
    """
    if wave.power <= 0 or 10 * np.log10(wave.power / 1e-3) < -40:
        raise NoSignal("received power below -40 dBm")
    return count_errors(photocurrent(wave, config), bits, config, rng, eye=eye)


@dataclass(frozen=True)
class AnalyteCase:
    """One measurement condition; ``bypass`` removes the chip."""

    label: str
    n_analyte: float | None = None
    absorption_db_cm: float | None = None
    bypass: bool = False

    @property
    def analyte(self) -> tuple[float, float] | None:
        if self.n_analyte is None:
            return None
        return self.n_analyte, self.absorption_db_cm


def run_link(
    config: LinkConfig,
    cases: Sequence[AnalyteCase],
    attenuations: Sequence[float] | None = None,
    *,
    received_dbm: Sequence[float] | None = None,
    collect_psd: bool = False,
    eye_at: int | None = None,
) -> LinkRun:
    """Simulate every case over the attenuation sweep.

    The transmitter, source, and amplifier-noise realisations are drawn once
    per block and shared by all cases, so case-to-case differences come from
    the chip alone. Each (case, attenuation) point draws its receiver noise
    from its own stream keyed by (seed, case, point).

    With ``received_dbm`` the attenuator is set separately for each case so
    the photodiode sees those powers, as when sweeping a curve by hand.
    """
    if received_dbm is not None and attenuations is not None:
        raise ValueError("give attenuations or received-power targets, not both")
    targets = None if received_dbm is None else tuple(received_dbm)
    att = tuple(config.attenuations_db if attenuations is None else attenuations)
    if len(targets or att) < 2:
        raise ValueError("a sweep needs at least two attenuation points")
    s = config.sampling
    spb, nb = s.samples_per_bit, s.block_bits
    n = nb * spb
    bits = prbs(config.modulator.prbs_order, s.n_bits)
    tx_rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed, spawn_key=(0,)))
    band = _noise_band(config, n)
    # complex64 throughout the block loop keeps a 1e5-bit sweep in seconds
    responses = [
        _chip_response(config, n, c.analyte, None, c.bypass).astype(np.complex64) for c in cases
    ]
    g1, g2 = np.float32(np.sqrt(config.edfa1.gain)), np.float32(np.sqrt(config.edfa2.gain))
    step = spb // config.receiver.samples_per_bit
    intensity = [np.empty(s.n_bits * config.receiver.samples_per_bit) for _ in cases]
    psd_in = np.zeros(n) if collect_psd else None
    psd_out = [np.zeros(n) for _ in cases] if collect_psd else []
    seg = nb * config.receiver.samples_per_bit
    for b in range(s.n_bits // nb):
        blk = bits[b * nb : (b + 1) * nb]
        prev_bit = int(bits[b * nb - 1])
        next_bit = int(bits[((b + 1) * nb) % bits.size])
        src = synthesize_source(config, n, tx_rng)
        src = src.with_field(src.field.astype(np.complex64))
        tx = modulate(src, blk, config, prev_bit, next_bit)
        spec = fft.fft(tx.field) * g1 + _ase_noise(config.edfa1, config, n, tx_rng, np.complex64, band)
        noise2 = _ase_noise(config.edfa2, config, n, tx_rng, np.complex64, band)
        if collect_psd:
            psd_in += np.abs(spec) ** 2
        for k, h in enumerate(responses):
            out = spec * h
            out *= g2
            out += noise2
            if collect_psd:
                psd_out[k] += np.abs(out) ** 2
            p = np.abs(fft.ifft(out)) ** 2
            intensity[k][b * seg : (b + 1) * seg] = p.reshape(-1, step).mean(axis=1, dtype=np.float64)
    curves = []
    eyes = {}
    resp = config.receiver.responsivity
    for ci, case in enumerate(cases):
        pts = []
        if targets is not None:
            full = 10 * np.log10(intensity[ci].mean() * config.splitter_ratio / 1e-3)
            att = tuple(full - t for t in targets)
            if min(att) < 0:
                raise ValueError(f"case {case.label}: target above the {full:.2f} dBm available")
        for pi, a in enumerate(att):
            scale = 10 ** (-a / 10) * config.splitter_ratio
            current = resp * scale * intensity[ci]
            if 10 * np.log10(current.mean() / resp / 1e-3) < -40:
                raise NoSignal(f"case {case.label}: received power below -40 dBm at {a} dB")
            rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed, spawn_key=(1, ci, pi)))
            res = count_errors(current, bits, config, rng, a, eye=(eye_at == pi))
            if eye_at == pi:
                res, eyes[case.label] = res
            pts.append(res)
        curves.append(BerCurve(case.label, tuple(pts)))
    run = LinkRun(curves, eye=eyes)
    if collect_psd:
        run.wavelengths = _bin_wavelengths(n, config.sample_rate, config.center_wavelength)[1]
        run.psd_in = psd_in
        run.psd_out = {c.label: p for c, p in zip(cases, psd_out)}
    return run


def run_ber_sweep(
    config: LinkConfig,
    cases: Sequence[AnalyteCase],
    attenuations: Sequence[float] | None = None,
    received_dbm: Sequence[float] | None = None,
) -> list[BerCurve]:
    """One BER curve per case over the attenuation sweep; see :func:`run_link`."""
    return run_link(config, cases, attenuations, received_dbm=received_dbm).curves


def write_curves_csv(curves: Sequence[BerCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "received_power_dbm", "ber_counted", "ber_ci_lo", "ber_ci_hi", "ber_analytic", "q"])
        for c in curves:
            for p in c.points:
                lo, hi = p.ci
                w.writerow(
                    [
                        c.label,
                        f"{p.received_power_dbm:.6f}",
                        f"{p.ber_counted:.6e}",
                        f"{lo:.6e}",
                        f"{hi:.6e}",
                        f"{p.ber_analytic:.6e}",
                        f"{p.q:.6f}",
                    ]
                )


def write_curves_json(curves: Sequence[BerCurve], path) -> None:
    data = [{"label": c.label, "points": [asdict(p) | {"ci": p.ci} for p in c.points]} for c in curves]
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def write_eye_csv(hist: np.ndarray, edges: np.ndarray, path) -> None:
    """Rows are amplitude bins (lower edge in A), columns are time bins."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["amplitude_a"] + [f"t{k}" for k in range(hist.shape[0])])
        for j in range(hist.shape[1]):
            w.writerow([f"{edges[j]:.6e}"] + [str(v) for v in hist[:, j]])
