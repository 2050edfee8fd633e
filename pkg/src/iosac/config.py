"""
YAML experiment files and the builders that turn them into solver objects.

A file may pull in others with ``include: [a.yaml, b.yaml]``; included files
are merged first (in order) and the including file overrides them key by key.
Relative includes resolve against the including file, then the packaged data
directory.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from . import link as lk
from .errors import ConfigError
from .modesolver import CrossSection, Layer, ModeSolution, solve_slab
from .ring import RingParams, WaveguideSection, calibrate_coupling
from .sensing import AnalyteModel, calibrate_thermo_optic, concentration_to_index

__all__ = [
    "DATA_DIR",
    "DEFAULT_CONFIG",
    "load_config",
    "get",
    "materials",
    "cross_section",
    "analyte_model",
    "Devices",
    "build_devices",
    "build_ring",
    "link_config",
    "link_cases",
]

DATA_DIR = Path(str(resources.files("iosac") / "data"))
DEFAULT_CONFIG = DATA_DIR / "default.yaml"


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _resolve(name: str, here: Path) -> Path:
    for cand in (here / name, DATA_DIR / name):
        if cand.is_file():
            return cand
    raise ConfigError(f"include: file {name!r} not found")


def load_config(path=None, _seen: tuple = ()) -> dict:
    """Read a YAML experiment file, following ``include`` entries."""
    path = Path(DEFAULT_CONFIG if path is None else path).resolve()
    if path in _seen:
        raise ConfigError(f"include: cycle through {path.name}")
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path.name}: YAML syntax error: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path.name}: top level must be a mapping")
    includes = raw.pop("include", []) or []
    if isinstance(includes, str):
        includes = [includes]
    if not isinstance(includes, list):
        raise ConfigError("include: must be a list of file names")
    merged: dict = {}
    for name in includes:
        merged = _merge(merged, load_config(_resolve(str(name), path.parent), _seen + (path,)))
    return _merge(merged, raw)


_MISSING = object()


def get(cfg: dict, dotted: str, default: Any = _MISSING, kind=None):
    """Fetch ``a.b.c`` from nested mappings; errors name the offending key."""
    node: Any = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is not _MISSING:
                return default
            raise ConfigError(f"missing key '{dotted}'")
        node = node[part]
    if kind is not None:
        try:
            if kind is float:
                node = float(node)
            elif kind is int:
                if float(node) != int(float(node)):
                    raise ValueError
                node = int(float(node))
            elif kind is list:
                if not isinstance(node, list):
                    raise ValueError
            else:
                node = kind(node)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"key '{dotted}': expected {kind.__name__}, got {node!r}") from exc
    return node


def materials(cfg: dict) -> dict[str, dict]:
    table = get(cfg, "materials")
    if not isinstance(table, dict):
        raise ConfigError("key 'materials': expected a mapping")
    out = {}
    for name in table:
        out[name] = {
            "index": get(cfg, f"materials.{name}.index", kind=float),
            "thermo_optic": get(cfg, f"materials.{name}.thermo_optic", 0.0, kind=float),
        }
    return out


def cross_section(cfg: dict, name: str, mats: dict | None = None) -> CrossSection:
    mats = materials(cfg) if mats is None else mats
    base = f"cross_sections.{name}"
    layers_cfg = get(cfg, f"{base}.layers", kind=list)
    layers = []
    for k, entry in enumerate(layers_cfg):
        key = f"{base}.layers[{k}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"key '{key}': expected a mapping")
        mat = entry.get("material")
        if mat not in mats:
            raise ConfigError(f"key '{key}.material': unknown material {mat!r}")
        thick = entry.get("thickness_nm")
        if thick is not None:
            try:
                thick = float(thick) * 1e-9
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"key '{key}.thickness_nm': expected a number") from exc
        layers.append(
            Layer(
                index=float(entry.get("index", mats[mat]["index"])),
                thickness=thick,
                thermo_optic=mats[mat]["thermo_optic"],
                is_analyte=bool(entry.get("analyte", False)),
                name=str(mat),
            )
        )
    try:
        return CrossSection(
            tuple(layers),
            get(cfg, "wavelength_nm", kind=float) * 1e-9,
            get(cfg, f"{base}.polarization", "TE", kind=str),
        )
    except ValueError as exc:
        raise ConfigError(f"key '{base}': {exc}") from exc


def analyte_model(cfg: dict) -> AnalyteModel:
    name = get(cfg, "analyte_model.name", "analyte", kind=str)
    if "table" in get(cfg, "analyte_model"):
        rows = get(cfg, "analyte_model.table", kind=list)
        try:
            c, n, a = zip(*[(float(r["c_wt"]), float(r["index"]), float(r["absorption_db_cm"])) for r in rows])
            return AnalyteModel(c, n, a, name)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"key 'analyte_model.table': {exc}") from exc
    g = lambda k: get(cfg, f"analyte_model.affine.{k}", kind=float)  # noqa: E731
    try:
        return AnalyteModel.affine(g("n0"), g("dn_dc"), g("alpha0_db_cm"), g("dalpha_dc_db_cm"), g("c_max"), name)
    except ValueError as exc:
        raise ConfigError(f"key 'analyte_model': {exc}") from exc


@dataclass(frozen=True)
class Devices:
    """Cross-sections, modes and the calibrated ring of one experiment file."""

    strip: CrossSection
    slot: CrossSection
    strip_mode: ModeSolution
    slot_mode: ModeSolution
    ring: RingParams
    analyte: AnalyteModel
    materials: dict
    thermo_optic_fit: float | None


def build_ring(
    cfg: dict,
    strip_mode: ModeSolution,
    slot_mode: ModeSolution,
    analyte: AnalyteModel,
    device: str | None = None,
    rho: float | None = None,
) -> RingParams:
    n0, alpha0 = analyte.solvent
    temp = get(cfg, "temperature_c", 25.0, kind=float)
    strip = WaveguideSection.from_mode(strip_mode, n0, get(cfg, "ring.strip_loss_db_cm", 1.0, kind=float), temp)
    slot = WaveguideSection.from_mode(slot_mode, n0, get(cfg, "ring.slot_loss_db_cm", kind=float), temp)
    device = get(cfg, "ring.device", kind=str) if device is None else device
    target_q = get(cfg, f"ring.devices.{device}.target_q", kind=float)
    try:
        ring = RingParams(
            radius=get(cfg, "ring.radius_um", kind=float) * 1e-6,
            t=0.5,
            strip=strip,
            slot=slot,
            rho=get(cfg, "ring.rho", kind=float) if rho is None else rho,
            analyte_loss_db_cm=alpha0,
            converter_loss_db=get(cfg, "ring.converter_loss_db", 0.02, kind=float),
        )
    except ValueError as exc:
        raise ConfigError(f"key 'ring': {exc}") from exc
    t = calibrate_coupling(target_q, ring).t
    return replace(ring, t=t).aligned_to(strip_mode.wavelength)


def build_devices(cfg: dict, device: str | None = None, rho: float | None = None) -> Devices:
    """Solve the strip and slot modes, fit the thermal calibration, build the ring."""
    mats = materials(cfg)
    analyte = analyte_model(cfg)
    n0 = analyte.solvent[0]
    strip = cross_section(cfg, "strip", mats).with_analyte_index(n0)
    slot = cross_section(cfg, "slot", mats).with_analyte_index(n0)
    fit = None
    if "thermal_calibration" in cfg:
        mat = get(cfg, "thermal_calibration.material", kind=str)
        if mat not in mats:
            raise ConfigError(f"key 'thermal_calibration.material': unknown material {mat!r}")
        w = get(cfg, "ring.rho", kind=float) if rho is None else rho
        fit = calibrate_thermo_optic(
            [(1 - w, strip), (w, slot)], mat, get(cfg, "thermal_calibration.target_pm_per_c", kind=float)
        )
        mats = {**mats, mat: {**mats[mat], "thermo_optic": fit}}
        strip = cross_section(cfg, "strip", mats).with_analyte_index(n0)
        slot = cross_section(cfg, "slot", mats).with_analyte_index(n0)
    sm, om = solve_slab(strip), solve_slab(slot)
    ring = build_ring(cfg, sm, om, analyte, device, rho)
    return Devices(strip, slot, sm, om, ring, analyte, mats, fit)


def link_config(cfg: dict, ring: RingParams | None, seed: int | None = None) -> lk.LinkConfig:
    L = "link"

    def sub(name, cls, mapping):
        kw = {}
        for key, field_name in mapping.items():
            v = get(cfg, f"{L}.{name}.{key}", None)
            if v is not None:
                kw[field_name] = v
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"key '{L}.{name}': {exc}") from exc

    try:
        src = sub("source", lk.SourceConfig, {"psd_dbm_per_nm": "psd_dbm_per_nm", "n_lines": "n_lines"})
        band = get(cfg, f"{L}.source.band_nm", None)
        if band is not None:
            src = replace(src, band_nm=tuple(float(b) for b in band))
        src = replace(src, psd_dbm_per_nm=float(src.psd_dbm_per_nm), n_lines=int(src.n_lines))
        flt = sub("filter", lk.FilterConfig, {"center_nm": "center_nm", "bandwidth_nm": "bandwidth_nm", "order": "order"})
        mod = sub(
            "modulator",
            lk.ModulatorConfig,
            {
                "bitrate": "bitrate",
                "prbs_order": "prbs_order",
                "extinction_db": "extinction_db",
                "launch_dbm": "launch_dbm",
                "edge_fraction": "edge_fraction",
                "enabled": "enabled",
            },
        )
        mod = replace(mod, bitrate=float(mod.bitrate), extinction_db=float(mod.extinction_db))
        amp = {"gain_db": "gain_db", "nf_db": "nf_db"}
        e1, e2 = sub("edfa1", lk.AmplifierConfig, amp), sub("edfa2", lk.AmplifierConfig, amp)
        fib = sub(
            "fiber",
            lk.FiberConfig,
            {"length_km": "length_km", "attenuation_db_km": "attenuation_db_km", "dispersion_ps2_km": "dispersion_ps2_km"},
        )
        rx = sub(
            "receiver",
            lk.ReceiverConfig,
            {
                "responsivity": "responsivity",
                "thermal_noise_a_rthz": "thermal_noise",
                "shot_noise": "shot_noise",
                "samples_per_bit": "samples_per_bit",
            },
        )
        smp = sub(
            "sampling",
            lk.SamplingConfig,
            {"samples_per_bit": "samples_per_bit", "n_bits": "n_bits", "block_bits": "block_bits"},
        )
        chip = lk.ChipConfig(ring, get(cfg, f"{L}.chip.coupler_loss_db", 7.0, kind=float))
        kw = dict(
            source=src,
            filter=flt,
            modulator=mod,
            edfa1=e1,
            edfa2=e2,
            fiber=fib,
            chip=chip,
            splitter_ratio=get(cfg, f"{L}.splitter_ratio", 0.5, kind=float),
            receiver=rx,
            sampling=smp,
            rng_seed=get(cfg, f"{L}.rng_seed", 1, kind=int) if seed is None else int(seed),
            temperature=get(cfg, f"{L}.temperature_c", 25.0, kind=float),
        )
        att = get(cfg, f"{L}.attenuations_db", None)
        if att is not None:
            kw["attenuations_db"] = tuple(float(a) for a in att)
        return lk.LinkConfig(**kw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"key '{L}': {exc}") from exc


def link_cases(cfg: dict, analyte: AnalyteModel) -> list[lk.AnalyteCase]:
    """Back-to-back plus one case per configured concentration."""
    cases = [lk.AnalyteCase("B2B", bypass=True)]
    for c in get(cfg, "link.cases_wt", [0.0], kind=list):
        n, alpha = concentration_to_index(analyte, float(c))
        label = "DI" if float(c) == 0 else f"NaCl {float(c):g}%"
        cases.append(lk.AnalyteCase(label, n, alpha))
    return cases
