"""Process configuration: sectioned key = value files with unit-checked values.

Keys carry their unit as a suffix (``pitch_um``, ``sigma1_nm``). A value may
repeat a unit (``pitch_um = 1000 nm``); it is converted to the key's unit and
rejected when the dimensions differ. Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field

from hbyield.defect import DefectParams
from hbyield.layout import DieSpec, WaferSpec
from hbyield.overlay import OverlayParams
from hbyield.recess import RecessParams


class ConfigError(ValueError):
    """Invalid configuration file, key or value."""


_UNITS = {
    "nm": ("length", 1e-3), "um": ("length", 1.0), "µm": ("length", 1.0),
    "mm": ("length", 1e3), "cm": ("length", 1e4), "m": ("length", 1e6),
    "urad": ("angle", 1e-6), "rad": ("angle", 1.0),
    "ppm": ("ratio", 1e-6),
    "per_cm2": ("areal", 1.0), "cm-2": ("areal", 1.0), "per_mm2": ("areal", 100.0),
    "gpa": ("pressure", 1e9), "mpa": ("pressure", 1e6), "pa": ("pressure", 1.0),
    "j_per_m2": ("energy_area", 1.0), "j/m2": ("energy_area", 1.0),
    "per_m": ("inv_length", 1.0), "1/m": ("inv_length", 1.0),
    "n_per_m3": ("stiffness", 1.0), "n/m3": ("stiffness", 1.0),
}

# (default, type); None default means optional
SCHEMA = {
    "design": {
        "pitch_um": (1.0, float),
        "top_pad_um": (0.3, float),
        "bottom_pad_um": (0.5, float),
        "die_width_mm": (10.0, float),
        "die_height_mm": (10.0, float),
        "wafer_radius_mm": (150.0, float),
        "edge_exclusion_mm": (0.0, float),
        "layout": ("full", str),
        "critical_fraction": (0.2, float),
        "redundant_fraction": (0.5, float),
        "dummy_fraction": (0.3, float),
        "layout_seed": (0, int),
    },
    "process": {
        "mode": ("w2w", str),
        "sigma1_nm": (20.0, float),
        "tx_nm": (0.0, float),
        "tx_std_nm": (20.0, float),
        "ty_nm": (0.0, float),
        "ty_std_nm": (20.0, float),
        "rotation_urad": (0.05, float),
        "rotation_std_urad": (0.01, float),
        "magnification_ppm": (0.05, float),
        "magnification_std_ppm": (0.01, float),
        "warpage_um": (None, float),
        "defect_density_per_cm2": (0.1, float),
        "t0_um": (0.1, float),
        "z": (3.0, float),
        "mu_top_nm": (-10.0, float),
        "sigma_top_nm": (1.0, float),
        "mu_bot_nm": (-10.0, float),
        "sigma_bot_nm": (1.0, float),
        "cu_expansion_nm": (29.0, float),
        "sigma_z_nm": (1.0, float),
        "asperity_radius_um": (1.0, float),
        "youngs_gpa": (73.0, float),
        "poisson": (0.17, float),
        "adhesion_j_per_m2": (1.2, float),
        "dielectric_um": (1.5, float),
    },
    "model": {
        "k_ca": (0.5, float),
        "k_cd": (0.5, float),
        "k_mag_per_m": (0.09, float),
        "k_peel_n_per_m3": (6.55e15, float),
        "h0_nm": (75.0, float),
        "k_r": (1.8e-4, float),
        "k_r0": (230.0, float),
        "k_l": (6.2e-2, float),
        "k_n": (9e-5, float),
        "k_s": (2.7, float),
        "resolution_w2w_um": (400.0, float),
        "resolution_d2w_um": (100.0, float),
        "n_theta": (16, int),
        "n_lengths": (64, int),
        "tail_lmax_factor": (5.0, float),
        "disk_tail_fraction": (1e-4, float),
        "quad_translation": (5, int),
        "quad_rotation": (3, int),
    },
    "sim": {
        "n_wafers": (10, int),
        "n_dies": (10000, int),
        "seed": (0, int),
        "chunk_dies": (1000, int),
        "tail_end_ratio": (0.25, float),
        "workers": (1, int),
    },
}


def _key_unit(key: str):
    for suffix in sorted(_UNITS, key=len, reverse=True):
        if key.endswith("_" + suffix):
            return suffix
    return None


def _parse_value(section: str, key: str, raw: str):
    default, typ = SCHEMA[section][key]
    raw = raw.strip()
    if raw in ("", "none", "None") and default is None:
        return None
    if typ is str:
        return raw.lower()
    m = re.fullmatch(r"([-+0-9.eE]+)\s*([A-Za-zµ/0-9_\-]*)", raw)
    if not m:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}")
    num, unit = m.group(1), m.group(2)
    try:
        val = float(num)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {raw!r} is not a number") from exc
    if unit:
        key_unit = _key_unit(key)
        if key_unit is None:
            raise ConfigError(f"{section}.{key} is dimensionless but got unit {unit!r}")
        u = unit.lower() if unit.lower() in _UNITS else unit
        if u not in _UNITS:
            raise ConfigError(f"{section}.{key}: unknown unit {unit!r}")
        dim_v, f_v = _UNITS[u]
        dim_k, f_k = _UNITS[key_unit]
        if dim_v != dim_k:
            raise ConfigError(f"{section}.{key}: unit {unit!r} is not a {dim_k}")
        val = val * f_v / f_k
    if typ is int:
        if val != int(val):
            raise ConfigError(f"{section}.{key} must be an integer")
        return int(val)
    return val


@dataclass
class ProcessConfig:
    """All design, process, model and simulation settings."""

    values: dict = field(default_factory=lambda: {
        s: {k: d for k, (d, _) in keys.items()} for s, keys in SCHEMA.items()})

    # --- construction ---------------------------------------------------
    @classmethod
    def loads(cls, text: str, overrides=()) -> "ProcessConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        cfg = cls()
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.set(section, key, raw)
        for item in overrides:
            cfg.set_override(item)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides=()) -> "ProcessConfig":
        text = "" if path is None else open(path).read()
        return cls.loads(text, overrides)

    def set(self, section: str, key: str, raw) -> None:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {section}.{key}")
        self.values[section][key] = _parse_value(section, key, str(raw)) if isinstance(
            raw, str) else raw

    def set_override(self, item: str) -> None:
        """Apply ``section.key=value``; a bare key is looked up across sections."""
        if "=" not in item:
            raise ConfigError(f"override {item!r} needs key=value")
        name, raw = item.split("=", 1)
        name = name.strip()
        if "." in name:
            section, key = name.split(".", 1)
        else:
            hits = [s for s in SCHEMA if name in SCHEMA[s]]
            if len(hits) != 1:
                raise ConfigError(f"unknown or ambiguous key {name!r}")
            section, key = hits[0], name
        self.set(section, key, raw)

    def with_overrides(self, **kw) -> "ProcessConfig":
        """Copy with keys replaced (``section__key=value`` or bare unique keys)."""
        new = ProcessConfig({s: dict(v) for s, v in self.values.items()})
        for name, val in kw.items():
            if "__" in name:
                section, key = name.split("__", 1)
            else:
                hits = [s for s in SCHEMA if name in SCHEMA[s]]
                if len(hits) != 1:
                    raise ConfigError(f"unknown or ambiguous key {name!r}")
                section, key = hits[0], name
            new.set(section, key, val)
        new.validate()
        return new

    def validate(self) -> None:
        mode = self.values["process"]["mode"]
        if mode not in ("w2w", "d2w"):
            raise ConfigError("process.mode must be w2w or d2w")
        if self.values["design"]["layout"] not in ("full", "sparse", "peripheral", "centralized"):
            raise ConfigError("design.layout must be full, sparse, peripheral or centralized")
        for s, keys in SCHEMA.items():
            for k, (d, typ) in keys.items():
                v = self.values[s][k]
                if v is None and d is None:
                    continue
                if typ in (int, float) and not isinstance(v, (int, float)):
                    raise ConfigError(f"{s}.{k} must be numeric")
        try:
            self.die()
            self.overlay()
            self.recess()
            self.defect()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for s, keys in SCHEMA.items():
            parser[s] = {}
            for k in keys:
                v = self.values[s][k]
                parser[s][k] = "none" if v is None else (repr(v) if isinstance(v, float) else str(v))
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def __eq__(self, other):
        return isinstance(other, ProcessConfig) and self.values == other.values

    # --- typed views ----------------------------------------------------
    def __getitem__(self, name: str):
        section, key = name.split(".", 1)
        return self.values[section][key]

    @property
    def mode(self) -> str:
        return self.values["process"]["mode"]

    def die(self) -> DieSpec:
        d = self.values["design"]
        return DieSpec(d["die_width_mm"], d["die_height_mm"], d["pitch_um"], d["top_pad_um"],
                       d["bottom_pad_um"])

    def wafer(self) -> WaferSpec:
        d = self.values["design"]
        return WaferSpec(d["wafer_radius_mm"], self.die(), d["edge_exclusion_mm"])

    def overlay(self) -> OverlayParams:
        p, m = self.values["process"], self.values["model"]
        warp = p["warpage_um"]
        return OverlayParams(
            sigma1_nm=p["sigma1_nm"], tx_nm=p["tx_nm"], ty_nm=p["ty_nm"],
            rotation_urad=p["rotation_urad"],
            magnification_ppm=None if warp is not None else p["magnification_ppm"],
            tx_std_nm=p["tx_std_nm"], ty_std_nm=p["ty_std_nm"],
            rotation_std_urad=p["rotation_std_urad"],
            magnification_std_ppm=p["magnification_std_ppm"], warpage_um=warp,
            k_mag_per_m=m["k_mag_per_m"], k_ca=m["k_ca"], k_cd=m["k_cd"])

    def recess(self) -> RecessParams:
        p, m = self.values["process"], self.values["model"]
        return RecessParams(
            mu_top_nm=p["mu_top_nm"], sigma_top_nm=p["sigma_top_nm"], mu_bot_nm=p["mu_bot_nm"],
            sigma_bot_nm=p["sigma_bot_nm"], cu_expansion_nm=p["cu_expansion_nm"],
            sigma_z_nm=p["sigma_z_nm"], asperity_radius_um=p["asperity_radius_um"],
            youngs_gpa=p["youngs_gpa"], poisson=p["poisson"],
            adhesion_j_m2=p["adhesion_j_per_m2"], dielectric_um=p["dielectric_um"],
            k_peel=m["k_peel_n_per_m3"], h0_nm=m["h0_nm"])

    def defect(self) -> DefectParams:
        p, m = self.values["process"], self.values["model"]
        return DefectParams(p["defect_density_per_cm2"], p["t0_um"], p["z"], m["k_r"], m["k_r0"],
                            m["k_l"], m["k_n"], m["k_s"])

    def resolution_um(self, mode: str | None = None) -> float:
        mode = mode or self.mode
        return self.values["model"][f"resolution_{mode}_um"]
