"""Project configuration: TOML or JSON files with a fixed, validated schema."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["ConfigError", "ProjectConfig", "load_config", "resolve_config", "SCHEMA"]


class ConfigError(ValueError):
    pass


_REQUIRED = object()
_OPTIONAL = None

# section -> key -> default (_REQUIRED must be supplied, None means optional/unset)
SCHEMA = {
    "dispersion": {
        "kind": "linear",
        # linear expansion
        "dk0_radpm": _OPTIONAL,
        "coherence_length_m": _OPTIONAL,
        "ks_prime_spm": _OPTIONAL,
        "ki_prime_spm": _OPTIONAL,
        "kp_prime_spm": _OPTIONAL,
        "signal_wavelength_m": _OPTIONAL,
        "idler_wavelength_m": _OPTIONAL,
        "symmetric_gvm": True,
        # sellmeier
        "sellmeier_set": _OPTIONAL,
        "axes": ["y", "y", "z"],
        "temperature_c": 25.0,
        "window_m": [1.2e-6, 2.4e-6],
    },
    "target_pmf": {
        "L_m": _REQUIRED,
        "sigma_k_per_m": _REQUIRED,
        "spacing_ratio": 24.0,
        "coefficients": _OPTIONAL,
        "coefficients_relative": _OPTIONAL,
        "width_m": _OPTIONAL,
    },
    "pump": {
        "coefficients": [1.0],
        "normalize": False,
    },
    "grid": {
        "size": 1024,
        "margin_sigma": 8.0,
    },
    "filter": {
        "enabled": False,
        "sigma_f_ratio": 2.0,
    },
    "state": {
        "gamma": 0.5,
        "pairing": "single",
        "eliminate": False,
        "block": [],
        "thss_b11": [],
        "thss_b12": [],
        "thss_b22": [],
    },
    "output": {
        "plots": True,
        "plot_format": "png",
        "peak_threshold": 0.25,
        "mode_threshold": 1e-3,
    },
}


@dataclass
class ProjectConfig:
    data: dict
    source: str | None = None

    def __getitem__(self, section):
        return self.data[section]

    @property
    def dispersion(self):
        return self.data["dispersion"]

    @property
    def target_pmf(self):
        return self.data["target_pmf"]

    @property
    def pump(self):
        return self.data["pump"]

    @property
    def grid(self):
        return self.data["grid"]

    @property
    def filter(self):
        return self.data["filter"]

    @property
    def state(self):
        return self.data["state"]

    @property
    def output(self):
        return self.data["output"]

    def to_json(self):
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"


def _check_number(section, key, value, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key} must be a number")
    if not math.isfinite(value) or (positive and value <= 0):
        raise ConfigError(f"[{section}] {key} must be {'positive' if positive else 'finite'}")


def resolve_config(raw: dict, source=None) -> ProjectConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table of sections")
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    data = {}
    for section, fields in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{section}] must be a table")
        bad = set(given) - set(fields)
        if bad:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(bad)}")
        out = {}
        for key, default in fields.items():
            if key in given:
                out[key] = copy.deepcopy(given[key])
            elif default is _REQUIRED:
                if section in raw or section == "target_pmf":
                    raise ConfigError(f"[{section}] {key} is required")
                out[key] = None
            else:
                out[key] = copy.deepcopy(default)
        data[section] = out
    _validate(data)
    return ProjectConfig(data, str(source) if source else None)


def _validate(d):
    disp = d["dispersion"]
    if disp["kind"] == "linear":
        if (disp["dk0_radpm"] is None) == (disp["coherence_length_m"] is None):
            raise ConfigError("[dispersion] give exactly one of dk0_radpm, coherence_length_m")
        for key in ("ks_prime_spm", "ki_prime_spm", "signal_wavelength_m", "idler_wavelength_m"):
            if disp[key] is None:
                raise ConfigError(f"[dispersion] {key} is required for kind = 'linear'")
            _check_number("dispersion", key, disp[key], positive=True)
    elif disp["kind"] == "sellmeier":
        if not disp["sellmeier_set"]:
            raise ConfigError("[dispersion] sellmeier_set is required for kind = 'sellmeier'")
        if len(disp["axes"]) != 3:
            raise ConfigError("[dispersion] axes lists the pump, signal and idler axes")
    else:
        raise ConfigError("[dispersion] kind must be 'linear' or 'sellmeier'")

    tp = d["target_pmf"]
    for key in ("L_m", "sigma_k_per_m", "spacing_ratio"):
        _check_number("target_pmf", key, tp[key], positive=True)
    if (tp["coefficients"] is None) == (tp["coefficients_relative"] is None):
        raise ConfigError("[target_pmf] give exactly one of coefficients, coefficients_relative")
    coeffs = tp["coefficients"] if tp["coefficients"] is not None else tp["coefficients_relative"]
    if len(coeffs) % 2 != 1:
        raise ConfigError("[target_pmf] coefficient list must have odd length (m = -N..N)")

    if len(d["pump"]["coefficients"]) % 2 != 1:
        raise ConfigError("[pump] coefficient list must have odd length (n = -N..N)")
    g = d["grid"]
    if not isinstance(g["size"], int) or g["size"] < 16:
        raise ConfigError("[grid] size must be an integer >= 16")
    _check_number("grid", "margin_sigma", g["margin_sigma"], positive=True)
    _check_number("filter", "sigma_f_ratio", d["filter"]["sigma_f_ratio"])
    if d["filter"]["sigma_f_ratio"] < 0:
        raise ConfigError("[filter] sigma_f_ratio must be non-negative")
    st = d["state"]
    if st["pairing"] not in ("single", "cross"):
        raise ConfigError("[state] pairing must be 'single' or 'cross'")
    if st["eliminate"] and st["pairing"] != "cross":
        raise ConfigError("[state] eliminate requires pairing = 'cross'")
    if d["output"]["plot_format"] not in ("png", "svg", "pdf"):
        raise ConfigError("[output] plot_format must be png, svg or pdf")
    for key in ("peak_threshold", "mode_threshold"):
        v = d["output"][key]
        _check_number("output", key, v)
        if not 0 < v < 1:
            raise ConfigError(f"[output] {key} must lie in (0, 1)")


def load_config(path) -> ProjectConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return resolve_config(raw, path)
