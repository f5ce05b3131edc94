"""INI-style run configuration.

Sections: [scenario] [space] [priors] [mcmc] [output].  Unknown
sections or keys are hard errors so a typo cannot silently fall back to
a default.  Every default is materialized in echo() so manifests carry
the complete effective configuration.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields, replace

from .io import FileFormatError
from .mcmc import McmcConfig
from .model import ConfigError, GammaPrior, PriorSpec, UniformPrior
from .simulate import Scenario, preset, preset_names
from .model import TrapArray

_KNOWN_KEYS = {
    "scenario": {"preset", "rows", "cols", "spacing", "sigma", "lambda0",
                 "N_true", "T", "m", "name", "seed"},
    "space": {"buffer", "unit_scale", "area_unit_size", "area_unit_name"},
    "priors": {"sigma", "lambda0"},
    "mcmc": {"M", "algorithm", "iterations", "burn_in", "thin", "chains",
             "seed", "proposal_sd_s", "proposal_sd_log_sigma",
             "proposal_sd_log_lambda0", "adapt", "center_stride",
             "sample_sigma", "sample_lambda0", "init_sigma", "init_lambda0",
             "likelihood_off", "validate_every"},
    "output": {"pixel"},
}

_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True,
               "0": False, "false": False, "no": False, "off": False}

DEFAULT_BUFFER = 3.0


def _fail(section: str, key: str, raw: str, want: str):
    raise ConfigError(f"[{section}] {key} = {raw!r}: expected {want}")


def _as_int(section, key, raw):
    try:
        return int(raw)
    except ValueError:
        _fail(section, key, raw, "an integer")


def _as_float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        _fail(section, key, raw, "a number")


def _as_bool(section, key, raw):
    v = _BOOL_WORDS.get(raw.strip().lower())
    if v is None:
        _fail(section, key, raw, "true/false")
    return v


def prior_from_string(section: str, key: str, raw: str):
    parts = [p.strip() for p in raw.split(",")]
    kind = parts[0].lower()
    try:
        if kind == "uniform" and len(parts) == 2:
            return UniformPrior(float(parts[1]))
        if kind == "gamma" and len(parts) == 3:
            return GammaPrior(float(parts[1]), float(parts[2]))
    except ValueError:
        pass
    _fail(section, key, raw, "'uniform,<upper>' or 'gamma,<shape>,<rate>'")


def prior_to_string(prior) -> str:
    if isinstance(prior, UniformPrior):
        return f"uniform,{prior.upper!r}"
    if isinstance(prior, GammaPrior):
        return f"gamma,{prior.shape!r},{prior.rate!r}"
    raise ConfigError(f"unknown prior type {type(prior).__name__}")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration for one CLI invocation."""

    scenario: Scenario | None
    scenario_raw: dict
    buffer: float
    unit_scale: float
    area_unit_size: float
    area_unit_name: str
    priors: PriorSpec
    mcmc: McmcConfig | None
    pixel: float | None

    @property
    def density_factor(self) -> float:
        """Multiplier taking density per model area to per reporting unit."""
        return self.area_unit_size * self.unit_scale ** 2

    def echo(self) -> dict:
        mcmc = None
        if self.mcmc is not None:
            mcmc = {f.name: getattr(self.mcmc, f.name)
                    for f in fields(self.mcmc)}
        return {
            "scenario": dict(self.scenario_raw) if self.scenario_raw else None,
            "space": {
                "buffer": self.buffer,
                "unit_scale": self.unit_scale,
                "area_unit_size": self.area_unit_size,
                "area_unit_name": self.area_unit_name,
            },
            "priors": {
                "sigma": prior_to_string(self.priors.sigma),
                "lambda0": prior_to_string(self.priors.lambda0),
            },
            "mcmc": mcmc,
            "output": {"pixel": self.pixel},
        }


def _parse_scenario(items: dict) -> Scenario:
    if "preset" in items:
        extra = set(items) - {"preset", "seed"}
        if extra:
            raise ConfigError(
                f"[scenario] preset cannot be combined with {sorted(extra)}")
        name = items["preset"].strip()
        if name not in preset_names():
            raise ConfigError(f"[scenario] unknown preset {name!r}; "
                              f"known: {', '.join(preset_names())}")
        seed = _as_int("scenario", "seed", items.get("seed", "0"))
        return preset(name, seed=seed)
    required = {"rows", "cols", "spacing", "sigma", "lambda0", "N_true", "T"}
    missing = sorted(required - set(items))
    if missing:
        raise ConfigError(f"[scenario] missing keys: {', '.join(missing)}")
    traps = TrapArray.grid(
        _as_int("scenario", "rows", items["rows"]),
        _as_int("scenario", "cols", items["cols"]),
        _as_float("scenario", "spacing", items["spacing"]))
    return Scenario(
        traps=traps,
        buffer=DEFAULT_BUFFER,   # replaced by [space] buffer by the caller
        sigma=_as_float("scenario", "sigma", items["sigma"]),
        lambda0=_as_float("scenario", "lambda0", items["lambda0"]),
        N_true=_as_int("scenario", "N_true", items["N_true"]),
        T=_as_int("scenario", "T", items["T"]),
        m=_as_int("scenario", "m", items.get("m", "0")),
        seed=_as_int("scenario", "seed", items.get("seed", "0")),
        name=items.get("name", "custom").strip(),
    )


def _parse_mcmc(items: dict) -> McmcConfig:
    if "M" not in items:
        raise ConfigError("[mcmc] M is required")
    kw = {"M": _as_int("mcmc", "M", items["M"])}
    ints = ("iterations", "burn_in", "thin", "chains", "seed",
            "center_stride", "validate_every")
    floats = ("proposal_sd_s", "proposal_sd_log_sigma",
              "proposal_sd_log_lambda0", "init_sigma", "init_lambda0")
    bools = ("adapt", "sample_sigma", "sample_lambda0", "likelihood_off")
    for key, raw in items.items():
        if key == "M":
            continue
        if key == "algorithm":
            kw[key] = raw.strip()
        elif key in ints:
            kw[key] = _as_int("mcmc", key, raw)
        elif key in floats:
            kw[key] = _as_float("mcmc", key, raw)
        elif key in bools:
            kw[key] = _as_bool("mcmc", key, raw)
    return McmcConfig(**kw)


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise FileFormatError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str   # keys are case-sensitive
    try:
        with open(path, "r", encoding="utf-8") as f:
            cp.read_file(f)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for section in cp.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        unknown = sorted(set(cp[section]) - _KNOWN_KEYS[section])
        if unknown:
            raise ConfigError(
                f"{path}: unknown key(s) in [{section}]: {', '.join(unknown)}")

    sp = dict(cp["space"]) if cp.has_section("space") else {}
    buffer = _as_float("space", "buffer", sp.get("buffer", repr(DEFAULT_BUFFER)))
    if buffer < 0:
        raise ConfigError("[space] buffer must be non-negative")
    unit_scale = _as_float("space", "unit_scale", sp.get("unit_scale", "1.0"))
    if not unit_scale > 0:
        raise ConfigError("[space] unit_scale must be positive")
    area_unit_size = _as_float("space", "area_unit_size",
                               sp.get("area_unit_size", "1.0"))
    if not area_unit_size > 0:
        raise ConfigError("[space] area_unit_size must be positive")
    area_unit_name = sp.get("area_unit_name", "unit").strip()

    scenario = None
    scenario_raw = {}
    if cp.has_section("scenario"):
        scenario_raw = dict(cp["scenario"])
        scenario = _parse_scenario(scenario_raw)
        if "preset" not in scenario_raw:
            scenario = replace(scenario, buffer=buffer)

    priors = PriorSpec()
    if cp.has_section("priors"):
        pr = dict(cp["priors"])
        kw = {}
        for key in ("sigma", "lambda0"):
            if key in pr:
                kw[key] = prior_from_string("priors", key, pr[key])
        priors = PriorSpec(**kw)

    mcmc = _parse_mcmc(dict(cp["mcmc"])) if cp.has_section("mcmc") else None

    pixel = None
    if cp.has_section("output") and "pixel" in cp["output"]:
        pixel = _as_float("output", "pixel", cp["output"]["pixel"])
        if not pixel > 0:
            raise ConfigError("[output] pixel must be positive")

    return RunConfig(scenario=scenario, scenario_raw=scenario_raw,
                     buffer=buffer, unit_scale=unit_scale,
                     area_unit_size=area_unit_size,
                     area_unit_name=area_unit_name, priors=priors,
                     mcmc=mcmc, pixel=pixel)


def config_from_echo(echo: dict) -> RunConfig:
    """Rebuild the effective configuration from a manifest echo."""
    try:
        space = echo["space"]
        priors = PriorSpec(
            sigma=prior_from_string("priors", "sigma", echo["priors"]["sigma"]),
            lambda0=prior_from_string("priors", "lambda0",
                                      echo["priors"]["lambda0"]))
        mcmc = None
        if echo.get("mcmc") is not None:
            mcmc = McmcConfig(**echo["mcmc"])
        return RunConfig(
            scenario=None,
            scenario_raw=echo.get("scenario") or {},
            buffer=float(space["buffer"]),
            unit_scale=float(space["unit_scale"]),
            area_unit_size=float(space["area_unit_size"]),
            area_unit_name=str(space["area_unit_name"]),
            priors=priors,
            mcmc=mcmc,
            pixel=echo.get("output", {}).get("pixel"),
        )
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"manifest echo incomplete: {exc}") from None
