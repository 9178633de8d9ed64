"""Run configuration: one sectioned ``key = value`` file plus flag overrides."""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .control import ControllerGains
from .experiment import DEFAULT_D, DEFAULT_H, DEFAULT_M, MATERIAL_STIFFNESS, SampleCatalog, build_catalog
from .settings import LoopConfig
from .signals import SamplingConfig

ENCODER_RESOLUTION = 6750
GEAR_RATIO = 3.0


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    catalog_defaults: dict = field(default_factory=lambda: {"M": DEFAULT_M, "D": DEFAULT_D, "H": DEFAULT_H})
    catalog_overrides: dict = field(default_factory=dict)
    encoder_resolution: int = ENCODER_RESOLUTION
    gear_ratio: float = GEAR_RATIO
    seed: int = 0
    out_dir: str = "results"
    jobs: int = 1
    max_ratio: float = 0.5
    max_p: float = 0.05

    def catalog(self) -> SampleCatalog:
        merged = {}
        for name in MATERIAL_STIFFNESS:
            vals = dict(self.catalog_defaults)
            vals.update(self.catalog_overrides.get(name, {}))
            merged[name] = vals
        return build_catalog(merged)


_LOOP_SECTIONS = {
    "motor": {"J_n": float},
    "observer": {"dob_cutoff": float, "feedback_cutoff_hz": float, "coulomb": float, "viscous": float},
    "estimator": {
        "window": int, "noise_enabled": bool, "noise_during_recording": bool, "amplitude_cap": float,
        "excitation_gain": float, "lambda_scale": float, "cond_max": float,
    },
    "adapt": {"den_threshold": float, "smoothing_tau": float},
    "safety": {"torque_limit": float, "divergence_x": float, "divergence_f": float},
}
_RUN_KEYS = {"seed": int, "out_dir": str, "jobs": int}
_ACCEPT_KEYS = {"max_ratio": float, "max_p": float}
_IMP_KEYS = ("M", "D", "K", "H")


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    return cp


def _convert(cp, section, key, typ):
    try:
        if typ is bool:
            return cp.getboolean(section, key)
        return typ(cp.get(section, key))
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def parse_config(text: str) -> RunConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig()
    loop_kw: dict = {}
    gains_kw: dict = {}
    sampling_kw: dict = {}
    for section in cp.sections():
        keys = list(cp[section])
        if section == "sampling":
            for k in keys:
                if k not in ("dt", "duration"):
                    raise ConfigError(f"unknown key [sampling] {k}")
                sampling_kw[k] = _convert(cp, section, k, float)
        elif section == "gains":
            for k in keys:
                if k not in ("K_pos", "K_vel", "K_for"):
                    raise ConfigError(f"unknown key [gains] {k}")
                gains_kw[k] = _convert(cp, section, k, float)
        elif section in _LOOP_SECTIONS:
            allowed = dict(_LOOP_SECTIONS[section])
            if section == "motor":
                allowed.update(encoder_resolution=int, gear_ratio=float)
            for k in keys:
                if k not in allowed:
                    raise ConfigError(f"unknown key [{section}] {k}")
                val = _convert(cp, section, k, allowed[k])
                if k in ("encoder_resolution", "gear_ratio"):
                    setattr(cfg, k, val)
                else:
                    loop_kw[k] = val
        elif section == "run":
            for k in keys:
                if k not in _RUN_KEYS:
                    raise ConfigError(f"unknown key [run] {k}")
                setattr(cfg, k, _convert(cp, section, k, _RUN_KEYS[k]))
        elif section == "acceptance":
            for k in keys:
                if k not in _ACCEPT_KEYS:
                    raise ConfigError(f"unknown key [acceptance] {k}")
                setattr(cfg, k, _convert(cp, section, k, _ACCEPT_KEYS[k]))
        elif section == "catalog":
            for k in keys:
                if k not in ("M", "D", "H"):
                    raise ConfigError(f"unknown key [catalog] {k}")
                cfg.catalog_defaults[k] = _convert(cp, section, k, float)
        elif section.startswith("catalog."):
            name = section[len("catalog."):]
            if name not in MATERIAL_STIFFNESS:
                raise ConfigError(f"unknown material {name!r}")
            over = {}
            for k in keys:
                if k not in _IMP_KEYS:
                    raise ConfigError(f"unknown key [{section}] {k}")
                over[k] = _convert(cp, section, k, float)
            # the catalog dump restates defaults; keep only real changes
            base = dict(cfg.catalog_defaults, K=MATERIAL_STIFFNESS[name])
            over = {k: v for k, v in over.items() if v != base.get(k)}
            if over:
                cfg.catalog_overrides[name] = over
        else:
            raise ConfigError(f"unknown section [{section}]")
    try:
        cfg.sampling = SamplingConfig(**sampling_kw)
        loop_kw["gains"] = ControllerGains(**gains_kw)
        cfg.loop = replace(cfg.loop, **loop_kw)
        cfg.catalog()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.loop.window < 4:
        raise ConfigError("estimator window must hold at least 4 samples")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    cp = _parser()
    cp["sampling"] = {"dt": repr(cfg.sampling.dt), "duration": repr(cfg.sampling.duration)}
    loop = cfg.loop
    cp["motor"] = {
        "J_n": repr(loop.J_n),
        "encoder_resolution": str(cfg.encoder_resolution),
        "gear_ratio": repr(cfg.gear_ratio),
    }
    cp["gains"] = {f.name: repr(getattr(loop.gains, f.name)) for f in fields(loop.gains)}
    for section, keys in _LOOP_SECTIONS.items():
        if section == "motor":
            continue
        cp[section] = {
            k: (str(getattr(loop, k)).lower() if t is bool else repr(getattr(loop, k)) if t is float else str(getattr(loop, k)))
            for k, t in keys.items()
        }
    cp["run"] = {"seed": str(cfg.seed), "out_dir": cfg.out_dir, "jobs": str(cfg.jobs)}
    cp["acceptance"] = {"max_ratio": repr(cfg.max_ratio), "max_p": repr(cfg.max_p)}
    cp["catalog"] = {k: repr(v) for k, v in cfg.catalog_defaults.items()}
    catalog = cfg.catalog()
    seen = {}
    for e in catalog.position + catalog.force:
        seen[e.name] = e.imp
    for name in MATERIAL_STIFFNESS:
        imp = seen[name]
        cp[f"catalog.{name}"] = {k: repr(getattr(imp, k)) for k in _IMP_KEYS}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
