"""Run configuration: JSON container, schema validation, overrides.

One resolved-config document drives every command; the same document is
recorded in the run manifest, and a manifest can be fed back as the config
of a new run (bitwise-reproducible reruns).  Precedence for the sampler
seed: ``--set sampler.seed`` > ``TUBEFLOCK_SEED`` env var > config file.
"""

from __future__ import annotations

import copy
import json
import os

import numpy as np

from .dynamics import IntegratorConfig
from .model import (
    INVERSE_POWER,
    TAPERED_COSINE,
    CommKernel,
    ModelParams,
    PairPotential,
    TubeGeometry,
)
from .sampling import SamplerSpec


class ConfigError(ValueError):
    """Invalid or missing run configuration."""


DEFAULTS = {
    "geometry": {
        "axis": [1.0, 0.0, 0.0],
        "L": 1.0,
        "h": 0.5,
        "gamma": 2.0,
        "theta0": 1.0,
    },
    "kernel": {
        "family": TAPERED_COSINE,
        "K0": 2.0,
        "beta": 0.5,
        "rbar": 8.0,
    },
    "potential": {
        "a": 1.0,
        "b": 2.0,
        "s0": 0.5,
        "u0": 1.0,
        "rbar": 2.0,
    },
    "integrator": {
        "rtol": 1e-8,
        "atol": 1e-10,
        "max_step": 0.1,
        "eta": 0.2,
        "max_steps": 2_000_000,
    },
    "sampler": {
        "seed": 12345,
        "rho": 1.0,
        "sigma": 0.5,
        "span": 200.0,
        "dmin": 0.3,
        "loggrowth": False,
        "c": 0.5,
    },
    "study": {
        "nladder": [40, 80, 160],
        "k": 10.0,
        "T": 1.0,
        "stride": 0.05,
        "bound_factor": 10.0,
    },
    "flock": {
        "n": 50,
        "beta": 0.25,
        "lam": 1.0,
        "seed": 7,
        "t": 50.0,
        "stride": 1.0,
        "v_threshold_ratio": 1e-3,
        "x_bound": 50.0,
    },
    "output": {
        "dir": "out",
        "formats": ["csv", "json", "png"],
    },
    "input": {
        "snapshot": None,
    },
}

_NUMERIC = (int, float)


def _check_types(cfg: dict) -> None:
    for section, keys in cfg.items():
        for key, value in keys.items():
            default = DEFAULTS[section][key]
            if key in ("snapshot",):
                if value is not None and not isinstance(value, str):
                    raise ConfigError(f"{section}.{key} must be a path string or null")
            elif key == "axis":
                if not (isinstance(value, list) and len(value) == 3):
                    raise ConfigError("geometry.axis must be a 3-element list")
            elif key == "nladder":
                if not (isinstance(value, list) and value and all(isinstance(v, _NUMERIC) for v in value)):
                    raise ConfigError("study.nladder must be a non-empty list of numbers")
            elif key == "formats":
                if not (isinstance(value, list) and all(isinstance(v, str) for v in value)):
                    raise ConfigError("output.formats must be a list of strings")
            elif isinstance(default, bool):
                if not isinstance(value, bool):
                    raise ConfigError(f"{section}.{key} must be a boolean")
            elif isinstance(default, _NUMERIC):
                if not isinstance(value, _NUMERIC) or isinstance(value, bool):
                    raise ConfigError(f"{section}.{key} must be a number")
            elif isinstance(default, str):
                if not isinstance(value, str):
                    raise ConfigError(f"{section}.{key} must be a string")


def merge_config(overrides: dict) -> dict:
    """Overlay a (possibly partial) config document on the defaults,
    rejecting unknown sections and keys."""
    cfg = copy.deepcopy(DEFAULTS)
    if not isinstance(overrides, dict):
        raise ConfigError("config document must be a JSON object")
    for section, keys in overrides.items():
        if section not in cfg:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(keys, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, value in keys.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            cfg[section][key] = value
    _check_types(cfg)
    return cfg


def load_config(path: str | None, sets: list[str] | None = None) -> dict:
    """Read a config file (or start from defaults when ``path`` is None),
    apply the TUBEFLOCK_SEED env var, then ``--set`` overrides.

    A manifest written by a previous run is accepted directly: its
    ``resolved_config`` section is unwrapped.
    """
    doc: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if "resolved_config" in doc:
            doc = doc["resolved_config"]
    env_seed = os.environ.get("TUBEFLOCK_SEED")
    if env_seed is not None:
        try:
            doc.setdefault("sampler", {})["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"TUBEFLOCK_SEED must be an integer, got {env_seed!r}") from exc
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"--set key must be section.key, got {dotted!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        doc.setdefault(parts[0], {})[parts[1]] = value
    return merge_config(doc)


def build_geometry(cfg: dict) -> TubeGeometry:
    g = cfg["geometry"]
    try:
        return TubeGeometry(
            np.array(g["axis"], dtype=float),
            float(g["L"]),
            float(g["h"]),
            float(g["gamma"]),
            float(g["theta0"]),
        )
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from exc


def build_kernel(cfg: dict) -> CommKernel:
    k = cfg["kernel"]
    if k["family"] not in (TAPERED_COSINE, INVERSE_POWER):
        raise ConfigError(f"kernel.family must be one of {TAPERED_COSINE!r}, {INVERSE_POWER!r}")
    try:
        return CommKernel(
            k["family"],
            float(k["K0"]),
            support=float(k["rbar"]),
            exponent=float(k["beta"]),
        )
    except ValueError as exc:
        raise ConfigError(f"kernel: {exc}") from exc


def build_potential(cfg: dict) -> PairPotential | None:
    p = cfg["potential"]
    if float(p["a"]) == 0.0 and float(p["u0"]) == 0.0:
        return None
    try:
        return PairPotential(
            float(p["a"]),
            float(p["b"]),
            float(p["rbar"]),
            float(p["s0"]),
            float(p["u0"]),
        )
    except ValueError as exc:
        raise ConfigError(f"potential: {exc}") from exc


def build_params(cfg: dict) -> ModelParams:
    return ModelParams(build_kernel(cfg), build_potential(cfg), build_geometry(cfg))


def build_integrator(cfg: dict) -> IntegratorConfig:
    i = cfg["integrator"]
    try:
        return IntegratorConfig(
            rtol=float(i["rtol"]),
            atol=float(i["atol"]),
            max_step=float(i["max_step"]),
            initial_step=min(0.01, float(i["max_step"])),
            displacement_safety=float(i["eta"]),
            max_steps=int(i["max_steps"]),
        )
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from exc


def build_sampler(cfg: dict) -> SamplerSpec:
    s = cfg["sampler"]
    try:
        return SamplerSpec(
            seed=int(s["seed"]),
            density=float(s["rho"]),
            sigma=float(s["sigma"]),
            span=float(s["span"]),
            d_min=float(s["dmin"]),
            log_growth=bool(s["loggrowth"]),
            transverse_cap=float(s["c"]),
        )
    except ValueError as exc:
        raise ConfigError(f"sampler: {exc}") from exc
