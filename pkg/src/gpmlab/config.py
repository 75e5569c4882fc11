"""Experiment configuration: a JSON file, ``GPMLAB_*`` environment overrides
and command-line flags, applied in that order."""
from dataclasses import asdict, dataclass
import json
import os

from .observables import parse_observable, parse_tail

ENV_PREFIX = "GPMLAB_"
MAP_PRESETS = ("lsv", "pm", "doubling")
PROFILES = ("desk", "smoke")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    map: str = "lsv"
    gamma: float = 0.25
    z0: float = None
    cells: int = 2000
    grading: float = None
    observable: str = "indicator:lo=0,hi=0.5"
    tail: str = None
    n: int = 1024
    replicas: int = 1000
    seed: int = 0
    p: float = 1.5
    b: float = 0.0
    order: int = 1
    nmax: int = 128
    threads: int = None
    out: str = "."
    format: str = "csv"
    profile: str = "desk"
    experiment: str = None

    def validate(self):
        if self.map not in MAP_PRESETS:
            raise ConfigError(f"unknown map {self.map!r}; choose from {MAP_PRESETS}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.z0 is not None and not 0.0 < self.z0 < 1.0:
            raise ConfigError("z0 must lie in (0, 1)")
        if self.cells < 10:
            raise ConfigError("cells must be at least 10")
        if self.grading is not None and self.grading <= 0:
            raise ConfigError("grading must be positive")
        for name in ("n", "replicas", "nmax"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not 1.0 < self.p <= 2.0:
            raise ConfigError("p must lie in (1, 2]")
        if self.order not in (1, 2):
            raise ConfigError("order must be 1 or 2")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")
        try:
            parse_observable(self.observable)
            if self.tail is not None:
                parse_tail(self.tail)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    def map_config(self):
        return {"map": self.map, "gamma": self.gamma, "z0": self.z0}

    def to_dict(self):
        return asdict(self)


_CASTS = {"map": str, "gamma": float, "z0": float, "cells": int, "grading": float,
          "observable": str, "tail": str, "n": int, "replicas": int, "seed": int,
          "p": float, "b": float, "order": int, "nmax": int, "threads": int, "out": str,
          "format": str, "profile": str, "experiment": str}


def _cast(name, value):
    if value is None:
        return None
    try:
        return _CASTS[name](value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def load_config(path=None, overrides=None, environ=None):
    """Merge defaults, the JSON file at ``path``, environment variables
    (``GPMLAB_SEED=3``...) and ``overrides`` (flag values; ``None`` is skipped)."""
    data = {}
    if path:
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        unknown = set(data) - set(_CASTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    env = os.environ if environ is None else environ
    for name in _CASTS:
        key = ENV_PREFIX + name.upper()
        if key in env:
            data[name] = env[key]
    for name, value in (overrides or {}).items():
        if value is not None and name in _CASTS:
            data[name] = value
    cfg = ExperimentConfig(**{k: _cast(k, v) for k, v in data.items()})
    return cfg.validate()
