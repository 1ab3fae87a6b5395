"""JSON run configuration mirroring :class:`~topoant.pipeline.RunConfig`.

Example::

    {
      "strategy": "bandwidth_specific",
      "L": 25,
      "band": {"f_L": 6.2, "f_H": 6.8, "S_t": -10.2},
      "n_candidates": 200,
      "c_bounds": [25, 35],
      "seed": 0,
      "simulator": {"kind": "mock"}
    }

Sweeps are ``{"f_start": GHz, "f_stop": GHz, "n_points": N}``; the external
simulator takes ``{"kind": "external", "low": {...}, "high": {...}}`` with
adapter records holding ``command``, ``exchange_dir`` and ``timeout_s``.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .errors import ConfigError
from .external import AdapterConfig, ExternalSimulator
from .objectives import BandSpec
from .optimizer import FDPolicy
from .pipeline import RunConfig
from .simulator import MockSimulator, SweepSpec

_NESTED = {"band": BandSpec, "fd": FDPolicy, "broad_sweep": SweepSpec, "narrow_sweep": SweepSpec}
_PAIRS = ("c_range", "c_bounds", "enhance_window")
_REQUIRED = ("strategy", "L", "band")


def _build(cls, rec, where: str):
    if not isinstance(rec, dict):
        raise ConfigError(f"{where}: expected an object", where)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in rec:
        if key not in names:
            raise ConfigError(f"{where}.{key}: unknown field", f"{where}.{key}")
    try:
        return cls(**rec)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}", where) from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}", _guess_field(where, str(exc))) from None


def _guess_field(where: str, msg: str) -> str:
    for token in ("f_0", "f_L", "f_H", "beta1", "beta", "center_term", "n_points", "f_start"):
        if token in msg:
            return f"{where}.{token}"
    return where


def parse_config(rec: dict, *, seed: int | None = None, workers: int | None = None):
    """Validate a config record; returns ``(RunConfig, simulator_record)``."""
    if not isinstance(rec, dict):
        raise ConfigError("config: expected a JSON object", "config")
    rec = dict(rec)
    sim_rec = rec.pop("simulator", {"kind": "mock"})
    for key in _REQUIRED:
        if key not in rec:
            raise ConfigError(f"{key}: required field missing", key)
    kwargs = {}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for key, value in rec.items():
        if key not in names:
            raise ConfigError(f"{key}: unknown field", key)
        if key in _NESTED and value is not None:
            value = _build(_NESTED[key], value, key)
        elif key in _PAIRS and value is not None:
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                raise ConfigError(f"{key}: expected a [low, high] pair", key)
            value = (float(value[0]), float(value[1]))
        kwargs[key] = value
    if seed is not None:
        kwargs["seed"] = int(seed)
    if workers is not None:
        kwargs["parallel_workers"] = int(workers)
    band = kwargs["band"]
    if kwargs["strategy"] == "bandwidth_enhanced" and band.f_0 is None:
        raise ConfigError("band.f_0: required by the bandwidth_enhanced strategy", "band.f_0")
    if not isinstance(kwargs["L"], int) or isinstance(kwargs["L"], bool):
        raise ConfigError("L: expected an integer", "L")
    try:
        cfg = RunConfig(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        field = next((k for k in sorted(names, key=len, reverse=True) if k in msg), "config")
        raise ConfigError(f"{field}: {msg}", field) from None
    _check_simulator(sim_rec)
    return cfg, sim_rec


def _check_simulator(sim_rec) -> None:
    if not isinstance(sim_rec, dict) or sim_rec.get("kind", "mock") not in ("mock", "external"):
        raise ConfigError("simulator.kind: expected 'mock' or 'external'", "simulator.kind")
    if sim_rec.get("kind") == "external":
        if "low" not in sim_rec:
            raise ConfigError("simulator.low: adapter config missing", "simulator.low")
        for key in ("low", "high"):
            if key in sim_rec:
                try:
                    AdapterConfig.from_record(sim_rec[key])
                except (ValueError, TypeError, AttributeError) as exc:
                    raise ConfigError(f"simulator.{key}: {exc}", f"simulator.{key}") from None


def make_simulator(sim_rec: dict, kind: str | None = None):
    kind = kind or sim_rec.get("kind", "mock")
    if kind == "mock":
        return MockSimulator()
    _check_simulator({**sim_rec, "kind": "external"})
    low = AdapterConfig.from_record(sim_rec["low"])
    high = AdapterConfig.from_record(sim_rec["high"]) if "high" in sim_rec else None
    return ExternalSimulator(low, high)


def load_config(path, **overrides):
    path = Path(path)
    try:
        rec = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file", "config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}", "config") from None
    return parse_config(rec, **overrides)
