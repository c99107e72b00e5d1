"""Experiment configuration: YAML files, validation with field paths, presets."""

import copy
import math
from dataclasses import dataclass

import yaml

from .errors import DomainError
from .invert import AmplitudeModel, GnConfig, PwcConfig
from .sources import PointSource, amplitude_from_dict

__all__ = ["ConfigError", "ExperimentConfig", "PRESETS", "preset", "load_config", "DEFAULTS"]


class ConfigError(DomainError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


DEFAULTS = {
    "name": "custom",
    "domain": {"kind": "disc"},
    "T": 1.0,
    "sigma": 0.03,
    "fine": {"h": 0.02, "Nt": 600},
    "coarse": {"h": 0.04, "Nt": 300},
    "scheme": "richardson",
    "sampling": "average",
    "noise": {"deltas": [0.03, 0.05, 0.1], "seed": 0},
    "solver": "fem",
    "spectral": {"K": 40, "L": 40},
    "init": {"r": 0.5, "theta": 1.8},
    "gn": {},
    "pwc": {},
}

_TRUE_POLAR = {"r": 0.4, "theta": 2.0}
_HANN_SENSORS = [math.pi / 6, 1.1 * math.pi / 2, 5 * math.pi / 6]

PRESETS = {
    "constant": {
        "domain": {"kind": "disc"},
        "source": {**_TRUE_POLAR, "amplitude": {"kind": "constant", "value": 2.0}},
        "sensors": [1.7, 2.0],
        "model": {"kind": "constant"},
        "noise": {"deltas": [0.03, 0.05, 0.1], "seed": 0},
    },
    "known-disc": {
        "domain": {"kind": "disc"},
        "source": {**_TRUE_POLAR, "amplitude": {"kind": "sine", "offset": 1.0, "scale": 1.0, "freq": 1.0}},
        "sensors": [1.7, 2.0],
        "model": {"kind": "known"},
        "noise": {"deltas": [0.03, 0.05, 0.1], "seed": 0},
    },
    "known-ellipse": {
        "domain": {"kind": "ellipse", "a": 1.2, "b": 0.8},
        "source": {**_TRUE_POLAR, "amplitude": {"kind": "sine", "offset": 1.0, "scale": 1.0, "freq": 1.0}},
        "sensors": [1.7, 2.0],
        "model": {"kind": "known"},
        "noise": {"deltas": [0.03, 0.05, 0.1], "seed": 0},
    },
    "two-level": {
        "domain": {"kind": "disc"},
        "source": {**_TRUE_POLAR, "amplitude": {"kind": "pwc", "breaks": [0.4], "values": [2.0, 1.0]}},
        "sensors": [1.7, 2.0],
        "model": {"kind": "pwc"},
        "init": {"r": 0.5, "theta": 1.8, "T1": 0.5},
        "noise": {"deltas": [0.01, 0.03, 0.05], "seed": 0},
    },
    "hann": {
        "domain": {"kind": "ellipse", "a": 1.2, "b": 0.8},
        "source": {**_TRUE_POLAR, "amplitude": {"kind": "hann", "peak": 2.0, "width": 0.5}},
        "sensors": _HANN_SENSORS,
        "model": {"kind": "hat", "K": 20, "ridge": 0.0},
        "noise": {"deltas": [0.01, 0.03, 0.05], "seed": 0},
    },
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(d, key, path, lo=None, hi=None, integer=False):
    if key not in d:
        raise ConfigError(f"{path}.{key}" if path else key, "missing")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}" if path else key, "expected an integer")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"{path}.{key}" if path else key, f"value {v} outside [{lo}, {hi}]")
    return int(v) if integer else float(v)


def _amplitude(d, path):
    try:
        return amplitude_from_dict(dict(d))
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(path, f"invalid amplitude ({exc})") from None


@dataclass
class ExperimentConfig:
    """Resolved experiment settings; ``raw`` is echoed into every output."""

    raw: dict

    @classmethod
    def from_dict(cls, d):
        cfg = _merge(DEFAULTS, d)
        cls._validate(cfg)
        return cls(cfg)

    @staticmethod
    def _validate(c):
        dom = c["domain"]
        if not isinstance(dom, dict) or dom.get("kind") not in ("disc", "ellipse", "mesh"):
            raise ConfigError("domain.kind", "expected disc, ellipse or mesh")
        if dom["kind"] == "ellipse":
            _num(dom, "a", "domain", lo=1e-6)
            _num(dom, "b", "domain", lo=1e-6)
        if dom["kind"] == "mesh":
            for k in ("fine", "coarse"):
                if not isinstance(dom.get(k), str):
                    raise ConfigError(f"domain.{k}", "expected a mesh file path")
        _num(c, "T", "", lo=1e-9)
        _num(c, "sigma", "", lo=1e-9)
        for lvl in ("fine", "coarse"):
            if not isinstance(c.get(lvl), dict):
                raise ConfigError(lvl, "expected a mapping with h and Nt")
            _num(c[lvl], "h", lvl, lo=1e-4, hi=0.5)
            _num(c[lvl], "Nt", lvl, lo=1, integer=True)
        if c["fine"]["Nt"] % c["coarse"]["Nt"] != 0:
            raise ConfigError("coarse.Nt", "must divide fine.Nt (nested time grids)")
        if c["scheme"] not in ("be", "richardson"):
            raise ConfigError("scheme", "expected be or richardson")
        if c["sampling"] not in ("average", "right"):
            raise ConfigError("sampling", "expected average or right")
        if c["solver"] not in ("fem", "spectral", "both"):
            raise ConfigError("solver", "expected fem, spectral or both")
        if c["solver"] != "fem" and dom["kind"] != "disc":
            raise ConfigError("solver", "spectral solver supports the unit disc (ball) only")
        if "source" not in c or not isinstance(c["source"], dict):
            raise ConfigError("source", "missing")
        src = c["source"]
        if not (("r" in src and "theta" in src) or ("x1" in src and "x2" in src)):
            raise ConfigError("source", "give r/theta or x1/x2")
        _amplitude(src.get("amplitude", {"kind": "constant", "value": 1.0}), "source.amplitude")
        sens = c.get("sensors")
        if not isinstance(sens, list) or not sens or not all(isinstance(v, (int, float)) for v in sens):
            raise ConfigError("sensors", "expected a non-empty list of angles")
        noise = c["noise"]
        if not isinstance(noise.get("deltas"), list) or any(not isinstance(v, (int, float)) or v < 0 for v in noise["deltas"]):
            raise ConfigError("noise.deltas", "expected a list of non-negative numbers")
        _num(noise, "seed", "noise", lo=0, integer=True)
        model = c.get("model", {"kind": "constant"})
        try:
            AmplitudeModel(model.get("kind"), None if model.get("kind") != "known" else "placeholder", int(model.get("K", 20)))
        except DomainError as exc:
            raise ConfigError("model", str(exc)) from None
        try:
            GnConfig(**c["gn"])
        except (TypeError, DomainError) as exc:
            raise ConfigError("gn", str(exc)) from None
        try:
            PwcConfig(**c["pwc"])
        except (TypeError, DomainError) as exc:
            raise ConfigError("pwc", str(exc)) from None
        init = c["init"]
        if not (("r" in init and "theta" in init) or ("x1" in init and "x2" in init)):
            raise ConfigError("init", "give r/theta or x1/x2")
        if model.get("kind") == "pwc":
            _num(init, "T1", "init", lo=0.0, hi=c["T"])

    # -- accessors ---------------------------------------------------------------
    def __getitem__(self, k):
        return self.raw[k]

    @property
    def name(self):
        return self.raw["name"]

    @property
    def axes(self):
        d = self.raw["domain"]
        return (float(d.get("a", 1.0)), float(d.get("b", 1.0))) if d["kind"] == "ellipse" else (1.0, 1.0)

    def _point(self, d):
        a, b = self.axes
        if "x1" in d:
            return (float(d["x1"]), float(d["x2"]))
        r, th = float(d["r"]), float(d["theta"])
        return (a * r * math.cos(th), b * r * math.sin(th))

    @property
    def amplitude(self):
        return _amplitude(self.raw["source"].get("amplitude", {"kind": "constant", "value": 1.0}), "source.amplitude")

    @property
    def source(self):
        return PointSource(self._point(self.raw["source"]), self.amplitude)

    @property
    def model(self):
        m = self.raw.get("model", {"kind": "constant"})
        known = self.amplitude if m["kind"] == "known" else None
        return AmplitudeModel(m["kind"], known, int(m.get("K", 20)), float(self.raw["T"]), float(m.get("ridge", 0.0)))

    @property
    def init(self):
        p = list(self._point(self.raw["init"]))
        if self.model.kind == "pwc":
            p.append(float(self.raw["init"]["T1"]))
        return tuple(p)

    @property
    def gn(self):
        return GnConfig(**self.raw["gn"])

    @property
    def pwc(self):
        return PwcConfig(**self.raw["pwc"])

    def with_overrides(self, **kw):
        return ExperimentConfig.from_dict(_merge(self.raw, kw))


def preset(name):
    if name not in PRESETS:
        raise ConfigError("name", f"unknown experiment {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig.from_dict({**PRESETS[name], "name": name})


def load_config(path):
    """Read a YAML config; a ``preset`` key starts from a named experiment."""
    with open(path, encoding="utf-8") as fh:
        try:
            d = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"YAML error: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    base = PRESETS.get(d.get("preset"), {}) if "preset" in d else {}
    if "preset" in d and d["preset"] not in PRESETS:
        raise ConfigError("preset", f"unknown experiment {d['preset']!r}")
    merged = _merge({**base, "name": d.get("preset", "custom")}, {k: v for k, v in d.items() if k != "preset"})
    return ExperimentConfig.from_dict(merged)
