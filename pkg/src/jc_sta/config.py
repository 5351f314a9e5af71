"""Experiment configuration: typed sections, validation with field paths, presets."""
from __future__ import annotations

import copy
import json
import math
import types
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass

EXPERIMENTS = (
    "fock",
    "cat",
    "photon_shift",
    "transfer",
    "pulse_export",
    "robustness_fourier",
    "robustness_noise",
    "thermal_sweep",
)
BASE_EXPERIMENTS = ("transfer", "fock", "cat", "photon_shift")
NOISE_CHANNELS = {
    "sm": ("gamma_sm",),
    "sz": ("gamma_sz",),
    "a": ("gamma_a",),
    "ad": ("gamma_ad",),
    "a+ad": ("gamma_a", "gamma_ad"),
    "all": ("gamma_sm", "gamma_sz", "gamma_a", "gamma_ad"),
}


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path
        self.msg = msg


def _check(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(path, msg)


@dataclass
class SpaceSection:
    fock_dim: int | None = None  # None: sized from the target
    omega: float = 1.0

    def validate(self, p):
        _check(self.fock_dim is None or self.fock_dim >= 2, f"{p}.fock_dim", "must be >= 2")
        _check(self.omega > 0, f"{p}.omega", "must be > 0")


@dataclass
class BaseSection:
    omega_q_start: float = 1.5
    omega_q_end: float = 0.5
    lambda_0: float = 0.0
    lambda_m: float = 0.25
    tau: float = 5.0

    def validate(self, p):
        _check(self.tau > 0, f"{p}.tau", "must be > 0")
        _check(self.lambda_0 >= 0 and self.lambda_m >= 0, f"{p}.lambda_m", "couplings must be >= 0")


@dataclass
class PulseSection:
    t_pi: float = 5.0
    sigma_pi: float = 1.0

    def validate(self, p):
        _check(self.t_pi > 0, f"{p}.t_pi", "must be > 0")
        _check(self.sigma_pi > 0, f"{p}.sigma_pi", "must be > 0")


@dataclass
class NoiseSection:
    gamma_sm: float = 0.0
    gamma_sz: float = 0.0
    gamma_a: float = 0.0
    gamma_ad: float = 0.0
    noisy_pulses: bool = False

    def validate(self, p):
        for k in ("gamma_sm", "gamma_sz", "gamma_a", "gamma_ad"):
            _check(getattr(self, k) >= 0, f"{p}.{k}", "must be >= 0")


@dataclass
class NoiseScanSection:
    channels: list = field(default_factory=lambda: ["a+ad", "sz", "sm"])
    rates: list = field(default_factory=lambda: [1e-5, 1e-4, 1e-3, 1e-2])

    def validate(self, p):
        for i, c in enumerate(self.channels):
            _check(c in NOISE_CHANNELS, f"{p}.channels[{i}]", f"must be one of {sorted(NOISE_CHANNELS)}")
        for i, r in enumerate(self.rates):
            _check(isinstance(r, (int, float)) and r >= 0, f"{p}.rates[{i}]", "must be a number >= 0")


@dataclass
class FourierSection:
    n_modes: int = 8
    omega_f: float | None = None  # None: per-pulse natural fundamental
    modes: list = field(default_factory=lambda: list(range(1, 9)))
    samples: int = 512

    def validate(self, p):
        _check(self.n_modes >= 0, f"{p}.n_modes", "must be >= 0")
        _check(self.omega_f is None or self.omega_f > 0, f"{p}.omega_f", "must be > 0")
        for i, m in enumerate(self.modes):
            _check(isinstance(m, int) and m >= 0, f"{p}.modes[{i}]", "must be an integer >= 0")
        _check(self.samples >= 4, f"{p}.samples", "must be >= 4")


@dataclass
class ThermalSection:
    n_th: list = field(default_factory=lambda: [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 0.1])
    N_list: list = field(default_factory=lambda: [1, 2, 5])

    def validate(self, p):
        for i, x in enumerate(self.n_th):
            _check(isinstance(x, (int, float)) and x > 0, f"{p}.n_th[{i}]", "must be > 0")
        for i, n in enumerate(self.N_list):
            _check(isinstance(n, int) and n >= 1, f"{p}.N_list[{i}]", "must be an integer >= 1")


@dataclass
class EvolutionSection:
    steps_per_unit: int = 2000
    sample_dt: float | None = 0.05

    def validate(self, p):
        _check(self.steps_per_unit >= 100, f"{p}.steps_per_unit", "must be >= 100")
        _check(self.sample_dt is None or self.sample_dt > 0, f"{p}.sample_dt", "must be > 0")


@dataclass
class WignerSection:
    enabled: bool = True
    extent: float = 5.0
    resolution: int = 201

    def validate(self, p):
        _check(self.extent > 0, f"{p}.extent", "must be > 0")
        _check(self.resolution >= 3, f"{p}.resolution", "must be >= 3")


@dataclass
class ExperimentConfig:
    experiment: str = "fock"
    preset: str | None = None
    # targets
    N: int = 1
    n: int = 0
    n_low: int = 0
    n_high: int = 4
    measure_r: str = "e"
    n_ref_rule: str = "compromise"
    alpha: float = 0.75
    beta_th: float | None = None
    repetitions: int = 1
    drive: str = "lcd"
    baselines: list = field(default_factory=list)
    base_experiment: str = "transfer"
    # sections
    space: SpaceSection = field(default_factory=SpaceSection)
    base_protocol: BaseSection = field(default_factory=BaseSection)
    pulse: PulseSection = field(default_factory=PulseSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    noise_scan: NoiseScanSection = field(default_factory=NoiseScanSection)
    fourier: FourierSection = field(default_factory=FourierSection)
    thermal: ThermalSection = field(default_factory=ThermalSection)
    evolution: EvolutionSection = field(default_factory=EvolutionSection)
    wigner: WignerSection = field(default_factory=WignerSection)
    output: str = "out"

    def validate(self, p=""):
        _check(self.experiment in EXPERIMENTS, "experiment", f"must be one of {list(EXPERIMENTS)}")
        _check(self.preset is None or self.preset in PRESETS, "preset", f"must be one of {sorted(PRESETS)}")
        _check(self.N >= 1, "N", "must be >= 1")
        _check(self.n >= 0, "n", "must be >= 0")
        _check(self.n_low >= 0, "n_low", "must be >= 0")
        gap = self.n_high - self.n_low
        _check(gap >= 2 and gap % 2 == 0, "n_high", "n_high - n_low must be even and >= 2")
        _check(self.measure_r in ("e", "g"), "measure_r", "must be 'e' or 'g'")
        _check(self.n_ref_rule in ("compromise", "lower", "upper"), "n_ref_rule", "unknown rule")
        _check(self.beta_th is None or self.beta_th > 0, "beta_th", "must be > 0")
        _check(self.repetitions >= 1, "repetitions", "must be >= 1")
        drives = ("lcd", "cd", "bare", "ti", "fourier")
        _check(self.drive in drives, "drive", f"must be one of {list(drives)}")
        for i, b in enumerate(self.baselines):
            _check(b in drives, f"baselines[{i}]", f"must be one of {list(drives)}")
        _check(self.base_experiment in BASE_EXPERIMENTS, "base_experiment", f"must be one of {list(BASE_EXPERIMENTS)}")
        for f in fields(self):
            v = getattr(self, f.name)
            if is_dataclass(v):
                v.validate(f.name)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


PRESETS: dict[str, dict] = {
    "fig2b": {"experiment": "fock", "N": 5, "base_protocol": {"tau": 5.0}, "baselines": ["bare"]},
    "fig2d": {
        "experiment": "cat",
        "n_low": 0,
        "n_high": 4,
        "base_protocol": {"tau": 30.0},
        "baselines": ["bare", "ti"],
        "evolution": {"sample_dt": None},
    },
    "fig3": {"experiment": "photon_shift", "alpha": 0.75, "base_protocol": {"tau": 8.0}},
    "figS5": {"experiment": "transfer", "n": 0, "base_protocol": {"tau": 8.0}, "baselines": ["bare"]},
    "figS6a": {
        "experiment": "cat",
        "n_low": 0,
        "n_high": 2,
        "base_protocol": {"tau": 30.0},
        "baselines": ["bare", "ti"],
        "evolution": {"sample_dt": None},
    },
    "figS6b": {
        "experiment": "cat",
        "n_low": 0,
        "n_high": 6,
        "base_protocol": {"tau": 40.0},
        "baselines": ["bare", "ti"],
        "evolution": {"sample_dt": None},
    },
}


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _coerce(value, tp, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(path, "must be an object")
        return _build(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "must be true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "must be an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "must be a number")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, "must be a string")
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, "must be a list")
        return list(value)
    return value


def _build(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown key")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(data[f.name], hints[f.name], f"{path}.{f.name}" if path else f.name)
    return cls(**kwargs)


def parse_config(text: str | dict, overrides: list[str] | None = None) -> ExperimentConfig:
    """Parse a JSON document (or dict), apply its preset then ``key.path=value`` overrides, validate."""
    if isinstance(text, str):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON: {exc}") from None
    else:
        doc = copy.deepcopy(text)
    if not isinstance(doc, dict):
        raise ConfigError("", "top level must be an object")
    for ov in overrides or []:
        doc = apply_override(doc, ov)
    preset = doc.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("preset", f"must be one of {sorted(PRESETS)}")
        doc = deep_merge(PRESETS[preset], doc)
    cfg = _build(ExperimentConfig, doc)
    cfg.validate()
    return cfg


def apply_override(doc: dict, text: str) -> dict:
    """``a.b.c=value``; the value is parsed as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError("", f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out = copy.deepcopy(doc)
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(key, "cannot descend into a non-object")
    node[parts[-1]] = value
    return out


def set_path(cfg: ExperimentConfig, path: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with ``path`` replaced, re-validated."""
    doc = cfg.to_dict()
    node = doc
    parts = path.split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(path, "unknown parameter path")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(path, "unknown parameter path")
    node[parts[-1]] = value
    return parse_config(doc)

