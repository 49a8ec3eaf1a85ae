"""Scenario configuration: schema, YAML loading and the built-in presets.

A scenario file has the sections ``register``, ``couplings``, ``channels``,
``initial_state``, ``protocol``, ``integrator`` and ``output``.  All numbers are
in units of the reference coupling g (times in 1/g).  Example::

    name: fig2b
    register: {a: 2, b: 2, c: 2, d: 2}
    couplings: {G1: 1.0, G2: 0.2, Gnv: 0.1}
    channels: {kappa_a: 0.1, kappa_b: 0.001, gamma_c: 0.04, gamma_d: 0.01, n_th: 0.0}
    initial_state: {occupations: {a: 1}}
    protocol: {name: swap}
    integrator: {dt: 0.001, sample_every: 0.01}
    output: {fidelity_modes: [d], target_mode: d}
"""
from __future__ import annotations

import copy
import hashlib
import json
import warnings
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class ConfigError(ValueError):
    """A scenario file failed to parse or validate."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DerivedCouplings(_Strict):
    g_o: float
    Omega: float
    Delta_o: float
    g_mu: float
    N: int = Field(ge=1)


class CouplingsConfig(_Strict):
    G1: Optional[float] = None
    G2: Optional[float] = None
    Gnv: float = 0.0
    derive: Optional[DerivedCouplings] = None

    @model_validator(mode="after")
    def _one_source(self):
        explicit = self.G1 is not None or self.G2 is not None
        if self.derive is not None and explicit:
            raise ValueError("give either G1/G2 or derive, not both")
        if self.derive is None and (self.G1 is None or self.G2 is None):
            raise ValueError("G1 and G2 are required unless derive is given")
        return self


class ChannelsConfig(_Strict):
    kappa_a: float = Field(0.0, ge=0)
    kappa_b: float = Field(0.0, ge=0)
    gamma_c: float = Field(0.0, ge=0)
    gamma_d: float = Field(0.0, ge=0)
    n_th: float = Field(0.0, ge=0)


Amplitude = Union[float, tuple[float, float]]


class SuperpositionTerm(_Strict):
    occupations: dict[str, int] = Field(default_factory=dict)
    amplitude: Amplitude

    def complex_amplitude(self) -> complex:
        if isinstance(self.amplitude, tuple):
            return complex(*self.amplitude)
        return complex(self.amplitude)


class InitialStateConfig(_Strict):
    occupations: Optional[dict[str, int]] = None
    superposition: Optional[list[SuperpositionTerm]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.occupations is None) == (self.superposition is None):
            raise ValueError("give exactly one of occupations or superposition")
        if self.superposition is not None:
            amps: dict = {}
            for term in self.superposition:
                key = tuple(sorted((m, n) for m, n in term.occupations.items() if n))
                amps[key] = amps.get(key, 0) + term.complex_amplitude()
            norm = float(np.sqrt(sum(abs(a) ** 2 for a in amps.values())))
            if abs(norm - 1.0) > 1e-10:
                raise ValueError(f"superposition amplitudes not normalized (norm {norm:.12g})")
        return self


class PulseConfig(_Strict):
    amplitude: float
    center: float
    width: float = Field(gt=0)


class ProtocolConfig(_Strict):
    name: Literal["swap", "adiabatic", "entanglement", "idle"]
    reverse: bool = False
    alpha: float = Field(float(1 / np.sqrt(2)), ge=-1, le=1)
    pulse: Optional[PulseConfig] = None
    total_T: float = Field(2.0, gt=0)
    swap_to_nv: bool = True
    duration: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _needs(self):
        if self.name == "adiabatic" and self.pulse is None:
            raise ValueError("adiabatic protocol needs a pulse")
        if self.name == "idle" and self.duration is None:
            raise ValueError("idle protocol needs a duration")
        if self.reverse and self.name not in ("swap", "entanglement"):
            raise ValueError(f"reverse is only defined for swap and entanglement, not {self.name}")
        return self


class IntegratorConfig(_Strict):
    dt: float = Field(1e-3, gt=0)
    sample_every: float = Field(0.01, gt=0)
    trace_tol: float = Field(1e-6, gt=0)


class OutputConfig(_Strict):
    path: str = "out"
    fidelity_modes: list[str] = Field(default_factory=lambda: ["d"])
    target_mode: Optional[str] = "d"
    concurrence_modes: list[str] = Field(default_factory=lambda: ["a", "d"])
    g_physical_MHz: Optional[float] = Field(None, gt=0)


# "register" is the natural file key; it only shadows ABCMeta.register, which is unused here
warnings.filterwarnings("ignore", message='Field name "register"', category=UserWarning)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    register: dict[str, int] = Field(default_factory=lambda: {"a": 2, "b": 2, "c": 2, "d": 2})
    couplings: CouplingsConfig = Field(default_factory=lambda: CouplingsConfig(G1=0.0, G2=0.0))
    channels: ChannelsConfig = Field(default_factory=ChannelsConfig)
    initial_state: InitialStateConfig
    protocol: ProtocolConfig
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _modes_declared(self):
        if not self.register:
            raise ValueError("register must declare at least one mode")
        for label, dim in self.register.items():
            if dim < 2:
                raise ValueError(f"register.{label}: dim must be >= 2")
        labels = set(self.register)
        state = self.initial_state
        used = set(state.occupations or {})
        for term in state.superposition or []:
            used |= set(term.occupations)
        used |= set(self.output.fidelity_modes)
        if self.output.target_mode:
            used.add(self.output.target_mode)
        missing = used - labels
        if missing:
            raise ValueError(f"modes {sorted(missing)} referenced but not declared in register")
        if self.protocol.name != "idle":
            absent = [m for m in ("a", "b", "c", "d") if m not in labels]
            if absent:
                raise ValueError(f"protocol {self.protocol.name!r} needs register modes a, b, c, d; missing {absent}")
        return self

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def scenario_hash(self) -> str:
        """Digest of everything that affects the dynamics (not name or output path)."""
        d = self.to_dict()
        d.pop("name", None)
        d.get("output", {}).pop("path", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_validation(err)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {getattr(err, 'problem', err)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def set_key(data: dict, key_path: str, value) -> dict:
    """Copy of ``data`` with the scalar at dotted ``key_path`` replaced."""
    out = copy.deepcopy(data)
    parts = key_path.split(".")
    node = out
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"{key_path}: no such key {part!r}")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"{key_path}: no such key {leaf!r}")
    current = node[leaf]
    if isinstance(current, bool) or not isinstance(current, (int, float)):
        raise ConfigError(f"{key_path}: not a scalar numeric field")
    node[leaf] = value
    return out


# -- presets -------------------------------------------------------------------

REFERENCE_COUPLINGS = {"G1": 1.0, "G2": 0.2, "Gnv": 0.1}
REFERENCE_CHANNELS = {"kappa_a": 0.1, "kappa_b": 0.001, "gamma_c": 0.04, "gamma_d": 0.01, "n_th": 0.0}
ADIABATIC_COUPLINGS = {"G1": 1.0, "G2": 1.5, "Gnv": 0.1}
ADIABATIC_PULSE = {"amplitude": 1.0, "center": 3.0, "width": 15.0}
GAMMA_C_SWEEP = [0.01, 0.04, 0.1, 0.2]
HALF = float(1 / np.sqrt(2))


def _preset(name, couplings, state, protocol, output=None) -> dict:
    return {
        "name": name,
        "register": {"a": 2, "b": 2, "c": 2, "d": 2},
        "couplings": dict(couplings),
        "channels": dict(REFERENCE_CHANNELS),
        "initial_state": state,
        "protocol": protocol,
        "integrator": {"dt": 1e-3, "sample_every": 0.01},
        "output": output or {"fidelity_modes": ["d"], "target_mode": "d"},
    }


_PRESETS = {
    "fig2b": _preset("fig2b", REFERENCE_COUPLINGS, {"occupations": {"a": 1}}, {"name": "swap"}),
    "fig2c": _preset(
        "fig2c", REFERENCE_COUPLINGS,
        {"superposition": [{"occupations": {}, "amplitude": HALF}, {"occupations": {"a": 1}, "amplitude": HALF}]},
        {"name": "swap"},
    ),
    "fig3b": _preset("fig3b", ADIABATIC_COUPLINGS, {"occupations": {"a": 1}},
                     {"name": "adiabatic", "pulse": ADIABATIC_PULSE, "total_T": 2.0, "swap_to_nv": True}),
    "fig4": _preset("fig4", REFERENCE_COUPLINGS, {"occupations": {"d": 1}},
                    {"name": "entanglement", "alpha": HALF},
                    {"fidelity_modes": ["a", "d"], "target_mode": None}),
    "appC-reversed": _preset("appC-reversed", REFERENCE_COUPLINGS, {"occupations": {"a": 1}},
                             {"name": "entanglement", "alpha": HALF, "reverse": True},
                             {"fidelity_modes": ["a", "d"], "target_mode": None}),
}

# presets that are a sweep over one key of a base scenario
_SWEEP_PRESETS = {
    "fig3c": ("fig3b", "channels.gamma_c", GAMMA_C_SWEEP),
    "fig3d": ("fig2b", "channels.gamma_c", GAMMA_C_SWEEP),
}

PRESET_NAMES = ("fig2b", "fig2c", "fig3b", "fig3c", "fig3d", "fig4", "appC-reversed")


def preset_dict(name: str) -> dict:
    if name in _PRESETS:
        return copy.deepcopy(_PRESETS[name])
    if name in _SWEEP_PRESETS:
        base, _, _ = _SWEEP_PRESETS[name]
        d = copy.deepcopy(_PRESETS[base])
        d["name"] = name
        return d
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")


def preset_config(name: str) -> ScenarioConfig:
    return parse_config(preset_dict(name))


def preset_sweep(name: str) -> tuple[str, list[float]] | None:
    """``(key_path, values)`` when the preset is a sweep, else None."""
    if name in _SWEEP_PRESETS:
        _, key, values = _SWEEP_PRESETS[name]
        return key, list(values)
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return None
