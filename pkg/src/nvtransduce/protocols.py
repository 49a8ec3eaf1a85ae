"""Control sequences for state transfer and entanglement generation.

A protocol is a CouplingSchedule: consecutive segments, each holding the three
collective couplings (constants or Gaussian pulses) and optional per-mode
detunings.  Switching between segments is instantaneous.  Pulse times are
measured on the schedule's global clock starting at t = 0.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .models import CANONICAL_MODES, EffectiveCouplings, hybrid_terms
from .hilbert import ModeRegister


@dataclass(frozen=True)
class GaussianPulse:
    """``amplitude * exp(-(t - center)**2 / width)``."""

    amplitude: float
    center: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"pulse width must be > 0, got {self.width}")
        if not np.isfinite(self.amplitude):
            raise ValueError("pulse amplitude must be finite")

    def __call__(self, t: float) -> float:
        return self.amplitude * np.exp(-((t - self.center) ** 2) / self.width)


def _value(x, t: float) -> float:
    return x(t) if isinstance(x, GaussianPulse) else x


@dataclass(frozen=True)
class Segment:
    duration: float
    G1: float | GaussianPulse = 0.0
    G2: float | GaussianPulse = 0.0
    Gnv: float | GaussianPulse = 0.0
    detunings: Mapping[str, float] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"segment duration must be > 0, got {self.duration}")
        for name in ("G1", "G2", "Gnv"):
            v = getattr(self, name)
            if not isinstance(v, GaussianPulse) and not np.isfinite(v):
                raise ValueError(f"coupling {name} must be finite")
        unknown = set(self.detunings) - set(CANONICAL_MODES)
        if unknown:
            raise ValueError(f"detunings for unknown mode(s) {sorted(unknown)}")
        object.__setattr__(self, "detunings", MappingProxyType(dict(self.detunings)))

    @property
    def pulsed(self) -> bool:
        return any(isinstance(getattr(self, n), GaussianPulse) for n in ("G1", "G2", "Gnv"))

    def couplings_at(self, t: float) -> tuple[float, float, float]:
        return _value(self.G1, t), _value(self.G2, t), _value(self.Gnv, t)


@dataclass(frozen=True)
class CouplingSchedule:
    segments: tuple[Segment, ...]
    name: str = ""

    def __post_init__(self):
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def boundaries(self) -> tuple[float, ...]:
        """Segment start times plus the final end time."""
        return tuple(np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])]))

    def segment_at(self, t: float) -> Segment:
        if t < 0 or t > self.duration:
            raise ValueError(f"t={t} outside schedule [0, {self.duration}]")
        ends = self.boundaries[1:]
        for seg, end in zip(self.segments, ends):
            if t < end:
                return seg
        return self.segments[-1]

    def couplings_at(self, t: float) -> tuple[float, float, float]:
        return self.segment_at(t).couplings_at(t)

    def hamiltonian(self, reg: ModeRegister) -> "ScheduleHamiltonian":
        """Callable ``t -> H(t)`` matrix on the four-mode register."""
        return ScheduleHamiltonian(self, hybrid_terms(reg))

    def reversed(self) -> "CouplingSchedule":
        if any(s.pulsed for s in self.segments):
            raise ValueError("only piecewise-constant schedules can be reversed")
        return CouplingSchedule(tuple(reversed(self.segments)), name=f"{self.name}-reversed")

    def then(self, other: "CouplingSchedule") -> "CouplingSchedule":
        if any(s.pulsed for s in other.segments):
            raise ValueError("appended schedule must be piecewise constant")
        return CouplingSchedule(self.segments + other.segments, name=self.name)


class ScheduleHamiltonian:
    """``H(t)`` for a schedule; also reports intervals where it is constant."""

    def __init__(self, schedule: CouplingSchedule, terms):
        self.schedule = schedule
        self.terms = terms

    def __call__(self, t: float) -> np.ndarray:
        seg = self.schedule.segment_at(t)
        g1, g2, gnv = seg.couplings_at(t)
        return self.terms.matrix(g1, g2, gnv, seg.detunings)

    def constant_on(self, start: float, end: float) -> bool:
        bounds = self.schedule.boundaries
        for seg, lo, hi in zip(self.schedule.segments, bounds[:-1], bounds[1:]):
            if lo <= start < hi:
                return not seg.pulsed and end <= hi + 1e-12
        return False


def _pi_half(g: float) -> float:
    return np.pi / (2 * abs(g))


def swap_protocol_schedule(c: EffectiveCouplings) -> CouplingSchedule:
    """Three consecutive pi pulses: optical -> REDC -> microwave -> NV."""
    for name in ("G1", "G2", "Gnv"):
        if getattr(c, name) == 0:
            raise ValueError(f"SWAP protocol needs nonzero {name}")
    return CouplingSchedule((
        Segment(_pi_half(c.G1), G1=c.G1, label="a-c"),
        Segment(_pi_half(c.G2), G2=c.G2, label="c-b"),
        Segment(_pi_half(c.Gnv), Gnv=c.Gnv, label="b-d"),
    ), name="swap")


DEFAULT_ADIABATIC_T = 2.0


def adiabatic_schedule(pulse: GaussianPulse, G2: float, total_T: float = DEFAULT_ADIABATIC_T,
                       Gnv: float | None = None) -> CouplingSchedule:
    """Dark-mode passage with a pulsed G1 and constant G2, NV detuned.

    With ``Gnv`` given, a final pi pulse maps the microwave mode onto the NV.
    """
    if not G2 > 0:
        raise ValueError(f"G2 must be > 0, got {G2}")
    if not total_T > 0:
        raise ValueError(f"total_T must be > 0, got {total_T}")
    segments = [Segment(total_T, G1=pulse, G2=G2, label="adiabatic")]
    if Gnv is not None:
        if Gnv == 0:
            raise ValueError("Gnv must be nonzero for the final NV swap")
        segments.append(Segment(_pi_half(Gnv), Gnv=Gnv, label="b-d"))
    return CouplingSchedule(tuple(segments), name="adiabatic")


def entanglement_time(g: float, alpha: float) -> float:
    """Interaction time with sin^2(g t) = |alpha|^2."""
    if abs(alpha) > 1:
        raise ValueError(f"|alpha| must be <= 1, got {alpha}")
    return float(np.arcsin(abs(alpha)) / abs(g))


def entanglement_schedule(c: EffectiveCouplings, alpha: float = 1 / np.sqrt(2),
                          reverse: bool = False) -> CouplingSchedule:
    """Partial swap that splits one excitation, then two full swaps.

    Forward: the NV excitation is split with the microwave mode, and the
    microwave share is carried to the optical cavity via the REDC.  Reverse:
    an optical photon is split with the REDC and the REDC share is carried to
    the NV.  A zero-length split (alpha = 0) is dropped.
    """
    if abs(alpha) > 1:
        raise ValueError(f"|alpha| must be <= 1, got {alpha}")
    for name in ("G1", "G2", "Gnv"):
        if getattr(c, name) == 0:
            raise ValueError(f"entanglement protocol needs nonzero {name}")
    if reverse:
        split = Segment(entanglement_time(c.G1, alpha), G1=c.G1, label="a-c split") if alpha else None
        rest = (Segment(_pi_half(c.G2), G2=c.G2, label="c-b"), Segment(_pi_half(c.Gnv), Gnv=c.Gnv, label="b-d"))
    else:
        split = Segment(entanglement_time(c.Gnv, alpha), Gnv=c.Gnv, label="d-b split") if alpha else None
        rest = (Segment(_pi_half(c.G2), G2=c.G2, label="b-c"), Segment(_pi_half(c.G1), G1=c.G1, label="c-a"))
    segments = ((split,) if split else ()) + rest
    return CouplingSchedule(segments, name="entanglement-reversed" if reverse else "entanglement")


def gate_unitary(g: float, t: float, convention: str = "iswap") -> np.ndarray:
    """Two-mode beam-splitter gate on |00>, |01>, |10>, |11>.

    ``"iswap"`` gives +i sin(gt) off-diagonals.  ``"evolution"`` is
    exp(-i g t (o_i^dag o_j + h.c.)) as the simulator integrates it, which
    carries -i sin(gt); the two are complex conjugates.
    """
    c, s = np.cos(g * t), np.sin(g * t)
    if convention == "iswap":
        phase = 1j
    elif convention == "evolution":
        phase = -1j
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return np.array([
        [1, 0, 0, 0],
        [0, c, phase * s, 0],
        [0, phase * s, c, 0],
        [0, 0, 0, 1],
    ], dtype=complex)


def single_excitation_gate(modes: tuple[str, str], g: float, t: float,
                           convention: str = "evolution") -> np.ndarray:
    """The gate's one-excitation block acting on two of the (a, b, c, d) amplitudes."""
    i, j = (CANONICAL_MODES.index(m) for m in modes)
    block = gate_unitary(g, t, convention)[1:3, 1:3]
    u = np.eye(4, dtype=complex)
    u[np.ix_([i, j], [i, j])] = block
    return u


_SEGMENT_MODES = {"G1": ("a", "c"), "G2": ("b", "c"), "Gnv": ("b", "d")}


def schedule_gate_product(schedule: CouplingSchedule, convention: str = "evolution") -> np.ndarray:
    """Compose single-excitation gates for a schedule with one active coupling per segment."""
    u = np.eye(4, dtype=complex)
    for seg in schedule.segments:
        if seg.pulsed or any(seg.detunings.values()):
            raise ValueError("gate product needs constant, resonant segments")
        active = [(n, getattr(seg, n)) for n in ("G1", "G2", "Gnv") if getattr(seg, n) != 0]
        if len(active) != 1:
            raise ValueError(f"segment {seg.label!r} must have exactly one active coupling")
        name, g = active[0]
        u = single_excitation_gate(_SEGMENT_MODES[name], g, seg.duration, convention) @ u
    return u
