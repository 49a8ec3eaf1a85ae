"""Hamiltonians of the optical / REDC / microwave / NV transducer.

Canonical mode labels: ``a`` optical cavity, ``b`` microwave resonator,
``c`` collective REDC spin wave, ``d`` collective NV spin wave.
"""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .hilbert import ModeRegister, Operator, annihilation_op, embed, make_register

CANONICAL_MODES = ("a", "b", "c", "d")
MAX_FULL_SPINS = 3


@dataclass(frozen=True)
class EffectiveCouplings:
    """Collective couplings in units of g.  G1 keeps the sign of its derivation."""

    G1: float
    G2: float
    Gnv: float = 0.0
    g_o: float | None = None
    Omega: float | None = None
    Delta_o: float | None = None
    g_mu: float | None = None
    N: int | None = None
    N0: int | None = None


def build_effective_couplings(g_o: float, Omega: float, Delta_o: float, g_mu: float, N: int,
                              Gnv: float = 0.0, N0: int | None = None) -> EffectiveCouplings:
    """Couplings after eliminating the REDC excited level and HP-mapping the ensemble."""
    if Delta_o == 0:
        raise ValueError("optical detuning Delta_o must be nonzero")
    if N < 1:
        raise ValueError(f"need at least one spin, got N={N}")
    root_n = np.sqrt(N)
    return EffectiveCouplings(
        G1=-g_o * Omega * root_n / Delta_o,
        G2=g_mu * root_n,
        Gnv=Gnv,
        g_o=g_o, Omega=Omega, Delta_o=Delta_o, g_mu=g_mu, N=N, N0=N0,
    )


@dataclass(frozen=True)
class HybridTerms:
    """Precomputed pieces of the four-mode Hamiltonian on one register.

    ``couplings[k]`` is the Hermitian beam-splitter term multiplying G1, G2 or
    Gnv; ``numbers[label]`` the number operator of each mode.
    """

    register: ModeRegister
    couplings: dict
    numbers: dict

    def matrix(self, G1: float, G2: float, Gnv: float,
               detunings: Mapping[str, float] | None = None) -> np.ndarray:
        h = G1 * self.couplings["G1"] + G2 * self.couplings["G2"] + Gnv * self.couplings["Gnv"]
        if detunings:
            for label, delta in detunings.items():
                if delta:
                    h = h + delta * self.numbers[label]
        return h


@lru_cache(maxsize=32)
def hybrid_terms(reg: ModeRegister) -> HybridTerms:
    missing = [m for m in CANONICAL_MODES if m not in reg]
    if missing:
        raise ValueError(f"register lacks canonical mode(s) {missing}")
    a, b, c, d = (annihilation_op(reg, m) for m in CANONICAL_MODES)

    def beam_splitter(x: Operator, y: Operator) -> np.ndarray:
        term = (x.dag() @ y).matrix
        out = term + term.conj().T
        out.setflags(write=False)
        return out

    couplings = {"G1": beam_splitter(a, c), "G2": beam_splitter(b, c), "Gnv": beam_splitter(b, d)}
    numbers = {}
    for label in reg.labels:
        op = annihilation_op(reg, label)
        n = (op.dag() @ op).matrix
        numbers[label] = n
    return HybridTerms(reg, couplings, numbers)


def build_hybrid_hamiltonian(reg: ModeRegister, couplings: EffectiveCouplings,
                             detunings: Mapping[str, float] | None = None) -> Operator:
    """G1 a^dag c + G2 b^dag c + Gnv b^dag d + h.c. + sum_i delta_i n_i."""
    terms = hybrid_terms(reg)
    if detunings:
        unknown = set(detunings) - set(reg.labels)
        if unknown:
            raise KeyError(f"detuning for unknown mode(s) {sorted(unknown)}")
    return Operator(terms.matrix(couplings.G1, couplings.G2, couplings.Gnv, detunings), reg)


def single_excitation_block(h: Operator | np.ndarray, reg: ModeRegister,
                            modes: Sequence[str] = CANONICAL_MODES) -> np.ndarray:
    """Restrict an operator to the states with one quantum in one of ``modes``."""
    m = h.matrix if isinstance(h, Operator) else np.asarray(h)
    idx = []
    for label in modes:
        occ = [0] * len(reg.modes)
        occ[reg.index(label)] = 1
        idx.append(int(np.ravel_multi_index(tuple(occ), reg.dims)))
    return m[np.ix_(idx, idx)]


# -- full three-level REDC model --------------------------------------------


@dataclass(frozen=True)
class FullRedcParams:
    """Per-spin parameters of the three-level REDC model (levels |1>,|2>,|3>).

    Each field is a tuple with one entry per spin.
    """

    Delta_o: tuple[float, ...]
    Delta_mu: tuple[float, ...]
    Omega: tuple[float, ...]
    g_o: tuple[float, ...]
    g_mu: tuple[float, ...]

    def __post_init__(self):
        lengths = {len(getattr(self, f)) for f in ("Delta_o", "Delta_mu", "Omega", "g_o", "g_mu")}
        if len(lengths) != 1:
            raise ValueError("all per-spin parameter tuples must have the same length")
        n = lengths.pop()
        if not 1 <= n <= MAX_FULL_SPINS:
            raise ValueError(f"full REDC model supports 1..{MAX_FULL_SPINS} spins, got {n}")

    @property
    def n_spins(self) -> int:
        return len(self.Delta_o)

    @classmethod
    def uniform(cls, n: int, Delta_o: float, Delta_mu: float, Omega: float, g_o: float, g_mu: float):
        if not 1 <= n <= MAX_FULL_SPINS:
            raise ValueError(f"full REDC model supports 1..{MAX_FULL_SPINS} spins, got {n}")
        rep = lambda x: (float(x),) * n  # noqa: E731
        return cls(rep(Delta_o), rep(Delta_mu), rep(Omega), rep(g_o), rep(g_mu))


def full_redc_register(n_spins: int, cavity_dim: int = 2) -> ModeRegister:
    if not 1 <= n_spins <= MAX_FULL_SPINS:
        raise ValueError(f"full REDC model supports 1..{MAX_FULL_SPINS} spins, got {n_spins}")
    specs = [("a", cavity_dim), ("b", cavity_dim)] + [(f"s{k + 1}", 3) for k in range(n_spins)]
    return make_register(specs)


def _ket_bra(i: int, j: int) -> np.ndarray:
    m = np.zeros((3, 3), dtype=complex)
    m[i - 1, j - 1] = 1.0
    return m


def build_full_redc_hamiltonian(params: FullRedcParams, reg: ModeRegister | None = None) -> Operator:
    """Spins-cavities Hamiltonian before elimination of level |3>."""
    if reg is None:
        reg = full_redc_register(params.n_spins)
    spins = [label for label in reg.labels if label.startswith("s")]
    if len(spins) != params.n_spins:
        raise ValueError(f"register has {len(spins)} spins, params describe {params.n_spins}")
    a = annihilation_op(reg, "a")
    b = annihilation_op(reg, "b")
    h = Operator(np.zeros((reg.dim, reg.dim)), reg)
    for k, label in enumerate(spins):
        p33 = embed(reg, label, _ket_bra(3, 3))
        p22 = embed(reg, label, _ket_bra(2, 2))
        s32 = embed(reg, label, _ket_bra(3, 2))
        s21 = embed(reg, label, _ket_bra(2, 1))
        s31 = embed(reg, label, _ket_bra(3, 1))
        h = h + params.Delta_o[k] * p33 + params.Delta_mu[k] * p22
        drive = params.Omega[k] * s32
        cavity = params.g_mu[k] * (b @ s21) + params.g_o[k] * (a @ s31)
        h = h + drive + drive.dag() + cavity + cavity.dag()
    return h


def energy_shift_compensation(g_o: float, Omega: float, Delta_o: float, n_spins: int = 1) -> float:
    """Microwave detuning that cancels the second-order light shifts.

    Puts |1 photon, all spins in |1>> and |0 photons, one spin in |2>> on
    resonance after level |3> is eliminated.  The photon is shifted by every
    spin, hence the factor ``n_spins``.
    """
    return (Omega**2 - n_spins * g_o**2) / Delta_o


# -- dark / bright hybrid modes ---------------------------------------------


@dataclass(frozen=True)
class DarkBrightDecomposition:
    """Hybrid optical-microwave eigenmodes; vectors are over (a, b) or (a, b, c)."""

    theta: float
    bright: np.ndarray
    dark: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    g_tot: float
    omega_d: float
    omega_plus: float
    omega_minus: float


def dark_bright_transform(G1: float, G2: float, omega_c: float = 0.0) -> DarkBrightDecomposition:
    if G1 == 0 and G2 == 0:
        raise ValueError("dark/bright modes undefined when both couplings vanish")
    theta = float(np.arctan2(G1, G2))
    s, c = np.sin(theta), np.cos(theta)
    bright = np.array([s, c])
    dark = np.array([-c, s])
    plus = np.array([s, c, 1.0]) / np.sqrt(2)
    minus = np.array([s, c, -1.0]) / np.sqrt(2)
    g_tot = float(np.hypot(G1, G2))
    return DarkBrightDecomposition(theta, bright, dark, plus, minus, g_tot,
                                   omega_c, omega_c + g_tot, omega_c - g_tot)


# -- virtual-photon spin-spin coupling --------------------------------------


@dataclass(frozen=True)
class VirtualCouplingModel:
    """REDC-NV coupling through a far-detuned resonator.

    Two-state basis is (REDC excited, NV excited) = (|1,0>, |0,1>).
    """

    delta_mw: float
    G2: float
    Gnv: float
    h_eff: np.ndarray
    g_tot: float
    E_D: float
    E_B: float
    dark: np.ndarray
    bright: np.ndarray
    leakage: float


def virtual_coupling_reduce(G2: float, Gnv: float, delta_mw: float) -> VirtualCouplingModel:
    if delta_mw == 0:
        raise ValueError("resonator detuning delta_mw must be nonzero")
    g_tot = float(np.hypot(G2, Gnv))
    h_eff = -np.array([[G2**2, Gnv * G2], [Gnv * G2, Gnv**2]]) / delta_mw
    if g_tot > 0:
        dark = np.array([-Gnv, G2]) / g_tot
        bright = np.array([G2, Gnv]) / g_tot
    else:
        dark, bright = np.array([0.0, 1.0]), np.array([1.0, 0.0])
    return VirtualCouplingModel(delta_mw, G2, Gnv, h_eff, g_tot, 0.0, -g_tot**2 / delta_mw,
                                dark, bright, abs(g_tot / delta_mw))


def virtual_subsystem_matrix(G2: float, Gnv: float, delta_mw: float) -> np.ndarray:
    """Exact one-excitation REDC / microwave / NV matrix."""
    return np.array([[0.0, G2, 0.0], [G2, delta_mw, Gnv], [0.0, Gnv, 0.0]])
