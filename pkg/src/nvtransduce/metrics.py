"""Observables: mode populations, Uhlmann fidelity, concurrence, heralding rate."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dynamics import AMPLITUDE_MODES, AmplitudeTrace, SimulationTrace
from .hilbert import DensityMatrix, InvariantError, ModeRegister, check_density, number_op, partial_trace_matrix

CLAMP_TOL = 1e-9
LEAKAGE_TOL = 1e-6

_SIGMA_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def clamp_unit(value: float | np.ndarray, what: str = "metric", upper: float = 1.0):
    """Clamp tiny excursions outside [0, upper]; larger ones mean the integration failed."""
    arr = np.asarray(value, dtype=float)
    lo, hi = np.min(arr, initial=0.0), np.max(arr, initial=0.0)
    if lo < -CLAMP_TOL or hi > upper + CLAMP_TOL:
        raise InvariantError(f"{what} out of range [0, {upper}]: min {lo:.3e}, max {hi:.3e}")
    out = np.clip(arr, 0.0, upper)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MetricSeries:
    times: np.ndarray
    values: np.ndarray
    kind: str
    modes: tuple[str, ...]

    @property
    def peak(self) -> float:
        return float(np.max(self.values))

    @property
    def final(self) -> float:
        return float(self.values[-1])


@lru_cache(maxsize=64)
def _number_matrix(reg: ModeRegister, mode: str) -> np.ndarray:
    return number_op(reg, mode).matrix


def population_of(matrix: np.ndarray, reg: ModeRegister, mode: str) -> float:
    n = _number_matrix(reg, mode)
    return float(np.real(np.einsum("ij,ji->", n, matrix)))


def mode_population(trace: SimulationTrace | AmplitudeTrace, mode: str) -> MetricSeries:
    """Mean occupation of ``mode`` at every sampled time."""
    if isinstance(trace, AmplitudeTrace):
        if mode not in AMPLITUDE_MODES:
            raise KeyError(f"unknown mode {mode!r}")
        values = trace.population(mode)
        upper = 1.0
    else:
        reg = trace.register
        reg.index(mode)
        values = np.array([population_of(s.matrix, reg, mode) for s in trace.states])
        upper = reg.mode_dim(mode) - 1
    return MetricSeries(np.asarray(trace.times), clamp_unit(values, f"population of {mode}", upper),
                        "population", (mode,))


def _matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def _factor(m: np.ndarray) -> np.ndarray:
    """Thin L with L L^dag = m, dropping eigenvalues at rounding level.

    Square roots of rounding noise (1e-17 -> 3e-9) would otherwise leak into
    fidelity and concurrence; everything downstream uses singular values,
    whose error is absolute at machine precision.
    """
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    tol = 10 * np.finfo(float).eps * m.shape[0] * max(w[-1], 0.0)
    keep = w > tol
    return v[:, keep] * np.sqrt(w[keep])


def transfer_fidelity(rho, sigma) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Evaluated as the squared nuclear norm of L^dag M for factors
    rho = L L^dag, sigma = M M^dag, which equals Tr|sqrt(rho) sqrt(sigma)|.
    """
    r, s = _matrix(rho), _matrix(sigma)
    if r.shape != s.shape:
        raise ValueError(f"dimension mismatch: {r.shape} vs {s.shape}")
    check_density(r, "fidelity argument")
    check_density(s, "fidelity argument")
    sv = np.linalg.svd(_factor(r).conj().T @ _factor(s), compute_uv=False)
    return clamp_unit(float(np.sum(sv) ** 2), "fidelity")


def fidelity_to(target):
    """Fidelity against a fixed ``target``, validated and factored once.

    The returned callable trusts its argument to be a valid density matrix
    (e.g. a reduction of an integrator sample, which is already checked).
    """
    s = _matrix(target)
    check_density(s, "fidelity target")
    right = _factor(s)

    def fidelity(r: np.ndarray) -> float:
        r = np.asarray(r, dtype=complex)
        if r.shape != s.shape:
            raise ValueError(f"dimension mismatch: {r.shape} vs {s.shape}")
        sv = np.linalg.svd(_factor(r).conj().T @ right, compute_uv=False)
        return clamp_unit(float(np.sum(sv) ** 2), "fidelity")

    return fidelity


def concurrence_two_qubit(m: np.ndarray) -> float:
    """Wootters concurrence of a 4x4 two-qubit density matrix.

    The decreasing lambda_i are the singular values of L^dag (sy x sy) conj(L),
    the same numbers as the square roots of the eigenvalues of
    sqrt(rho) rho~ sqrt(rho).
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (4, 4):
        raise ValueError(f"two-qubit state must be 4x4, got {m.shape}")
    factor = _factor(m)
    lam = np.zeros(4)
    sv = np.linalg.svd(factor.conj().T @ _SIGMA_YY @ factor.conj(), compute_uv=False)
    lam[:len(sv)] = sv
    return clamp_unit(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]), "concurrence")


def qubit_pair_state(matrix: np.ndarray, reg: ModeRegister, modes: Sequence[str]) -> np.ndarray:
    """Reduce to two modes and restrict each to its {0, 1} occupations."""
    if len(modes) != 2 or modes[0] == modes[1]:
        raise ValueError(f"need two distinct modes, got {modes}")
    sub = reg.subregister(modes)
    reduced = partial_trace_matrix(matrix, reg, modes)
    if sub.labels != tuple(modes):
        # reorder to the requested (first, second) order
        d0, d1 = sub.dims
        reduced = reduced.reshape(d0, d1, d0, d1).transpose(1, 0, 3, 2).reshape(d0 * d1, d0 * d1)
        sub_dims = (d1, d0)
    else:
        sub_dims = sub.dims
    if sub_dims == (2, 2):
        return reduced
    keep = [int(np.ravel_multi_index((i, j), sub_dims)) for i in (0, 1) for j in (0, 1)]
    qubit = reduced[np.ix_(keep, keep)]
    leakage = 1.0 - float(np.real(np.trace(qubit)))
    if leakage > LEAKAGE_TOL:
        raise ValueError(f"population {leakage:.3e} outside the qubit subspace of {tuple(modes)}")
    return qubit / np.trace(qubit)


def concurrence(rho: DensityMatrix, modes: Sequence[str] = ("a", "d")) -> float:
    return concurrence_two_qubit(qubit_pair_state(rho.matrix, rho.register, modes))


def concurrence_series(trace: SimulationTrace, modes: Sequence[str] = ("a", "d")) -> MetricSeries:
    values = np.array([concurrence(s, modes) for s in trace.states])
    return MetricSeries(np.asarray(trace.times), values, "concurrence", tuple(modes))


def fidelity_series(trace: SimulationTrace, target: DensityMatrix, modes: Sequence[str]) -> MetricSeries:
    reg = trace.register
    fidelity = fidelity_to(target)
    values = np.array([fidelity(partial_trace_matrix(s.matrix, reg, modes)) for s in trace.states])
    return MetricSeries(np.asarray(trace.times), values, "fidelity", tuple(modes))


def transfer_efficiency(trace: SimulationTrace | AmplitudeTrace, mode: str = "d") -> float:
    """Final occupation of the target mode (meaningful for Fock-state input)."""
    return mode_population(trace, mode).final


def heralded_rate(attempt_rate: float, p_det: float) -> float:
    """Single-click heralded entanglement rate."""
    if not 0.0 <= p_det <= 1.0:
        raise ValueError(f"detection probability must be in [0, 1], got {p_det}")
    if attempt_rate < 0:
        raise ValueError(f"attempt rate must be >= 0, got {attempt_rate}")
    return attempt_rate * p_det
