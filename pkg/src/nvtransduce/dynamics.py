"""Dissipative dynamics of the four-mode transducer.

Three routes of increasing simplification are provided and cross-check each
other: the Lindblad master equation on a density matrix, the linear equations
of motion for single-excitation amplitudes, and the bad-cavity reduction where
both cavities are eliminated and only the two spin modes remain.

Rates follow the convention ``(rate/2) * (2 L rho L^dag - {L^dag L, rho})``, so
a rate is the population decay constant of its mode.  Units: g = 1.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .hilbert import (
    HERMITIAN_TOL,
    DensityMatrix,
    InvariantError,
    ModeRegister,
    Operator,
    annihilation_op,
    check_density,
)

AMPLITUDE_MODES = ("a", "b", "c", "d")

DEFAULT_DT = 1e-3
DEFAULT_TRACE_TOL = 1e-6


@dataclass(frozen=True)
class LindbladChannelSet:
    """Per-mode loss rates (units of g) and microwave thermal occupation."""

    kappa_a: float = 0.0
    kappa_b: float = 0.0
    gamma_c: float = 0.0
    gamma_d: float = 0.0
    n_th: float = 0.0

    def __post_init__(self):
        for name in ("kappa_a", "kappa_b", "gamma_c", "gamma_d", "n_th"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    @classmethod
    def lossless(cls) -> "LindbladChannelSet":
        return cls()

    @property
    def is_lossless(self) -> bool:
        return self.kappa_a == self.kappa_b == self.gamma_c == self.gamma_d == 0.0

    def collapse_ops(self, reg: ModeRegister) -> list[tuple[float, Operator]]:
        """``(rate, L)`` pairs for the modes present in ``reg``.

        Channels whose mode is absent from the register are skipped, so an
        isolated-microwave register only sees the thermal pair on ``b``.
        """
        ops = []
        for label, rate in (("a", self.kappa_a), ("c", self.gamma_c), ("d", self.gamma_d)):
            if rate > 0 and label in reg:
                ops.append((rate, annihilation_op(reg, label)))
        if self.kappa_b > 0 and "b" in reg:
            b = annihilation_op(reg, "b")
            ops.append((self.kappa_b * (self.n_th + 1.0), b))
            if self.n_th > 0:
                ops.append((self.kappa_b * self.n_th, b.dag()))
        return ops

    def amplitude_rates(self) -> np.ndarray:
        return np.array([self.kappa_a, self.kappa_b, self.gamma_c, self.gamma_d])


# -- fixed-step RK4 core -----------------------------------------------------


def step_grid(t_span: tuple[float, float], dt: float, breakpoints: Sequence[float] = ()):
    """Split ``t_span`` at breakpoints; yield ``(start, end, n_steps, h)``.

    Each interval gets an integer number of equal steps no longer than ``dt``
    so that coupling switches land exactly on step boundaries.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not t1 > t0:
        raise ValueError(f"empty time span {t_span}")
    cuts = sorted({t0, t1, *(float(b) for b in breakpoints if t0 < b < t1)})
    for start, end in zip(cuts[:-1], cuts[1:]):
        n = max(1, int(np.ceil((end - start) / dt - 1e-9)))
        yield start, end, n, (end - start) / n


def _rk4(f, y0, t_span, dt, breakpoints, on_step, step_map=None):
    """Classical RK4.  ``f(t, y)`` is never called at an interval's right end
    itself but one ulp inside, so piecewise-constant drives stay left-continuous.

    ``step_map(start, end, h, y)`` may return a callable applying one whole
    RK4 step for a linear, time-independent interval; ``None`` falls back to ``f``.
    """
    y = y0
    step = 0
    for start, end, n, h in step_grid(t_span, dt, breakpoints):
        advance = step_map(start, end, h, y) if step_map is not None else None
        inner_end = np.nextafter(end, start)
        for k in range(n):
            t_next = end if k == n - 1 else start + (k + 1) * h
            if advance is not None:
                y = advance(y)
            else:
                t = start + k * h
                t_mid = t + 0.5 * h
                k1 = f(t, y)
                k2 = f(t_mid, y + (0.5 * h) * k1)
                k3 = f(t_mid, y + (0.5 * h) * k2)
                k4 = f(min(t_next, inner_end), y + h * k3)
                y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            step += 1
            on_step(step, t_next, y, k == n - 1)
    return y


def rk4_polynomial(generator: np.ndarray, h: float) -> np.ndarray:
    """One RK4 step of y' = G y as a matrix: sum_{k<=4} (hG)^k / k!."""
    x = h * np.asarray(generator)
    out = np.eye(x.shape[0], dtype=complex)
    term = out
    for k in range(1, 5):
        term = term @ x / k
        out = out + term
    return out


def reachable_indices(generator: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices the linear flow of ``generator`` can make nonzero from the support of ``y``.

    The set is invariant under ``generator``, so restricting to it is exact:
    every entry outside stays 0.
    """
    mask = np.abs(np.asarray(y).reshape(-1)) > 0
    links = np.abs(generator) > 0
    while True:
        grown = mask | links[:, mask].any(axis=1)
        if np.array_equal(grown, mask):
            return np.flatnonzero(mask)
        mask = grown


class _ConstantStepper:
    """Whole-step RK4 maps for constant generators, cached across intervals.

    ``generator_of(h_matrix)`` builds the linear generator acting on
    ``y.reshape(-1)``.  The RK4 polynomial is formed on the invariant block
    reachable from the current support only.
    """

    def __init__(self, generator_of):
        self.generator_of = generator_of
        self.generators = {}
        self.blocks = {}
        self.maps = {}

    def __call__(self, hmat: np.ndarray, h: float, y: np.ndarray):
        hkey = hmat.tobytes()
        gen = self.generators.get(hkey)
        if gen is None:
            gen = self.generators[hkey] = self.generator_of(hmat)
        support = (np.abs(y.reshape(-1)) > 0).tobytes()
        idx = self.blocks.get((hkey, support))
        if idx is None:
            idx = self.blocks[(hkey, support)] = reachable_indices(gen, y)
        # interval lengths from the cut arithmetic differ in the last bits
        mkey = (hkey, support, round(h, 15))
        sub = self.maps.get(mkey)
        if sub is None:
            sub = self.maps[mkey] = rk4_polynomial(gen[np.ix_(idx, idx)], h)
        size, shape = gen.shape[0], y.shape
        if len(idx) == size:
            return lambda v: (sub @ v.reshape(-1)).reshape(shape)

        def advance(v):
            out = np.zeros(size, dtype=complex)
            out[idx] = sub @ v.reshape(-1)[idx]
            return out.reshape(shape)

        return advance


def _constant_between(hamiltonian, start: float, end: float) -> bool:
    """True when ``hamiltonian`` is known not to vary on [start, end)."""
    if not callable(hamiltonian):
        return True
    probe = getattr(hamiltonian, "constant_on", None)
    return bool(probe(start, end)) if probe is not None else False


def sample_times(t_span: tuple[float, float], every: float | None) -> np.ndarray:
    """Output times after t0: multiples of ``every`` plus the end point.

    They are added to the step grid as breakpoints, so sampled states sit on
    exactly these times whatever ``dt`` is.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if every is None:
        return np.array([t1])
    if not every > 0:
        raise ValueError(f"sample_every must be > 0, got {every}")
    n = int(np.floor((t1 - t0) / every + 1e-9))
    ts = t0 + every * np.arange(1, n + 1)
    ts = ts[ts < t1 - 1e-9 * max(1.0, abs(t1))]
    return np.append(ts, t1)


class _Sampler:
    def __init__(self, t_span, every, breakpoints):
        self.times = sample_times(t_span, every)
        self.every = every
        self.cuts = tuple(breakpoints) + tuple(self.times[:-1])
        self._pending = set(self.times.tolist())

    def due(self, t: float, at_cut: bool) -> bool:
        if self.every is None:
            return True
        if at_cut and t in self._pending:
            self._pending.discard(t)
            return True
        return False


def _as_supplier(hamiltonian) -> Callable[[float], np.ndarray]:
    if callable(hamiltonian):
        def supplier(t):
            h = hamiltonian(t)
            return h.matrix if isinstance(h, Operator) else np.asarray(h, dtype=complex)
        return supplier
    fixed = hamiltonian.matrix if isinstance(hamiltonian, Operator) else np.asarray(hamiltonian, dtype=complex)
    return lambda t: fixed


def _checked(supplier, dim):
    def get(t):
        h = supplier(t)
        if h.shape != (dim, dim):
            raise ValueError(f"Hamiltonian at t={t} has shape {h.shape}, expected {(dim, dim)}")
        err = np.max(np.abs(h - h.conj().T), initial=0.0)
        if err > HERMITIAN_TOL:
            raise ValueError(f"Hamiltonian at t={t} is not Hermitian (max deviation {err:.3e})")
        return h
    return get


# -- master equation ---------------------------------------------------------


@dataclass(frozen=True)
class SimulationTrace:
    """Sampled density matrices.  ``trace_errors[i] = |Tr rho(times[i]) - 1|``."""

    register: ModeRegister = field(repr=False)
    times: np.ndarray
    states: tuple[DensityMatrix, ...] = field(repr=False)
    trace_errors: np.ndarray
    max_trace_error: float
    steps: int

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> DensityMatrix:
        return self.states[-1]


# dense superoperators above this Hilbert dimension cost more than they save
SUPEROP_MAX_DIM = 32


def _jump_parts(reg: ModeRegister, channels: LindbladChannelSet):
    ops = channels.collapse_ops(reg)
    if not ops:
        return None, np.zeros((reg.dim, reg.dim), dtype=complex)
    jumps = np.stack([np.sqrt(rate) * op.matrix for rate, op in ops])
    k_half = 0.5 * np.einsum("kji,kjl->il", jumps.conj(), jumps)
    return jumps, k_half


def lindblad_superoperator(h: np.ndarray, reg: ModeRegister, channels: LindbladChannelSet) -> np.ndarray:
    """Generator acting on row-major ``rho.reshape(-1)``; vec(A rho B) = (A kron B^T) vec(rho)."""
    jumps, k_half = _jump_parts(reg, channels)
    heff = np.asarray(h, dtype=complex) - 1j * k_half
    eye = np.eye(reg.dim)
    sup = -1j * (np.kron(heff, eye) - np.kron(eye, heff.conj()))
    if jumps is not None:
        for j in jumps:
            sup = sup + np.kron(j, j.conj())
    return sup


def lindblad_rhs_factory(reg: ModeRegister, hamiltonian, channels: LindbladChannelSet):
    """Return ``f(t, rho)`` for the master equation on ``reg``."""
    get_h = _checked(_as_supplier(hamiltonian), reg.dim)
    jumps, k_half = _jump_parts(reg, channels)
    jumps_dag = None if jumps is None else np.conj(np.transpose(jumps, (0, 2, 1)))

    cache = {"t": None, "heff": None, "heff_dag": None}

    def rhs(t, rho):
        if cache["t"] != t:
            heff = get_h(t) - 1j * k_half
            cache.update(t=t, heff=heff, heff_dag=heff.conj().T)
        heff, heff_dag = cache["heff"], cache["heff_dag"]
        out = -1j * (heff @ rho - rho @ heff_dag)
        if jumps is not None:
            out += (jumps @ rho @ jumps_dag).sum(axis=0)
        return out

    return rhs


def evolve_master(
    rho0: DensityMatrix,
    hamiltonian,
    channels: LindbladChannelSet,
    t_span: tuple[float, float],
    dt: float = DEFAULT_DT,
    *,
    breakpoints: Sequence[float] = (),
    sample_every: float | None = None,
    trace_tol: float = DEFAULT_TRACE_TOL,
) -> SimulationTrace:
    """Integrate the Lindblad master equation with fixed-step RK4.

    ``hamiltonian`` is an Operator/array or a callable ``t -> Operator``;
    every returned matrix is checked for Hermiticity.  Trace is never
    renormalized; drift beyond ``trace_tol`` aborts the run with the step
    index, as does any sampled state failing the density-matrix checks.
    """
    reg = rho0.register
    rhs = lindblad_rhs_factory(reg, hamiltonian, channels)
    t0, t1 = float(t_span[0]), float(t_span[1])
    sampler = _Sampler((t0, t1), sample_every, breakpoints)
    times, states, errors = [t0], [rho0], [abs(np.trace(rho0.matrix) - 1.0)]
    worst = errors[0]
    steps = 0

    def on_step(step, t, rho, at_cut):
        nonlocal worst, steps
        steps = step
        err = abs(np.trace(rho) - 1.0)
        worst = max(worst, err)
        if err > trace_tol:
            raise InvariantError(f"trace drift {err:.3e} exceeds {trace_tol:.1e} at step {step} (t={t:.6g})")
        if sampler.due(t, at_cut):
            check_density(rho, where=f"step {step}, t={t:.6g}", trace_tol=trace_tol)
            times.append(t)
            states.append(DensityMatrix._trusted(rho, reg))
            errors.append(err)

    dim = reg.dim
    get_h = _checked(_as_supplier(hamiltonian), dim)

    stepper = _ConstantStepper(lambda hm: lindblad_superoperator(hm, reg, channels))

    def step_map(start, end, h, rho):
        if dim > SUPEROP_MAX_DIM or not _constant_between(hamiltonian, start, end):
            return None
        return stepper(get_h(start), h, rho)

    _rk4(rhs, np.array(rho0.matrix), (t0, t1), dt, sampler.cuts, on_step, step_map)
    return SimulationTrace(
        register=reg,
        times=np.array(times),
        states=tuple(states),
        trace_errors=np.array(errors),
        max_trace_error=float(worst),
        steps=steps,
    )


def evolve_pure(
    psi0: np.ndarray,
    hamiltonian,
    t_span: tuple[float, float],
    dt: float = DEFAULT_DT,
    *,
    breakpoints: Sequence[float] = (),
) -> np.ndarray:
    """Schrodinger-picture RK4 on a ket; used for lossless reference states."""
    psi0 = np.asarray(psi0, dtype=complex)
    get_h = _checked(_as_supplier(hamiltonian), psi0.size)

    stepper = _ConstantStepper(lambda hm: -1j * hm)

    def step_map(start, end, h, psi):
        if not _constant_between(hamiltonian, start, end):
            return None
        return stepper(get_h(start), h, psi)

    return _rk4(lambda t, psi: -1j * (get_h(t) @ psi), psi0, t_span, dt, breakpoints,
                lambda *a: None, step_map)


# -- single-excitation amplitudes -------------------------------------------


@dataclass(frozen=True)
class AmplitudeTrace:
    """Amplitudes of the (a, b, c, d) single-excitation states over time."""

    times: np.ndarray
    amplitudes: np.ndarray

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def population(self, mode: str) -> np.ndarray:
        return self.populations[:, AMPLITUDE_MODES.index(mode)]


def _coupling_fn(value) -> Callable[[float], float]:
    if callable(value):
        return value
    v = float(value)
    return lambda t: v


def evolve_amplitudes(
    alpha0: Sequence[complex],
    G1,
    G2,
    Gnv,
    channels: LindbladChannelSet,
    t_span: tuple[float, float],
    dt: float = DEFAULT_DT,
    *,
    breakpoints: Sequence[float] = (),
    sample_every: float | None = None,
) -> AmplitudeTrace:
    """Integrate the linear equations of motion for (a, b, c, d) amplitudes.

    Couplings are numbers or callables of t.  Only valid at zero temperature,
    where the single-excitation sector decouples from thermal pumping.
    """
    if channels.n_th != 0:
        raise ValueError("amplitude equations need n_th = 0")
    alpha0 = np.asarray(alpha0, dtype=complex)
    if alpha0.shape != (4,):
        raise ValueError("alpha0 must be a complex 4-vector over (a, b, c, d)")
    g1, g2, gnv = _coupling_fn(G1), _coupling_fn(G2), _coupling_fn(Gnv)
    half_rates = 0.5 * channels.amplitude_rates()

    def rhs(t, y):
        x1, x2, xnv = g1(t), g2(t), gnv(t)
        a, b, c, d = y
        return np.array([
            -1j * x1 * c,
            -1j * x2 * c - 1j * xnv * d,
            -1j * x1 * a - 1j * x2 * b,
            -1j * xnv * b,
        ]) - half_rates * y

    t0, t1 = float(t_span[0]), float(t_span[1])
    sampler = _Sampler((t0, t1), sample_every, breakpoints)
    times, amps = [t0], [alpha0]

    def on_step(step, t, y, at_cut):
        if sampler.due(t, at_cut):
            times.append(t)
            amps.append(y)

    _rk4(rhs, alpha0, (t0, t1), dt, sampler.cuts, on_step)
    return AmplitudeTrace(np.array(times), np.array(amps))


# -- bad-cavity reduction ----------------------------------------------------


@dataclass(frozen=True)
class ReducedSpinModel:
    """Spin-only dynamics once both cavities are adiabatically eliminated.

    d/dt (c, d) = -[[A_cc, A_cd], [A_dc, A_dd]] (c, d).  ``nu`` holds the two
    eigen-mode ratios d/c (``None`` when A_cd = 0 and the spins decouple).
    """

    A_cc: float
    A_cd: float
    A_dc: float
    A_dd: float
    nu: tuple[float, float] | None
    premise_ratio: float
    premise_holds: bool

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.A_cc, self.A_cd], [self.A_dc, self.A_dd]])

    @property
    def decay_exponents(self) -> tuple[tuple[float, float], ...]:
        """Per eigen-branch ``(c exponent, d exponent)``; equal on each branch."""
        if self.nu is None:
            return ((self.A_cc, self.A_dd),)
        return tuple((self.A_cc + self.A_cd * v, self.A_dd + self.A_dc / v) for v in self.nu)

    @property
    def rates(self) -> tuple[float, float]:
        if self.nu is None:
            return (self.A_cc, self.A_dd)
        return tuple(self.A_cc + self.A_cd * v for v in self.nu)

    def amplitudes(self, t, c0: complex = 1.0, d0: complex = 0.0) -> np.ndarray:
        """Closed-form (c(t), d(t)); shape ``(len(t), 2)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.nu is None:
            return np.stack([c0 * np.exp(-self.A_cc * t), d0 * np.exp(-self.A_dd * t)], axis=1)
        v1, v2 = self.nu
        lam1, lam2 = self.rates
        x1 = (d0 - v2 * c0) / (v1 - v2)
        x2 = c0 - x1
        e1, e2 = np.exp(-lam1 * t), np.exp(-lam2 * t)
        return np.stack([x1 * e1 + x2 * e2, v1 * x1 * e1 + v2 * x2 * e2], axis=1)

    def populations(self, t, c0: complex = 1.0, d0: complex = 0.0) -> np.ndarray:
        return np.abs(self.amplitudes(t, c0, d0)) ** 2


def bad_cavity_reduce(G1: float, G2: float, Gnv: float, channels: LindbladChannelSet,
                      threshold: float = 20.0) -> ReducedSpinModel:
    ka, kb = channels.kappa_a, channels.kappa_b
    if ka <= 0 or kb <= 0:
        raise ValueError("bad-cavity reduction needs kappa_a > 0 and kappa_b > 0")
    a_cc = 2 * G1**2 / ka + 2 * G2**2 / kb + channels.gamma_c / 2
    a_dd = 2 * Gnv**2 / kb + channels.gamma_d / 2
    a_cd = 2 * G2 * Gnv / kb
    if a_cd == 0:
        nu = None
    else:
        root = np.sqrt((a_cc - a_dd) ** 2 + 4 * a_cd**2)
        nu = (((a_dd - a_cc) + root) / (2 * a_cd), ((a_dd - a_cc) - root) / (2 * a_cd))
    strongest = [ka / abs(G1) if G1 else np.inf]
    for g in (G2, Gnv):
        strongest.append(kb / abs(g) if g else np.inf)
    ratio = float(min(strongest))
    return ReducedSpinModel(a_cc, a_cd, a_cd, a_dd, nu, ratio, ratio >= threshold)
