"""Composite Hilbert spaces of truncated bosonic modes.

Tensor ordering follows register declaration order: the first declared mode is
the most significant (leftmost) Kronecker factor.  For the transducer register
``[a, b, c, d]`` the basis index of ``|n_a n_b n_c n_d>`` is therefore
``((n_a*D_b + n_b)*D_c + n_c)*D_d + n_d``.
"""
from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import reduce
from math import prod

import numpy as np

DEFAULT_MAX_DIM = 4096

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = -1e-8


class InvariantError(RuntimeError):
    """A numerical invariant (trace, Hermiticity, positivity) was violated."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModeRegister:
    """Ordered set of truncated modes; ``modes`` holds ``(label, dim)`` pairs."""

    modes: tuple[tuple[str, int], ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.modes)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown mode label {label!r}; register has {self.labels}") from None

    def mode_dim(self, label: str) -> int:
        return self.modes[self.index(label)][1]

    def __contains__(self, label: object) -> bool:
        return label in self.labels

    def subregister(self, labels: Iterable[str]) -> "ModeRegister":
        wanted = set(labels)
        for label in wanted:
            self.index(label)
        return ModeRegister(tuple(m for m in self.modes if m[0] in wanted))


def make_register(specs: Iterable[tuple[str, int]], max_dim: int = DEFAULT_MAX_DIM) -> ModeRegister:
    modes = tuple((str(label), int(dim)) for label, dim in specs)
    if not modes:
        raise ValueError("register needs at least one mode")
    seen = set()
    for label, dim in modes:
        if label in seen:
            raise ValueError(f"duplicate mode label {label!r}")
        seen.add(label)
        if dim < 2:
            raise ValueError(f"mode {label!r} has dim {dim}; need dim >= 2")
    total = prod(dim for _, dim in modes)
    if total > max_dim:
        raise ValueError(f"total dimension {total} exceeds cap {max_dim}")
    return ModeRegister(modes)


@dataclass(frozen=True)
class Operator:
    """Dense operator on a register's full space."""

    matrix: np.ndarray
    register: ModeRegister = field(repr=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (self.register.dim, self.register.dim):
            raise ValueError(f"operator shape {m.shape} does not match register dim {self.register.dim}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.register.dim

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.register)

    def _other(self, other):
        if isinstance(other, Operator):
            if other.register != self.register:
                raise ValueError("operators live on different registers")
            return other.matrix
        return other

    def __add__(self, other):
        return Operator(self.matrix + self._other(other), self.register)

    __radd__ = __add__

    def __sub__(self, other):
        return Operator(self.matrix - self._other(other), self.register)

    def __mul__(self, scalar):
        return Operator(self.matrix * scalar, self.register)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return Operator(self.matrix @ self._other(other), self.register)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)


def embed(reg: ModeRegister, label: str, local: np.ndarray) -> Operator:
    """Place a single-mode operator at ``label``'s tensor slot, identities elsewhere."""
    pos = reg.index(label)
    local = np.asarray(local, dtype=complex)
    if local.shape != (reg.dims[pos],) * 2:
        raise ValueError(f"local operator shape {local.shape} does not fit mode {label!r}")
    factors = [local if i == pos else np.eye(d) for i, d in enumerate(reg.dims)]
    return Operator(reduce(np.kron, factors), reg)


def lowering_matrix(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def annihilation_op(reg: ModeRegister, mode: str) -> Operator:
    return embed(reg, mode, lowering_matrix(reg.mode_dim(mode)))


def number_op(reg: ModeRegister, mode: str) -> Operator:
    a = annihilation_op(reg, mode)
    return a.dag() @ a


def identity(reg: ModeRegister) -> Operator:
    return Operator(np.eye(reg.dim), reg)


def check_density(matrix: np.ndarray, where: str = "", trace_tol: float = TRACE_TOL) -> None:
    """Raise InvariantError unless ``matrix`` is a valid density matrix."""
    suffix = f" ({where})" if where else ""
    herm = np.max(np.abs(matrix - matrix.conj().T), initial=0.0)
    if herm > HERMITIAN_TOL:
        raise InvariantError(f"density matrix not Hermitian: max|rho - rho^dag| = {herm:.3e}{suffix}")
    tr_err = abs(np.trace(matrix) - 1.0)
    if tr_err > trace_tol:
        raise InvariantError(f"density matrix trace off by {tr_err:.3e}{suffix}")
    lam_min = np.linalg.eigvalsh(0.5 * (matrix + matrix.conj().T))[0]
    if lam_min < POSITIVITY_TOL:
        raise InvariantError(f"density matrix has eigenvalue {lam_min:.3e}{suffix}")


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    register: ModeRegister = field(repr=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (self.register.dim, self.register.dim):
            raise ValueError(f"density matrix shape {m.shape} does not match register dim {self.register.dim}")
        check_density(m)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def _trusted(cls, matrix: np.ndarray, register: ModeRegister) -> "DensityMatrix":
        """Wrap a matrix the caller has already passed through check_density."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "matrix", _frozen(matrix))
        object.__setattr__(obj, "register", register)
        return obj

    @property
    def dim(self) -> int:
        return self.register.dim

    def expect(self, op: Operator | np.ndarray) -> complex:
        m = op.matrix if isinstance(op, Operator) else np.asarray(op)
        return complex(np.trace(m @ self.matrix))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


def basis_index(reg: ModeRegister, occupations: Sequence[int]) -> int:
    if len(occupations) != len(reg.modes):
        raise ValueError(f"expected {len(reg.modes)} occupations, got {len(occupations)}")
    for (label, dim), n in zip(reg.modes, occupations):
        if not 0 <= int(n) < dim:
            raise ValueError(f"occupation {n} out of range for mode {label!r} (dim {dim})")
    return int(np.ravel_multi_index(tuple(int(n) for n in occupations), reg.dims))


def state_vector(
    reg: ModeRegister,
    occupations: Sequence[int] | None = None,
    *,
    amplitudes: Mapping[tuple[int, ...], complex] | Sequence[complex] | None = None,
) -> np.ndarray:
    """Ket for a Fock basis state or a normalized superposition.

    ``amplitudes`` is either a mapping from occupation tuples to amplitudes or
    a full-length vector over the register's computational basis.
    """
    if (occupations is None) == (amplitudes is None):
        raise ValueError("give exactly one of occupations or amplitudes")
    psi = np.zeros(reg.dim, dtype=complex)
    if occupations is not None:
        psi[basis_index(reg, occupations)] = 1.0
        return psi
    if isinstance(amplitudes, Mapping):
        for occ, amp in amplitudes.items():
            psi[basis_index(reg, occ)] += complex(amp)
    else:
        vec = np.asarray(amplitudes, dtype=complex).ravel()
        if vec.size != reg.dim:
            raise ValueError(f"amplitude vector has length {vec.size}, register dim is {reg.dim}")
        psi[:] = vec
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"amplitudes not normalized (norm {norm:.12f})")
    return psi


def basis_state(
    reg: ModeRegister,
    occupations: Sequence[int] | None = None,
    *,
    amplitudes: Mapping[tuple[int, ...], complex] | Sequence[complex] | None = None,
) -> DensityMatrix:
    psi = state_vector(reg, occupations, amplitudes=amplitudes)
    return DensityMatrix(np.outer(psi, psi.conj()), reg)


def partial_trace_matrix(matrix: np.ndarray, reg: ModeRegister, keep: Iterable[str]) -> np.ndarray:
    keep = set(keep)
    if not keep:
        raise ValueError("keep set must be non-empty")
    for label in keep:
        reg.index(label)
    n = len(reg.dims)
    t = np.asarray(matrix).reshape(reg.dims + reg.dims)
    # trace out from the highest slot down so remaining axis numbers stay valid
    for pos in reversed(range(n)):
        if reg.labels[pos] not in keep:
            n_now = t.ndim // 2
            t = np.trace(t, axis1=pos, axis2=pos + n_now)
    kept_dim = prod(d for label, d in reg.modes if label in keep)
    return t.reshape(kept_dim, kept_dim)


def partial_trace(rho: DensityMatrix, keep: Iterable[str]) -> DensityMatrix:
    keep = set(keep)
    sub = rho.register.subregister(keep) if keep else None
    m = partial_trace_matrix(rho.matrix, rho.register, keep)
    return DensityMatrix(m, sub)
