"""Dense operators and states on small tensor-product Hilbert spaces.

Subsystems are ordered; the first subsystem is the most significant factor of
the Kronecker product, so a basis index is the row-major flattening of the
per-subsystem levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Mapping, Sequence

import numpy as np

MAX_DIM = 4096
HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-12


class HilbertError(ValueError):
    """Raised for malformed spaces, bad indices or mismatched operands."""


@dataclass(frozen=True)
class HilbertSpec:
    """Ordered list of labelled subsystem dimensions."""

    subsystems: tuple[tuple[str, int], ...]

    def __init__(self, subsystems: Sequence[tuple[str, int]]):
        subs = tuple((str(label), int(dim)) for label, dim in subsystems)
        if not subs:
            raise HilbertError("a Hilbert space needs at least one subsystem")
        labels = [label for label, _ in subs]
        if len(set(labels)) != len(labels):
            raise HilbertError(f"duplicate subsystem labels in {labels}")
        for label, dim in subs:
            if dim < 1:
                raise HilbertError(f"subsystem {label!r} has dimension {dim} < 1")
        total = prod(dim for _, dim in subs)
        if total > MAX_DIM:
            raise HilbertError(f"total dimension {total} exceeds the cap of {MAX_DIM}")
        object.__setattr__(self, "subsystems", subs)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    def position(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise HilbertError(f"unknown subsystem {label!r}; have {self.labels}") from None

    def subsystem_dim(self, label: str) -> int:
        return self.dims[self.position(label)]

    def index(self, levels: Mapping[str, int]) -> int:
        """Flat basis index of a product basis state; missing labels default to level 0."""
        unknown = set(levels) - set(self.labels)
        if unknown:
            raise HilbertError(f"unknown subsystems {sorted(unknown)}")
        idx = 0
        for label, dim in self.subsystems:
            level = int(levels.get(label, 0))
            if not 0 <= level < dim:
                raise HilbertError(f"level {level} out of range for {label!r} (dim {dim})")
            idx = idx * dim + level
        return idx


@dataclass(frozen=True, eq=False)
class StateVector:
    space: HilbertSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != self.space.dim:
            raise HilbertError(f"state has length {amps.shape[0]}, space dimension is {self.space.dim}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def normalized(self) -> StateVector:
        n = self.norm()
        if n == 0.0:
            raise HilbertError("cannot normalize the zero vector")
        return StateVector(self.space, self.amplitudes / n)

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    space: HilbertSpec
    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=np.complex128)
        d = self.space.dim
        if m.shape != (d, d):
            raise HilbertError(f"operator shape {m.shape} does not match space dimension {d}")
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)

    def _check(self, other: OperatorMatrix) -> None:
        if other.space != self.space:
            raise HilbertError("operators live on different spaces")

    def __add__(self, other: OperatorMatrix) -> OperatorMatrix:
        self._check(other)
        return OperatorMatrix(self.space, self.entries + other.entries)

    def __sub__(self, other: OperatorMatrix) -> OperatorMatrix:
        self._check(other)
        return OperatorMatrix(self.space, self.entries - other.entries)

    def __neg__(self) -> OperatorMatrix:
        return OperatorMatrix(self.space, -self.entries)

    def __mul__(self, scalar: complex) -> OperatorMatrix:
        return OperatorMatrix(self.space, self.entries * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other: OperatorMatrix) -> OperatorMatrix:
        self._check(other)
        return OperatorMatrix(self.space, self.entries @ other.entries)

    def dag(self) -> OperatorMatrix:
        return OperatorMatrix(self.space, self.entries.conj().T)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0) <= tol)

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.entries))


def _embed(space: HilbertSpec, subsystem: str, local: np.ndarray) -> OperatorMatrix:
    pos = space.position(subsystem)
    dims = space.dims
    left = prod(dims[:pos])
    right = prod(dims[pos + 1:])
    full = np.kron(np.kron(np.eye(left), local), np.eye(right))
    return OperatorMatrix(space, full)


def embed(space: HilbertSpec, subsystem: str, local: np.ndarray) -> OperatorMatrix:
    """Identity on every other subsystem, ``local`` on ``subsystem``."""
    d = space.subsystem_dim(subsystem)
    local = np.asarray(local, dtype=np.complex128)
    if local.shape != (d, d):
        raise HilbertError(f"local operator shape {local.shape} does not match {subsystem!r} (dim {d})")
    return _embed(space, subsystem, local)


def identity(space: HilbertSpec) -> OperatorMatrix:
    return OperatorMatrix(space, np.eye(space.dim))


def zero_op(space: HilbertSpec) -> OperatorMatrix:
    return OperatorMatrix(space, np.zeros((space.dim, space.dim)))


def transition_op(space: HilbertSpec, subsystem: str, i: int, j: int) -> OperatorMatrix:
    """|i><j| on ``subsystem``, embedded in the full space."""
    d = space.subsystem_dim(subsystem)
    if not (0 <= i < d and 0 <= j < d):
        raise HilbertError(f"levels ({i}, {j}) out of range for {subsystem!r} (dim {d})")
    local = np.zeros((d, d), dtype=np.complex128)
    local[i, j] = 1.0
    return _embed(space, subsystem, local)


def annihilation_op(space: HilbertSpec, subsystem: str) -> OperatorMatrix:
    """Truncated bosonic lowering operator with sqrt(n) on the first superdiagonal."""
    d = space.subsystem_dim(subsystem)
    if d < 2:
        raise HilbertError(f"annihilation operator needs dim >= 2, {subsystem!r} has {d}")
    local = np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(np.complex128)
    return _embed(space, subsystem, local)


def basis_state(space: HilbertSpec, levels: Mapping[str, int] | None = None) -> StateVector:
    amps = np.zeros(space.dim, dtype=np.complex128)
    amps[space.index(levels or {})] = 1.0
    return StateVector(space, amps)


def apply(op: OperatorMatrix, psi: StateVector) -> StateVector:
    if op.space != psi.space:
        raise HilbertError("operator and state live on different spaces")
    return StateVector(psi.space, op.entries @ psi.amplitudes)


def expectation(op: OperatorMatrix, psi: StateVector) -> complex:
    if op.space != psi.space:
        raise HilbertError("operator and state live on different spaces")
    a = psi.amplitudes
    return complex(np.vdot(a, op.entries @ a))


def partial_trace(rho: np.ndarray, space: HilbertSpec, keep: str) -> np.ndarray:
    """Reduced density matrix of a single subsystem."""
    pos = space.position(keep)
    dims = space.dims
    n = len(dims)
    t = np.asarray(rho).reshape(dims + dims)
    others = [k for k in range(n) if k != pos]
    # move kept row/col axes last, then trace the rest pairwise
    t = np.moveaxis(t, [pos, n + pos], [2 * n - 2, 2 * n - 1])
    rest = [d for k, d in enumerate(dims) if k != pos]
    r = prod(rest)
    t = t.reshape(r, r, dims[pos], dims[pos]) if others else t.reshape(1, 1, dims[pos], dims[pos])
    return np.einsum("iiab->ab", t)
