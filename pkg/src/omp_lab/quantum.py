"""Dense qubit/qudit linear algebra: density operators, Bloch geometry, POVMs.

All value types wrap read-only numpy arrays, so they can be shared freely
between threads and processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
POVM_TOL = 1e-10
BLOCH_TOL = 1e-10
PRIOR_TOL = 1e-12

IDENTITY2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)

for _m in (IDENTITY2, PAULI_X, PAULI_Y, PAULI_Z):
    _m.setflags(write=False)


def _frozen(matrix) -> np.ndarray:
    a = np.array(matrix, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def eigh_hermitian(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.

    2x2 inputs use the closed form ``a0*I + v.sigma -> a0 -/+ |v|``; larger
    inputs fall back to LAPACK.
    """
    a = np.asarray(a, dtype=complex)
    if a.shape != (2, 2):
        return np.linalg.eigh(a)
    a0 = 0.5 * (a[0, 0].real + a[1, 1].real)
    vz = 0.5 * (a[0, 0].real - a[1, 1].real)
    off = 0.5 * (a[1, 0] + np.conj(a[0, 1]))
    vx, vy = off.real, off.imag
    norm = float(np.sqrt(vx * vx + vy * vy + vz * vz))
    values = np.array([a0 - norm, a0 + norm])
    if norm == 0.0:
        return values, np.eye(2, dtype=complex)
    # eigenvector of n.sigma with eigenvalue +1 is (cos t/2, e^{i phi} sin t/2)
    rho_xy = np.hypot(vx, vy)
    half = 0.5 * np.arctan2(rho_xy, vz)
    c, s = np.cos(half), np.sin(half)
    phase = np.exp(1j * np.arctan2(vy, vx))
    up = np.array([c, phase * s])
    down = np.array([-np.conj(phase) * s, c])
    return values, np.column_stack([down, up])


def eigvalsh(a: np.ndarray) -> np.ndarray:
    return eigh_hermitian(a)[0]


class HermitianOperator:
    """Immutable Hermitian matrix with no trace or positivity constraint."""

    __slots__ = ("_matrix",)

    def __init__(self, matrix, *, atol: float = HERMITIAN_TOL):
        m = _frozen(matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        dev = np.max(np.abs(m - m.conj().T))
        if dev > atol:
            raise ValueError(f"matrix is not Hermitian (deviation {dev:.3e})")
        self._matrix = m

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._matrix
        return self._matrix.astype(dtype)

    def eigenvalues(self) -> np.ndarray:
        return eigvalsh(self._matrix)

    def trace(self) -> float:
        return float(np.trace(self._matrix).real)

    def __add__(self, other):
        return HermitianOperator(self._matrix + np.asarray(other))

    def __sub__(self, other):
        return HermitianOperator(self._matrix - np.asarray(other))

    def __mul__(self, scalar: float):
        return HermitianOperator(float(scalar) * self._matrix)

    __rmul__ = __mul__

    def __repr__(self):
        return f"{type(self).__name__}({self._matrix.tolist()!r})"


class DensityMatrix(HermitianOperator):
    """Positive semidefinite, unit-trace Hermitian operator."""

    __slots__ = ()

    def __init__(self, matrix, *, atol: float = HERMITIAN_TOL):
        super().__init__(matrix, atol=atol)
        tr = np.trace(self._matrix)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace is {tr.real:.15g}, expected 1")
        lo = self.eigenvalues()[0]
        if lo < -PSD_TOL:
            raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {lo:.3e})")

    @classmethod
    def maximally_mixed(cls, dim: int = 2) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @classmethod
    def from_ket(cls, ket) -> "DensityMatrix":
        v = np.asarray(ket, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def nearest(cls, matrix) -> "DensityMatrix":
        """Symmetrize and renormalize a matrix that is a state up to rounding."""
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        return cls(m / np.trace(m).real)


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @classmethod
    def of(cls, v: Sequence[float]) -> "BlochVector":
        x, y, z = (float(c) for c in v)
        return cls(x, y, z)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def norm(self) -> float:
        return float(np.linalg.norm(self.to_array()))

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def __sub__(self, other: "BlochVector") -> "BlochVector":
        return BlochVector.of(self.to_array() - other.to_array())


class Povm:
    """A complete set of positive effects."""

    __slots__ = ("elements",)

    def __init__(self, elements: Iterable):
        ops = tuple(e if isinstance(e, HermitianOperator) else HermitianOperator(e) for e in elements)
        if not ops:
            raise ValueError("a POVM needs at least one element")
        dim = ops[0].dim
        if any(op.dim != dim for op in ops):
            raise ValueError("POVM elements have mismatched dimensions")
        for k, op in enumerate(ops):
            lo = op.eigenvalues()[0]
            if lo < -PSD_TOL:
                raise ValueError(f"POVM element {k} is not PSD (min eigenvalue {lo:.3e})")
        total = sum(op.matrix for op in ops)
        dev = np.max(np.abs(total - np.eye(dim)))
        if dev > POVM_TOL:
            raise ValueError(f"POVM elements do not sum to identity (deviation {dev:.3e})")
        self.elements = ops

    @property
    def dim(self) -> int:
        return self.elements[0].dim

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, k):
        return self.elements[k]


def bloch_to_density(b) -> DensityMatrix:
    """Map a Bloch vector to the qubit state (I + b.sigma)/2."""
    v = b.to_array() if isinstance(b, BlochVector) else np.asarray(b, dtype=float)
    norm = np.linalg.norm(v)
    if norm > 1 + BLOCH_TOL:
        raise ValueError(f"Bloch vector has norm {norm:.12g} > 1")
    m = 0.5 * (IDENTITY2 + v[0] * PAULI_X + v[1] * PAULI_Y + v[2] * PAULI_Z)
    return DensityMatrix(m)


def operator_bloch(a) -> np.ndarray:
    """Components tr(a sigma_i) of a 2x2 operator, as a real array."""
    m = np.asarray(a, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError(f"Bloch components need a 2x2 operator, got {m.shape}")
    return np.array([np.trace(m @ p).real for p in PAULIS])


def density_to_bloch(rho) -> BlochVector:
    return BlochVector.of(operator_bloch(rho))


def trace_norm(a) -> float:
    """Sum of absolute eigenvalues of a Hermitian operator."""
    m = np.asarray(a, dtype=complex)
    return float(np.sum(np.abs(eigvalsh(m))))


def trace_distance(a, b) -> float:
    return 0.5 * trace_norm(np.asarray(a) - np.asarray(b))


def born_probability(rho, effect) -> float:
    """Return tr(effect rho), clamped to [0, 1]."""
    e = np.asarray(effect, dtype=complex)
    w = eigvalsh(e)
    if w[0] < -PSD_TOL:
        raise ValueError(f"effect is not PSD (min eigenvalue {w[0]:.3e})")
    if w[-1] > 1 + PSD_TOL:
        raise ValueError(f"effect exceeds identity (max eigenvalue {w[-1]:.3e})")
    p = float(np.trace(e @ np.asarray(rho)).real)
    return min(1.0, max(0.0, p))


def projector(ket) -> np.ndarray:
    v = np.asarray(ket, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def random_bloch(rng: np.random.Generator, *, pure: bool = False) -> BlochVector:
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    if not pure:
        v *= rng.random() ** (1 / 3)
    return BlochVector.of(v)


def random_density(rng: np.random.Generator, dim: int = 2) -> DensityMatrix:
    """Full-rank-almost-surely state drawn from the Hilbert-Schmidt measure."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    return DensityMatrix.nearest(m)


@dataclass(frozen=True)
class Ensemble:
    """Indexed list of (prior, state) pairs."""

    priors: tuple[float, ...]
    states: tuple[DensityMatrix, ...]

    def __post_init__(self):
        priors = tuple(float(q) for q in self.priors)
        states = tuple(s if isinstance(s, DensityMatrix) else DensityMatrix(s) for s in self.states)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "states", states)
        if len(states) < 2:
            raise ValueError("an ensemble needs at least two states")
        if len(priors) != len(states):
            raise ValueError(f"{len(priors)} priors for {len(states)} states")
        if any(q <= 0 for q in priors):
            raise ValueError("priors must be positive")
        if abs(sum(priors) - 1.0) > PRIOR_TOL:
            raise ValueError(f"priors sum to {sum(priors):.15g}, expected 1")
        if len({s.dim for s in states}) != 1:
            raise ValueError("states have mismatched dimensions")

    @classmethod
    def from_bloch(cls, priors: Sequence[float], vectors: Sequence) -> "Ensemble":
        return cls(tuple(priors), tuple(bloch_to_density(v) for v in vectors))

    @classmethod
    def uniform(cls, states: Sequence) -> "Ensemble":
        n = len(states)
        return cls((1.0 / n,) * n, tuple(states))

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def weighted(self, x: int) -> np.ndarray:
        """q_x * rho_x as a plain array."""
        return self.priors[x] * self.states[x].matrix

    def map_states(self, fn) -> "Ensemble":
        return Ensemble(self.priors, tuple(fn(s) for s in self.states))

    def is_equal_prior(self, atol: float = PRIOR_TOL) -> bool:
        return max(self.priors) - min(self.priors) <= atol
