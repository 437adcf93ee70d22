"""CPTP maps, named channels, ensemble maps and twirling over unitary 2-designs.

Superoperators act on row-major vectorized operators, so that
``vec(A rho B) = kron(A, B.T) @ vec(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quantum import (
    IDENTITY2,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    PAULIS,
    DensityMatrix,
    Ensemble,
)

TP_TOL = 1e-10
CP_TOL = 1e-8
UNITARY_TOL = 1e-10
DESIGN_TOL = 1e-8

EnsembleMap = Callable[[Ensemble], Ensemble]


class KrausChannel:
    """Trace-preserving map given by Kraus operators, rho -> sum_k A rho A^dag."""

    __slots__ = ("kraus_ops",)

    def __init__(self, kraus_ops: Sequence):
        ops = []
        for a in kraus_ops:
            m = np.array(a, dtype=complex, copy=True)
            m.setflags(write=False)
            ops.append(m)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        d = ops[0].shape[0]
        if any(m.shape != (d, d) for m in ops):
            raise ValueError("Kraus operators must all be square with the same shape")
        dev = np.max(np.abs(sum(m.conj().T @ m for m in ops) - np.eye(d)))
        if dev > TP_TOL:
            raise ValueError(f"Kraus operators are not trace preserving (deviation {dev:.3e})")
        self.kraus_ops = tuple(ops)

    @property
    def dim(self) -> int:
        return self.kraus_ops[0].shape[0]

    def superoperator(self) -> "SuperOperator":
        return SuperOperator(sum(np.kron(a, a.conj()) for a in self.kraus_ops))

    def __call__(self, rho) -> DensityMatrix:
        return apply(self, rho)

    def __repr__(self):
        return f"KrausChannel(dim={self.dim}, n_kraus={len(self.kraus_ops)})"


class SuperOperator:
    """Linear map on vectorized d x d operators."""

    __slots__ = ("matrix", "dim")

    def __init__(self, matrix, *, validate: bool = True):
        m = np.array(matrix, dtype=complex, copy=True)
        d = int(round(np.sqrt(m.shape[0])))
        if m.ndim != 2 or m.shape != (d * d, d * d):
            raise ValueError(f"superoperator must be d^2 x d^2, got {m.shape}")
        m.setflags(write=False)
        self.matrix = m
        self.dim = d
        if validate:
            self._validate()

    def _validate(self):
        d = self.dim
        # trace preservation: vec(I)^T S = vec(I)^T
        vec_id = np.eye(d).reshape(-1)
        dev = np.max(np.abs(vec_id @ self.matrix - vec_id))
        if dev > TP_TOL:
            raise ValueError(f"superoperator is not trace preserving (deviation {dev:.3e})")
        for k in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[k, j] = e[j, k] = 1.0
                out = self.act(e)
                if np.max(np.abs(out - out.conj().T)) > TP_TOL:
                    raise ValueError("superoperator does not preserve hermiticity")
        lo = np.linalg.eigvalsh(self.choi())[0]
        if lo < -CP_TOL:
            raise ValueError(f"superoperator is not completely positive (Choi eigenvalue {lo:.3e})")

    def act(self, operator) -> np.ndarray:
        d = self.dim
        return (self.matrix @ np.asarray(operator, dtype=complex).reshape(-1)).reshape(d, d)

    def choi(self) -> np.ndarray:
        """Choi matrix sum_ij |i><j| (x) N(|i><j|)."""
        d = self.dim
        out = np.zeros((d * d, d * d), dtype=complex)
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1.0
                out[i * d:(i + 1) * d, j * d:(j + 1) * d] = self.act(e)
        return out

    def compose(self, other: "SuperOperator") -> "SuperOperator":
        """self after other."""
        return SuperOperator(self.matrix @ other.matrix, validate=False)

    def __call__(self, rho) -> DensityMatrix:
        return apply(self, rho)


def as_superoperator(channel) -> SuperOperator:
    if isinstance(channel, SuperOperator):
        return channel
    return channel.superoperator()


def apply(channel, rho) -> DensityMatrix:
    """Push a state through a Kraus channel or superoperator."""
    r = np.asarray(rho, dtype=complex)
    if r.shape != (channel.dim, channel.dim):
        raise ValueError(f"state of dimension {r.shape[0]} given to a dimension-{channel.dim} channel")
    if isinstance(channel, KrausChannel):
        out = sum(a @ r @ a.conj().T for a in channel.kraus_ops)
    else:
        out = channel.act(r)
    return DensityMatrix.nearest(out)


def identity_channel(d: int = 2) -> KrausChannel:
    return KrausChannel([np.eye(d)])


def _weyl_operators(d: int) -> list[np.ndarray]:
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return [np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b)
            for a in range(d) for b in range(d)]


def depolarizing(mu: float, d: int = 2) -> KrausChannel:
    """rho -> (1 - mu) rho + mu I/d.

    For qubits this is the Pauli mixture with weights
    (1 - 3mu/4, mu/4, mu/4, mu/4); for d > 2 the Weyl operators play
    the role of the Paulis.
    """
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"depolarizing strength must lie in [0, 1], got {mu}")
    if d == 2:
        ops, weights = (IDENTITY2, PAULI_X, PAULI_Y, PAULI_Z), (1 - 0.75 * mu, mu / 4, mu / 4, mu / 4)
    else:
        ops = _weyl_operators(d)
        weights = [1 - mu + mu / d**2] + [mu / d**2] * (d * d - 1)
    return KrausChannel([np.sqrt(w) * u for w, u in zip(weights, ops)])


def bit_phase_flip(p: float) -> KrausChannel:
    """rho -> (1 - p) rho + p Y rho Y."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability must lie in [0, 1], got {p}")
    return KrausChannel([np.sqrt(1 - p) * IDENTITY2, np.sqrt(p) * PAULI_Y])


def unitary_channel(u) -> KrausChannel:
    return KrausChannel([u])


def random_unitary(rng: np.random.Generator, d: int = 2) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_channel(rng: np.random.Generator, d: int = 2, n_kraus: int = 3) -> KrausChannel:
    """Kraus channel cut from a random isometry C^d -> C^(d*n_kraus)."""
    g = rng.normal(size=(d * n_kraus, d)) + 1j * rng.normal(size=(d * n_kraus, d))
    v, _ = np.linalg.qr(g)
    return KrausChannel([v[k * d:(k + 1) * d, :] for k in range(n_kraus)])


def kraus_to_json(channel: KrausChannel) -> dict:
    return {"type": "kraus",
            "kraus": [[[[z.real, z.imag] for z in row] for row in a] for a in channel.kraus_ops]}


def channel_from_json(doc: dict) -> KrausChannel:
    """Build a channel from ``{"type": ..., "p" | "mu" | "kraus": ...}``."""
    kind = doc.get("type")
    if kind == "bit_phase_flip":
        return bit_phase_flip(float(doc["p"]))
    if kind == "depolarizing":
        return depolarizing(float(doc["mu"]), int(doc.get("dim", 2)))
    if kind == "identity":
        return identity_channel(int(doc.get("dim", 2)))
    if kind == "kraus":
        ops = [np.array([[complex(re, im) for re, im in row] for row in a]) for a in doc["kraus"]]
        return KrausChannel(ops)
    raise ValueError(f"unknown channel type {kind!r}")


# --- ensemble maps -------------------------------------------------------

def channel_map(channel) -> EnsembleMap:
    """Lift a channel to a map on ensembles (priors untouched)."""
    return lambda ensemble: ensemble.map_states(lambda rho: apply(channel, rho))


def mix_with_state(action: EnsembleMap, gamma: float, chi) -> EnsembleMap:
    """Blend an ensemble map with a fixed state: rho -> (1-gamma) action(rho) + gamma chi."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    chi_m = np.asarray(chi, dtype=complex)

    def mixed(ensemble: Ensemble) -> Ensemble:
        out = action(ensemble)
        return out.map_states(lambda rho: DensityMatrix.nearest((1 - gamma) * rho.matrix + gamma * chi_m))

    return mixed


def flip_ensemble(ensemble: Ensemble, alpha1: float, alpha2: float) -> Ensemble:
    """State x becomes (1 - a_x) rho_x + a_x rho_{x+1 mod 2}.

    The map depends on the state label, so it is not a channel on states.
    """
    if ensemble.n != 2:
        raise ValueError(f"the flip map is defined for two states, got {ensemble.n}")
    for a in (alpha1, alpha2):
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"flip weights must lie in [0, 1], got {a}")
    r1, r2 = (s.matrix for s in ensemble.states)
    return Ensemble(ensemble.priors, (
        DensityMatrix.nearest((1 - alpha1) * r1 + alpha1 * r2),
        DensityMatrix.nearest((1 - alpha2) * r2 + alpha2 * r1),
    ))


def flip_map(alpha1: float, alpha2: float) -> EnsembleMap:
    return lambda ensemble: flip_ensemble(ensemble, alpha1, alpha2)


# --- twirling -------------------------------------------------------------

def depolarizing_parameter(channel: KrausChannel) -> float:
    """eta such that twirling the channel gives (1 - eta) rho + eta I/d.

    Uses 1 - eta = (sum_k |tr A_k|^2 - 1) / (d^2 - 1). Values above 1 are
    returned unchanged.
    """
    d = channel.dim
    s = sum(abs(np.trace(a)) ** 2 for a in channel.kraus_ops)
    return 1.0 - (s - 1.0) / (d * d - 1.0)


def depolarizing_superoperator(eta: float, d: int = 2) -> SuperOperator:
    """(1 - eta) rho + eta tr(rho) I/d for any real eta (not checked for CP)."""
    vec_id = np.eye(d).reshape(-1)
    m = (1 - eta) * np.eye(d * d) + eta * np.outer(vec_id, vec_id) / d
    return SuperOperator(m, validate=False)


@dataclass(frozen=True)
class UnitaryDesign:
    name: str
    unitaries: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        us = []
        for u in self.unitaries:
            m = np.array(u, dtype=complex, copy=True)
            m.setflags(write=False)
            us.append(m)
        if not us:
            raise ValueError("a design needs at least one unitary")
        d = us[0].shape[0]
        for k, u in enumerate(us):
            if u.shape != (d, d):
                raise ValueError("design elements have mismatched shapes")
            dev = np.max(np.abs(u.conj().T @ u - np.eye(d)))
            if dev > UNITARY_TOL:
                raise ValueError(f"design element {k} is not unitary (deviation {dev:.3e})")
        object.__setattr__(self, "unitaries", tuple(us))

    @property
    def dim(self) -> int:
        return self.unitaries[0].shape[0]

    def __len__(self):
        return len(self.unitaries)


def twirl(channel, design: UnitaryDesign) -> SuperOperator:
    """Average of U^dag N(U rho U^dag) U over the design, as a superoperator."""
    s = as_superoperator(channel)
    if s.dim != design.dim:
        raise ValueError(f"channel dimension {s.dim} does not match design dimension {design.dim}")
    # conjugation rho -> U rho U^dag is kron(U, conj(U)) in row-major vec form
    terms = np.stack([np.kron(u.conj().T, u.T) @ s.matrix @ np.kron(u, u.conj())
                      for u in design.unitaries])
    return SuperOperator(terms.sum(axis=0) / len(design), validate=False)


def conjugated(channel: KrausChannel, u) -> KrausChannel:
    """The channel rho -> U^dag N(U rho U^dag) U."""
    u = np.asarray(u, dtype=complex)
    return KrausChannel([u.conj().T @ a @ u for a in channel.kraus_ops])


def bloch_matrix(channel) -> tuple[np.ndarray, np.ndarray]:
    """Affine Bloch-ball action b -> T b + t of a qubit channel."""
    s = as_superoperator(channel)
    if s.dim != 2:
        raise ValueError("Bloch representation needs a qubit channel")
    t = np.array([0.5 * np.trace(p @ s.act(IDENTITY2)).real for p in PAULIS])
    T = np.array([[0.5 * np.trace(p @ s.act(q)).real for q in PAULIS] for p in PAULIS])
    return T, t


def measured_contraction(channel) -> float:
    """Mean Bloch contraction trace(T)/3, equal to 1 - eta for a depolarizing map."""
    T, _ = bloch_matrix(channel)
    return float(np.trace(T) / 3)


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.diag([1, 1j])
_CLIFFORD_WORDS = (
    "I", "X", "Y", "Z", "H", "S", "XH", "XS", "YH", "YS", "ZH", "ZS", "HS",
    "SH", "XHS", "XSH", "YHS", "YSH", "ZHS", "ZSH", "HSH",
    "XHSH", "YHSH", "ZHSH",
)
_LETTERS = {"I": IDENTITY2, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z, "H": _H, "S": _S}


def clifford_design() -> UnitaryDesign:
    """The 24 single-qubit Cliffords as products of I, X, Y, Z, H, S."""
    us = []
    for word in _CLIFFORD_WORDS:
        u = IDENTITY2
        for letter in word:
            u = u @ _LETTERS[letter]
        us.append(u)
    return UnitaryDesign("clifford24", tuple(us))


def _spin_rotation(angle: float, axis) -> np.ndarray:
    """exp(-i angle axis.sigma) for a (not necessarily unit) real axis."""
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    n_sigma = sum(c * p for c, p in zip(axis / norm, PAULIS))
    theta = angle * norm
    return np.cos(theta) * IDENTITY2 - 1j * np.sin(theta) * n_sigma


def tetrahedral_design(as_printed: bool = False) -> UnitaryDesign:
    """12-element rotation subgroup of the tetrahedral group.

    Elements are I, exp(-i pi e.sigma/2) for the three unit axes, and
    exp(-i a r.sigma), exp(-i 2a r.sigma) for the four body diagonals r.
    With ``as_printed=True`` the angle a = pi/27 and the diagonal list
    (r4 repeating r3) are taken literally from the published list, which
    does not form a 2-design; the default uses a = pi/sqrt(27) and
    r4 = (-1, 1, -1), giving rotations by 2pi/3 and 4pi/3.
    """
    if as_printed:
        angle = np.pi / 27
        diagonals = [(1, 1, 1), (1, -1, -1), (-1, -1, 1), (-1, -1, 1)]
        name = "tetra12-printed"
    else:
        angle = np.pi / np.sqrt(27)
        diagonals = [(1, 1, 1), (1, -1, -1), (-1, -1, 1), (-1, 1, -1)]
        name = "tetra12"
    us = [IDENTITY2]
    us += [_spin_rotation(np.pi / 2, e) for e in np.eye(3)]
    us += [_spin_rotation(angle, r) for r in diagonals]
    us += [_spin_rotation(2 * angle, r) for r in diagonals]
    return UnitaryDesign(name, tuple(us))


def single_element_design(d: int = 2) -> UnitaryDesign:
    return UnitaryDesign("identity", (np.eye(d),))


DESIGNS = {
    "clifford24": clifford_design,
    "tetra12": tetrahedral_design,
    "tetra12-printed": lambda: tetrahedral_design(as_printed=True),
}


def design_by_name(name: str) -> UnitaryDesign:
    try:
        return DESIGNS[name]()
    except KeyError:
        raise ValueError(f"unknown design {name!r}; choose from {sorted(DESIGNS)}") from None


@dataclass(frozen=True)
class TwoDesignReport:
    design: str
    deviations: tuple[float, ...]
    max_deviation: float
    passed: bool


def verify_two_design(design: UnitaryDesign, probes: Sequence[KrausChannel],
                      tol: float = DESIGN_TOL) -> TwoDesignReport:
    """Compare each probe's twirl with the depolarizing map of the same eta."""
    if not probes:
        raise ValueError("need at least one probe channel")
    devs = []
    for probe in probes:
        target = depolarizing_superoperator(depolarizing_parameter(probe), probe.dim)
        devs.append(float(np.max(np.abs(twirl(probe, design).matrix - target.matrix))))
    worst = max(devs)
    return TwoDesignReport(design.name, tuple(devs), worst, worst <= tol)
