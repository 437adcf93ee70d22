"""Simulated Pauli-basis tomography and the angle metric for difference vectors.

Randomness comes from counter-based Philox streams keyed by
(realization, state, design element, basis) under a master seed, so results
do not depend on scheduling or worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .channels import KrausChannel, UnitaryDesign, apply, bit_phase_flip, clifford_design, conjugated
from .quantum import (
    BlochVector,
    DensityMatrix,
    HermitianOperator,
    bloch_to_density,
    density_to_bloch,
    operator_bloch,
    projector,
    trace_norm,
)

log = logging.getLogger(__name__)

BASES = ("x", "y", "z")
OUTCOMES = ("+", "-")
PROB_FLOOR = 1e-12

_s = 1 / math.sqrt(2)
_KETS = {
    ("x", "+"): (_s, _s), ("x", "-"): (_s, -_s),
    ("y", "+"): (_s, 1j * _s), ("y", "-"): (_s, -1j * _s),
    ("z", "+"): (1, 0), ("z", "-"): (0, 1),
}
# shape (3, 2, 2, 2): basis, outcome, matrix
PROJECTORS = np.array([[projector(_KETS[a, k]) for k in OUTCOMES] for a in BASES])
PROJECTORS.setflags(write=False)

REFERENCE_R1 = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
REFERENCE_R2 = np.array([-3.0, 3.0 * math.sqrt(3), 0.0]) / 8


@dataclass(frozen=True)
class MeasurementEvent:
    basis: str
    outcome: str
    design_index: int | None = None

    def __post_init__(self):
        if self.basis not in BASES or self.outcome not in OUTCOMES:
            raise ValueError(f"invalid event ({self.basis!r}, {self.outcome!r})")


@dataclass(frozen=True)
class CountTable:
    """Counts n[basis, outcome] for the three Pauli bases."""

    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64).reshape(3, 2)
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        per_basis = c.sum(axis=1)
        if np.any(per_basis != per_basis[0]):
            raise ValueError(f"per-basis totals differ: {per_basis.tolist()}")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_events(cls, events: Sequence[MeasurementEvent]) -> "CountTable":
        c = np.zeros((3, 2), dtype=np.int64)
        for e in events:
            c[BASES.index(e.basis), OUTCOMES.index(e.outcome)] += 1
        return cls(c)

    @classmethod
    def exact(cls, rho, shots_per_basis: int) -> "CountTable":
        """Counts proportional to Born probabilities (rounded); for tests."""
        p = born_table(np.asarray(rho))
        plus = np.rint(p[:, 0] * shots_per_basis).astype(np.int64)
        return cls(np.column_stack([plus, shots_per_basis - plus]))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.total

    def __add__(self, other: "CountTable") -> "CountTable":
        return CountTable(self.counts + other.counts)

    def __getitem__(self, key: tuple[str, str]) -> int:
        a, k = key
        return int(self.counts[BASES.index(a), OUTCOMES.index(k)])


def born_table(rho: np.ndarray) -> np.ndarray:
    """p[basis, outcome] = tr(Pi rho)."""
    return np.einsum("abij,ji->ab", PROJECTORS, rho).real


class SeedTree:
    """Independent Philox streams addressed by integer keys under one seed."""

    def __init__(self, seed: int, prefix: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.prefix = tuple(prefix)

    def child(self, *key: int) -> "SeedTree":
        return SeedTree(self.seed, self.prefix + tuple(key))

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.prefix + tuple(key))
        return np.random.Generator(np.random.Philox(ss))


def simulate_counts(rho, shots_per_basis: int, rng) -> CountTable:
    """Draw shots_per_basis outcomes in each Pauli basis.

    ``rng`` is one generator shared by the three bases, or a sequence of
    three generators, one per basis.
    """
    if shots_per_basis < 0:
        raise ValueError("shot count must be non-negative")
    r = np.asarray(rho, dtype=complex)
    if r.shape != (2, 2):
        raise ValueError("Pauli tomography needs a qubit state")
    gens = rng if isinstance(rng, (list, tuple)) else (rng,) * 3
    p_plus = np.clip(born_table(r)[:, 0], 0.0, 1.0)
    plus = np.array([g.binomial(shots_per_basis, p) for g, p in zip(gens, p_plus)], dtype=np.int64)
    return CountTable(np.column_stack([plus, shots_per_basis - plus]))


@dataclass(frozen=True)
class ExperimentConfig:
    N: int
    realizations: int = 1000
    twirl: bool = True
    design: UnitaryDesign = field(default_factory=clifford_design, repr=False)
    channel: KrausChannel = field(default_factory=lambda: bit_phase_flip(0.45), repr=False)
    seed: int = 0
    mle_max_iter: int = 2000
    mle_tol: float = 1e-10

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.realizations < 1:
            raise ValueError("need at least one realization")

    @property
    def shots_per_basis(self) -> int:
        """Shots per basis per state: N for each of the design elements."""
        return len(self.design) * self.N


def simulate_protocol(rho1, rho2, config: ExperimentConfig, streams: SeedTree) -> tuple[CountTable, CountTable]:
    """Count tables for both states sent through the (optionally twirled) channel.

    Untwirled, each state is measured |design| * N times per basis. Twirled,
    each design element U contributes N shots per basis of
    U^dag N(U rho U^dag) U, so the totals match.
    """
    tables = []
    for s, rho in enumerate((rho1, rho2)):
        if config.twirl:
            total = None
            for i, u in enumerate(config.design.unitaries):
                out = apply(conjugated(config.channel, u), rho)
                gens = [streams.generator(s, i + 1, b) for b in range(3)]
                t = simulate_counts(out, config.N, gens)
                total = t if total is None else total + t
        else:
            out = apply(config.channel, rho)
            gens = [streams.generator(s, 0, b) for b in range(3)]
            total = simulate_counts(out, config.shots_per_basis, gens)
        tables.append(total)
    return tables[0], tables[1]


def _frequencies(data) -> np.ndarray:
    """Relative frequencies from a CountTable or a non-negative (3, 2) weight array."""
    if isinstance(data, CountTable):
        c = data.counts.astype(float)
    else:
        c = np.asarray(data, dtype=float).reshape(3, 2)
        if np.any(c < 0):
            raise ValueError("frequencies must be non-negative")
    if np.any(c.sum(axis=1) == 0):
        raise ValueError("every basis needs at least one count")
    return c / c.sum()


def log_likelihood(counts, rho, floor: float = PROB_FLOOR) -> float:
    """sum f log p over the six outcomes, with empty outcomes contributing nothing."""
    f = _frequencies(counts)
    p = np.maximum(born_table(np.asarray(rho)), floor)
    mask = f > 0
    return float(np.sum(f[mask] * np.log(p[mask])))


def mle_iterates(counts, max_iter: int = 2000, tol: float = 1e-10,
                 floor: float = PROB_FLOOR) -> Iterator[np.ndarray]:
    """Yield the iterates rho <- R rho R / tr(R rho R), R = sum (f/p) Pi.

    ``counts`` is a CountTable or a (3, 2) array of exact frequencies.
    Starts from I/2 and stops once consecutive iterates are within ``tol``
    in trace norm, or after ``max_iter`` updates.
    """
    f = _frequencies(counts)
    rho = np.eye(2, dtype=complex) / 2
    floored = False
    yield rho
    for _ in range(max_iter):
        p = born_table(rho)
        if np.any(p < floor):
            floored = True
            p = np.maximum(p, floor)
        R = np.einsum("ab,abij->ij", f / p, PROJECTORS)
        new = R @ rho @ R
        new = 0.5 * (new + new.conj().T)
        new /= np.trace(new).real
        step = trace_norm(new - rho)
        rho = new
        yield rho
        if step <= tol:
            break
    if floored:
        log.info("probability floor %.0e was applied during reconstruction", floor)


def mle_reconstruct(counts, max_iter: int = 2000, tol: float = 1e-10) -> DensityMatrix:
    """Maximum-likelihood qubit state for Pauli-basis counts."""
    rho = None
    for rho in mle_iterates(counts, max_iter, tol):
        pass
    return DensityMatrix.nearest(rho)


def rho_lambda(rho1, rho2) -> HermitianOperator:
    """(I + rho1 - rho2)/2, whose Bloch vector is half the difference vector."""
    a, b = np.asarray(rho1), np.asarray(rho2)
    if a.shape != (2, 2) or b.shape != (2, 2):
        raise ValueError("rho_lambda is defined for qubit states")
    return HermitianOperator(0.5 * (np.eye(2) + a - b))


def theta_metric(estimated, reference) -> float:
    """Angle in [0, pi] between two 3-vectors."""
    a = estimated.to_array() if isinstance(estimated, BlochVector) else np.asarray(estimated, dtype=float)
    b = reference.to_array() if isinstance(reference, BlochVector) else np.asarray(reference, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("angle is undefined for a zero-length vector")
    cos = float(np.dot(a, b) / (na * nb))
    return math.acos(min(1.0, max(-1.0, cos)))


@dataclass(frozen=True)
class TrialResult:
    theta: float
    rho1: DensityMatrix
    rho2: DensityMatrix


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    thetas: np.ndarray = field(repr=False)

    @property
    def mean(self) -> float:
        return float(np.mean(self.thetas))

    @property
    def stderr(self) -> float:
        n = len(self.thetas)
        return float(np.std(self.thetas, ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def run_trial(config: ExperimentConfig, index: int, rho1, rho2) -> TrialResult:
    streams = SeedTree(config.seed).child(index)
    c1, c2 = simulate_protocol(rho1, rho2, config, streams)
    est1 = mle_reconstruct(c1, config.mle_max_iter, config.mle_tol)
    est2 = mle_reconstruct(c2, config.mle_max_iter, config.mle_tol)
    diff = 2 * operator_bloch(rho_lambda(est1, est2))  # Bloch vector of rho_lambda is (b1 - b2)/2
    reference = operator_bloch(rho1) - operator_bloch(rho2)
    return TrialResult(theta_metric(diff, reference), est1, est2)


def _trial_chunk(args) -> list[float]:
    config, indices, r1, r2 = args
    return [run_trial(config, i, r1, r2).theta for i in indices]


def run_experiment(config: ExperimentConfig, states: tuple | None = None,
                   workers: int = 1) -> ExperimentResult:
    """Mean angle between reconstructed and true difference vectors.

    ``states`` defaults to the two-state example with Bloch vectors
    (1,1,0)/sqrt2 and (-3, 3sqrt3, 0)/8.
    """
    if states is None:
        states = (bloch_to_density(REFERENCE_R1), bloch_to_density(REFERENCE_R2))
    r1, r2 = (np.asarray(s) for s in states)
    indices = list(range(config.realizations))
    if workers <= 1:
        thetas = _trial_chunk((config, indices, r1, r2))
    else:
        chunks = [indices[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_trial_chunk, [(config, c, r1, r2) for c in chunks]))
        thetas = [0.0] * len(indices)
        for chunk, part in zip(chunks, parts):
            for i, th in zip(chunk, part):
                thetas[i] = th
    return ExperimentResult(config, np.array(thetas))


def exact_difference_angle(channel: KrausChannel, rho1=None, rho2=None) -> float:
    """Angle between the channel-output difference vector and the input one."""
    if rho1 is None:
        rho1, rho2 = bloch_to_density(REFERENCE_R1), bloch_to_density(REFERENCE_R2)
    out = density_to_bloch(apply(channel, rho1)) - density_to_bloch(apply(channel, rho2))
    return theta_metric(out, density_to_bloch(rho1) - density_to_bloch(rho2))
