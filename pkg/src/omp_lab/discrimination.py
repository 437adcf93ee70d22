"""Minimum-error state discrimination through the dual (LCP) formulation.

The dual variable ``K`` is the smallest-trace Hermitian operator dominating
every weighted state ``q_x rho_x``; ``tr K`` is the guessing probability and
``K - q_x rho_x = r_x sigma_x`` supplies the complementary states.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, nnls

from .quantum import (
    IDENTITY2,
    PAULIS,
    DensityMatrix,
    Ensemble,
    HermitianOperator,
    Povm,
    eigh_hermitian,
    operator_bloch,
)

log = logging.getLogger(__name__)

KERNEL_TOL = 1e-8
ZERO_WEIGHT_TOL = 1e-10
CERT_TOL = 1e-8
OMP_TOL = 1e-8
MAX_STATES = 8


class SolverError(RuntimeError):
    """The dual solver did not reach a feasible optimum."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class DegenerateSolutionError(SolverError):
    """No POVM supported on the kernels of K - q_x rho_x resolves the identity."""


@dataclass(frozen=True)
class DiscriminationSolution:
    K: HermitianOperator
    complementary: tuple[tuple[float, DensityMatrix], ...]
    povm: Povm
    p_guess: float
    r_mean: float

    @property
    def r(self) -> tuple[float, ...]:
        return tuple(r for r, _ in self.complementary)

    @property
    def sigmas(self) -> tuple[DensityMatrix, ...]:
        return tuple(s for _, s in self.complementary)


def success_probability(ensemble: Ensemble, povm) -> float:
    """sum_x q_x tr(M_x rho_x) for a POVM indexed like the ensemble."""
    return float(sum(q * np.trace(np.asarray(m) @ rho.matrix).real
                     for q, rho, m in zip(ensemble.priors, ensemble.states, povm)))


def _complementary(ensemble: Ensemble, K: np.ndarray):
    d = ensemble.dim
    out = []
    for x in range(ensemble.n):
        gap = K - ensemble.weighted(x)
        r = float(np.trace(gap).real)
        if r <= ZERO_WEIGHT_TOL:
            out.append((max(r, 0.0), DensityMatrix.maximally_mixed(d)))
        else:
            out.append((r, DensityMatrix.nearest(gap / r)))
    return tuple(out)


def _solution(ensemble: Ensemble, K: np.ndarray, povm: Povm) -> DiscriminationSolution:
    K = 0.5 * (K + K.conj().T)
    p = float(np.trace(K).real)
    return DiscriminationSolution(
        K=HermitianOperator(K),
        complementary=_complementary(ensemble, K),
        povm=povm,
        p_guess=p,
        r_mean=p - 1.0 / ensemble.n,
    )


def helstrom_two_state(ensemble: Ensemble) -> DiscriminationSolution:
    """Closed-form optimum for two states.

    The measurement projects onto the non-negative and negative eigenspaces
    of ``q1 rho1 - q2 rho2``; zero eigenvalues go to outcome 1.
    """
    if ensemble.n != 2:
        raise ValueError(f"Helstrom solution needs exactly two states, got {ensemble.n}")
    a, b = ensemble.weighted(0), ensemble.weighted(1)
    delta = a - b
    w, v = eigh_hermitian(delta)
    pos = v[:, w >= 0]
    m1 = pos @ pos.conj().T
    m2 = np.eye(ensemble.dim) - m1
    abs_delta = (v * np.abs(w)) @ v.conj().T
    K = 0.5 * (a + b + abs_delta)
    return _solution(ensemble, K, Povm([m1, m2]))


# --- dual solver ------------------------------------------------------------
#
# For a qubit, K = (t I + c.sigma)/2 and q_x rho_x = (q_x I + v_x.sigma)/2 with
# v_x = q_x r_x. Then K >= q_x rho_x  <=>  t - q_x >= |c - v_x|, and tr K = t.


def _min_gap_eigenvalues(coords: np.ndarray, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """lambda_min(K - q_x rho_x) for each x, K given by its Pauli coordinates."""
    t, c = coords[0], coords[1:]
    return 0.5 * ((t - q) - np.linalg.norm(c - v, axis=1))


def _penalty_simplex(q: np.ndarray, v: np.ndarray, *, rounds: int = 8, beta0: float = 10.0,
                     growth: float = 10.0) -> np.ndarray:
    """Quadratic-penalty minimization of tr K with a Nelder-Mead inner loop."""
    coords = np.zeros(4)
    coords[0] = 2 * (q.max() + 0.1)
    beta = beta0
    for _ in range(rounds):
        def objective(z, beta=beta):
            viol = np.minimum(0.0, _min_gap_eigenvalues(z, q, v))
            return z[0] + beta * float(viol @ viol)

        res = minimize(objective, coords, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000,
                                "maxfev": 40000, "adaptive": True})
        coords = res.x
        beta *= growth
    return coords


def _polish(q: np.ndarray, v: np.ndarray, coords: np.ndarray):
    for active_tol in (1e-5, 1e-7, 1e-9):
        refined = _polish_active(q, v, coords, active_tol)
        if refined is not None:
            return refined
    return None


def _polish_active(q: np.ndarray, v: np.ndarray, coords: np.ndarray, active_tol: float):
    """Solve the active constraints t - q_x = |c - v_x| exactly.

    At the optimum the centre c lies in the affine hull of the active
    points v_x, so the unknowns are (t, affine coordinates of c).
    Returns None when the refined point fails the optimality check.
    """
    t0, c0 = coords[0], coords[1:]
    slack = (t0 - q) - np.linalg.norm(c0 - v, axis=1)
    active = np.flatnonzero(slack <= active_tol * max(1.0, t0))
    if active.size == 0:
        return None
    base = v[active[0]]
    diffs = v[active[1:]] - base
    if diffs.size:
        _, s, vt = np.linalg.svd(diffs, full_matrices=False)
        basis = vt[s > 1e-12 * max(1.0, s[0])]
    else:
        basis = np.zeros((0, 3))
    beta = basis @ (c0 - base)
    z = np.concatenate([[t0], beta])
    for _ in range(100):
        c = base + z[1:] @ basis
        diff = c - v[active]
        dist = np.linalg.norm(diff, axis=1)
        f = dist + q[active] - z[0]
        if basis.shape[0] and np.any(dist < 1e-300):
            return None
        jac = np.empty((active.size, 1 + basis.shape[0]))
        jac[:, 0] = -1.0
        if basis.shape[0]:
            jac[:, 1:] = (diff / dist[:, None]) @ basis.T
        step, *_ = np.linalg.lstsq(jac, -f, rcond=None)
        z = z + step
        if np.max(np.abs(step)) < 1e-15:
            break
    c = base + z[1:] @ basis
    f = np.linalg.norm(c - v[active], axis=1) + q[active] - z[0]
    if np.max(np.abs(f)) > 1e-12:
        return None
    t = float(np.max(q + np.linalg.norm(c - v, axis=1)))
    if t > z[0] + 1e-12:
        return None
    # optimality: 0 must lie in the convex hull of the active unit directions
    dist = np.linalg.norm(c - v[active], axis=1)
    if np.any(dist <= 1e-12):
        return t, c
    dirs = (c - v[active]) / dist[:, None]
    a = np.vstack([dirs.T, np.ones(active.size)])
    lam, resid = nnls(a, np.r_[0.0, 0.0, 0.0, 1.0])
    if resid > 1e-9:
        return None
    return t, c


def _coords_to_K(t: float, c: np.ndarray) -> np.ndarray:
    return 0.5 * (t * IDENTITY2 + sum(ci * p for ci, p in zip(c, PAULIS)))


def solve_dual(ensemble: Ensemble) -> DiscriminationSolution:
    """Minimize tr K subject to K >= q_x rho_x for a qubit ensemble."""
    if ensemble.dim != 2:
        raise ValueError("the dual solver handles qubit ensembles only")
    if ensemble.n > MAX_STATES:
        raise ValueError(f"at most {MAX_STATES} states are supported, got {ensemble.n}")
    q = np.array(ensemble.priors)
    v = np.array([q_x * operator_bloch(rho) for q_x, rho in zip(q, ensemble.states)])

    coords = _penalty_simplex(q, v)
    refined = _polish(q, v, coords)
    if refined is None:
        log.debug("active-set polish rejected; keeping penalty solution")
        c = coords[1:]
        t = float(np.max(q + np.linalg.norm(c - v, axis=1)))
        if t > coords[0] + 1e-6:
            raise SolverError("penalty iterate is far from feasible", t - coords[0])
    else:
        t, c = refined
    K = _coords_to_K(t, c)
    povm = extract_povm(K, ensemble)
    return _solution(ensemble, K, povm)


def extract_povm(K, ensemble: Ensemble) -> Povm:
    """POVM supported on the kernels of K - q_x rho_x, completed by NNLS."""
    K = np.asarray(K, dtype=complex)
    d = ensemble.dim
    candidates: list[tuple[int, np.ndarray]] = []
    for x in range(ensemble.n):
        w, vecs = eigh_hermitian(K - ensemble.weighted(x))
        if w[0] < -KERNEL_TOL:
            raise DegenerateSolutionError(f"K does not dominate state {x}", -float(w[0]))
        for k in np.flatnonzero(w <= KERNEL_TOL):
            u = vecs[:, k]
            candidates.append((x, np.outer(u, u.conj())))
    if not candidates:
        raise DegenerateSolutionError("no kernel vectors found", float("inf"))
    target = np.eye(d, dtype=complex).reshape(-1)
    a = np.array([np.concatenate([p.reshape(-1).real, p.reshape(-1).imag]) for _, p in candidates]).T
    b = np.concatenate([target.real, target.imag])
    weights, _ = nnls(a, b)
    elements = [np.zeros((d, d), dtype=complex) for _ in range(ensemble.n)]
    for w, (x, p) in zip(weights, candidates):
        elements[x] += w * p
    residual = float(np.max(np.abs(sum(elements) - np.eye(d))))
    if residual > KERNEL_TOL:
        raise DegenerateSolutionError("kernel projectors cannot resolve the identity", residual)
    # absorb the (tiny) completeness residual so the POVM is exact
    total = sum(elements)
    w_tot, v_tot = np.linalg.eigh(total)
    inv_sqrt = (v_tot / np.sqrt(w_tot)) @ v_tot.conj().T
    elements = [inv_sqrt @ m @ inv_sqrt for m in elements]
    return Povm([0.5 * (m + m.conj().T) for m in elements])


@dataclass(frozen=True)
class ConditionCheck:
    passed: bool
    residual: float


@dataclass(frozen=True)
class CertificateReport:
    decomposition: ConditionCheck
    slackness: ConditionCheck
    povm_validity: ConditionCheck
    congruence: ConditionCheck

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions().values())

    def conditions(self) -> dict[str, ConditionCheck]:
        return {"decomposition": self.decomposition, "slackness": self.slackness,
                "povm_validity": self.povm_validity, "congruence": self.congruence}


def verify_certificate(ensemble: Ensemble, sol: DiscriminationSolution,
                       tol: float = CERT_TOL) -> CertificateReport:
    """Check a solution against the optimality conditions; never raises."""
    K = np.asarray(sol.K)
    d = ensemble.dim
    parts = [ensemble.weighted(x) + r * s.matrix for x, (r, s) in enumerate(sol.complementary)]

    dec = max(float(np.max(np.abs(K - p))) for p in parts)
    neg_r = max(0.0, -min(sol.r))
    sigma_psd = max(0.0, -min(float(s.eigenvalues()[0]) for s in sol.sigmas))
    dec_res = max(dec, neg_r, sigma_psd)

    slack = 0.0
    for (r, s), m in zip(sol.complementary, sol.povm):
        if r > tol:
            slack = max(slack, float(np.trace(np.asarray(m) @ s.matrix).real))

    elements = [np.asarray(m) for m in sol.povm]
    povm_res = float(np.max(np.abs(sum(elements) - np.eye(d))))
    povm_res = max(povm_res, max(0.0, -min(float(eigh_hermitian(m)[0][0]) for m in elements)))
    if len(elements) != ensemble.n:
        povm_res = float("inf")

    cong = 0.0
    rs = [r * s.matrix for r, s in sol.complementary]
    for x in range(ensemble.n):
        for y in range(x + 1, ensemble.n):
            lhs = ensemble.weighted(x) - ensemble.weighted(y)
            cong = max(cong, float(np.max(np.abs(lhs - (rs[y] - rs[x])))))

    return CertificateReport(
        decomposition=ConditionCheck(dec_res <= tol, dec_res),
        slackness=ConditionCheck(slack <= tol, slack),
        povm_validity=ConditionCheck(povm_res <= tol, povm_res),
        congruence=ConditionCheck(cong <= tol, cong),
    )


@dataclass(frozen=True)
class OmpReport:
    is_omp: bool
    kappa: float
    max_residual: float


def omp_check(original: Ensemble, transformed: Ensemble, tol: float = OMP_TOL) -> OmpReport:
    """Test whether pairwise weighted differences all shrink by one common kappa in (0, 1].

    kappa is the least-squares ratio over all pairs; this certifies the
    sufficient condition for measurement preservation only.
    """
    if original.n != transformed.n:
        raise ValueError("ensembles have different sizes")
    if max(abs(a - b) for a, b in zip(original.priors, transformed.priors)) > 1e-12:
        raise ValueError("ensembles have different priors")
    pairs = [(x, y) for x in range(original.n) for y in range(x + 1, original.n)]
    before = [original.weighted(x) - original.weighted(y) for x, y in pairs]
    after = [transformed.weighted(x) - transformed.weighted(y) for x, y in pairs]
    num = sum(np.vdot(b, a).real for b, a in zip(before, after))
    den = sum(np.vdot(b, b).real for b in before)
    kappa = float(num / den) if den > 0 else 1.0
    residual = max(float(np.max(np.abs(a - kappa * b))) for b, a in zip(before, after))
    is_omp = residual <= tol and 0.0 < kappa <= 1.0 + tol
    return OmpReport(is_omp, kappa, residual)


def predicted_guess_after_twirl(p_id: float, n: int, eta: float) -> float:
    """1/n + (1 - eta)(p_id - 1/n): guessing probability after depolarizing by eta."""
    if n < 2:
        raise ValueError("need at least two states")
    if not (1.0 / n - 1e-12 <= p_id <= 1.0 + 1e-12):
        raise ValueError(f"p_id must lie in [1/n, 1], got {p_id}")
    if not (-1e-12 <= 1.0 - eta <= 1.0 + 1e-12):
        raise ValueError(f"1 - eta must lie in [0, 1], got eta = {eta}")
    return 1.0 / n + (1.0 - eta) * (p_id - 1.0 / n)


def min_entropy(p_guess: float) -> float:
    if not 0.0 < p_guess <= 1.0:
        raise ValueError(f"guessing probability must lie in (0, 1], got {p_guess}")
    return -math.log2(p_guess)


def brute_force_two_state(ensemble: Ensemble, grid: int = 400) -> float:
    """Best success probability over projective qubit measurements on a sphere grid.

    Includes the trivial measurements {I, 0} and {0, I}. A lower bound on the
    optimum, within O(1/grid^2) of it.
    """
    if ensemble.n != 2 or ensemble.dim != 2:
        raise ValueError("brute force handles two qubit states only")
    theta = np.linspace(0.0, np.pi, grid)
    phi = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    kets = np.stack([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)], axis=-1).reshape(-1, 2)
    r1, r2 = (s.matrix for s in ensemble.states)
    q1, q2 = ensemble.priors
    p1 = np.einsum("ki,ij,kj->k", kets.conj(), r1, kets).real
    p2 = np.einsum("ki,ij,kj->k", kets.conj(), r2, kets).real
    best = float(np.max(q1 * p1 + q2 * (1.0 - p2)))
    return max(best, q1, q2)
