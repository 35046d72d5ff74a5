"""Strict Lyapunov certificates for signed edge Laplacians and dwell-time checks.

For a spanning tree the edge Laplacian is positive definite and the ordinary
Lyapunov equation ``P L + L^T P = Q`` has a positive definite solution.  With
cycles, L has ``xi`` zero eigenvalues; adding ``alpha_i v_i v_i^T`` on that
zero eigenspace gives a positive definite R, and the solution of
``P R + R^T P = Q`` is the certificate for the deflated equation.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DeflationInsufficient,
    DimensionMismatch,
    NonMonotoneSchedule,
    NotConnected,
    NumericalError,
    SingularEdgeLaplacian,
)
from .signed_graph import SignedGraph, edge_laplacian, is_connected
from .spectral import ZeroEigenspace, default_tol, symmetric_eigen, zero_eigenspace


def _is_positive_definite(A: np.ndarray, shift: float = 0.0) -> bool:
    """True iff lambda_min(A) > shift, decided by a Cholesky factorisation."""
    try:
        np.linalg.cholesky(A - shift * np.eye(A.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True


def _duplication(m: int):
    iu = np.triu_indices(m)
    D = np.zeros((m * m, len(iu[0])))
    for u, (i, j) in enumerate(zip(*iu)):
        D[i * m + j, u] = 1.0
        D[j * m + i, u] = 1.0
    return iu, D


def solve_symmetric_lyapunov(A, Q) -> np.ndarray:
    """Symmetric P with P A + A^T P = Q.

    The m(m+1)/2 upper-triangular entries of P are the unknowns; the same
    entries of the left-hand side give a square linear system, solved by LU
    with partial pivoting.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    m = A.shape[0]
    if A.shape != (m, m) or Q.shape != (m, m):
        raise DimensionMismatch(f"A is {A.shape} but Q is {Q.shape}")
    if m == 0:
        return np.zeros((0, 0))
    iu, D = _duplication(m)
    eye = np.eye(m)
    # row-major vec: vec(P A) = (I kron A^T) vec(P), vec(A^T P) = (A^T kron I) vec(P)
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    S = K[iu[0] * m + iu[1]] @ D
    try:
        p = np.linalg.solve(S, Q[iu])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Lyapunov operator is singular: {exc}") from None
    P = np.zeros((m, m))
    P[iu] = p
    return P + np.triu(P, 1).T


def _check_q(Q, m):
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (m, m):
        raise DimensionMismatch(f"Q must be {m}x{m}, got {Q.shape}")
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ValueError("Q must be symmetric")
    if not _is_positive_definite(Q):
        raise ValueError("Q must be positive definite")
    return Q


def solve_lyapunov_tree(L_es, Q, tol: float | None = None) -> np.ndarray:
    L_es = np.asarray(L_es, dtype=float)
    m = L_es.shape[0]
    Q = _check_q(Q, m)
    if tol is None:
        tol = default_tol(L_es)
    if m and not _is_positive_definite(L_es, tol):
        raise SingularEdgeLaplacian("edge Laplacian has an eigenvalue <= tol; graph is not a tree")
    return solve_symmetric_lyapunov(L_es, Q)


def deflated_matrix(L_es, alphas: Sequence[float], zs: ZeroEigenspace) -> np.ndarray:
    """R = L_es + sum_i alpha_i v_i v_i^T."""
    R = np.array(L_es, dtype=float)
    for a, v in zip(alphas, zs.vectors()):
        R += a * np.outer(v, v)
    return R


def deflated_residual(P, L_es, Q, alphas, zs: ZeroEigenspace) -> float:
    """Max-norm defect of P L + L^T P = Q - sum alpha_i (P v v^T + v v^T P)."""
    P = np.asarray(P)
    L_es = np.asarray(L_es)
    rhs = np.array(Q, dtype=float)
    for a, v in zip(alphas, zs.vectors()):
        pv = P @ v
        rhs -= a * (np.outer(pv, v) + np.outer(v, pv))
    lhs = P @ L_es + L_es.T @ P
    return float(np.abs(lhs - rhs).max()) if lhs.size else 0.0


def solve_lyapunov_deflated(L_es, Q, alphas: Sequence[float], zs: ZeroEigenspace,
                            tol: float | None = None) -> np.ndarray:
    """Positive definite P for the deflated Lyapunov equation.

    Raises ``DeflationInsufficient`` when R is not positive definite, which
    is what happens if ``zs`` misses a zero eigenvector of ``L_es``.
    """
    L_es = np.asarray(L_es, dtype=float)
    m = L_es.shape[0]
    Q = _check_q(Q, m)
    alphas = [float(a) for a in alphas]
    if len(alphas) != zs.xi:
        raise DimensionMismatch(f"{len(alphas)} alphas for {zs.xi} zero eigenvectors")
    if zs.xi and zs.basis.shape[0] != m:
        raise DimensionMismatch("zero-eigenspace basis does not match the edge Laplacian size")
    if any(a <= 0 for a in alphas):
        raise ValueError("alphas must be positive")
    if tol is None:
        tol = default_tol(L_es)
    R = deflated_matrix(L_es, alphas, zs)
    if m and not _is_positive_definite(R, tol):
        raise DeflationInsufficient(
            f"R = L_es + sum alpha v v^T is not positive definite with {zs.xi} deflation terms")
    return solve_symmetric_lyapunov(R, Q)


@dataclass(frozen=True)
class LyapunovCertificate:
    """Certificate V(e) = e^T P e / 2 for one mode, decaying at rate ``gamma``."""

    P: np.ndarray
    Q: np.ndarray
    alphas: tuple[float, ...]
    zero_basis: ZeroEigenspace
    gamma: float
    residual: float
    k1: float
    lambda_min_P: float
    lambda_max_P: float

    @property
    def xi(self) -> int:
        return self.zero_basis.xi

    def residual_ok(self) -> bool:
        return self.residual <= 1e-8 * max(1.0, float(np.abs(self.Q).max()))

    def value(self, e) -> float:
        e = np.asarray(e, dtype=float)
        return 0.5 * float(np.sum(e * (self.P @ e)))


def certificate_for_mode(g: SignedGraph, k1: float = 1.0, Q=None, alphas=None,
                         tol: float | None = None) -> LyapunovCertificate:
    """Build P for one mode and its decay rate.

    ``gamma = k1 * lambda_min(Q) / lambda_max(P)``, which is
    ``k1 / lambda_max(P)`` for the default Q = I.
    """
    if not is_connected(g):
        raise NotConnected("a Lyapunov certificate needs a connected mode graph")
    if k1 <= 0:
        raise ValueError("k1 must be positive")
    L = edge_laplacian(g)
    m = g.n_edges
    Q = np.eye(m) if Q is None else np.asarray(Q, dtype=float)
    zs = zero_eigenspace(L, tol)
    if zs.xi == 0:
        alphas = ()
        P = solve_lyapunov_tree(L, Q, tol)
    else:
        alphas = (1.0,) * zs.xi if alphas is None else tuple(float(a) for a in alphas)
        P = solve_lyapunov_deflated(L, Q, alphas, zs, tol)
    residual = deflated_residual(P, L, Q, alphas, zs)
    if m:
        p_eig = symmetric_eigen(P, tol=1e-8 * max(1.0, float(np.abs(P).max()))).eigenvalues
        q_min = float(symmetric_eigen(Q).eigenvalues[0])
        lmin, lmax = float(p_eig[0]), float(p_eig[-1])
        if lmin <= 0:
            raise NumericalError(f"Lyapunov solution is not positive definite (lambda_min={lmin:.3e})")
        gamma = k1 * q_min / lmax
    else:
        lmin = lmax = 0.0
        gamma = math.inf
    return LyapunovCertificate(P, Q, tuple(alphas), zs, gamma, residual, float(k1), lmin, lmax)


def transition_gain(cert_to: LyapunovCertificate, cert_from: LyapunovCertificate) -> float:
    """Omega = 2 lambda_max(P_to) / lambda_min(P_from)."""
    return 2.0 * cert_to.lambda_max_P / cert_from.lambda_min_P


def min_dwell_time(omega: float, gamma: float) -> float:
    """Smallest admissible average dwell time max(0, ln(Omega) / gamma)."""
    if omega <= 0 or gamma <= 0:
        raise ValueError("Omega and gamma must both be positive")
    return max(0.0, math.log(omega) / gamma)


@dataclass(frozen=True)
class TransitionRecord:
    from_mode: int
    to_mode: int
    count: int
    active_time: float
    omega: float
    tau_min: float
    actual_dwell: float
    admissible: bool
    thetas: tuple[float, ...] = ()


@dataclass(frozen=True)
class DwellTimeReport:
    transitions: tuple[TransitionRecord, ...]
    overall: bool
    n_hat: float
    mode_ids: tuple[int, ...] = field(default=())


def schedule_statistics(mode_ids: Sequence[int], start_times: Sequence[float], t_end: float):
    """Switch counts per (from, to) pair and total active time per mode on [0, t_end).

    Consecutive entries with the same id are not counted as switches.
    """
    if not start_times or start_times[0] != 0:
        raise NonMonotoneSchedule("the first mode must start at t = 0")
    bounds = list(start_times) + [t_end]
    for a, b in zip(bounds, bounds[1:]):
        if not b > a:
            raise NonMonotoneSchedule(f"mode start times must increase strictly and precede t_end ({a} -> {b})")
    counts: dict[tuple[int, int], int] = defaultdict(int)
    active: dict[int, float] = defaultdict(float)
    for i, mid in enumerate(mode_ids):
        active[mid] += bounds[i + 1] - bounds[i]
        if i and mode_ids[i - 1] != mid:
            counts[(mode_ids[i - 1], mid)] += 1
    return dict(counts), dict(active)


def verify_schedule(scenario, certificates: Sequence[LyapunovCertificate], n_hat: float = 1.0,
                    trace=None) -> DwellTimeReport:
    """Check every transition type against the average-dwell-time condition.

    ``certificates`` is aligned with ``scenario.modes``.  A transition type
    (from, to) occurring N times is admissible when
    ``N <= n_hat + T_to / tau_min`` with ``tau_min = ln(Omega) / gamma_to``.
    When a simulation trace is given, the jump offsets Theta are reported for
    each switching instant.
    """
    from .switched_sim import mode_identities

    if len(certificates) != len(scenario.modes):
        raise DimensionMismatch(f"{len(certificates)} certificates for {len(scenario.modes)} modes")
    ids = mode_identities(scenario)
    counts, active = schedule_statistics(ids, [m.start_time for m in scenario.modes], scenario.t_end)
    cert_of = {}
    for mid, cert in zip(ids, certificates):
        cert_of.setdefault(mid, cert)

    thetas: dict[tuple[int, int], list[float]] = defaultdict(list)
    if trace is not None:
        for jump in trace.jumps:
            key = (ids[jump.from_mode], ids[jump.to_mode])
            phi = np.asarray(jump.transition.Phi)
            thetas[key].append(cert_of[key[1]].lambda_max_P * float(np.sum(phi * phi)))

    order = []
    for prev, cur in zip(ids, ids[1:]):
        if prev != cur and (prev, cur) not in order:
            order.append((prev, cur))
    records = []
    for src, dst in order:
        n = counts[(src, dst)]
        omega = transition_gain(cert_of[dst], cert_of[src])
        tau = min_dwell_time(omega, cert_of[dst].gamma)
        t_active = active[dst]
        ok = True if tau == 0 else n <= n_hat + t_active / tau
        records.append(TransitionRecord(src, dst, n, t_active, omega, tau, t_active / n, ok,
                                        tuple(thetas.get((src, dst), ()))))
    return DwellTimeReport(tuple(records), all(r.admissible for r in records), float(n_hat), tuple(ids))
