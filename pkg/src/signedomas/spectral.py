"""Dense symmetric eigensolver and zero-eigenspace extraction.

The matrices handled here are Laplacians of small graphs (a few dozen rows at
most), so a cyclic Jacobi method is used.  It is deterministic, keeps the
eigenvector matrix orthonormal to working precision and resolves the
repeated zero eigenvalues of edge Laplacians without trouble.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NegativeEigenvalue, NotConnected, NotSymmetric
from .signed_graph import BalanceResult, SignedGraph, is_connected

OFF_DIAGONAL_RTOL = 1e-12
MAX_SWEEPS = 100


def default_tol(A: np.ndarray) -> float:
    """Zero threshold 1e-9 * max(1, ||A||_inf) used for rank decisions."""
    A = np.asarray(A, dtype=float)
    norm = np.abs(A).sum(axis=1).max() if A.size else 0.0
    return 1e-9 * max(1.0, float(norm))


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    tol_used: float


@dataclass(frozen=True)
class ZeroEigenspace:
    """Count ``xi`` of zero eigenvalues and an orthonormal basis (as columns)."""

    xi: int
    basis: np.ndarray

    def vectors(self):
        return [self.basis[:, i] for i in range(self.xi)]


def symmetric_eigen(A, tol: float | None = None) -> EigenDecomposition:
    """Eigenvalues in nondecreasing order with orthonormal eigenvectors.

    Cyclic-by-row Jacobi rotations, stopping once the off-diagonal Frobenius
    norm drops below 1e-12 * ||A||_F.  Each eigenvector is normalised so its
    largest-magnitude entry (first one on ties) is positive.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {A.shape}")
    if tol is None:
        tol = default_tol(A)
    n = A.shape[0]
    if n and np.abs(A - A.T).max() > tol:
        raise NotSymmetric(f"asymmetry {np.abs(A - A.T).max():.3e} exceeds tolerance {tol:.3e}")
    a = 0.5 * (A + A.T)
    v = np.eye(n)
    threshold = OFF_DIAGONAL_RTOL * np.linalg.norm(a)
    for _ in range(MAX_SWEEPS):
        if np.linalg.norm(a - np.diag(np.diag(a))) <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) + 1e8 * abs(apq) == abs(diff):
                    # a_pq negligible next to the diagonal gap: t ~ a_pq / diff, no overflow
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                _rotate(a, v, p, q, c, s)
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    for k in range(n):
        i = int(np.argmax(np.abs(v[:, k])))
        if v[i, k] < 0:
            v[:, k] = -v[:, k]
    return EigenDecomposition(w, v, float(tol))


def _rotate(a, v, p, q, c, s):
    # a <- J^T a J with J = [[c, s], [-s, c]] in the (p, q) plane
    cp, cq = a[:, p].copy(), a[:, q].copy()
    a[:, p] = c * cp - s * cq
    a[:, q] = s * cp + c * cq
    rp, rq = a[p, :].copy(), a[q, :].copy()
    a[p, :] = c * rp - s * rq
    a[q, :] = s * rp + c * rq
    a[p, q] = a[q, p] = 0.0
    vp, vq = v[:, p].copy(), v[:, q].copy()
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


def eigenvalues(A, tol: float | None = None) -> np.ndarray:
    return symmetric_eigen(A, tol).eigenvalues


def rank_of(A, tol: float | None = None) -> int:
    """Numerical rank: magnitudes above tol * max(1, largest magnitude).

    Symmetric input uses the Jacobi eigenvalues; anything else uses singular
    values.  ``tol`` defaults to 1e-9.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    tol = 1e-9 if tol is None else tol
    if A.shape[0] == A.shape[1] and np.array_equal(A, A.T):
        mags = np.abs(symmetric_eigen(A, tol=np.inf).eigenvalues)
    else:
        mags = np.linalg.svd(A, compute_uv=False)
    cutoff = tol * max(1.0, float(mags.max()))
    return int(np.count_nonzero(mags > cutoff))


def zero_eigenspace(L_es, tol: float | None = None) -> ZeroEigenspace:
    """Zero eigenvalues of a positive semidefinite matrix and their eigenvectors.

    ``tol`` is an absolute threshold; it defaults to ``default_tol(L_es)``.
    """
    L_es = np.asarray(L_es, dtype=float)
    if tol is None:
        tol = default_tol(L_es)
    eig = symmetric_eigen(L_es, tol)
    if eig.eigenvalues.size and eig.eigenvalues[0] < -tol:
        raise NegativeEigenvalue(f"smallest eigenvalue {eig.eigenvalues[0]:.3e} is negative")
    mask = np.abs(eig.eigenvalues) <= tol
    return ZeroEigenspace(int(mask.sum()), eig.eigenvectors[:, mask])


def expected_zero_count(g: SignedGraph, balance: BalanceResult) -> int:
    """M - N + 1 zero edge-Laplacian eigenvalues if balanced, M - N otherwise."""
    if not is_connected(g):
        raise NotConnected("the zero-eigenvalue count formula needs a connected graph")
    return g.n_edges - g.n_nodes + (1 if balance.balanced else 0)
