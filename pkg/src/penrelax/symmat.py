"""Dense symmetric-matrix utilities: packed vectorization, eigenvalues, Lyapunov solves.

Symmetric matrices are plain square ``numpy.ndarray`` objects that are exactly
symmetric (``M[i, j] == M[j, i]`` bitwise); packed vectors are 1-D arrays of
length ``n*(n+1)/2`` holding the upper triangle in row-major order, diagonal
included, with no scaling of off-diagonal entries.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg


def sym_part(M: np.ndarray) -> np.ndarray:
    """Return (M + M.T)/2, which is exactly symmetric in floating point."""
    M = np.asarray(M, dtype=float)
    return (M + M.T) / 2.0


def _require_symmetric(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{what} must be square, got shape {M.shape}")
    if not np.array_equal(M, M.T):
        raise ValueError(f"{what} is not symmetric")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{what} has non-finite entries")
    return M


def packed_length(n: int) -> int:
    """Number of unique entries of an n x n symmetric matrix."""
    return n * (n + 1) // 2


def side_of_packed(length: int) -> int:
    """Matrix side n such that n(n+1)/2 == length, or raise ValueError."""
    n = int((math.isqrt(8 * length + 1) - 1) // 2)
    if packed_length(n) != length:
        raise ValueError(f"length {length} is not of the form n(n+1)/2")
    return n


def svec(M: np.ndarray) -> np.ndarray:
    """Pack a symmetric matrix into its upper triangle, row-major.

    Parameters
    ----------
    M : (n, n) ndarray
        Exactly symmetric matrix.

    Returns
    -------
    (n*(n+1)/2,) ndarray
        ``[M[0,0], M[0,1], ..., M[0,n-1], M[1,1], ...]`` — unscaled.
    """
    M = _require_symmetric(M)
    i, j = np.triu_indices(M.shape[0])
    return M[i, j].copy()


def smat(v: np.ndarray) -> np.ndarray:
    """Unpack a row-major upper-triangle vector into the full symmetric matrix."""
    v = np.asarray(v, dtype=float).ravel()
    n = side_of_packed(v.size)
    M = np.zeros((n, n))
    i, j = np.triu_indices(n)
    M[i, j] = v
    M[j, i] = v
    return M


def solve_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve the continuous Lyapunov equation A P + P A' + Q = 0.

    Parameters
    ----------
    A : (n, n) ndarray
        Square matrix with no eigenvalue pair satisfying ``lam_i + lam_j == 0``
        (always true for Hurwitz A).
    Q : (n, n) ndarray
        Symmetric right-hand side.

    Returns
    -------
    (n, n) ndarray
        Symmetric P with residual ``||A P + P A' + Q||_F`` bounded by
        ``1e-8 * (1 + ||Q||_F + ||A||_F * ||P||_F)``.

    Raises
    ------
    numpy.linalg.LinAlgError
        If the eigenvalue condition fails (singular pencil) or the residual
        bound cannot be met.
    """
    A = np.asarray(A, dtype=float)
    Q = _require_symmetric(Q, "Q")
    if A.shape != Q.shape:
        raise ValueError(f"A and Q must share dimension, got {A.shape} vs {Q.shape}")
    lam = np.linalg.eigvals(A)
    pair_sums = np.abs(lam[:, None] + lam[None, :])
    scale = max(1.0, float(np.abs(lam).max(initial=0.0)))
    if pair_sums.min() <= 1e-12 * scale:
        raise np.linalg.LinAlgError(
            "Lyapunov equation is singular: A has an eigenvalue pair with lam_i + lam_j == 0"
        )
    P = sym_part(scipy.linalg.solve_continuous_lyapunov(A, -Q))
    residual = np.linalg.norm(A @ P + P @ A.T + Q, "fro")
    bound = 1e-8 * (1.0 + np.linalg.norm(Q, "fro") + np.linalg.norm(A, "fro") * np.linalg.norm(P, "fro"))
    if residual > bound:
        raise np.linalg.LinAlgError(
            f"Lyapunov solve residual {residual:.3e} exceeds bound {bound:.3e}"
        )
    return P


def max_real_eig(A: np.ndarray) -> float:
    """Largest real part over the eigenvalues of a (generally nonsymmetric) matrix."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return float(np.linalg.eigvals(A).real.max())


def min_eig_sym(M: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix (symmetric eigensolver)."""
    M = _require_symmetric(M)
    return float(np.linalg.eigvalsh(M)[0])


def max_eig_sym(M: np.ndarray) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    M = _require_symmetric(M)
    return float(np.linalg.eigvalsh(M)[-1])
