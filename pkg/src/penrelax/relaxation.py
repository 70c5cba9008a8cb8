"""Penalized convex relaxations of BMI problems over three lifting cones.

The nonconvex constraint ``p(x, x x') <= 0`` is relaxed by introducing a
symmetric lift ``X`` and requiring ``H = X - x x'`` to lie in one of three
convex cones:

* ``SDP``        — H positive semidefinite;
* ``SOCP``       — nonnegative diagonal and all 2x2 principal minors of H
  nonnegative (``H_ii H_jj >= H_ij^2``);
* ``PARABOLIC``  — nonnegative diagonal and ``H_ii + H_jj >= 2 |H_ij|``.

The relaxation minimizes ``c'x + eta * (tr X - 2 anchor'x + anchor'anchor)``;
the penalty drives ``X`` toward ``x x'`` near the anchor.  Decision variables
of the emitted conic program are ``z = [x, svec(X)]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bmi import BmiProblem
from .conic import Block, ConeType, ConicProgram, block
from .symmat import packed_length, svec


class ConeKind(enum.Enum):
    SDP = "sdp"
    SOCP = "socp"
    PARABOLIC = "parabolic"


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weight and anchor point.

    ``eta == 0`` yields the plain (unpenalized) relaxation; the sequential
    driver requires a strictly positive weight.
    """

    eta: float
    anchor: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ValueError("eta must be a finite nonnegative real")
        anchor = np.asarray(self.anchor, dtype=float).ravel()
        if not np.all(np.isfinite(anchor)):
            raise ValueError("anchor must be finite")
        object.__setattr__(self, "anchor", anchor)


def tri_index(n: int, i: int, j: int) -> int:
    """Position of entry (i, j), i <= j, in the row-major upper-triangle packing."""
    if not 0 <= i <= j < n:
        raise ValueError(f"need 0 <= i <= j < {n}, got ({i}, {j})")
    return i * n - i * (i - 1) // 2 + (j - i)


def split_primal(z: np.ndarray, n: int):
    """Split a conic primal vector into (x, X) with X unpacked from svec."""
    from .symmat import smat

    z = np.asarray(z, dtype=float).ravel()
    if z.size != n + packed_length(n):
        raise ValueError(f"primal has length {z.size}, expected {n + packed_length(n)}")
    return z[:n].copy(), smat(z[n:])


def penalty_value(x: np.ndarray, X: np.ndarray, pen: PenaltyConfig) -> float:
    """eta * (tr X - 2 anchor'x + anchor'anchor)."""
    x = np.asarray(x, dtype=float).ravel()
    a = pen.anchor
    if a.size != x.size:
        raise ValueError("anchor and x lengths differ")
    X = np.asarray(X, dtype=float)
    return float(pen.eta * (np.trace(X) - 2.0 * (a @ x) + a @ a))


def _rsoc_quadratic(n: int, lin_rows: list, x_row: list) -> Block:
    """Rotated-SOC block for  (linear form in X) >= (linear form in x)^2.

    ``lin_rows`` lists (column, coefficient) pairs of the X part (columns are
    absolute positions in z); ``x_row`` the same for the x part.
    """
    nvars = n + packed_length(n)
    F = sp.lil_matrix((3, nvars))
    for col, v in lin_rows:
        F[0, col] = v
    for col, v in x_row:
        F[2, col] = v
    g = np.array([0.0, 0.5, 0.0])
    return block(ConeType.ROTATED_SOC, 3, F, g)


def encode_cone(cone: ConeKind, n: int) -> list:
    """Constraint blocks tying the lift to the base variables, for z = [x, svec(X)].

    Returns the blocks expressing ``X - x x'`` membership in the chosen cone
    via exact conic reformulations (Schur-complement blocks for SDP/SOCP,
    rotated second-order cones for the quadratic conditions).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    nvars = n + packed_length(n)
    xoff = 0

    def Xcol(i, j):
        return n + tri_index(n, min(i, j), max(i, j))

    blocks = []
    if cone is ConeKind.SDP:
        side = n + 1
        F = sp.lil_matrix((packed_length(side), nvars))
        g = np.zeros(packed_length(side))
        r = 0
        for i in range(side):
            for j in range(i, side):
                if i < n and j < n:
                    F[r, Xcol(i, j)] = 1.0
                elif i < n and j == n:
                    F[r, xoff + i] = 1.0
                else:  # (n, n) corner
                    g[r] = 1.0
                r += 1
        blocks.append(block(ConeType.PSD, side, F, g))
        return blocks

    # Diagonal conditions X_ii >= x_i^2 are shared by SOCP and PARABOLIC.
    for i in range(n):
        blocks.append(_rsoc_quadratic(n, [(Xcol(i, i), 1.0)], [(xoff + i, 1.0)]))

    if cone is ConeKind.SOCP:
        for i in range(n):
            for j in range(i + 1, n):
                F = sp.lil_matrix((6, nvars))
                g = np.zeros(6)
                F[0, Xcol(i, i)] = 1.0
                F[1, Xcol(i, j)] = 1.0
                F[2, xoff + i] = 1.0
                F[3, Xcol(j, j)] = 1.0
                F[4, xoff + j] = 1.0
                g[5] = 1.0
                blocks.append(block(ConeType.PSD, 3, F, g))
        return blocks

    if cone is ConeKind.PARABOLIC:
        for i in range(n):
            for j in range(i + 1, n):
                for sign in (-1.0, 1.0):
                    lin = [(Xcol(i, i), 1.0), (Xcol(j, j), 1.0), (Xcol(i, j), 2.0 * sign)]
                    quad = [(xoff + i, 1.0), (xoff + j, sign)]
                    blocks.append(_rsoc_quadratic(n, lin, quad))
        return blocks

    raise ValueError(f"unknown cone {cone}")


def build_penalized(prob: BmiProblem, cone: ConeKind, pen: PenaltyConfig) -> ConicProgram:
    """Assemble the penalized relaxation of a BMI problem as a conic program.

    Parameters
    ----------
    prob : BmiProblem
    cone : ConeKind
        Which lifting cone ties X to x.
    pen : PenaltyConfig
        Penalty weight eta and anchor; the constant ``eta * anchor'anchor`` is
        kept in the objective so reported values match the penalized objective
        verbatim.

    Returns
    -------
    ConicProgram
        Variables ``z = [x, svec(X)]``; one PSD block enforcing
        ``p(x, X) <= 0`` plus the cone-membership blocks of
        :func:`encode_cone`.
    """
    n, m = prob.n, prob.m
    if pen.anchor.size != n:
        raise ValueError(f"anchor length {pen.anchor.size} != n = {n}")
    nn = packed_length(n)
    nvars = n + nn

    q = np.zeros(nvars)
    q[:n] = prob.c - 2.0 * pen.eta * pen.anchor
    for i in range(n):
        q[n + tri_index(n, i, i)] = pen.eta
    constant = float(pen.eta * (pen.anchor @ pen.anchor))

    # -p(x, X) must be PSD.
    pl = packed_length(m)
    F = np.zeros((pl, nvars))
    for k, M in prob.K:
        F[:, k] = svec(-M)
    for (i, j), M in prob.L:
        F[:, n + tri_index(n, i, j)] = svec(-M)
    g = svec(-prob.F0)
    blocks = [block(ConeType.PSD, m, sp.csr_matrix(F), g)]
    blocks.extend(encode_cone(cone, n))
    return ConicProgram(nvars=nvars, objective=q, blocks=blocks, constant=constant)


def cone_contains(cone: ConeKind, H: np.ndarray, tol: float = 1e-9) -> bool:
    """Membership test for a symmetric matrix in one of the three cones.

    Uses the defining inequalities directly (eigenvalues for SDP, principal
    2x2 minors for SOCP, diagonal-dominance pairs for PARABOLIC), each slack
    by ``tol``.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if cone is ConeKind.SDP:
        return float(np.linalg.eigvalsh((H + H.T) / 2.0)[0]) >= -tol
    d = np.diag(H)
    if np.any(d < -tol):
        return False
    if cone is ConeKind.SOCP:
        for i in range(n):
            for j in range(i + 1, n):
                if d[i] * d[j] - H[i, j] ** 2 < -tol:
                    return False
        return True
    if cone is ConeKind.PARABOLIC:
        for i in range(n):
            for j in range(i + 1, n):
                if d[i] + d[j] - 2.0 * abs(H[i, j]) < -tol:
                    return False
        return True
    raise ValueError(f"unknown cone {cone}")
