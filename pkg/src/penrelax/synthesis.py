"""H2 / H-infinity static output-feedback synthesis as BMI problems.

Builds the matrix-inequality formulations for a structured static gain
``u = K(h) y`` with ``K(h) = sum_i h_i E_i``, stacks the matrix variables into
the canonical BMI vector (packed upper triangles first, then the gain entries),
applies the coordinate scaling that the sequential scheme expects, and
evaluates/certifies the controllers read back from a solution.

Closed-loop norms follow two conventions worth noting:

* the H2 value is the *trace* quantity ``tr(C_cl P C_cl')`` (the square of the
  conventional H2 norm), so objectives are directly comparable to ``tr W``;
* stability certification uses the literal rule ``max Re lambda < 1e-5``,
  which admits marginally unstable eigenvalues up to that threshold.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .bmi import BmiProblem, VarMap
from .symmat import (
    max_real_eig,
    min_eig_sym,
    packed_length,
    solve_lyapunov,
    sym_part,
)

STABILITY_THRESHOLD = 1e-5


class SynthesisKind(enum.Enum):
    H2 = "h2"
    HINF = "hinf"


@dataclass(frozen=True)
class Plant:
    """State-space data (A, B1, B, C1, C, D11, D12, D21) with a display name.

    Signal dimensions: x in R^nx (states), w in R^nw (disturbances), u in R^nu
    (controls), z in R^nz (performance outputs), y in R^ny (measurements).
    """

    A: np.ndarray
    B1: np.ndarray
    B: np.ndarray
    C1: np.ndarray
    C: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    name: str = ""

    def __post_init__(self):
        mats = {}
        for key in ("A", "B1", "B", "C1", "C", "D11", "D12", "D21"):
            M = np.atleast_2d(np.asarray(getattr(self, key), dtype=float))
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{key} has non-finite entries")
            mats[key] = M
            object.__setattr__(self, key, M)
        nx = mats["A"].shape[0]
        if mats["A"].shape != (nx, nx):
            raise ValueError(f"A must be square, got {mats['A'].shape}")
        nw = mats["B1"].shape[1]
        nu = mats["B"].shape[1]
        nz = mats["C1"].shape[0]
        ny = mats["C"].shape[0]
        expected = {
            "B1": (nx, nw),
            "B": (nx, nu),
            "C1": (nz, nx),
            "C": (ny, nx),
            "D11": (nz, nw),
            "D12": (nz, nu),
            "D21": (ny, nw),
        }
        for key, shape in expected.items():
            if mats[key].shape != shape:
                raise ValueError(
                    f"{key} has shape {mats[key].shape}, expected {shape} "
                    f"(nx={nx}, nw={nw}, nu={nu}, nz={nz}, ny={ny})"
                )

    @property
    def nx(self):
        return self.A.shape[0]

    @property
    def nw(self):
        return self.B1.shape[1]

    @property
    def nu(self):
        return self.B.shape[1]

    @property
    def nz(self):
        return self.C1.shape[0]

    @property
    def ny(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class ControllerStructure:
    """Binary basis matrices with pairwise disjoint supports defining K(h)."""

    basis: tuple

    def __post_init__(self):
        basis = tuple(np.asarray(E, dtype=float) for E in self.basis)
        if not basis:
            raise ValueError("structure needs at least one basis matrix")
        shape = basis[0].shape
        seen = np.zeros(shape, dtype=bool)
        for idx, E in enumerate(basis):
            if E.shape != shape:
                raise ValueError("basis matrices must share a shape")
            if not np.all(np.isin(E, (0.0, 1.0))):
                raise ValueError(f"basis matrix {idx} must be binary")
            support = E != 0.0
            if not support.any():
                raise ValueError(f"basis matrix {idx} is empty")
            if (seen & support).any():
                raise ValueError(f"basis matrix {idx} overlaps an earlier support")
            seen |= support
        object.__setattr__(self, "basis", basis)

    @property
    def l(self):
        return len(self.basis)

    def entry_labels(self):
        """1-based (row, col) position of each basis matrix's support."""
        labels = []
        for E in self.basis:
            r, c = np.argwhere(E != 0.0)[0]
            labels.append((int(r) + 1, int(c) + 1))
        return labels


def centralized_structure(nu: int, ny: int) -> ControllerStructure:
    """One basis matrix per gain entry, ordered row-major."""
    basis = []
    for r in range(nu):
        for c in range(ny):
            E = np.zeros((nu, ny))
            E[r, c] = 1.0
            basis.append(E)
    return ControllerStructure(tuple(basis))


def diagonal_structure(nu: int, ny: int) -> ControllerStructure:
    """Diagonal gain pattern (requires square u/y pairing up to min dim)."""
    d = min(nu, ny)
    basis = []
    for r in range(d):
        E = np.zeros((nu, ny))
        E[r, r] = 1.0
        basis.append(E)
    return ControllerStructure(tuple(basis))


def structure_from_mask(mask: np.ndarray) -> ControllerStructure:
    """One basis matrix per nonzero mask entry, ordered row-major."""
    mask = np.atleast_2d(np.asarray(mask, dtype=float))
    basis = []
    for r in range(mask.shape[0]):
        for c in range(mask.shape[1]):
            if mask[r, c] != 0.0:
                E = np.zeros(mask.shape)
                E[r, c] = 1.0
                basis.append(E)
    if not basis:
        raise ValueError("mask selects no gain entries")
    return ControllerStructure(tuple(basis))


def controller_gain(h: np.ndarray, s: ControllerStructure) -> np.ndarray:
    """K(h) = sum_i h_i E_i."""
    h = np.asarray(h, dtype=float).ravel()
    if h.size != s.l:
        raise ValueError(f"h has length {h.size}, structure has {s.l} entries")
    K = np.zeros(s.basis[0].shape)
    for hi, E in zip(h, s.basis):
        K += hi * E
    return K


def closed_loop(p: Plant, K: np.ndarray):
    """(A_cl, B_cl, C_cl, D_cl) for the static output feedback u = K y."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (p.nu, p.ny):
        raise ValueError(f"K must be {p.nu}x{p.ny}, got {K.shape}")
    BK = p.B @ K
    D12K = p.D12 @ K
    return (
        p.A + BK @ p.C,
        p.B1 + BK @ p.D21,
        p.C1 + D12K @ p.C,
        p.D11 + D12K @ p.D21,
    )


@dataclass(frozen=True)
class SynthesisProblem:
    bmi: BmiProblem
    varmap: VarMap
    kind: SynthesisKind
    plant: Plant
    structure: ControllerStructure

    def __post_init__(self):
        if len(self.varmap.names) != self.bmi.n:
            raise ValueError("varmap must cover exactly the BMI's variables")


def scale_vector(varmap_or_n, eta: float, bilinear_vars) -> np.ndarray:
    """Coordinate scales: 1 on variables occurring in a bilinear product,
    min(0.5*eta, 0.01) on all others."""
    if not eta > 0:
        raise ValueError("eta must be positive to derive scales")
    n = len(varmap_or_n.names) if isinstance(varmap_or_n, VarMap) else int(varmap_or_n)
    s = np.full(n, min(0.5 * eta, 0.01))
    for i in bilinear_vars:
        s[int(i)] = 1.0
    return s


def _sym_unit(n: int, a: int, b: int) -> np.ndarray:
    """Symmetric basis matrix: e_a e_b' + e_b e_a' for a < b, e_a e_a' for a == b."""
    U = np.zeros((n, n))
    U[a, b] = 1.0
    U[b, a] = 1.0
    return U


def _tri_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i, n)]


def _scaled_problem(c_raw, F0, K_raw, L_raw, names, eta, m):
    """Rescale raw coefficients into the stacked coordinates and wrap them up."""
    n = len(names)
    K_raw = [(k, M) for k, M in K_raw if np.any(M != 0.0)]
    L_raw = [(ij, M) for ij, M in L_raw if np.any(M != 0.0)]
    bset = set()
    for (i, j), _ in L_raw:
        bset.add(i)
        bset.add(j)
    s = scale_vector(n, eta, bset)
    prob = BmiProblem(
        n=n,
        m=m,
        c=np.asarray(c_raw, float) / s,
        F0=F0,
        K=[(k, M / s[k]) for k, M in K_raw],
        L=[((i, j), M / (s[i] * s[j])) for (i, j), M in L_raw],
    )
    return prob, VarMap(names=names, scale=s)


def regularize_b1(B1: np.ndarray) -> np.ndarray:
    """B1 B1' if already positive definite, else B1 B1' + 1e-5 I."""
    B1 = np.atleast_2d(np.asarray(B1, dtype=float))
    M = sym_part(B1 @ B1.T)
    if min_eig_sym(M) > 0.0:
        return M
    return M + 1e-5 * np.eye(M.shape[0])


def build_h2(p: Plant, s: ControllerStructure, eta: float) -> SynthesisProblem:
    """Assemble the H2 synthesis BMI: minimize tr W over (W, P, h).

    The constraint matrix has side ``2*nx + nz`` with row blocks
    (nx | nz | nx):

        [ A P + P A' + B1 B1' + B K C P + (B K C P)'   0    0          ]
        [ *                                           -W    C_cl P     ]
        [ *                                            *   -P          ]

    Variables are stacked as [svec W, svec P, h] and scaled; the objective in
    the scaled coordinates still reports the unscaled ``tr W``.

    Requires D11 = 0 and D21 = 0; B1 B1' is regularized when not positive
    definite.
    """
    if s.basis[0].shape != (p.nu, p.ny):
        raise ValueError("structure shape does not match the plant's (nu, ny)")
    for key in ("D11", "D21"):
        M = getattr(p, key)
        if np.any(M != 0.0):
            raise ValueError(
                f"H2 synthesis requires {key} = 0; got ||{key}|| = {np.linalg.norm(M):.3e}"
            )
    nx, nz, l = p.nx, p.nz, s.l
    m = 2 * nx + nz
    r2, r3 = nx, nx + nz

    names = (
        [f"W[{i + 1}][{j + 1}]" for i, j in _tri_pairs(nz)]
        + [f"P[{a + 1}][{b + 1}]" for a, b in _tri_pairs(nx)]
        + [f"h[{i + 1}]" for i in range(l)]
    )
    w_off, p_off, h_off = 0, packed_length(nz), packed_length(nz) + packed_length(nx)
    n = h_off + l

    F0 = np.zeros((m, m))
    F0[:nx, :nx] = regularize_b1(p.B1)

    c_raw = np.zeros(n)
    K_raw = []
    for idx, (i, j) in enumerate(_tri_pairs(nz)):
        if i == j:
            c_raw[w_off + idx] = 1.0
        M = np.zeros((m, m))
        M[r2:r3, r2:r3] = -_sym_unit(nz, i, j)
        K_raw.append((w_off + idx, M))
    for idx, (a, b) in enumerate(_tri_pairs(nx)):
        U = _sym_unit(nx, a, b)
        M = np.zeros((m, m))
        M[:nx, :nx] = sym_part(2.0 * (p.A @ U))  # A U + U A'
        M[r2:r3, r3:] = p.C1 @ U
        M[r3:, r2:r3] = (p.C1 @ U).T
        M[r3:, r3:] -= U
        K_raw.append((p_off + idx, M))

    L_raw = []
    for hi in range(l):
        G0 = p.B @ s.basis[hi] @ p.C
        G12 = p.D12 @ s.basis[hi] @ p.C
        for idx, (a, b) in enumerate(_tri_pairs(nx)):
            U = _sym_unit(nx, a, b)
            M = np.zeros((m, m))
            M[:nx, :nx] = sym_part(2.0 * (G0 @ U))  # B K C P + (B K C P)'
            M[r2:r3, r3:] = G12 @ U
            M[r3:, r2:r3] = (G12 @ U).T
            pair = (min(p_off + idx, h_off + hi), max(p_off + idx, h_off + hi))
            L_raw.append((pair, M))

    prob, varmap = _scaled_problem(c_raw, F0, K_raw, L_raw, names, eta, m)
    return SynthesisProblem(bmi=prob, varmap=varmap, kind=SynthesisKind.H2, plant=p, structure=s)


def build_hinf(p: Plant, s: ControllerStructure, eta: float) -> SynthesisProblem:
    """Assemble the H-infinity synthesis BMI: minimize gamma over (Q, h, gamma).

    The constraint matrix has side ``2*nx + nz + nw`` with row blocks
    (nx | nx | nz | nw):

        [ -Q   0                                        0            0         ]
        [  *   A Q + Q A' + B K C Q + (B K C Q)'       (C_cl Q)'     B1        ]
        [  *   *                                       -gamma I      D11       ]
        [  *   *                                        *           -gamma I   ]

    Variables are stacked as [svec Q, h, gamma].  Requires D21 = 0.
    """
    if s.basis[0].shape != (p.nu, p.ny):
        raise ValueError("structure shape does not match the plant's (nu, ny)")
    if np.any(p.D21 != 0.0):
        raise ValueError(
            f"H-infinity synthesis requires D21 = 0; got ||D21|| = {np.linalg.norm(p.D21):.3e}"
        )
    nx, nz, nw, l = p.nx, p.nz, p.nw, s.l
    m = 2 * nx + nz + nw
    r2, r3, r4 = nx, 2 * nx, 2 * nx + nz

    names = (
        [f"Q[{a + 1}][{b + 1}]" for a, b in _tri_pairs(nx)]
        + [f"h[{i + 1}]" for i in range(l)]
        + ["gamma"]
    )
    q_off, h_off = 0, packed_length(nx)
    g_idx = h_off + l
    n = g_idx + 1

    F0 = np.zeros((m, m))
    F0[r2:r3, r4:] = p.B1
    F0[r4:, r2:r3] = p.B1.T
    F0[r3:r4, r4:] = p.D11
    F0[r4:, r3:r4] = p.D11.T

    c_raw = np.zeros(n)
    c_raw[g_idx] = 1.0

    K_raw = []
    for idx, (a, b) in enumerate(_tri_pairs(nx)):
        U = _sym_unit(nx, a, b)
        M = np.zeros((m, m))
        M[:nx, :nx] = -U
        M[r2:r3, r2:r3] = sym_part(2.0 * (p.A @ U))
        M[r2:r3, r3:r4] = U @ p.C1.T  # (C1 Q)'
        M[r3:r4, r2:r3] = (U @ p.C1.T).T
        K_raw.append((q_off + idx, M))
    Mg = np.zeros((m, m))
    Mg[r3:r4, r3:r4] = -np.eye(nz)
    Mg[r4:, r4:] = -np.eye(nw)
    K_raw.append((g_idx, Mg))

    L_raw = []
    for hi in range(l):
        G0 = p.B @ s.basis[hi] @ p.C
        G12 = p.D12 @ s.basis[hi] @ p.C
        for idx, (a, b) in enumerate(_tri_pairs(nx)):
            U = _sym_unit(nx, a, b)
            M = np.zeros((m, m))
            M[r2:r3, r2:r3] = sym_part(2.0 * (G0 @ U))
            M[r2:r3, r3:r4] = U @ G12.T  # (D12 K C Q)'
            M[r3:r4, r2:r3] = (U @ G12.T).T
            pair = (min(q_off + idx, h_off + hi), max(q_off + idx, h_off + hi))
            L_raw.append((pair, M))

    prob, varmap = _scaled_problem(c_raw, F0, K_raw, L_raw, names, eta, m)
    return SynthesisProblem(
        bmi=prob, varmap=varmap, kind=SynthesisKind.HINF, plant=p, structure=s
    )


def certify_stability(A_cl: np.ndarray) -> bool:
    """True iff max Re lambda(A_cl) < 1e-5 (the literal certification rule)."""
    return max_real_eig(A_cl) < STABILITY_THRESHOLD


@dataclass(frozen=True)
class Certificate:
    max_real_eig: float
    norm: float

    @property
    def stabilizing(self) -> bool:
        return self.max_real_eig < STABILITY_THRESHOLD


def extract_controller(x_star: np.ndarray, sp: SynthesisProblem):
    """Unscale a solution vector, read off the gain, and certify it.

    Returns ``(h, K, cert)`` where ``cert`` carries the closed-loop spectral
    abscissa and norm (infinity when the gain fails certification, since the
    norm is undefined for an unstable loop).
    """
    x_star = np.asarray(x_star, dtype=float).ravel()
    if x_star.size != sp.bmi.n:
        raise ValueError(f"solution has length {x_star.size}, expected {sp.bmi.n}")
    raw = x_star / sp.varmap.scale
    h_idx = [i for i, name in enumerate(sp.varmap.names) if name.startswith("h[")]
    h = raw[h_idx]
    K = controller_gain(h, sp.structure)
    A_cl, B_cl, C_cl, D_cl = closed_loop(sp.plant, K)
    abscissa = max_real_eig(A_cl)
    if abscissa < 0.0:
        if sp.kind is SynthesisKind.H2:
            norm = h2_norm(A_cl, B_cl, C_cl)
        else:
            norm = hinf_norm(A_cl, B_cl, C_cl, D_cl)
    else:
        norm = float("inf")
    return h, K, Certificate(max_real_eig=abscissa, norm=norm)


def h2_norm(A_cl, B_cl, C_cl) -> float:
    """tr(C_cl P C_cl') with A_cl P + P A_cl' + B_cl B_cl' = 0 (trace convention).

    This is the square of the conventional H2 norm.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    B_cl = np.atleast_2d(np.asarray(B_cl, dtype=float))
    C_cl = np.atleast_2d(np.asarray(C_cl, dtype=float))
    if max_real_eig(A_cl) >= 0.0:
        raise ValueError("closed-loop state matrix is not Hurwitz; H2 norm undefined")
    P = solve_lyapunov(A_cl, sym_part(B_cl @ B_cl.T))
    return float(np.trace(C_cl @ P @ C_cl.T))


def _freq_response_sup(A, B, C, D, freqs) -> float:
    best = 0.0
    n = A.shape[0]
    for w in freqs:
        G = C @ np.linalg.solve(1j * w * np.eye(n) - A, B) + D
        best = max(best, float(scipy.linalg.svdvals(G)[0]))
    return best


def _hamiltonian_has_imag_eig(A, B, C, D, gamma) -> bool:
    nw = B.shape[1]
    R = gamma**2 * np.eye(nw) - D.T @ D
    Rinv = np.linalg.inv(R)
    Abar = A + B @ Rinv @ D.T @ C
    H = np.block(
        [
            [Abar, B @ Rinv @ B.T],
            [-C.T @ (np.eye(C.shape[0]) + D @ Rinv @ D.T) @ C, -Abar.T],
        ]
    )
    lam = np.linalg.eigvals(H)
    return bool(np.any(np.abs(lam.real) <= 1e-8 * np.maximum(1.0, np.abs(lam))))


def hinf_norm(A_cl, B_cl, C_cl, D_cl, rel_tol: float = 1e-6) -> float:
    """Peak gain sup_w sigma_max(G(jw)), by bisection on the Hamiltonian test.

    A candidate level ``gamma`` is below the norm exactly when the associated
    Hamiltonian matrix has an imaginary-axis eigenvalue; bisection brackets
    the norm to ``rel_tol`` relative width.  The lower bracket is seeded with
    frequency samples, so the returned value is also a certified lower bound
    up to ``rel_tol``.
    """
    A = np.atleast_2d(np.asarray(A_cl, dtype=float))
    B = np.atleast_2d(np.asarray(B_cl, dtype=float))
    C = np.atleast_2d(np.asarray(C_cl, dtype=float))
    D = np.atleast_2d(np.asarray(D_cl, dtype=float))
    if max_real_eig(A) >= 0.0:
        raise ValueError("closed-loop state matrix is not Hurwitz; peak gain undefined")
    smax_d = float(scipy.linalg.svdvals(D)[0]) if D.size else 0.0
    if B.size == 0 or C.size == 0 or (not np.any(B) or not np.any(C)):
        return smax_d

    lam = np.linalg.eigvals(A)
    scales = np.abs(lam)
    scales = scales[scales > 0]
    lo_scale = float(scales.min()) if scales.size else 1.0
    hi_scale = float(scales.max()) if scales.size else 1.0
    freqs = np.concatenate(
        [
            [0.0],
            np.abs(lam.imag)[np.abs(lam.imag) > 0],
            np.logspace(np.log10(lo_scale) - 3, np.log10(hi_scale) + 3, 240),
        ]
    )
    lo = max(_freq_response_sup(A, B, C, D, freqs), smax_d)
    if lo == 0.0:
        lo = 1e-12
    hi = max(2.0 * lo, 1e-9)
    for _ in range(80):
        if not _hamiltonian_has_imag_eig(A, B, C, D, hi):
            break
        hi *= 2.0
    else:
        raise ArithmeticError("failed to bracket the peak gain from above")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if _hamiltonian_has_imag_eig(A, B, C, D, mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def open_loop_norm(p: Plant, kind: SynthesisKind) -> float:
    """Norm of the open-loop channel (A, B1, C1, D11); infinity when A is not Hurwitz."""
    if max_real_eig(p.A) >= 0.0:
        return float("inf")
    if kind is SynthesisKind.H2:
        return h2_norm(p.A, p.B1, p.C1)
    return hinf_norm(p.A, p.B1, p.C1, p.D11)


def controller_json(h: np.ndarray, sp: SynthesisProblem, cert: Certificate) -> dict:
    """JSON-ready record of a gain: matrix, entry labels, certification."""
    K = controller_gain(h, sp.structure)
    return {
        "K": K.tolist(),
        "h": np.asarray(h, dtype=float).ravel().tolist(),
        "entries": [f"K[{r}][{c}]" for r, c in sp.structure.entry_labels()],
        "kind": sp.kind.value,
        "certification": {
            "max_real_eig": cert.max_real_eig,
            "norm": cert.norm,
            "stabilizing": cert.stabilizing,
        },
    }


def dumps_controller(h, sp, cert, **kwargs) -> str:
    return json.dumps(controller_json(h, sp, cert), **kwargs)
