"""Backend-neutral conic programs and the interior-point solver adapter.

A :class:`ConicProgram` minimizes ``objective @ z + constant`` subject to, for
each block, ``F @ z + g`` belonging to the block's cone.  Supported cones:

====================  =========================================================
``ZERO(d)``           all entries equal to zero
``NONNEG(d)``         entrywise nonnegative
``SOC(d)``            ``(t, w)`` with ``t >= ||w||``
``ROTATED_SOC(d)``    ``(u, v, w)`` with ``2 u v >= ||w||^2``, ``u, v >= 0``
``PSD(side)``         symmetric PSD matrix, packed in row-major upper-triangle
                      (svec) layout with unscaled off-diagonals
====================  =========================================================

Solving is delegated to Clarabel; the adapter lowers rotated cones to plain
second-order cones by the standard orthogonal transform and converts the svec
layout into Clarabel's scaled column-major triangle.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .symmat import packed_length, side_of_packed, smat

_SQRT2 = float(np.sqrt(2.0))


class ConeType(enum.Enum):
    ZERO = "zero"
    NONNEG = "nonneg"
    SOC = "soc"
    ROTATED_SOC = "rotated_soc"
    PSD = "psd"


@dataclass(frozen=True)
class Block:
    """One conic constraint: ``F @ z + g`` must lie in the cone.

    For PSD blocks ``size`` is the matrix side and the map has
    ``side*(side+1)//2`` rows (svec layout); for all other cones ``size`` is
    the number of rows.
    """

    cone: ConeType
    size: int
    F: sp.csr_matrix
    g: np.ndarray

    @property
    def rows(self) -> int:
        if self.cone is ConeType.PSD:
            return packed_length(self.size)
        return self.size


def block(cone: ConeType, size: int, F, g) -> Block:
    """Build a Block, converting the map to CSR and the offset to a 1-D array."""
    F = sp.csr_matrix(F)
    g = np.asarray(g, dtype=float).ravel()
    return Block(cone=cone, size=int(size), F=F, g=g)


@dataclass(frozen=True)
class ConicProgram:
    nvars: int
    objective: np.ndarray
    blocks: list
    constant: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "objective", np.asarray(self.objective, dtype=float).ravel())


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_LIMIT = "numerical_limit"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class ConicSolution:
    status: Status
    primal: np.ndarray | None
    objective: float
    solve_time: float
    iterations: int


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 200


def validate(prog: ConicProgram) -> list:
    """Check program invariants; return human-readable diagnostics (empty if OK)."""
    diags = []
    if prog.nvars < 1:
        diags.append(f"nvars must be positive, got {prog.nvars}")
    if prog.objective.size != prog.nvars:
        diags.append(
            f"objective has length {prog.objective.size}, expected nvars = {prog.nvars}"
        )
    if not np.all(np.isfinite(prog.objective)):
        diags.append("objective contains NaN or infinite entries")
    if not np.isfinite(prog.constant):
        diags.append("objective constant is not finite")
    for idx, b in enumerate(prog.blocks):
        where = f"block {idx} ({b.cone.value})"
        if b.F.shape[1] != prog.nvars:
            diags.append(f"{where}: affine map has {b.F.shape[1]} columns, expected {prog.nvars}")
        expected = None
        if b.cone is ConeType.PSD:
            expected = packed_length(b.size)
            if b.F.shape[0] == b.size * b.size and b.size > 1:
                diags.append(
                    f"{where}: affine map has {b.F.shape[0]} rows — full (possibly "
                    f"asymmetric) matrix layout; PSD maps must use the "
                    f"{expected}-row symmetric svec layout"
                )
                expected = None  # already reported
        else:
            expected = b.size
        if expected is not None and b.F.shape[0] != expected:
            diags.append(f"{where}: affine map has {b.F.shape[0]} rows, expected {expected}")
        if b.g.size != b.F.shape[0]:
            diags.append(f"{where}: offset has length {b.g.size}, expected {b.F.shape[0]}")
        if b.cone is ConeType.SOC and b.size < 2:
            diags.append(f"{where}: SOC dimension must be >= 2, got {b.size}")
        if b.cone is ConeType.ROTATED_SOC and b.size < 3:
            diags.append(f"{where}: rotated SOC dimension must be >= 3, got {b.size}")
        if b.size < 1:
            diags.append(f"{where}: size must be positive, got {b.size}")
        if not np.all(np.isfinite(b.F.data)):
            diags.append(f"{where}: affine map contains NaN or infinite entries")
        if not np.all(np.isfinite(b.g)):
            diags.append(f"{where}: offset contains NaN or infinite entries")
    return diags


def cone_violation(cone: ConeType, v: np.ndarray) -> float:
    """Distance-like violation of a vector from its cone (0 when inside)."""
    if cone is ConeType.ZERO:
        return float(np.abs(v).max(initial=0.0))
    if cone is ConeType.NONNEG:
        return max(0.0, float(-v.min(initial=0.0)))
    if cone is ConeType.SOC:
        return max(0.0, float(np.linalg.norm(v[1:]) - v[0]))
    if cone is ConeType.ROTATED_SOC:
        u, w = v[0], v[2:]
        quad = float(w @ w - 2.0 * v[0] * v[1])
        return max(0.0, -float(u), -float(v[1]), quad)
    if cone is ConeType.PSD:
        return max(0.0, -float(np.linalg.eigvalsh(smat(v))[0]))
    raise ValueError(f"unknown cone {cone}")


def max_block_violation(prog: ConicProgram, z: np.ndarray) -> float:
    """Largest per-block cone violation of a candidate primal point."""
    z = np.asarray(z, dtype=float).ravel()
    worst = 0.0
    for b in prog.blocks:
        worst = max(worst, cone_violation(b.cone, b.F @ z + b.g))
    return worst


# --- Clarabel adapter -------------------------------------------------------

def _psd_triangle_transform(side: int) -> sp.csr_matrix:
    """Map our svec rows to Clarabel's scaled column-major upper triangle."""
    p = packed_length(side)
    ours = {}
    pos = 0
    for i in range(side):
        for j in range(i, side):
            ours[(i, j)] = pos
            pos += 1
    rows, cols, vals = [], [], []
    r = 0
    for j in range(side):
        for i in range(j + 1):
            rows.append(r)
            cols.append(ours[(i, j)])
            vals.append(1.0 if i == j else _SQRT2)
            r += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(p, p))


def _rsoc_to_soc_transform(dim: int) -> sp.csr_matrix:
    """Orthogonal map (u, v, w) -> ((u+v)/sqrt2, (u-v)/sqrt2, w)."""
    T = sp.lil_matrix((dim, dim))
    s = 1.0 / _SQRT2
    T[0, 0] = s
    T[0, 1] = s
    T[1, 0] = s
    T[1, 1] = -s
    for i in range(2, dim):
        T[i, i] = 1.0
    return T.tocsr()


def _solve_clarabel(prog: ConicProgram, settings: SolverSettings) -> ConicSolution:
    import clarabel

    A_parts, b_parts, cones = [], [], []
    for b in prog.blocks:
        F, g = b.F, b.g
        if b.cone is ConeType.ZERO:
            cones.append(clarabel.ZeroConeT(b.size))
        elif b.cone is ConeType.NONNEG:
            cones.append(clarabel.NonnegativeConeT(b.size))
        elif b.cone is ConeType.SOC:
            cones.append(clarabel.SecondOrderConeT(b.size))
        elif b.cone is ConeType.ROTATED_SOC:
            T = _rsoc_to_soc_transform(b.size)
            F, g = T @ F, T @ g
            cones.append(clarabel.SecondOrderConeT(b.size))
        elif b.cone is ConeType.PSD:
            T = _psd_triangle_transform(b.size)
            F, g = T @ F, T @ g
            cones.append(clarabel.PSDTriangleConeT(b.size))
        else:
            raise ValueError(f"unknown cone {b.cone}")
        A_parts.append(sp.csc_matrix(-F))
        b_parts.append(np.asarray(g, dtype=float).ravel())

    A = sp.vstack(A_parts, format="csc") if A_parts else sp.csc_matrix((0, prog.nvars))
    b_vec = np.concatenate(b_parts) if b_parts else np.zeros(0)
    P = sp.csc_matrix((prog.nvars, prog.nvars))

    st = clarabel.DefaultSettings()
    st.verbose = False
    st.max_iter = settings.max_iter
    st.tol_feas = settings.tol
    st.tol_gap_abs = settings.tol
    st.tol_gap_rel = settings.tol

    solver = clarabel.DefaultSolver(P, prog.objective, A, b_vec, cones, st)
    res = solver.solve()

    name = str(res.status)
    if name == "Solved":
        status = Status.OPTIMAL
    elif name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = Status.INFEASIBLE
    elif name in ("DualInfeasible", "AlmostDualInfeasible"):
        status = Status.UNBOUNDED
    elif name == "MaxIterations":
        status = Status.ITERATION_LIMIT
    else:  # AlmostSolved, NumericalError, InsufficientProgress, MaxTime, ...
        status = Status.NUMERICAL_LIMIT

    if status in (Status.OPTIMAL, Status.NUMERICAL_LIMIT, Status.ITERATION_LIMIT):
        primal = np.asarray(res.x, dtype=float)
        objective = float(prog.objective @ primal) + prog.constant
    else:
        primal = None
        objective = float("nan")
    return ConicSolution(
        status=status,
        primal=primal,
        objective=objective,
        solve_time=float(res.solve_time),
        iterations=int(res.iterations),
    )


_BACKENDS = {"clarabel": _solve_clarabel}


def solve(
    prog: ConicProgram,
    settings: SolverSettings | None = None,
    backend: str = "clarabel",
) -> ConicSolution:
    """Solve a conic program with the selected interior-point backend.

    Raises ``ValueError`` (with all diagnostics) if the program is malformed;
    solver outcomes, including infeasibility, are reported through
    ``ConicSolution.status`` and never raised.
    """
    diags = validate(prog)
    if diags:
        raise ValueError("malformed conic program: " + "; ".join(diags))
    if backend not in _BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; available: {sorted(_BACKENDS)}")
    return _BACKENDS[backend](prog, settings or SolverSettings())


# --- Text export ------------------------------------------------------------

_CBF_SCALAR = {ConeType.ZERO: "L=", ConeType.NONNEG: "L+", ConeType.SOC: "Q", ConeType.ROTATED_SOC: "QR"}


def export_cbf(prog: ConicProgram) -> str:
    """Serialize the program in CBF-2 text form (deterministic writer).

    Scalar cone blocks become CON rows in block order; PSD blocks become
    PSDCON constraints (lower-triangle FCOORD/DCOORD entries).  Entries are
    written with ``repr`` round-trip precision so the output is bit-exact for
    identical inputs.
    """
    out = io.StringIO()
    w = out.write
    w("VER\n2\n\n")
    w("OBJSENSE\nMIN\n\n")
    w(f"VAR\n{prog.nvars} 1\nF {prog.nvars}\n\n")

    obj_nz = [(j, v) for j, v in enumerate(prog.objective) if v != 0.0]
    if obj_nz:
        w(f"OBJACOORD\n{len(obj_nz)}\n")
        for j, v in obj_nz:
            w(f"{j} {v!r}\n")
        w("\n")
    if prog.constant != 0.0:
        w(f"OBJBCOORD\n{prog.constant!r}\n\n")

    scalar = [b for b in prog.blocks if b.cone is not ConeType.PSD]
    psd = [b for b in prog.blocks if b.cone is ConeType.PSD]

    if scalar:
        total = sum(b.size for b in scalar)
        w(f"CON\n{total} {len(scalar)}\n")
        for b in scalar:
            w(f"{_CBF_SCALAR[b.cone]} {b.size}\n")
        w("\n")
        acoord, bcoord = [], []
        row0 = 0
        for b in scalar:
            coo = b.F.tocoo()
            for r, cidx, v in zip(coo.row, coo.col, coo.data):
                if v != 0.0:
                    acoord.append((row0 + int(r), int(cidx), float(v)))
            for r, v in enumerate(b.g):
                if v != 0.0:
                    bcoord.append((row0 + r, float(v)))
            row0 += b.size
        acoord.sort()
        bcoord.sort()
        if acoord:
            w(f"ACOORD\n{len(acoord)}\n")
            for r, c, v in acoord:
                w(f"{r} {c} {v!r}\n")
            w("\n")
        if bcoord:
            w(f"BCOORD\n{len(bcoord)}\n")
            for r, v in bcoord:
                w(f"{r} {v!r}\n")
            w("\n")

    if psd:
        w(f"PSDCON\n{len(psd)}\n")
        for b in psd:
            w(f"{b.size}\n")
        w("\n")
        fcoord, dcoord = [], []
        for pidx, b in enumerate(psd):
            pairs = [(i, j) for i in range(b.size) for j in range(i, b.size)]
            coo = b.F.tocoo()
            for r, cidx, v in zip(coo.row, coo.col, coo.data):
                if v != 0.0:
                    i, j = pairs[int(r)]
                    fcoord.append((pidx, int(cidx), j, i, float(v)))  # k >= l
            for r, v in enumerate(b.g):
                if v != 0.0:
                    i, j = pairs[r]
                    dcoord.append((pidx, j, i, float(v)))
        fcoord.sort()
        dcoord.sort()
        if fcoord:
            w(f"FCOORD\n{len(fcoord)}\n")
            for pidx, var, k, l, v in fcoord:
                w(f"{pidx} {var} {k} {l} {v!r}\n")
            w("\n")
        if dcoord:
            w(f"DCOORD\n{len(dcoord)}\n")
            for pidx, k, l, v in dcoord:
                w(f"{pidx} {k} {l} {v!r}\n")
            w("\n")

    return out.getvalue()
