"""Canonical bilinear-matrix-inequality problems and their feasibility residuals.

A problem is

    minimize    c' x
    subject to  F0 + sum_k x_k K_k + sum_{i<=j} X_ij L_ij  <=  0   (PSD order)

evaluated at the rank-one lift ``X = x x'``.  Coefficients are stored sparsely:
``K`` holds only variables with a nonzero linear coefficient, and ``L`` holds
one combined coefficient per unordered index pair (for ``i < j`` the stored
matrix is the sum of both ordered coefficients, applied once to ``X[i, j]``).
Variable indices are 0-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .symmat import _require_symmetric, max_eig_sym


@dataclass(frozen=True)
class BmiProblem:
    """Immutable BMI problem data.

    Attributes
    ----------
    n : int
        Number of decision variables.
    m : int
        Side of the constraint matrix.
    c : (n,) ndarray
        Linear objective.
    F0 : (m, m) ndarray
        Constant symmetric coefficient.
    K : list of (k, (m, m) ndarray)
        Sparse linear coefficients, one entry per variable index k.
    L : list of ((i, j), (m, m) ndarray)
        Sparse bilinear coefficients keyed by unordered pairs i <= j.
    """

    n: int
    m: int
    c: np.ndarray
    F0: np.ndarray
    K: list = field(default_factory=list)
    L: list = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        c = np.asarray(self.c, dtype=float).ravel()
        if c.size != self.n or not np.all(np.isfinite(c)):
            raise ValueError(f"objective must be a finite vector of length {self.n}")
        object.__setattr__(self, "c", c)
        F0 = _require_symmetric(np.asarray(self.F0, dtype=float), "F0")
        if F0.shape != (self.m, self.m):
            raise ValueError(f"F0 must be {self.m}x{self.m}")
        object.__setattr__(self, "F0", F0)

        K, seen_k = [], set()
        for k, M in self.K:
            k = int(k)
            if not 0 <= k < self.n:
                raise ValueError(f"K index {k} out of range [0, {self.n})")
            if k in seen_k:
                raise ValueError(f"duplicate K index {k}")
            seen_k.add(k)
            M = _require_symmetric(np.asarray(M, dtype=float), f"K[{k}]")
            if M.shape != (self.m, self.m):
                raise ValueError(f"K[{k}] must be {self.m}x{self.m}")
            K.append((k, M))
        object.__setattr__(self, "K", K)

        L, seen_ij = [], set()
        for (i, j), M in self.L:
            i, j = int(i), int(j)
            if not (0 <= i <= j < self.n):
                raise ValueError(f"L index pair ({i}, {j}) invalid; need 0 <= i <= j < n")
            if (i, j) in seen_ij:
                raise ValueError(f"duplicate L index pair ({i}, {j})")
            seen_ij.add((i, j))
            M = _require_symmetric(np.asarray(M, dtype=float), f"L[{i},{j}]")
            if M.shape != (self.m, self.m):
                raise ValueError(f"L[{i},{j}] must be {self.m}x{self.m}")
            L.append(((i, j), M))
        object.__setattr__(self, "L", L)

    def bilinear_vars(self) -> set:
        """Indices of variables that occur in some stored bilinear coefficient."""
        out = set()
        for (i, j), M in self.L:
            if np.any(M != 0.0):
                out.add(i)
                out.add(j)
        return out


def eval_p(prob: BmiProblem, x: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Evaluate the constraint map F0 + sum x_k K_k + sum X_ij L_ij.

    ``X`` may be any symmetric matrix (typically the lift variable or ``x x'``);
    each stored pair coefficient is applied once to ``X[i, j]``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != prob.n:
        raise ValueError(f"x must have length {prob.n}, got {x.size}")
    X = np.asarray(X, dtype=float)
    if X.shape != (prob.n, prob.n):
        raise ValueError(f"X must be {prob.n}x{prob.n}, got {X.shape}")
    out = prob.F0.copy()
    for k, M in prob.K:
        out += x[k] * M
    for (i, j), M in prob.L:
        out += X[i, j] * M
    return out


def bmi_residual(prob: BmiProblem, x: np.ndarray) -> float:
    """max(0, largest eigenvalue of p(x, x x')): zero iff x is BMI-feasible."""
    x = np.asarray(x, dtype=float).ravel()
    return max(0.0, max_eig_sym(eval_p(prob, x, np.outer(x, x))))


def lift_residual(x: np.ndarray, X: np.ndarray) -> float:
    """tr(X) - x'x, the scalar feasibility-violation measure of the lift."""
    x = np.asarray(x, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.shape != (x.size, x.size):
        raise ValueError(f"X must be {x.size}x{x.size}, got {X.shape}")
    return float(np.trace(X) - x @ x)


@dataclass(frozen=True)
class VarMap:
    """Semantic labels and positive scales for the variables of a BmiProblem."""

    names: list
    scale: np.ndarray

    def __post_init__(self):
        names = [str(s) for s in self.names]
        if len(set(names)) != len(names):
            raise ValueError("variable labels must be unique")
        scale = np.asarray(self.scale, dtype=float).ravel()
        if scale.size != len(names):
            raise ValueError("scale length must match number of labels")
        if not np.all(scale > 0) or not np.all(np.isfinite(scale)):
            raise ValueError("scale entries must be positive and finite")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "scale", scale)

    def index(self, name: str) -> int:
        return self.names.index(name)


def to_json_dict(prob: BmiProblem) -> dict:
    """Plain-dict form of a BmiProblem (dense F0, sparse K/L entries)."""
    return {
        "n": prob.n,
        "m": prob.m,
        "c": prob.c.tolist(),
        "F0": prob.F0.tolist(),
        "K": [{"k": k, "M": M.tolist()} for k, M in prob.K],
        "L": [{"i": i, "j": j, "M": M.tolist()} for (i, j), M in prob.L],
    }


def from_json_dict(doc: dict) -> BmiProblem:
    """Inverse of :func:`to_json_dict`, revalidating all invariants."""
    try:
        return BmiProblem(
            n=int(doc["n"]),
            m=int(doc["m"]),
            c=np.asarray(doc["c"], dtype=float),
            F0=np.asarray(doc["F0"], dtype=float),
            K=[(e["k"], np.asarray(e["M"], dtype=float)) for e in doc.get("K", [])],
            L=[((e["i"], e["j"]), np.asarray(e["M"], dtype=float)) for e in doc.get("L", [])],
        )
    except KeyError as exc:
        raise ValueError(f"missing field {exc} in BMI document") from exc


def dumps(prob: BmiProblem, **kwargs) -> str:
    return json.dumps(to_json_dict(prob), **kwargs)


def loads(text: str) -> BmiProblem:
    return from_json_dict(json.loads(text))
