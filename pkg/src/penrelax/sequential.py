"""Sequential penalized-relaxation driver with optional Nesterov extrapolation.

Each round solves one penalized convex relaxation anchored at the current
reference point, then moves the anchor (optionally extrapolating).  The loop
stops when the relative objective improvement between consecutive rounds drops
to ``prog_thresh`` percent or the round budget is exhausted.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .bmi import BmiProblem, lift_residual
from .conic import ConicSolution, SolverSettings, Status, max_block_violation, solve
from .relaxation import ConeKind, PenaltyConfig, build_penalized, penalty_value, split_primal

# A non-optimal iterate is still usable if every block is this close to its cone.
_USABLE_VIOLATION = 1e-6


@dataclass(frozen=True)
class SequentialConfig:
    eta: float
    cone: ConeKind
    prog_thresh: float = 0.1
    max_round: int = 250
    accelerate: bool = True
    feas_tol: float = 1e-5
    anchor0: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError("eta must be a positive real")
        if self.max_round < 1:
            raise ValueError("max_round must be >= 1")
        if not self.feas_tol > 0:
            raise ValueError("feas_tol must be positive")
        if self.anchor0 is not None:
            a = np.asarray(self.anchor0, dtype=float).ravel()
            if not np.all(np.isfinite(a)):
                raise ValueError("anchor0 must be finite")
            object.__setattr__(self, "anchor0", a)


@dataclass(frozen=True)
class RoundRecord:
    k: int
    x: np.ndarray
    objective: float
    penalty: float
    lift_residual: float
    status: Status
    solve_time: float
    improvement: float


@dataclass
class SolveTrace:
    """Per-round history plus the derived feasibility/stopping summaries.

    ``k_f``/``obj_f`` describe the first round whose lift residual fell to
    ``feas_tol`` (None when never attained); ``k_p``/``obj_p`` the terminating
    round.  Objective columns are penalty-free ``c'x`` values.
    """

    feas_tol: float
    rounds: list = field(default_factory=list)

    @property
    def k_f(self):
        for r in self.rounds:
            if r.lift_residual <= self.feas_tol:
                return r.k
        return None

    @property
    def obj_f(self):
        for r in self.rounds:
            if r.lift_residual <= self.feas_tol:
                return r.objective
        return None

    @property
    def k_p(self):
        return self.rounds[-1].k if self.rounds else None

    @property
    def obj_p(self):
        return self.rounds[-1].objective if self.rounds else None

    @property
    def mean_solve_time(self):
        if not self.rounds:
            return None
        return sum(r.solve_time for r in self.rounds) / len(self.rounds)

    def to_json_dict(self) -> dict:
        return {
            "rounds": [
                {
                    "k": r.k,
                    "x": r.x.tolist(),
                    "objective": r.objective,
                    "penalty": r.penalty,
                    "lift_residual": r.lift_residual,
                    "status": r.status.value,
                    "solve_time": r.solve_time,
                    "improvement": r.improvement,
                }
                for r in self.rounds
            ],
            "k_f": self.k_f,
            "obj_f": self.obj_f,
            "k_p": self.k_p,
            "obj_p": self.obj_p,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)

    def to_csv(self) -> str:
        """One RFC-4180 row per round; floats at 6 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["k", "objective", "penalty", "lift_residual", "status", "solve_time", "improvement"]
        )
        for r in self.rounds:
            writer.writerow(
                [
                    r.k,
                    f"{r.objective:.6g}",
                    f"{r.penalty:.6g}",
                    f"{r.lift_residual:.6g}",
                    r.status.value,
                    f"{r.solve_time:.6g}",
                    f"{r.improvement:.6g}",
                ]
            )
        return buf.getvalue()


class SequentialError(RuntimeError):
    """Raised when a round's conic solve leaves no usable iterate.

    Carries the partial trace and the offending round's solver status.
    """

    def __init__(self, message: str, trace: SolveTrace, status: Status, round_index: int):
        super().__init__(message)
        self.trace = trace
        self.status = status
        self.round_index = round_index


def nesterov_anchor(x_k: np.ndarray, x_prev: np.ndarray, k: int) -> np.ndarray:
    """Extrapolated anchor x_k + ((k-1)/(k+2)) (x_k - x_prev)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x_k = np.asarray(x_k, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    return x_k + ((k - 1.0) / (k + 2.0)) * (x_k - x_prev)


def stopping_improvement(x_k: np.ndarray, x_prev: np.ndarray, c: np.ndarray) -> float:
    """Percent objective change |c'(x_k - x_prev)| / |c'x_prev| * 100.

    When the denominator is zero the bare change ``100 * |c' delta|`` is
    returned, so comparing against a percent threshold degenerates to the
    absolute test ``|c' delta| <= thresh / 100``.
    """
    c = np.asarray(c, dtype=float).ravel()
    delta = abs(float(c @ (np.asarray(x_k, float).ravel() - np.asarray(x_prev, float).ravel())))
    denom = abs(float(c @ np.asarray(x_prev, float).ravel()))
    if denom == 0.0:
        return 100.0 * delta
    return 100.0 * delta / denom


def run(
    prob: BmiProblem,
    cfg: SequentialConfig,
    settings: SolverSettings | None = None,
    backend: str = "clarabel",
):
    """Run the sequential scheme on a BMI problem.

    Returns
    -------
    (x_star, trace)
        ``x_star`` is the x of the last completed round; ``trace`` records
        every round.  The stopping test is evaluated from round 2 onward (the
        round-1 improvement against the initial anchor is recorded as
        informational only).

    Raises
    ------
    SequentialError
        If a round reports INFEASIBLE/UNBOUNDED, or a numerically limited
        iterate fails block feasibility at 1e-6.  The partial trace rides on
        the exception.
    """
    anchor = (
        np.zeros(prob.n) if cfg.anchor0 is None else np.asarray(cfg.anchor0, float).ravel()
    )
    if anchor.size != prob.n:
        raise ValueError(f"anchor0 has length {anchor.size}, expected {prob.n}")

    trace = SolveTrace(feas_tol=cfg.feas_tol)
    x_prev = anchor.copy()

    for k in range(1, cfg.max_round + 1):
        pen = PenaltyConfig(eta=cfg.eta, anchor=anchor)
        prog = build_penalized(prob, cfg.cone, pen)
        sol: ConicSolution = solve(prog, settings=settings, backend=backend)

        if sol.status in (Status.INFEASIBLE, Status.UNBOUNDED):
            raise SequentialError(
                f"round {k}: relaxation reported {sol.status.value}; no iterate to continue from",
                trace,
                sol.status,
                k,
            )
        if sol.status is not Status.OPTIMAL:
            violation = max_block_violation(prog, sol.primal)
            if violation > _USABLE_VIOLATION:
                raise SequentialError(
                    f"round {k}: solver hit {sol.status.value} and the iterate violates "
                    f"a block by {violation:.3e} (> {_USABLE_VIOLATION:.0e})",
                    trace,
                    sol.status,
                    k,
                )

        x_k, X_k = split_primal(sol.primal, prob.n)
        improvement = stopping_improvement(x_k, x_prev, prob.c)
        trace.rounds.append(
            RoundRecord(
                k=k,
                x=x_k,
                objective=float(prob.c @ x_k),
                penalty=penalty_value(x_k, X_k, pen),
                lift_residual=lift_residual(x_k, X_k),
                status=sol.status,
                solve_time=sol.solve_time,
                improvement=improvement,
            )
        )

        if k >= 2 and improvement <= cfg.prog_thresh:
            break

        anchor = nesterov_anchor(x_k, x_prev, k) if cfg.accelerate else x_k.copy()
        x_prev = x_k

    return trace.rounds[-1].x.copy(), trace
