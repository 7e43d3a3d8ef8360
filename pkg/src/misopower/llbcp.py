"""Long-step logarithmic-barrier cutting-plane solver.

Minimizes a linear objective over ``{x : inf_t G_k(x, t) <= 0 for all k}``
intersected with a box. The localization set is the polytope ``A x >= c``;
trial points are approximate tau-centers, minimizers of

    f(x, tau) = obj^T x / tau - sum_n log(a_n^T x - c_n).

Infeasible centers get one normalized subgradient cut per violated oracle;
feasible centers tighten the objective lower bound and shrink tau. Rows
whose slack has more than doubled since their reference slack was last reset
are dropped when their variational quantity is small.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg

from .bernstein import minimize_over_t
from .errors import CenteringError, DegeneratePolytopeError, ProtectedRowError

logger = logging.getLogger(__name__)

BOX = "box"
LOWER_BOUND = "lower-bound"
CUT = "cut"

DROP_RATIO = 2.0
DROP_VARPI = 0.04
GAP_FACTOR = 1.25
T1_CONSTANT = 4093
COLLAPSE_SLACK = 1e-7
STALL_DECREMENT = 1e-3


class _Collapsed(Exception):
    """Centering broke down inside a polytope too thin to hold a ball."""


@dataclass
class SolverConfig:
    epsilon: float = 1e-3
    theta: float = 0.7
    newton_tol: float = 1e-6
    max_newton: int = 200
    objective: Optional[np.ndarray] = None
    max_iterations: int = 5000
    slack_floor: float = 1e-12
    record_trace: bool = False

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.5 < self.theta < 1:
            raise ValueError("theta must lie in (0.5, 1)")


@dataclass
class Polytope:
    """``{x : A x >= c}`` with reference slacks ``pi`` and row provenance tags."""

    A: np.ndarray
    c: np.ndarray
    pi: np.ndarray
    row_tag: list
    n: int

    @property
    def N(self) -> int:
        return self.A.shape[0]

    def slacks(self, x) -> np.ndarray:
        return self.A @ x - self.c

    def lower_bound_row(self) -> int:
        return self.row_tag.index(LOWER_BOUND)

    def is_cut(self, j) -> bool:
        tag = self.row_tag[j]
        return isinstance(tag, tuple) and tag[0] == CUT

    def append(self, a, c, pi, tag):
        self.A = np.vstack([self.A, np.asarray(a, dtype=float)[None, :]])
        self.c = np.append(self.c, float(c))
        self.pi = np.append(self.pi, float(pi))
        self.row_tag.append(tag)


def init_polytope(n: int, epsilon: float):
    """Initial box ``|x_i| <= 1/eps`` and lower-bound row ``1^T x >= -sqrt(n)/eps``.

    Returns ``(polytope, x0, tau0)`` with ``x0 = 0`` and ``tau0 = 1/eps``.
    """
    inv = 1.0 / epsilon
    A = np.vstack([np.eye(n), -np.eye(n), np.ones((1, n))])
    c = np.concatenate([np.full(2 * n, -inv), [-math.sqrt(n) * inv]])
    pi = -c.copy()
    tags = [BOX] * (2 * n) + [LOWER_BOUND]
    return Polytope(A, c, pi, tags, n), np.zeros(n), inv


def _hessian_factor(poly: Polytope, s):
    """Upper-triangular ``R`` with ``R^T R`` the barrier Hessian.

    Taken from a QR factorization of the slack-scaled rows rather than a
    Cholesky of the explicit Hessian: squeezed polytopes square an already
    large condition number.
    """
    R = np.linalg.qr(poly.A / s[:, None], mode="r")
    if np.any(np.abs(np.diag(R)) == 0):
        raise DegeneratePolytopeError("barrier Hessian is singular")
    return R


def _hess_solve(R, rhs):
    y = linalg.solve_triangular(R, rhs, trans="T")
    return linalg.solve_triangular(R, y)


def _barrier_value(poly, x, tau, obj):
    s = poly.slacks(x)
    if np.any(s <= 0):
        return math.inf
    return float(obj @ x / tau - np.sum(np.log(s)))


def tau_center(poly: Polytope, tau: float, x_start, config: SolverConfig, objective=None):
    """Damped Newton on the barrier from a strictly interior start.

    Returns ``(x, newton_steps)``. Backtracking keeps every iterate strictly
    interior; stops once the Newton decrement is at most ``newton_tol``.
    """
    obj = np.ones(poly.n) if objective is None else np.asarray(objective, dtype=float)
    x = np.array(x_start, dtype=float)
    if np.any(poly.slacks(x) <= 0):
        raise CenteringError("start point is not strictly interior", best_point=x)
    fx = _barrier_value(poly, x, tau, obj)
    for step in range(1, config.max_newton + 1):
        s = poly.slacks(x)
        grad = obj / tau - poly.A.T @ (1.0 / s)
        dx = -_hess_solve(_hessian_factor(poly, s), grad)
        decrement = math.sqrt(max(float(-grad @ dx), 0.0))
        if decrement <= config.newton_tol:
            return x, step - 1
        # A step of H-norm below one stays inside the Dikin ellipsoid.
        alpha = 1.0 if decrement < 0.25 else 1.0 / (1.0 + decrement)
        slope = float(grad @ dx)
        while True:
            trial = x + alpha * dx
            ft = _barrier_value(poly, trial, tau, obj)
            if ft <= fx + 0.25 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-14:
                if decrement <= STALL_DECREMENT:
                    return x, step
                raise CenteringError("line search stalled while centering", best_point=x)
        # Rounding in the gradient floors the decrement; a flat barrier means we are there.
        if decrement <= STALL_DECREMENT and fx - ft <= 1e-13 * (1.0 + abs(fx)):
            return trial, step
        x, fx = trial, ft
    raise CenteringError(f"no tau-center within {config.max_newton} Newton steps", best_point=x)


def _inverse_hessian_quad(poly, x, tau, rows):
    s = poly.slacks(x)
    if np.any(s <= 0):
        raise DegeneratePolytopeError("point is not interior")
    R = _hessian_factor(poly, s)
    # a^T H^{-1} a = ||R^{-T} a||^2
    y = linalg.solve_triangular(R, poly.A[rows].T, trans="T")
    return np.sum(y * y, axis=0) / s[rows] ** 2


def variational_quantity(poly: Polytope, x, tau: float, j: int) -> float:
    """``a_j^T H^{-1} a_j / s_j^2`` with ``H`` the barrier Hessian at ``x``."""
    return float(_inverse_hessian_quad(poly, x, tau, [j])[0])


def add_cut(poly: Polytope, normal, through_point, pi=None, tag=(CUT, -1)) -> Polytope:
    """Append ``normal^T (x - through_point) <= 0`` with a unit-norm row."""
    normal = np.asarray(normal, dtype=float)
    norm = np.linalg.norm(normal)
    if norm <= 0:
        raise ValueError("cut normal must be nonzero")
    a = -normal / norm
    poly.append(a, a @ np.asarray(through_point, dtype=float), np.nan if pi is None else pi, tag)
    return poly


def drop_constraint(poly: Polytope, j: int) -> Polytope:
    if not poly.is_cut(j):
        raise ProtectedRowError(f"row {j} ({poly.row_tag[j]}) is protected")
    keep = np.ones(poly.N, dtype=bool)
    keep[j] = False
    poly.A = poly.A[keep]
    poly.c = poly.c[keep]
    poly.pi = poly.pi[keep]
    del poly.row_tag[j]
    return poly


@dataclass
class SolveOutcome:
    status: str
    p_best: Optional[np.ndarray]
    objective_value: float
    lower_bound: float
    cuts_added: int = 0
    cuts_dropped: int = 0
    newton_steps: int = 0
    exit_test: Optional[str] = None
    iterations: int = 0
    trace: List[dict] = field(default_factory=list)


OPTIMAL = "Optimal"
INFEASIBLE = "InfeasibleOrUnbounded"
ITERATION_CAP = "IterationCap"


def drop_candidate(poly: Polytope, x, tau):
    """Rows whose slack has more than doubled, and the cut among them to drop.

    Returns ``(grown, j)``: ``grown`` holds every row with ``omega = s/pi``
    above 2 (the lower-bound row counts as ``omega = 1``) and ``j`` is the
    grown cut row with the smallest variational quantity if that quantity is
    below 0.04, else ``None``.
    """
    s = poly.slacks(x)
    omega = s / poly.pi
    omega[poly.lower_bound_row()] = 1.0
    grown = np.flatnonzero(omega > DROP_RATIO)
    cut_rows = [j for j in grown if poly.is_cut(j)]
    if not cut_rows:
        return grown, None
    varpi = _inverse_hessian_quad(poly, x, tau, cut_rows)
    j_min = int(np.argmin(varpi))
    return grown, (cut_rows[j_min] if varpi[j_min] < DROP_VARPI else None)


def termination_bounds(n: int, epsilon: float):
    log_term = math.log2(1.0 / epsilon)
    t1 = T1_CONSTANT * n * log_term
    t2 = 1e-5 * epsilon**3 / (2.0 * n**1.5 * log_term)
    return t1, t2


def _interior_step(poly, x, new_rows):
    """Move off freshly added cuts through ``x`` along the Dikin direction.

    Returns the new point, or ``None`` when no common interior direction
    exists for all ``new_rows``.
    """
    s = poly.slacks(x)
    old = np.ones(poly.N, dtype=bool)
    old[new_rows] = False
    B = poly.A[old] / s[old][:, None]
    R = np.linalg.qr(B, mode="r")
    direction = _hess_solve(R, poly.A[new_rows].sum(axis=0))
    if np.any(poly.A[new_rows] @ direction <= 0):
        return None
    norm_h = float(np.linalg.norm(B @ direction))
    trial = x + 0.5 * direction / norm_h
    if np.any(poly.slacks(trial) <= 0):
        return None
    return trial


def solve(
    oracles: Sequence,
    box,
    config: Optional[SolverConfig] = None,
    x_start=None,
    extra_rows=None,
) -> SolveOutcome:
    """Minimize ``objective^T x`` subject to every oracle and the box.

    Parameters
    ----------
    oracles : sequence
        Objects with ``t_lower``, ``eval``, ``grad_p`` and ``scale_hint``.
    box : (lower, upper)
        Per-variable bounds, clipped to ``|x_i| <= 1/epsilon``. They and any
        ``extra_rows`` (pairs ``(a, c)`` meaning ``a^T x >= c``) are protected
        rows that are never dropped.
    x_start : array, optional
        Strictly interior start; defaults to the middle of the box.
    """
    config = config or SolverConfig()
    if not oracles:
        raise ValueError("at least one constraint oracle is required")
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    n = lo.size
    obj = np.ones(n) if config.objective is None else np.asarray(config.objective, dtype=float)
    eps = config.epsilon

    poly, _, tau = init_polytope(n, eps)
    inv = 1.0 / eps
    poly.c[:n] = np.maximum(lo, -inv)
    poly.c[n : 2 * n] = -np.minimum(hi, inv)
    lb_row = poly.lower_bound_row()
    poly.A[lb_row] = obj
    lower = -np.linalg.norm(obj) * inv
    poly.c[lb_row] = lower
    for a, c in extra_rows or ():
        poly.append(a, c, np.nan, BOX)

    x = 0.5 * (poly.c[:n] - poly.c[n : 2 * n]) if x_start is None else np.asarray(x_start, dtype=float)
    t1_bound, t2_bound = termination_bounds(n, eps)

    out = SolveOutcome(status=ITERATION_CAP, p_best=None, objective_value=math.inf, lower_bound=lower)

    def center(point):
        try:
            xc, steps = tau_center(poly, tau, point, config, obj)
        except (CenteringError, DegeneratePolytopeError) as exc:
            if poly.slacks(point).min() < COLLAPSE_SLACK * (1.0 + np.abs(point).max()):
                raise _Collapsed() from exc
            raise
        out.newton_steps += steps
        pending = np.isnan(poly.pi)
        poly.pi[pending] = poly.slacks(xc)[pending]
        return xc

    def finish(status, exit_test):
        out.status = status
        out.exit_test = exit_test
        out.lower_bound = lower
        return out

    try:
        x = center(x)
        for it in range(config.max_iterations):
            out.iterations = it + 1
            s = poly.slacks(x)
            if poly.N >= t1_bound:
                return finish(OPTIMAL if out.p_best is not None else INFEASIBLE, "T1")
            if s.min() < max(t2_bound, config.slack_floor * (1.0 + np.abs(x).max())):
                return finish(OPTIMAL if out.p_best is not None else INFEASIBLE, "T2")

            grown, j_drop = drop_candidate(poly, x, tau)
            if j_drop is not None:
                drop_constraint(poly, j_drop)
                lb_row = poly.lower_bound_row()
                out.cuts_dropped += 1
                x = center(x)
                _record(out, config, it, poly, tau, "1.1", lower, obj @ x, x)
                continue
            if grown.size:
                poly.pi[grown] = s[grown]

            checks = [minimize_over_t(o, x, "feasibility-check") for o in oracles]
            violated = [k for k, r in enumerate(checks) if not r.feasible]
            if violated:
                first_new = poly.N
                order = sorted(violated, key=lambda k: -checks[k].g_value)
                for k in order:
                    normal = oracles[k].grad_p(x, checks[k].t_star)
                    if not np.all(np.isfinite(normal)) or np.linalg.norm(normal) == 0:
                        # Zero subgradient at a violated point: the convex constraint has no feasible point.
                        return finish(OPTIMAL if out.p_best is not None else INFEASIBLE, "T2")
                    add_cut(poly, normal, x, tag=(CUT, k))
                new_rows = list(range(first_new, poly.N))
                trial = _interior_step(poly, x, new_rows)
                if trial is None and len(new_rows) > 1:
                    for j in reversed(new_rows[1:]):
                        drop_constraint(poly, j)
                    new_rows = new_rows[:1]
                    trial = _interior_step(poly, x, new_rows)
                if trial is None:
                    return finish(OPTIMAL if out.p_best is not None else INFEASIBLE, "T2")
                out.cuts_added += len(new_rows)
                lb_row = poly.lower_bound_row()
                x = center(trial)
                _record(out, config, it, poly, tau, "2.1", lower, obj @ x, x)
                continue

            value = float(obj @ x)
            if value < out.objective_value:
                out.objective_value = value
                out.p_best = x.copy()
            gap = GAP_FACTOR * poly.N * tau
            if gap < eps:
                _record(out, config, it, poly, tau, "T3", lower, value, x)
                return finish(OPTIMAL, "T3")
            candidate = value - gap
            if candidate > lower:
                lower = candidate
                poly.c[lb_row] = lower
            tau *= config.theta
            x = center(x)
            _record(out, config, it, poly, tau, "2.2", lower, value, x)

    except _Collapsed:
        return finish(OPTIMAL if out.p_best is not None else INFEASIBLE, "T2")
    return finish(ITERATION_CAP, None)


def _record(out, config, it, poly, tau, case, lower, value, x):
    if config.record_trace:
        out.trace.append(
            dict(iter=it, N=poly.N, tau=tau, case=case, l=lower, objective=float(value),
                 min_slack=float(poly.slacks(x).min()))
        )


TRACE_COLUMNS = ("iter", "N", "tau", "case", "l", "objective", "min_slack")


def write_trace_csv(outcome, path) -> None:
    """Write the per-iteration trace of a SolveOutcome (or a bare list of records)."""
    rows = outcome.trace if hasattr(outcome, "trace") else outcome
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
