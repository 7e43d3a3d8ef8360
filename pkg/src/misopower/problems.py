"""Power-allocation problems built on the Bernstein oracles and the LLBCP solver.

All drivers solve in normalized coordinates: every power is expressed as a
multiple of a reference power (the deterministic single-link requirement,
the cap, or the zero-uncertainty MSE solution), so the solver box
``[0, 1/epsilon]`` and the absolute optimality gap ``epsilon`` carry a
relative meaning regardless of the physical power scale.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import llbcp
from .bernstein import InterferenceOracle, MSEOracle, minimize_over_t
from .model import BroadcastScenario, InterferenceScenario

logger = logging.getLogger(__name__)

CERT_TOL = 1e-8
BISECTION_TOL = 1e-3
MAXMIN_EPSILON = 1e-5
MAX_DOUBLINGS = 60
MAX_BISECTIONS = 100


class AffineOracle:
    """Oracle in variables ``x`` for a base oracle in ``p = S x``."""

    def __init__(self, base, S):
        self.base = base
        self.S = np.asarray(S, dtype=float)
        self.dim = self.S.shape[1]

    def _p(self, x):
        return self.S @ np.asarray(x, dtype=float)

    def t_lower(self, x):
        return self.base.t_lower(self._p(x))

    def eval(self, x, t):
        return self.base.eval(self._p(x), t)

    def grad_p(self, x, t):
        return self.S.T @ self.base.grad_p(self._p(x), t)

    def scale_hint(self, x):
        return self.base.scale_hint(self._p(x))


def certify(oracles, p, tol=CERT_TOL):
    """Independent full inner minimization on every oracle.

    Returns the per-oracle minimal ``G`` values and whether all are within
    ``tol*(1+|G|)`` of feasibility.
    """
    values = np.array([minimize_over_t(o, p, "full-minimize").g_value for o in oracles])
    ok = bool(np.all(values <= tol * (1.0 + np.abs(values))))
    return values, ok


def to_dbw(power) -> float:
    return 10.0 * math.log10(power) if power > 0 else -math.inf


@dataclass
class PowerMinResult:
    p_star: Optional[np.ndarray]
    total_power: float
    status: str
    certified: bool = False
    g_values: Optional[np.ndarray] = None
    iterations: int = 0
    cuts: int = 0
    newton_steps: int = 0
    exit_test: Optional[str] = None
    runtime_ms: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def total_power_dbw(self) -> float:
        return to_dbw(self.total_power) if self.p_star is not None else math.nan


@dataclass
class MaxMinResult:
    a_star: float
    p_star: Optional[np.ndarray]
    fixed_point_residual: float
    iterations: int
    mode: str
    status: str = llbcp.OPTIMAL
    b_star: float = math.nan
    history: list = field(default_factory=list)
    runtime_ms: float = 0.0
    cuts: int = 0


def _oracles(scenario, conventions):
    return [InterferenceOracle(scenario, k, **conventions) for k in range(scenario.K)]


def reference_powers(scenario: InterferenceScenario) -> np.ndarray:
    """Powers meeting each SINR target with no interference and no error."""
    return scenario.alpha * scenario.eta2 / scenario.direct_gains()


def _config(config, **overrides):
    base = config or llbcp.SolverConfig()
    values = {**base.__dict__, **overrides}
    return llbcp.SolverConfig(**values)


def solve_power_min(scenario: InterferenceScenario, config=None, **conventions) -> PowerMinResult:
    """Minimize total power subject to the Bernstein SINR-outage constraints."""
    start = time.perf_counter()
    ref = reference_powers(scenario)
    oracles = [AffineOracle(o, np.diag(ref)) for o in _oracles(scenario, conventions)]
    weight = ref / ref.sum()
    cfg = _config(config, objective=weight)
    K = scenario.K
    hi = np.full(K, np.inf)
    extra = []
    if scenario.p_bar is not None:
        hi = scenario.p_bar / ref
    if scenario.p_bar_tot is not None:
        extra.append((-ref, -scenario.p_bar_tot))
    x0 = _start_point(hi, cfg.epsilon, extra)
    outcome = llbcp.solve(oracles, (np.zeros(K), hi), cfg, x_start=x0, extra_rows=extra)
    return _power_result(outcome, ref, _oracles(scenario, conventions), start)


def _start_point(hi, epsilon, extra):
    top = np.minimum(hi, 1.0 / epsilon)
    x0 = 0.5 * top
    for a, c in extra:
        # Shrink toward the origin until every coupling row is strictly satisfied.
        while a @ x0 - c <= 0:
            x0 = 0.5 * x0
    return x0


def _power_result(outcome, ref, oracles, start):
    p = None if outcome.p_best is None else ref * outcome.p_best
    result = PowerMinResult(
        p_star=p,
        total_power=math.inf if p is None else float(p.sum()),
        status=outcome.status if p is not None else llbcp.INFEASIBLE,
        iterations=outcome.iterations,
        cuts=outcome.cuts_added,
        newton_steps=outcome.newton_steps,
        exit_test=outcome.exit_test,
        trace=outcome.trace,
    )
    if p is not None:
        result.g_values, result.certified = certify(oracles, p)
    result.runtime_ms = 1e3 * (time.perf_counter() - start)
    return result


@dataclass
class ScaleResult:
    b_star: float
    p: Optional[np.ndarray]
    status: str
    cuts: int = 0


def inner_power_scale(scenario: InterferenceScenario, a: float, mode="individual", config=None,
                      b_max=None, **conventions) -> ScaleResult:
    """Smallest budget multiplier ``b`` such that SINR target ``a`` is met by powers within ``b`` times the caps.

    Solved by LLBCP in the ``K+1`` variables ``(x, b)`` with ``p = cap * x``;
    the couplings ``x_k <= b`` (individual) or ``sum_k x_k <= b`` (total)
    are protected rows. Returns ``b_star = inf`` when no allocation is found.
    """
    K = scenario.K
    if a <= 0:
        return ScaleResult(0.0, np.zeros(K), llbcp.OPTIMAL)
    cfg = _config(config)
    b_max = 1.0 / cfg.epsilon if b_max is None else b_max
    if mode == "individual":
        if scenario.p_bar is None:
            raise ValueError("individual mode needs per-link caps p_bar")
        cap = np.asarray(scenario.p_bar, dtype=float)
        extra = []
        for k in range(K):
            row = np.zeros(K + 1)
            row[k], row[K] = -1.0, 1.0
            extra.append((row, 0.0))
    elif mode == "total":
        if scenario.p_bar_tot is None:
            raise ValueError("total mode needs a total power cap p_bar_tot")
        cap = np.full(K, float(scenario.p_bar_tot))
        row = np.concatenate([-np.ones(K), [1.0]])
        extra = [(row, 0.0)]
    else:
        raise ValueError(f"unknown constraint mode {mode!r}")

    target = scenario.replace(alpha=np.full(K, float(a)))
    S = np.hstack([np.diag(cap), np.zeros((K, 1))])
    oracles = [AffineOracle(o, S) for o in _oracles(target, conventions)]
    objective = np.zeros(K + 1)
    objective[K] = 1.0
    cfg = _config(cfg, objective=objective)
    upper = np.full(K + 1, b_max)
    x0 = np.concatenate([np.full(K, 0.25 * b_max / K), [0.5 * b_max]])
    outcome = llbcp.solve(oracles, (np.zeros(K + 1), upper), cfg, x_start=x0, extra_rows=extra)
    if outcome.p_best is None:
        return ScaleResult(math.inf, None, outcome.status, outcome.cuts_added)
    x = outcome.p_best
    return ScaleResult(float(x[K]), cap * x[:K], outcome.status, outcome.cuts_added)


def solve_maxmin(scenario: InterferenceScenario, mode="individual", config=None, **conventions) -> MaxMinResult:
    """Max-min SINR under outage constraints by bisection on the SINR margin.

    ``b*(a)`` from :func:`inner_power_scale` is increasing in ``a`` and the
    optimal margin satisfies ``b*(a) = 1``. The bisection keeps a feasible
    lower end (``b <= 1``) and stops once ``1 - 1e-3 <= b*(a) <= 1``; the
    returned powers are rescaled so the budget binds.

    Without an explicit ``config`` the inner solves run at
    ``epsilon = 1e-5`` so that ``b*`` is resolved well inside the
    bisection tolerance.
    """
    start = time.perf_counter()
    cfg = _config(config) if config is not None else llbcp.SolverConfig(epsilon=MAXMIN_EPSILON)
    K = scenario.K
    history = []
    cuts = 0

    def scale(a):
        nonlocal cuts
        r = inner_power_scale(scenario, a, mode, cfg, b_max=4.0, **conventions)
        history.append((a, r.b_star))
        cuts += r.cuts
        return r

    if mode == "individual":
        cap_power = np.asarray(scenario.p_bar, dtype=float)
    else:
        cap_power = np.full(K, float(scenario.p_bar_tot) / K)
    a_hi = float(np.min(cap_power * scenario.direct_gains() / scenario.eta2))
    a_lo, r_lo = 0.0, ScaleResult(0.0, np.zeros(K), llbcp.OPTIMAL)
    r_hi = scale(a_hi)
    doublings = 0
    while r_hi.b_star <= 1.0:
        a_lo, r_lo = a_hi, r_hi
        if 1.0 - r_hi.b_star <= BISECTION_TOL:
            break
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise RuntimeError("SINR margin bracket did not close")
        a_hi *= 2.0
        r_hi = scale(a_hi)
    steps = 0
    while 1.0 - r_lo.b_star > BISECTION_TOL and steps < MAX_BISECTIONS:
        steps += 1
        a_mid = 0.5 * (a_lo + a_hi)
        r_mid = scale(a_mid)
        if r_mid.b_star <= 1.0:
            a_lo, r_lo = a_mid, r_mid
        else:
            a_hi, r_hi = a_mid, r_mid
        if a_hi - a_lo <= 1e-12 * a_hi:
            break
    residual = abs(r_lo.b_star - 1.0)
    if residual > BISECTION_TOL:
        raise AssertionError(f"fixed point not reached: |P(a*) - 1| = {residual:.3g}")

    p = r_lo.p
    if mode == "individual":
        load = np.max(p / cap_power)
    else:
        load = p.sum() / float(scenario.p_bar_tot)
    p = p / load
    return MaxMinResult(
        a_star=a_lo,
        p_star=p,
        fixed_point_residual=residual,
        iterations=len(history),
        mode=mode,
        b_star=r_lo.b_star,
        history=history,
        runtime_ms=1e3 * (time.perf_counter() - start),
        cuts=cuts,
    )


def mse_reference_powers(bscenario: BroadcastScenario) -> np.ndarray:
    return bscenario.eta2 / bscenario.mu


def solve_mse_power_min(bscenario: BroadcastScenario, config=None) -> PowerMinResult:
    """Minimize ``tr(G Q G^H)`` subject to the Bernstein MSE-outage constraints."""
    start = time.perf_counter()
    ref = mse_reference_powers(bscenario)
    weight = ref * bscenario.column_energy()
    base = [MSEOracle(bscenario, k) for k in range(bscenario.K)]
    oracles = [AffineOracle(o, np.diag(ref)) for o in base]
    cfg = _config(config, objective=weight / weight.sum())
    K = bscenario.K
    hi = np.full(K, np.inf)
    x0 = _start_point(hi, cfg.epsilon, [])
    outcome = llbcp.solve(oracles, (np.zeros(K), hi), cfg, x_start=x0)
    result = _power_result(outcome, ref, base, start)
    if result.p_star is not None:
        result.total_power = float(result.p_star @ bscenario.column_energy())
    return result
