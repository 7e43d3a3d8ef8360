"""Deterministic convex replacements of the SINR and MSE outage constraints.

Each outage constraint becomes ``inf_{t > rho(x)} G(x, t) <= 0`` where ``G``
is built from the log moment generating function of the channel-error
statistic. Oracles expose ``G``, its gradient in the decision vector and the
left edge ``rho`` of the scale-parameter domain; :func:`minimize_over_t`
performs the inner one-dimensional minimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import BroadcastScenario, InterferenceScenario

T_MAX = 1e12
N_PROBES = 32
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

VARIANCE_CONVENTIONS = ("paper", "norm")
SIGNAL_FORMS = ("derived", "printed")


def log_mgf_noncentral_chi2(t: float, lam: float) -> float:
    """``log E[exp(t X)]`` for X noncentral chi-square, 2 dof, noncentrality ``lam``."""
    if t >= 0.5:
        raise DomainError(f"log-MGF of chi2_2 needs t < 1/2, got {t}")
    return lam * t / (1.0 - 2.0 * t) - math.log1p(-2.0 * t)


class InterferenceOracle:
    """Bernstein constraint of user ``k`` in the MISO interference channel.

    Parameters
    ----------
    scenario : InterferenceScenario
    k : int
        User whose outage constraint is represented.
    variance_convention : {"paper", "norm"}
        Factor multiplying ``sigma2`` in the variance of ``delta^H g``:
        ``|1^T g|^2`` (``"paper"``) or ``||g||^2`` (``"norm"``).
    signal_form : {"derived", "printed"}
        Sign of the ``t*log(1 + p_k*b_k/t)`` desired-signal term. ``"derived"``
        is the exact log-MGF of the noncentral chi-square statistic and keeps
        ``G`` jointly convex; ``"printed"`` flips it.
    """

    def __init__(self, scenario: InterferenceScenario, k: int, variance_convention="norm", signal_form="derived"):
        if variance_convention not in VARIANCE_CONVENTIONS:
            raise ValueError(f"unknown variance convention {variance_convention!r}")
        if signal_form not in SIGNAL_FORMS:
            raise ValueError(f"unknown signal form {signal_form!r}")
        self.scenario = scenario
        self.k = k
        self.variance_convention = variance_convention
        self.signal_form = signal_form
        self.dim = scenario.K

        g = scenario.g
        if variance_convention == "paper":
            spread = np.abs(g.sum(axis=1)) ** 2
        else:
            spread = np.sum(np.abs(g) ** 2, axis=1)
        self.mean_gain = np.abs(np.einsum("jm,jm->j", scenario.h_hat[k].conj(), g)) ** 2
        self.var_gain = scenario.sigma2[k] * spread
        self.alpha = float(scenario.alpha[k])
        self.noise_term = self.alpha * float(scenario.eta2[k])
        self.log_eps = math.log(float(scenario.eps[k]))
        self._others = np.array([j for j in range(scenario.K) if j != k], dtype=int)
        self._sign = 1.0 if signal_form == "derived" else -1.0

    def t_lower(self, p) -> float:
        if self._others.size == 0:
            return 0.0
        p = np.asarray(p, dtype=float)
        return float(self.alpha * np.max(self.var_gain[self._others] * p[self._others]))

    def _check(self, p, t):
        rho = self.t_lower(p)
        if np.any(np.asarray(t) <= rho):
            raise DomainError(f"t must exceed rho={rho!r}")

    def eval(self, p, t):
        """``G_k(p, t)``; ``t`` may be an array of scale parameters."""
        p = np.asarray(p, dtype=float)
        t = np.asarray(t, dtype=float)
        self._check(p, t)
        k, o = self.k, self._others
        tt = t[..., None]
        x = self.alpha * p[o] * self.var_gain[o] / tt
        interference = np.sum(self.alpha * p[o] * self.mean_gain[o] / (1.0 - x) - tt * np.log1p(-x), axis=-1)
        y = p[k] * self.var_gain[k] / t
        signal = p[k] * self.mean_gain[k] / (1.0 + y) + self._sign * t * np.log1p(y)
        out = self.noise_term + interference - signal - t * self.log_eps
        return float(out) if out.ndim == 0 else out

    def grad_p(self, p, t) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        t = float(t)
        self._check(p, t)
        k, o = self.k, self._others
        grad = np.zeros(self.dim)
        x = self.alpha * p[o] * self.var_gain[o] / t
        grad[o] = self.alpha * self.mean_gain[o] / (1.0 - x) ** 2 + self.alpha * self.var_gain[o] / (1.0 - x)
        y = p[k] * self.var_gain[k] / t
        grad[k] = -self.mean_gain[k] / (1.0 + y) ** 2 - self._sign * self.var_gain[k] / (1.0 + y)
        return grad

    def dgdt(self, p, t) -> float:
        """Partial derivative of ``G`` in the scale parameter."""
        p = np.asarray(p, dtype=float)
        t = float(t)
        k, o = self.k, self._others
        x = self.alpha * p[o] * self.var_gain[o] / t
        d = np.sum(-self.alpha * p[o] * self.mean_gain[o] * x / (t * (1.0 - x) ** 2) - np.log1p(-x) - x / (1.0 - x))
        y = p[k] * self.var_gain[k] / t
        d -= p[k] * self.mean_gain[k] * y / (t * (1.0 + y) ** 2) + self._sign * (math.log1p(y) - y / (1.0 + y))
        return float(d - self.log_eps)

    def scale_hint(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return float(self.noise_term + self.alpha * np.dot(p, self.mean_gain) + p[self.k] * self.mean_gain[self.k])


def t_lower_interference(scenario, k, p, **conventions) -> float:
    return InterferenceOracle(scenario, k, **conventions).t_lower(p)


def eval_G_interference(scenario, k, p, t, **conventions):
    return InterferenceOracle(scenario, k, **conventions).eval(p, t)


def grad_G_interference(scenario, k, p, t, **conventions) -> np.ndarray:
    return InterferenceOracle(scenario, k, **conventions).grad_p(p, t)


class MSEOracle:
    """Bernstein constraint ``Pr(MSE_k <= mu_k) >= phi_k`` of broadcast user ``k``.

    The decision vector is the diagonal ``q`` of the power matrix ``Q``.
    """

    def __init__(self, bscenario: BroadcastScenario, k: int):
        self.scenario = bscenario
        self.k = k
        self.dim = bscenario.K
        root = np.sqrt(bscenario.Lambda[k])
        # Rows of Lambda_k^{1/2} G: the log-det only depends on this product.
        self._U = root[:, None] * bscenario.G_mat
        self.eta2 = float(bscenario.eta2[k])
        self.mu = float(bscenario.mu[k])
        self.log_tail = math.log1p(-float(bscenario.phi[k]))

    def _gram(self, q) -> np.ndarray:
        # S = Lambda^{1/2} G Q G^H Lambda^{1/2}, Hermitian PSD and similar to Lambda G Q G^H.
        return (self._U * q) @ self._U.conj().T

    def _eigs(self, q) -> np.ndarray:
        return np.clip(np.linalg.eigvalsh(self._gram(q)), 0.0, None)

    def t_lower(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return 2.0 * float(np.max(self._eigs(q), initial=0.0))

    def eval(self, q, t):
        q = np.asarray(q, dtype=float)
        t = np.asarray(t, dtype=float)
        lam = self._eigs(q)
        if np.any(t <= 2.0 * np.max(lam, initial=0.0)):
            raise DomainError("t must exceed twice the spectral radius of Lambda G Q G^H")
        tt = t[..., None]
        logdet = np.sum(np.log1p(-2.0 * lam / tt), axis=-1)
        out = (self.eta2 - q[self.k] * self.mu) - 0.5 * t * logdet - t * self.log_tail
        return float(out) if out.ndim == 0 else out

    def grad_p(self, q, t) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        t = float(t)
        S = self._gram(q)
        B = np.eye(S.shape[0]) - (2.0 / t) * S
        if np.any(np.linalg.eigvalsh(B) <= 0):
            raise DomainError("t must exceed twice the spectral radius of Lambda G Q G^H")
        # d/dq_j of -(t/2) log det(I - (2/t) S) = u_j^H B^{-1} u_j, u_j = Lambda^{1/2} G[:, j]
        X = np.linalg.solve(B, self._U)
        grad = np.real(np.einsum("mj,mj->j", self._U.conj(), X))
        grad[self.k] -= self.mu
        return grad

    def dgdt(self, q, t) -> float:
        z = 2.0 * self._eigs(np.asarray(q, dtype=float)) / float(t)
        return float(-0.5 * np.sum(np.log1p(-z) + z / (1.0 - z)) - self.log_tail)

    def scale_hint(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return float(self.eta2 + q[self.k] * self.mu + np.sum(self._eigs(q)))


def eval_G_mse(bscenario, k, q, t):
    return MSEOracle(bscenario, k).eval(q, t)


def grad_G_mse(bscenario, k, q, t) -> np.ndarray:
    return MSEOracle(bscenario, k).grad_p(q, t)


@dataclass
class InnerMinResult:
    t_star: float
    g_value: float
    feasible: bool
    evaluations: int
    bracketed: bool = True


def minimize_over_t(oracle, p, mode="full-minimize", tol=1e-8) -> InnerMinResult:
    """Minimize ``G(p, t)`` over the scale parameter ``t``.

    The left domain edge is guarded at ``rho*(1+1e-9) + 1e-12``. Thirty-two
    geometrically spaced probes pick the bracket (expanded by factors of 4
    up to ``T_MAX`` if the minimum sits at the last probe), then golden
    section narrows it to ``tol*t``. For oracles with a ``dgdt`` method a
    full minimization bisects on the derivative's sign instead, which pins
    ``t*`` down to rounding. In ``"feasibility-check"`` mode the search
    returns as soon as any evaluated ``t`` gives ``G <= 0``.
    """
    if mode not in ("full-minimize", "feasibility-check"):
        raise ValueError(f"unknown mode {mode!r}")
    early = mode == "feasibility-check"
    rho = oracle.t_lower(p)
    edge = rho * (1.0 + 1e-9) + 1e-12
    span = max(oracle.scale_hint(p), rho, 1e-300)
    offsets = np.geomspace(edge - rho, max(1e4 * span, 1.0), N_PROBES)
    ts = np.concatenate([[edge], rho + offsets[1:]])

    f = lambda t: oracle.eval(p, t)  # noqa: E731
    evals = 1
    g0 = f(ts[0])
    if early and g0 <= 0:
        return InnerMinResult(ts[0], g0, True, evals)
    vals = np.empty(N_PROBES)
    vals[0] = g0
    vals[1:] = f(ts[1:])
    evals += N_PROBES - 1
    i = int(np.argmin(vals))
    if early and vals[i] <= 0:
        return InnerMinResult(float(ts[i]), float(vals[i]), True, evals)

    bracketed = True
    if i == N_PROBES - 1:
        lo, mid, fmid = ts[-2], ts[-1], vals[-1]
        while True:
            nxt = rho + 4.0 * (mid - rho)
            if nxt > T_MAX:
                return InnerMinResult(float(mid), float(fmid), bool(fmid <= 0), evals, bracketed=False)
            fn = f(nxt)
            evals += 1
            if early and fn <= 0:
                return InnerMinResult(float(nxt), float(fn), True, evals)
            if fn >= fmid:
                hi = nxt
                break
            lo, mid, fmid = mid, nxt, fn
    else:
        lo = ts[max(i - 1, 0)]
        hi = ts[i + 1]
    best_t, best_g = float(ts[i]), float(vals[i])

    a, b = float(lo), float(hi)
    dgdt = None if early else getattr(oracle, "dgdt", None)
    if dgdt is not None:
        # Function values cannot locate t* much below sqrt(machine eps), so
        # bisect on the sign of dG/dt instead; geometric midpoints while the
        # bracket spans decades.
        if dgdt(p, a) < 0 < dgdt(p, b):
            for _ in range(400):
                m = math.sqrt(a * b) if b > 4.0 * a else 0.5 * (a + b)
                if not a < m < b:
                    break
                if dgdt(p, m) < 0:
                    a = m
                else:
                    b = m
            t_root = 0.5 * (a + b)
            g_root = float(f(t_root))
            evals += 1
            if g_root <= best_g:
                best_t, best_g = t_root, g_root
        return InnerMinResult(best_t, best_g, bool(best_g <= 0), evals, bracketed)

    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    evals += 2
    while b - a > tol * 0.5 * (a + b):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        evals += 1
        fmin = min(f1, f2)
        if early and fmin <= 0:
            break
    for t_c, g_c in ((x1, f1), (x2, f2)):
        if g_c < best_g:
            best_t, best_g = float(t_c), float(g_c)
    return InnerMinResult(best_t, best_g, bool(best_g <= 0), evals, bracketed)
