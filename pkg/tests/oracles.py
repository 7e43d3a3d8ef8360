"""Reference computations that share no code with the package.

Everything here is written from the formulas directly (scalar loops, dense
grids, closed-form distributions) and is used to freeze expected values and
to cross-check the production implementations.
"""

import math

import numpy as np
from scipy import stats


def G_interference_scalar(h_hat, sigma2, g, eta2, alpha, eps, k, p, t, spread="norm", sign=1.0):
    """Interference Bernstein function by explicit loops over users."""
    K = len(p)
    total = alpha * eta2
    for j in range(K):
        a = abs(np.vdot(h_hat[k][j], g[j])) ** 2
        if spread == "norm":
            b = sigma2[k][j] * float(np.sum(np.abs(g[j]) ** 2))
        else:
            b = sigma2[k][j] * abs(np.sum(g[j])) ** 2
        if j == k:
            y = p[k] * b / t
            total -= p[k] * a / (1.0 + y) + sign * t * math.log1p(y)
        else:
            x = alpha * p[j] * b / t
            total += alpha * p[j] * a / (1.0 - x) - t * math.log1p(-x)
    return total - t * math.log(eps)


def G_interference_vec(sc, k, p, t, spread="norm"):
    """Vectorized in ``t``, derived-sign form, written independently of the oracle class."""
    t = np.asarray(t, dtype=float)
    K = sc.K
    val = sc.alpha[k] * sc.eta2[k] * np.ones_like(t)
    for j in range(K):
        a = abs(np.vdot(sc.h_hat[k, j], sc.g[j])) ** 2
        b = sc.sigma2[k, j] * (np.sum(np.abs(sc.g[j]) ** 2) if spread == "norm" else abs(sc.g[j].sum()) ** 2)
        if j == k:
            y = p[k] * b / t
            val = val - p[k] * a / (1 + y) - t * np.log1p(y)
        else:
            x = sc.alpha[k] * p[j] * b / t
            val = val + sc.alpha[k] * p[j] * a / (1 - x) - t * np.log1p(-x)
    return val - t * math.log(sc.eps[k])


def rho_interference(sc, k, p, spread="norm"):
    r = 0.0
    for j in range(sc.K):
        if j == k:
            continue
        b = sc.sigma2[k, j] * (np.sum(np.abs(sc.g[j]) ** 2) if spread == "norm" else abs(sc.g[j].sum()) ** 2)
        r = max(r, sc.alpha[k] * p[j] * b)
    return r


def grid_inf_t(fun, rho, t_hi, n=1_000_000, refine=3):
    """Infimum of ``fun`` over ``t > rho`` by a dense geometric grid plus local regridding."""
    offsets = np.geomspace(max(rho, 1e-12) * 1e-10 + 1e-14, t_hi, n)
    ts = rho + offsets
    vals = fun(ts)
    i = int(np.argmin(vals))
    best = float(vals[i])
    for _ in range(refine):
        lo = ts[max(i - 1, 0)]
        hi = ts[min(i + 1, ts.size - 1)]
        ts = np.linspace(lo, hi, 2001)
        vals = fun(ts)
        i = int(np.argmin(vals))
        best = min(best, float(vals[i]))
    return best, float(ts[i])


def g_interference_grid(sc, k, p, n=4000):
    """``inf_t G`` on a dense grid; an upper bound on the true infimum."""
    rho = rho_interference(sc, k, p)
    scale = sc.alpha[k] * sc.eta2[k] + np.sum(p) * 10 * np.max(np.abs(sc.h_hat[k]) ** 2) * sc.M + 1.0
    return grid_inf_t(lambda t: G_interference_vec(sc, k, p, t), rho, 1e5 * scale, n=n, refine=2)[0]


def grid_power_min_k2(sc, n_grid=120, levels=3):
    """Two-user power minimization by a refined search over ``p_1``.

    For fixed ``p_1`` user 2's function decreases in ``p_2`` and user 1's
    increases, so the least feasible ``p_2`` comes from bisection on user 2
    and is accepted if user 1 still holds there. The ``p_1`` grid is
    refined around the best point ``levels`` times. Grid infima over ``t``
    are upper bounds, so every accepted point is truly feasible.
    """
    ref = sc.alpha * sc.eta2 / np.array([abs(np.vdot(sc.h_hat[k, k], sc.g[k])) ** 2 for k in range(2)])

    def least_p2(p1):
        lo, hi = 0.0, ref[1]
        while g_interference_grid(sc, 1, np.array([p1, hi])) > 0:
            hi *= 2.0
            if hi > 1e4 * ref[1]:
                return math.inf
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if g_interference_grid(sc, 1, np.array([p1, mid])) <= 0:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-7 * hi:
                break
        return hi

    def total(p1):
        p2 = least_p2(p1)
        if not math.isfinite(p2) or g_interference_grid(sc, 0, np.array([p1, p2])) > 0:
            return math.inf, None
        return p1 + p2, np.array([p1, p2])

    grid = ref[0] * np.geomspace(1.0, 1e3, n_grid)
    best, best_p, best_i = math.inf, None, None
    for i, p1 in enumerate(grid):
        v, p = total(p1)
        if v < best:
            best, best_p, best_i = v, p, i
    if best_p is None:
        return math.inf, None
    for _ in range(levels):
        lo = grid[max(best_i - 1, 0)]
        hi = grid[min(best_i + 1, grid.size - 1)]
        grid = np.linspace(lo, hi, 25)
        best_i = None
        for i, p1 in enumerate(grid):
            v, p = total(p1)
            if v <= best:
                best, best_p, best_i = v, p, i
        if best_i is None:
            break
    return best, best_p


def outage_k1_closed_form(a_mean, var, p, alpha, eta2):
    """``Pr(p|h^H g|^2 <= alpha*eta2)`` with ``h^H g ~ CN(m, var)``, ``|m|^2 = a_mean``.

    ``2|h^H g|^2/var`` is noncentral chi-square with 2 degrees of freedom
    and noncentrality ``2*a_mean/var``.
    """
    threshold = alpha * eta2 / p
    return float(stats.ncx2.cdf(2 * threshold / var, 2, 2 * a_mean / var))


def mse_scalar_satisfaction(g2, sigma2, q, mu, eta2):
    """``Pr((|d|^2 g^2 q + eta2)/q <= mu)`` with ``|d|^2 ~ Exp(mean sigma2)``."""
    bound = (mu * q - eta2) / (g2 * q)
    if bound < 0:
        return 0.0
    return 1.0 - math.exp(-bound / sigma2)


def mse_scalar_G(q, t, eta2, mu, sigma2, g2, phi):
    lam = sigma2 * g2 * q
    return (eta2 - q * mu) - 0.5 * t * math.log1p(-2 * lam / t) - t * math.log1p(-phi)


def mse_scalar_min_q(eta2, mu, sigma2, g2, phi, n=200_001):
    """Least ``q`` with ``inf_t G <= 0`` for the scalar MSE constraint, by grid plus bisection."""

    def feasible(q):
        lam = sigma2 * g2 * q
        rho = 2 * lam
        ts = rho + np.geomspace(1e-12 + 1e-10 * rho, 1e6 * (eta2 + q * mu + lam + 1), 20000)
        vals = (eta2 - q * mu) - 0.5 * ts * np.log1p(-2 * lam / ts) - ts * math.log1p(-phi)
        return vals.min() <= 0

    lo, hi = 0.0, eta2 / mu
    while not feasible(hi):
        hi *= 2
        if hi > 1e12:
            return math.inf
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi
