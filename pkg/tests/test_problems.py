import math

import numpy as np
import pytest

from misopower import llbcp
from misopower.bernstein import InterferenceOracle, MSEOracle
from misopower.llbcp import SolverConfig
from misopower.model import (
    BroadcastScenario,
    generate_broadcast_scenario,
    generate_interference_scenario,
    realize_channels,
)
from misopower.problems import (
    certify,
    inner_power_scale,
    solve_maxmin,
    solve_mse_power_min,
    solve_power_min,
    to_dbw,
)

from frozen import K2_GRID, K2_PARAMS, MSE_SCALAR

TIGHT = SolverConfig(epsilon=1e-7)


def k2(seed):
    p = K2_PARAMS
    return generate_interference_scenario(p["K"], p["M"], p["kappa"], p["eps"], p["alpha"], seed=seed)


class TestPowerMin:
    def test_single_link_deterministic_limit(self):
        sc = generate_interference_scenario(1, 3, 0.1, 0.05, 2.0, seed=4).replace(sigma2=np.zeros((1, 1)))
        res = solve_power_min(sc, TIGHT)
        expected = sc.alpha[0] * sc.eta2[0] / sc.direct_gains()[0]
        assert res.p_star[0] == pytest.approx(expected, rel=1e-6)

    def test_zero_error_matches_linear_system(self):
        sc = generate_interference_scenario(3, 3, 0.1, 0.05, 1.0, seed=2).replace(sigma2=np.zeros((3, 3)))
        F = np.abs(np.einsum("kjm,jm->kj", sc.h_hat.conj(), sc.g)) ** 2
        D = np.diag(sc.alpha / np.diag(F))
        p_exact = np.linalg.solve(np.eye(3) - D @ (F - np.diag(np.diag(F))), D @ sc.eta2)
        np.testing.assert_allclose(solve_power_min(sc, TIGHT).p_star, p_exact, rtol=1e-6)

    @pytest.mark.parametrize("seed", [1, 4, 7])
    def test_matches_grid_oracle(self, seed):
        res = solve_power_min(k2(seed))
        assert res.status == llbcp.OPTIMAL
        assert res.total_power == pytest.approx(K2_GRID[seed], rel=1e-2)

    @pytest.mark.parametrize("seed", [1, 7])
    def test_never_below_true_outage_optimum(self, seed):
        # Genie: the least total power meeting the empirical outage on a
        # fixed sample, found by a p_1 grid with the exact p_2 quantile.
        sc = k2(seed)
        res = solve_power_min(sc)
        h = realize_channels(sc, 99, size=50_000).h
        A = np.abs(np.einsum("nkjm,jm->nkj", h.conj(), sc.g)) ** 2
        a, e2, eps = sc.alpha, sc.eta2, sc.eps
        genie = math.inf
        for p0 in res.p_star[0] * np.geomspace(0.05, 3.0, 300):
            p1 = np.quantile(a[1] * (e2[1] + p0 * A[:, 1, 0]) / A[:, 1, 1], 1 - eps[1])
            if np.mean(p0 * A[:, 0, 0] <= a[0] * (e2[0] + p1 * A[:, 0, 1])) <= eps[0]:
                genie = min(genie, p0 + p1)
        assert math.isfinite(genie)
        assert res.total_power >= genie

    def test_result_certified(self):
        sc = generate_interference_scenario(3, 3, 0.1, 0.05, 1.0, seed=3)
        res = solve_power_min(sc)
        assert res.certified and np.all(res.p_star >= 0)
        values, ok = certify([InterferenceOracle(sc, k) for k in range(3)], res.p_star)
        assert ok and np.all(values <= 1e-8 * (1 + np.abs(values)))
        assert res.total_power_dbw == pytest.approx(to_dbw(res.p_star.sum()))

    def test_alpha_sweep_nondecreasing_then_infeasible(self):
        powers = []
        for a_db in range(-5, 40, 5):
            res = solve_power_min(generate_interference_scenario(3, 3, 0.1, 0.05, 10 ** (a_db / 10), seed=1))
            powers.append(res.total_power)
        finite = [p for p in powers if math.isfinite(p)]
        assert all(b >= a * (1 - 1e-6) for a, b in zip(powers, powers[1:]))
        assert len(finite) < len(powers), "expected the sweep to cross the feasibility limit"
        assert finite[-1] > 10 * finite[0]

    def test_caps_respected(self):
        sc = generate_interference_scenario(3, 3, 0.1, 0.05, 1.0, seed=2)
        free = solve_power_min(sc)
        cap = 1.2 * free.p_star.max()
        capped = solve_power_min(sc.replace(p_bar=np.full(3, cap)))
        assert np.all(capped.p_star <= cap * (1 + 1e-9))
        tight = solve_power_min(sc.replace(p_bar=np.full(3, 0.5 * free.p_star.min())))
        assert tight.status == llbcp.INFEASIBLE
        total = solve_power_min(sc.replace(p_bar_tot=1.01 * free.total_power))
        assert total.status == llbcp.OPTIMAL and total.total_power <= 1.01 * free.total_power

    def test_paper_variance_convention_selectable(self):
        sc = generate_interference_scenario(3, 3, 0.1, 0.05, 1.0, seed=2)
        res = solve_power_min(sc, variance_convention="paper")
        assert res.certified
        ok = certify([InterferenceOracle(sc, k, variance_convention="paper") for k in range(3)], res.p_star)[1]
        assert ok


def capped(seed=2, kappa=0.1, eps=0.05, budget=30.0):
    return generate_interference_scenario(3, 3, kappa, eps, 1.0, seed=seed, p_bar=budget / 3, p_bar_tot=budget)


class TestMaxMin:
    def test_zero_target(self):
        r = inner_power_scale(capped(), 0.0)
        assert r.b_star == 0.0 and np.all(r.p == 0)

    def test_scale_monotone_in_target(self):
        sc = capped()
        cfg = SolverConfig(epsilon=1e-5)
        b = [inner_power_scale(sc, a, "individual", cfg).b_star for a in (0.5, 1.0, 2.0)]
        assert b[0] <= b[1] <= b[2]

    def test_scale_requires_caps(self):
        sc = generate_interference_scenario(2, 2, 0.1, 0.05, 1.0, seed=1)
        with pytest.raises(ValueError):
            inner_power_scale(sc, 1.0, "individual")
        with pytest.raises(ValueError):
            inner_power_scale(sc, 1.0, "total")
        with pytest.raises(ValueError):
            inner_power_scale(capped(), 1.0, "joint")

    def test_single_link_deterministic_limit(self):
        sc = generate_interference_scenario(1, 3, 0.1, 0.05, 1.0, seed=4, p_bar=5.0).replace(sigma2=np.zeros((1, 1)))
        res = solve_maxmin(sc, "individual")
        exact = 5.0 * sc.direct_gains()[0] / sc.eta2[0]
        assert res.a_star == pytest.approx(exact, rel=1e-3)

    @pytest.mark.parametrize("mode", ["individual", "total"])
    def test_fixed_point_and_budget(self, mode):
        sc = capped()
        res = solve_maxmin(sc, mode)
        assert res.fixed_point_residual <= 1e-3
        b = inner_power_scale(sc, res.a_star, mode, SolverConfig(epsilon=1e-5), b_max=4.0).b_star
        assert abs(b - 1) <= 1e-3
        if mode == "individual":
            assert np.max(res.p_star / sc.p_bar) == pytest.approx(1.0)
        else:
            assert res.p_star.sum() == pytest.approx(sc.p_bar_tot)
        target = sc.replace(alpha=np.full(3, res.a_star))
        assert certify([InterferenceOracle(target, k) for k in range(3)], res.p_star)[1]

    def test_individual_caps_lose_to_total_budget(self):
        sc = capped()
        a_ind = solve_maxmin(sc, "individual").a_star
        a_tot = solve_maxmin(sc, "total").a_star
        assert a_ind <= a_tot + 1e-6

    def test_nonincreasing_in_kappa(self):
        a = [solve_maxmin(capped(kappa=k), "total").a_star for k in (0.05, 0.1, 0.15)]
        assert a[0] >= a[1] - 1e-6 and a[1] >= a[2] - 1e-6


class TestMSE:
    def test_deterministic_limit(self):
        b = generate_broadcast_scenario(3, 3, 0.0, [0.1, 0.2, 0.3], 0.99, seed=1)
        res = solve_mse_power_min(b, TIGHT)
        q = b.eta2 / b.mu
        np.testing.assert_allclose(res.p_star, q, rtol=1e-6)
        assert res.total_power == pytest.approx(q @ b.column_energy(), rel=1e-6)

    @pytest.mark.parametrize("key", list(MSE_SCALAR))
    def test_scalar_line_search_oracle(self, key):
        eta2, mu, sigma2, g2, phi = key
        b = BroadcastScenario(K=1, M=1, H_hat=[[1 / math.sqrt(g2)]], Lambda=sigma2, eta2=eta2, mu=mu, phi=phi)
        res = solve_mse_power_min(b, SolverConfig(epsilon=1e-5))
        assert res.p_star[0] == pytest.approx(MSE_SCALAR[key], rel=1e-3)

    def test_objective_nondecreasing_as_mu_tightens(self):
        objs = []
        for mu_db in (-5, -7.5, -10):
            b = generate_broadcast_scenario(3, 3, 1.5e-3, 10 ** (mu_db / 10), 0.99, seed=2)
            objs.append(solve_mse_power_min(b).total_power)
        assert objs[0] <= objs[1] * (1 + 1e-6) and objs[1] <= objs[2] * (1 + 1e-6)

    def test_certified(self):
        b = generate_broadcast_scenario(3, 3, 1.5e-3, 0.1, 0.99, seed=3)
        res = solve_mse_power_min(b)
        assert res.status == llbcp.OPTIMAL and res.certified
        assert certify([MSEOracle(b, k) for k in range(3)], res.p_star)[1]

    def test_infeasible_passes_through(self):
        b = generate_broadcast_scenario(3, 3, 1.5e-3, 10 ** -1.5, 0.99, seed=0)
        res = solve_mse_power_min(b)
        assert res.status == llbcp.INFEASIBLE and res.p_star is None and math.isinf(res.total_power)
