import numpy as np
import pytest

from choiceplan import benders as bd
from choiceplan import model as md
from choiceplan import simplex as sx
from conftest import (dsp_lp_value, nsp_lp_problem, nsp_lp_value, random_feasible_fraction,
                      random_instance, sp_lp_problem, sp_lp_value)


class TestIntegerDual:
    def test_unoffered_shadow_price(self, e1):
        lam, mu, nu = bd.integer_dual(np.array([1, 1, 0]), 1, e1)
        assert lam == 5.0
        assert np.array_equal(mu, [0, 0, 0])
        assert np.array_equal(nu, [0, 0, 3])

    def test_no_competitive_unoffered(self, e1):
        lam, mu, nu = bd.integer_dual(np.array([1, 0, 1]), 0, e1)
        assert lam == 8.0 and not mu.any() and not nu.any()

    def test_singleton_offer(self, e1):
        lam, mu, nu = bd.integer_dual(np.array([1, 0, 0]), 0, e1)
        assert lam == 0.0 and not mu.any()
        assert np.array_equal(nu, np.maximum(e1.scenarios.r[0] - lam, 0) * [0, 1, 1])

    def test_dual_objective_equals_choice_reward(self, e1):
        for x in md.enumerate_feasible(e1.space):
            for i in range(e1.n_scenarios):
                lam, mu, nu = bd.integer_dual(x, i, e1)
                dual_obj = lam + mu.sum() + float((nu - mu) @ x)
                assert dual_obj == pytest.approx(md.choose(x, i, e1)[1], abs=1e-12)

    def test_matches_lp_dual_and_kkt(self):
        # closed form vs the subproblem LP, plus KKT of the primal choice LP
        checked = 0
        for seed in range(8):
            inst = random_instance(["caop", "flop", "msmflp"][seed % 3], seed, max_j=8, n_max=25)
            rng = np.random.default_rng(seed)
            pool = list(md.enumerate_feasible(inst.space))
            for k in rng.integers(0, len(pool), size=3):
                x = pool[k]
                for i in rng.integers(0, inst.n_scenarios, size=3):
                    i = int(i)
                    lam, mu, nu = bd.integer_dual(x, i, inst)
                    dual_obj = lam + mu.sum() + float((nu - mu) @ x)
                    assert dual_obj == pytest.approx(dsp_lp_value(x, i, inst), abs=1e-9)
                    p = sp_lp_problem(x, i, inst)
                    j, reward = md.choose(x, i, inst)
                    y = np.zeros(inst.space.n_options)
                    y[j] = 1.0
                    sol = sx.LpSolution(status=sx.OPTIMAL, x=y, objective=reward,
                                        duals_ub=np.concatenate([nu, mu]),
                                        duals_eq=np.array([lam]))
                    assert sx.verify_kkt(p, sol)
                    checked += 1
        assert checked >= 70


class TestIntegerCut:
    def test_worked_cuts(self, e1):
        cut = bd.integer_cut(np.array([1, 1, 0]), 1, e1)
        assert cut.intercept == 5.0 and np.array_equal(cut.coeffs, [0, 0, 3])
        cut = bd.integer_cut(np.array([1, 0, 1]), 0, e1)
        assert cut.intercept == 8.0 and not cut.coeffs.any()

    def test_tight_at_separation_point(self, e1):
        for x in md.enumerate_feasible(e1.space):
            for i in range(e1.n_scenarios):
                cut = bd.integer_cut(x, i, e1)
                assert cut.value(x) == pytest.approx(md.choose(x, i, e1)[1], abs=1e-12)

    def test_batch_matches_scalar(self):
        inst = random_instance("caop", 5, max_j=9, n_max=30)
        x = next(md.enumerate_feasible(inst.space))
        intercepts, coeffs, phi = bd.integer_cuts_batch(x, inst)
        for i in range(inst.n_scenarios):
            cut = bd.integer_cut(x, i, inst)
            assert intercepts[i] == pytest.approx(cut.intercept, abs=1e-12)
            assert np.allclose(coeffs[i], cut.coeffs, atol=1e-12)
            assert phi[i] == md.choose(x, i, inst)[1]

    def test_validity_over_all_integer_points(self):
        for seed in range(4):
            inst = random_instance(["caop", "flop", "msmflp"][seed % 3], seed + 20,
                                   max_j=10, n_max=20)
            sep = list(md.enumerate_feasible(inst.space))[0]
            intercepts, coeffs, _ = bd.integer_cuts_batch(sep, inst)
            for x in md.enumerate_feasible(inst.space):
                phi = md.scenario_values(x, inst)
                vals = intercepts + coeffs @ x
                assert np.all(vals >= phi - 1e-9)


class TestBetaWeights:
    def test_worked_fraction(self, e1):
        for i in (0, 1):
            assert np.allclose(bd.beta_weights(np.array([1, 0.5, 0.5]), i, e1), 0.5)

    def test_integer_point_is_choice_indicator(self, e1):
        for x in md.enumerate_feasible(e1.space):
            for i in range(e1.n_scenarios):
                expect = np.zeros(3)
                expect[md.choose(x, i, e1)[0]] = 1.0
                assert np.array_equal(bd.beta_weights(x.astype(float), i, e1), expect)

    def test_all_ones_keeps_global_maximizer(self, e1):
        beta = bd.beta_weights(np.ones(3), 0, e1)
        expect = np.zeros(3)
        expect[np.argmax(e1.scenarios.u[0])] = 1.0
        assert np.array_equal(beta, expect)

    def test_mass_at_least_one_on_relaxed_points(self):
        for seed in range(10):
            inst = random_instance(["caop", "flop", "msmflp"][seed % 3], seed + 40,
                                   max_j=10, n_max=15)
            rng = np.random.default_rng(seed)
            for _ in range(5):
                xf = random_feasible_fraction(inst.space, rng)
                beta = bd.beta_weights_batch(xf, inst)
                assert np.all(beta.sum(axis=1) >= 1.0 - 1e-9)


class TestKnapsackDual:
    def test_worked_example(self, e1):
        lam, eta = bd.knapsack_dual(np.array([0.5, 0.5, 0.5]), 0, e1)
        assert lam == 5.0
        assert np.array_equal(eta, [0, 0, 3])
        assert lam + eta @ np.array([0.5, 0.5, 0.5]) == 6.5

    def test_full_weight_on_best_item(self, e1):
        lam, eta = bd.knapsack_dual(np.array([0.0, 0.0, 1.0]), 0, e1)
        assert lam == 8.0 and not eta.any()

    def test_uniform_rewards(self):
        space = md.DecisionSpace(n_options=3)
        inst = md.make_instance(space, np.array([[1.0, 2.0, 3.0]]), np.full((1, 3), 4.0))
        lam, eta = bd.knapsack_dual(np.array([0.4, 0.4, 0.4]), 0, inst)
        assert lam == 4.0 and not eta.any()

    def test_underfilled_rejected(self, e1):
        with pytest.raises(bd.BendersError, match="underfilled"):
            bd.knapsack_dual(np.array([0.2, 0.2, 0.2]), 0, e1)

    def test_matches_lp_on_random_fractions(self):
        for seed in range(8):
            inst = random_instance(["caop", "flop", "msmflp"][seed % 3], seed + 60,
                                   max_j=9, n_max=12)
            rng = np.random.default_rng(seed)
            for _ in range(4):
                xf = random_feasible_fraction(inst.space, rng)
                for i in rng.integers(0, inst.n_scenarios, size=2):
                    i = int(i)
                    beta = bd.beta_weights(xf, i, inst)
                    lam, eta = bd.knapsack_dual(beta, i, inst)
                    assert lam + eta @ beta == pytest.approx(nsp_lp_value(beta, i, inst), abs=1e-9)


class TestFractionalCut:
    def test_worked_cut(self, e1):
        for i in (0, 1):
            cut = bd.fractional_cut(np.array([1, 0.5, 0.5]), i, e1)
            assert cut.intercept == pytest.approx(5.0)
            assert np.allclose(cut.coeffs, [0, 0, 3])
            assert cut.value([1, 0.5, 0.5]) == pytest.approx(6.5)

    def test_tightness_and_validity(self):
        for seed in range(8):
            inst = random_instance(["caop", "flop", "msmflp"][seed % 3], seed + 80,
                                   max_j=9, n_max=12)
            rng = np.random.default_rng(seed)
            feas = list(md.enumerate_feasible(inst.space))
            for _ in range(3):
                xf = random_feasible_fraction(inst.space, rng)
                values = bd.knapsack_values_batch(xf, inst)
                cuts = bd.fractional_cuts_batch(xf, inst)
                for cut in cuts:
                    assert cut.value(xf) == pytest.approx(values[cut.scenario], abs=1e-9)
                    for x in feas:
                        phi = md.scenario_values(x, inst)[cut.scenario]
                        assert cut.value(x) >= phi - 1e-9

    def test_integer_point_dominates_choice_value(self, e1):
        for x in md.enumerate_feasible(e1.space):
            for i in range(e1.n_scenarios):
                cut = bd.fractional_cut(x.astype(float), i, e1)
                assert cut.value(x) >= md.choose(x, i, e1)[1] - 1e-12

    def test_zero_eta_gives_constant_cut(self):
        space = md.DecisionSpace(n_options=3)
        inst = md.make_instance(space, np.array([[3.0, 2.0, 1.0]]), np.full((1, 3), 7.0))
        cut = bd.fractional_cut(np.array([0.6, 0.6, 0.6]), 0, inst)
        assert cut.intercept == 7.0 and not cut.coeffs.any()


class TestStage1:
    def test_worked_instance_reaches_optimum(self, e1):
        res = bd.stage1(e1, rho=1e-4)
        assert res.converged
        assert res.upper_bound == pytest.approx(8.0, abs=1e-9)
        assert res.lower_bound == pytest.approx(8.0, abs=1e-9)
        assert res.iterations <= 10

    def test_stop_ratio_definition(self):
        # |UB - LB| / LB <= rho at UB=101, LB=100, rho=1e-2
        assert abs(101.0 - 100.0) / 100.0 <= 1e-2

    def test_stabilizer_schedule_caps_at_one(self):
        inst = random_instance("caop", 1, max_j=10, n_max=40)
        cfg = bd.StabilizerConfig(enabled=True, rho0=0.5, increment=0.05)
        res = bd.stage1(inst, rho=1e-6, stabilizer=cfg, iteration_cap=30)
        trace = res.stabilizer_trace
        assert trace[0] == 0.5
        expected = [min(0.5 + 0.05 * t, 1.0) for t in range(len(trace))]
        assert trace == pytest.approx(expected)
        if len(trace) > 11:
            assert trace[11] == 1.0

    def test_ub_nonincreasing_without_stabilizer(self):
        inst = random_instance("caop", 7, max_j=11, n_max=50)
        master = bd.MasterProblem(inst)
        ubs = []
        for _ in range(8):
            sol = master.solve()
            ubs.append(sol.objective)
            x_bar, theta = sol.x[:master.J], sol.x[master.J:]
            added = 0
            for cut in bd.fractional_cuts_batch(x_bar, inst):
                if theta[cut.scenario] - cut.value(x_bar) > 1e-7:
                    added += master.add_cut(cut)
            if not added:
                break
        assert all(b >= a - 1e-9 for a, b in zip(ubs[1:], ubs[:-1]))

    def test_ub_dominates_enumeration_optimum(self):
        for seed in (2, 12):
            inst = random_instance("msmflp", seed, max_j=8, n_max=25)
            res = bd.stage1(inst, rho=1e-4)
            _, v = md.enumerate_optimal(inst)
            assert res.upper_bound >= v - 1e-9

    def test_infeasible_master_is_hard_error(self):
        space = md.DecisionSpace(n_options=2, ineq=[([1.0, 1.0], -1.0)])
        inst = md.make_instance(space, np.array([[1.0, 2.0]]), np.array([[1.0, 2.0]]))
        with pytest.raises(bd.BendersError, match="infeasible"):
            bd.stage1(inst, rho=1e-2)

    def test_cut_pool_serializes(self, e1):
        res = bd.stage1(e1, rho=1e-4)
        for cut in res.cuts:
            blob = {"scenario": cut.scenario, "intercept": cut.intercept,
                    "coeffs": cut.coeffs.tolist()}
            back = bd.BendersCut(blob["scenario"], blob["intercept"], np.array(blob["coeffs"]))
            assert back.value([1, 0, 1]) == cut.value([1, 0, 1])
