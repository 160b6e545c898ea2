import dataclasses

import numpy as np
import pytest

from choiceplan import apps
from choiceplan import engine as eg
from choiceplan import model as md
from conftest import random_instance, random_params


class TestBranchSelect:
    def test_most_fractional(self):
        assert eg.branch_select(np.array([1.0, 0.5, 0.9])) == 1

    def test_tie_to_lowest_index(self):
        assert eg.branch_select(np.array([1.0, 0.4, 0.6])) == 1

    def test_integral_point_rejected(self):
        with pytest.raises(eg.EngineError):
            eg.branch_select(np.array([1.0, 0.0, 1.0]))


class TestWorkedInstance:
    @pytest.mark.parametrize("method", ["enum", "sbbd", "extensive"])
    def test_optimum(self, e1, method):
        sol = eg.solve(e1, eg.SolveConfig(method=method))
        assert sol.status == eg.OPTIMAL
        assert sol.objective == pytest.approx(8.0, abs=1e-9)
        assert tuple(sol.x) == (1, 0, 1)
        assert sol.bound >= sol.objective - 1e-9
        assert sol.stats.ogap_percent < 0.01

    def test_extensive_root_relaxation_dominates(self, e1):
        sol = eg.solve_extensive(e1)
        assert sol.stats.rgap_percent >= 0.0


class TestOracleEquivalence:
    @pytest.mark.parametrize("family", ["caop", "flop", "msmflp"])
    def test_methods_agree(self, family):
        for seed in range(6):
            inst = random_instance(family, seed + 300, max_j=10, n_max=40)
            ve = eg.solve(inst, eg.SolveConfig(method="enum")).objective
            vb = eg.solve(inst, eg.SolveConfig(method="sbbd")).objective
            vx = eg.solve(inst, eg.SolveConfig(method="extensive")).objective
            assert vb == pytest.approx(ve, abs=1e-6)
            assert vx == pytest.approx(ve, abs=1e-6)


class TestInfeasibleAndLimits:
    def test_infeasible_space(self):
        space = md.DecisionSpace(n_options=2, ineq=[([1.0, 1.0], -1.0)])
        inst = md.make_instance(space, np.array([[1.0, 2.0]]), np.array([[1.0, 2.0]]))
        for method in ("sbbd", "extensive"):
            sol = eg.solve(inst, eg.SolveConfig(method=method))
            assert sol.status == eg.INFEASIBLE

    def test_time_limit_keeps_valid_bounds(self):
        inst = random_instance("caop", 7, max_j=12, n_max=60)
        sol = eg.solve(inst, eg.SolveConfig(method="sbbd", time_limit=1e-3))
        assert sol.status in (eg.TIME_LIMIT, eg.OPTIMAL)
        if sol.status == eg.TIME_LIMIT:
            assert sol.bound >= sol.objective - 1e-9

    def test_extensive_size_cap(self):
        inst = random_instance("caop", 3, n_max=30)
        cfg = eg.SolveConfig(method="extensive", extensive_cap=10)
        with pytest.raises(eg.SizeCapError):
            eg.solve_extensive(inst, cfg)


class TestEngineHygiene:
    def test_bound_sandwich_and_integral_choice(self):
        for seed in (2, 5, 11):
            inst = random_instance("caop", seed + 500, max_j=11, n_max=50)
            sol = eg.solve(inst, eg.SolveConfig(method="sbbd"))
            assert sol.bound >= sol.objective - 1e-9
            assert eg.check_choice_uniqueness(sol.x, inst)

    def test_lazy_cut_convergence_at_incumbent(self):
        from choiceplan.benders import integer_cuts_batch
        inst = random_instance("flop", 4, n_max=40)
        sol = eg.solve(inst, eg.SolveConfig(method="sbbd"))
        intercepts, coeffs, phi = integer_cuts_batch(sol.x, inst)
        values = intercepts + coeffs @ sol.x
        # every integer cut at the incumbent is satisfied by its own phi
        assert np.all(values >= phi - 1e-9)

    def test_determinism(self):
        inst = random_instance("msmflp", 6, n_max=50)
        cfg = eg.SolveConfig(method="sbbd")
        a = eg.solve(inst, cfg)
        b = eg.solve(inst, dataclasses.replace(cfg))
        assert np.array_equal(a.x, b.x)
        assert a.objective == b.objective
        assert a.bound == b.bound
        assert (a.stats.n_nodes, a.stats.n_cuts) == (b.stats.n_nodes, b.stats.n_cuts)
        assert (a.stats.rgap_percent, a.stats.ogap_percent) == \
               (b.stats.rgap_percent, b.stats.ogap_percent)

    def test_solution_stats_shape(self):
        inst = random_instance("caop", 9, n_max=30)
        sol = eg.solve(inst, eg.SolveConfig(method="sbbd"))
        assert sol.stats.t_seconds >= 0.0
        assert sol.stats.n_nodes >= 1
        assert sol.stats.rgap_percent >= 0.0


class TestReducedMsmflp:
    def test_reduced_equals_full(self):
        for seed in range(4):
            inst = random_instance("msmflp", seed + 900, max_j=8, n_max=30)
            full = eg.solve_extensive(inst)
            reduced = eg.solve_extensive(inst, include_ranking=False)
            assert reduced.objective == pytest.approx(full.objective, abs=1e-9)


class TestStabilizedSolve:
    def test_stabilizer_does_not_change_the_optimum(self):
        from choiceplan.benders import StabilizerConfig
        params = random_params("caop", 16, max_j=12, n_max=60)
        inst = apps.generate(params)
        plain = eg.solve(inst, eg.SolveConfig(method="sbbd"))
        stab = eg.solve(inst, eg.SolveConfig(
            method="sbbd", stabilizer=StabilizerConfig(enabled=True)))
        assert stab.objective == pytest.approx(plain.objective, abs=1e-9)
