import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choiceplan import model as md
from conftest import random_instance


class TestChoose:
    def test_second_scenario_picks_high_utility(self, e1):
        assert md.choose(np.array([1, 0, 1]), 1, e1) == (2, 8.0)

    def test_only_outside_offered(self, e1):
        assert md.choose(np.array([1, 0, 0]), 1, e1) == (0, 0.0)

    def test_full_offer_first_scenario(self, e1):
        assert md.choose(np.array([1, 1, 1]), 0, e1) == (1, 5.0)

    def test_empty_offer_rejected(self, e1):
        with pytest.raises(md.ModelError, match="empty offer"):
            md.choose(np.array([0, 0, 0]), 0, e1)

    def test_chosen_is_offered_and_utility_maximal(self):
        for seed in range(6):
            inst = random_instance(["caop", "flop", "msmflp"][seed % 3], seed, n_max=30)
            for x in md.enumerate_feasible(inst.space):
                j, _ = md.choose(x, 0, inst)
                offered = np.flatnonzero(x == 1)
                assert j in offered
                assert inst.scenarios.u[0, j] >= inst.scenarios.u[0, offered].max() - 1e-12


class TestSampleObjective:
    def test_values(self, e1):
        assert md.sample_objective(np.array([1, 0, 1]), e1) == 8.0
        assert md.sample_objective(np.array([1, 1, 0]), e1) == 5.0
        assert md.sample_objective(np.array([1, 0, 0]), e1) == 0.0

    def test_reward_bounds(self):
        inst = random_instance("caop", 3, n_max=40)
        for x in md.enumerate_feasible(inst.space):
            v = md.sample_objective(x, inst)
            assert inst.scenarios.r.min() - 1e-12 <= v <= inst.scenarios.r.max() + 1e-12


class TestCooperativeFraction:
    def test_e1_values(self, e1):
        assert md.cooperative_fraction(np.array([1, 0, 1]), e1) == 1.0
        assert md.cooperative_fraction(np.array([1, 1, 1]), e1) == 0.5

    def test_msmflp_always_cooperative(self):
        for seed in range(5):
            inst = random_instance("msmflp", seed, max_j=8, n_max=30)
            for x in md.enumerate_feasible(inst.space):
                assert md.cooperative_fraction(x, inst) == 1.0


class TestEnumeration:
    def test_e1_feasible_set(self, e1):
        got = {tuple(int(v) for v in x) for x in md.enumerate_feasible(e1.space)}
        assert got == {(1, 0, 0), (1, 1, 0), (1, 0, 1)}

    def test_free_cube(self):
        space = md.DecisionSpace(n_options=3, fixed_ones={0})
        assert sum(1 for _ in md.enumerate_feasible(space)) == 4

    def test_cardinality_equality(self):
        space = md.DecisionSpace(n_options=3, eq=[([1.0, 1.0, 1.0], 2.0)], app_tag=md.MSMFLP)
        assert sum(1 for _ in md.enumerate_feasible(space)) == 3

    def test_cap_enforced(self):
        space = md.DecisionSpace(n_options=30)
        with pytest.raises(md.ModelError, match="cap"):
            next(md.enumerate_feasible(space))

    def test_lexicographic_order(self):
        space = md.DecisionSpace(n_options=3)
        seen = [tuple(int(v) for v in x) for x in md.enumerate_feasible(space)]
        assert seen == sorted(seen)

    def test_optimal_e1(self, e1):
        x, v = md.enumerate_optimal(e1)
        assert v == 8.0 and tuple(x) == (1, 0, 1)

    def test_all_zero_rewards_prefers_lex_smallest(self, e1):
        inst = md.make_instance(e1.space, e1.scenarios.u, np.zeros_like(e1.scenarios.r))
        x, v = md.enumerate_optimal(inst)
        assert v == 0.0 and tuple(x) == (1, 0, 0)

    def test_dominates_every_feasible(self):
        inst = random_instance("flop", 2, n_max=40)
        _, v = md.enumerate_optimal(inst)
        rng = np.random.default_rng(0)
        pool = list(md.enumerate_feasible(inst.space))
        for k in rng.integers(0, len(pool), size=10):
            assert v >= md.sample_objective(pool[k], inst) - 1e-12


class TestMonotoneOffers:
    @given(st.integers(min_value=0, max_value=400))
    @settings(max_examples=25, deadline=None)
    def test_superset_never_decreases_chosen_utility(self, seed):
        rng = np.random.default_rng(seed)
        J, N = 6, 8
        u = rng.normal(size=(N, J))
        r = rng.random((N, J))
        space = md.DecisionSpace(n_options=J, fixed_ones={0})
        inst = md.make_instance(space, u, r)
        small = (rng.random(J) < 0.5).astype(np.int64)
        small[0] = 1
        big = np.maximum(small, (rng.random(J) < 0.5).astype(np.int64))
        for i in range(N):
            js, _ = md.choose(small, i, inst)
            jb, _ = md.choose(big, i, inst)
            assert inst.scenarios.u[i, jb] >= inst.scenarios.u[i, js]


class TestTieRepair:
    def test_exact_ties_are_separated(self):
        u = np.array([[1.0, 1.0, 0.5], [0.0, 1.0, 2.0]])
        fixed, rows = md.repair_utility_ties(u)
        assert rows == [0]
        assert np.unique(fixed[0]).size == 3
        assert np.array_equal(fixed[1], u[1])

    def test_repair_recorded_in_provenance(self):
        space = md.DecisionSpace(n_options=2)
        inst = md.make_instance(space, np.array([[1.0, 1.0]]), np.array([[1.0, 2.0]]))
        assert inst.provenance["tie_repaired_rows"] == [0]

    def test_rank_preserved_outside_ties(self):
        u = np.array([[5.0, 1.0, 1.0, -2.0]])
        fixed, _ = md.repair_utility_ties(u)
        assert fixed[0, 0] > fixed[0, 1] > fixed[0, 3]


class TestValidation:
    def test_shape_mismatch(self):
        with pytest.raises(md.ModelError):
            md.ScenarioSet(u=np.zeros((2, 3)), r=np.zeros((2, 2)))

    def test_nonfinite_rejected(self):
        with pytest.raises(md.ModelError):
            md.ScenarioSet(u=np.array([[np.inf]]), r=np.array([[0.0]]))

    def test_instance_column_mismatch(self):
        space = md.DecisionSpace(n_options=3)
        with pytest.raises(md.ModelError):
            md.Instance(space=space, scenarios=md.ScenarioSet(u=np.zeros((1, 2)), r=np.zeros((1, 2))))

    def test_fixed_index_range(self):
        with pytest.raises(md.ModelError):
            md.DecisionSpace(n_options=2, fixed_ones={5})
